#include "nf/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "nf/flows.hpp"
#include "nf/ode.hpp"

namespace nf {

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::ExtrapSpace: return "extrapolate-space";
    case Split::ExtrapTime: return "extrapolate-time";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  if (s == "extrapolate-space") return Split::ExtrapSpace;
  if (s == "extrapolate-time") return Split::ExtrapTime;
  throw std::invalid_argument("unknown split: " + s);
}

namespace {

constexpr std::uint32_t kMagic = 0x4e464453;  // "NFDS"
constexpr std::uint32_t kVersion = 1;

void w_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void w_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void w_u8(std::ostream& os, std::uint8_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void w_f64(std::ostream& os, double v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
void w_str(std::ostream& os, const std::string& s) {
  w_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint64_t r_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
std::uint32_t r_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
std::uint8_t r_u8(std::istream& is) {
  std::uint8_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
double r_f64(std::istream& is) {
  double v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
std::string r_str(std::istream& is) {
  std::string s(r_u64(is), '\0');
  is.read(s.data(), static_cast<std::streamsize>(s.size()));
  return s;
}

std::ofstream open_out(const std::string& path, bool binary) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  return os;
}

std::ifstream open_in(const std::string& path, bool binary) {
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  return is;
}

void write_header(std::ostream& os, std::uint8_t type_tag,
                  const std::string& kind) {
  w_u32(os, kMagic);
  w_u32(os, kVersion);
  w_u8(os, type_tag);
  w_str(os, kind);
}

std::string read_header(std::istream& is, std::uint8_t expect_tag,
                        const std::string& path) {
  if (r_u32(is) != kMagic)
    throw std::runtime_error("bad magic in dataset file: " + path);
  if (r_u32(is) != kVersion)
    throw std::runtime_error("unsupported dataset version: " + path);
  if (r_u8(is) != expect_tag)
    throw std::runtime_error("dataset type mismatch: " + path);
  return r_str(is);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

// Series-count split: 60% train, 20% val, 20% test.
Split series_split(std::size_t id, std::size_t n) {
  if (id < (n * 6) / 10) return Split::Train;
  if (id < (n * 8) / 10) return Split::Val;
  return Split::Test;
}

}  // namespace

std::vector<std::size_t> TrajectoryDataset::split_indices(Split s) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i].split == s) idx.push_back(i);
  return idx;
}

TrajectoryBatch TrajectoryDataset::batch(
    const std::vector<std::size_t>& idx) const {
  const std::size_t n = idx.size();
  TrajectoryBatch b{Tensor(n, dim), Tensor(n, 1), Tensor(n, 1),
                    Tensor(n, dim)};
  for (std::size_t i = 0; i < n; ++i) {
    const TrajectoryRow& r = rows[idx[i]];
    b.t0(i, 0) = r.t0;
    b.t(i, 0) = r.t;
    for (std::size_t j = 0; j < dim; ++j) {
      b.x0(i, j) = r.x0[j];
      b.target(i, j) = r.target[j];
    }
  }
  return b;
}

void TrajectoryDataset::save_csv(const std::string& path) const {
  auto os = open_out(path, false);
  os << "split,series_id,t0,t";
  for (std::size_t j = 0; j < dim; ++j) os << ",x" << j;
  for (std::size_t j = 0; j < dim; ++j) os << ",target" << j;
  os << "\n";
  for (const auto& r : rows) {
    os << to_string(r.split) << "," << r.series_id << "," << fmt(r.t0) << ","
       << fmt(r.t);
    for (double v : r.x0) os << "," << fmt(v);
    for (double v : r.target) os << "," << fmt(v);
    os << "\n";
  }
}

TrajectoryDataset TrajectoryDataset::load_csv(const std::string& path) {
  auto is = open_in(path, false);
  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error("empty dataset file: " + path);
  const auto header = split_line(line);
  if (header.size() < 6 || header[0] != "split")
    throw std::runtime_error("bad trajectory CSV header: " + path);
  TrajectoryDataset ds;
  ds.dim = (header.size() - 4) / 2;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_line(line);
    if (f.size() != 4 + 2 * ds.dim)
      throw std::runtime_error("bad trajectory CSV row: " + path);
    TrajectoryRow r;
    r.split = split_from_string(f[0]);
    r.series_id = std::stoull(f[1]);
    r.t0 = std::stod(f[2]);
    r.t = std::stod(f[3]);
    for (std::size_t j = 0; j < ds.dim; ++j) r.x0.push_back(std::stod(f[4 + j]));
    for (std::size_t j = 0; j < ds.dim; ++j)
      r.target.push_back(std::stod(f[4 + ds.dim + j]));
    ds.rows.push_back(std::move(r));
  }
  return ds;
}

void TrajectoryDataset::save_binary(const std::string& path) const {
  auto os = open_out(path, true);
  write_header(os, 1, kind);
  w_u64(os, dim);
  w_u64(os, rows.size());
  for (const auto& r : rows) {
    w_u8(os, static_cast<std::uint8_t>(r.split));
    w_u64(os, r.series_id);
    w_f64(os, r.t0);
    w_f64(os, r.t);
    for (double v : r.x0) w_f64(os, v);
    for (double v : r.target) w_f64(os, v);
  }
}

TrajectoryDataset TrajectoryDataset::load_binary(const std::string& path) {
  auto is = open_in(path, true);
  TrajectoryDataset ds;
  ds.kind = read_header(is, 1, path);
  ds.dim = r_u64(is);
  const std::uint64_t n = r_u64(is);
  ds.rows.resize(n);
  for (auto& r : ds.rows) {
    r.split = static_cast<Split>(r_u8(is));
    r.series_id = r_u64(is);
    r.t0 = r_f64(is);
    r.t = r_f64(is);
    r.x0.resize(ds.dim);
    r.target.resize(ds.dim);
    for (double& v : r.x0) v = r_f64(is);
    for (double& v : r.target) v = r_f64(is);
  }
  if (!is) throw std::runtime_error("truncated dataset file: " + path);
  return ds;
}

std::vector<std::size_t> EventSequenceDataset::split_indices(Split s) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < seqs.size(); ++i)
    if (seqs[i].split == s) idx.push_back(i);
  return idx;
}

void EventSequenceDataset::save_csv(const std::string& path) const {
  auto os = open_out(path, false);
  os << "split,seq_id,event_index,t,T,gt_nll\n";
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto& s = seqs[i];
    for (std::size_t k = 0; k < s.times.size(); ++k)
      os << to_string(s.split) << "," << i << "," << k << ","
         << fmt(s.times[k]) << "," << fmt(s.T) << "," << fmt(s.gt_nll) << "\n";
  }
}

EventSequenceDataset EventSequenceDataset::load_csv(const std::string& path) {
  auto is = open_in(path, false);
  std::string line;
  if (!std::getline(is, line) || split_line(line).size() != 6)
    throw std::runtime_error("bad event CSV header: " + path);
  EventSequenceDataset ds;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_line(line);
    if (f.size() != 6) throw std::runtime_error("bad event CSV row: " + path);
    const std::size_t id = std::stoull(f[1]);
    if (id >= ds.seqs.size()) ds.seqs.resize(id + 1);
    auto& s = ds.seqs[id];
    s.split = split_from_string(f[0]);
    s.times.push_back(std::stod(f[3]));
    s.T = std::stod(f[4]);
    s.gt_nll = std::stod(f[5]);
  }
  return ds;
}

void EventSequenceDataset::save_binary(const std::string& path) const {
  auto os = open_out(path, true);
  write_header(os, 2, kind);
  w_u64(os, seqs.size());
  for (const auto& s : seqs) {
    w_u8(os, static_cast<std::uint8_t>(s.split));
    w_f64(os, s.T);
    w_f64(os, s.gt_nll);
    w_u64(os, s.times.size());
    for (double t : s.times) w_f64(os, t);
  }
}

EventSequenceDataset EventSequenceDataset::load_binary(
    const std::string& path) {
  auto is = open_in(path, true);
  EventSequenceDataset ds;
  ds.kind = read_header(is, 2, path);
  ds.seqs.resize(r_u64(is));
  for (auto& s : ds.seqs) {
    s.split = static_cast<Split>(r_u8(is));
    s.T = r_f64(is);
    s.gt_nll = r_f64(is);
    s.times.resize(r_u64(is));
    for (double& t : s.times) t = r_f64(is);
  }
  if (!is) throw std::runtime_error("truncated dataset file: " + path);
  return ds;
}

std::vector<std::size_t> DensityDataset2D::split_indices(Split s) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == s) idx.push_back(i);
  return idx;
}

void DensityDataset2D::save_csv(const std::string& path) const {
  auto os = open_out(path, false);
  os << "split,x,y\n";
  for (std::size_t i = 0; i < split.size(); ++i)
    os << to_string(split[i]) << "," << fmt(samples(i, 0)) << ","
       << fmt(samples(i, 1)) << "\n";
}

DensityDataset2D DensityDataset2D::load_csv(const std::string& path) {
  auto is = open_in(path, false);
  std::string line;
  if (!std::getline(is, line) || split_line(line).size() != 3)
    throw std::runtime_error("bad density CSV header: " + path);
  std::vector<Split> sp;
  std::vector<double> xs;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_line(line);
    if (f.size() != 3) throw std::runtime_error("bad density CSV row: " + path);
    sp.push_back(split_from_string(f[0]));
    xs.push_back(std::stod(f[1]));
    xs.push_back(std::stod(f[2]));
  }
  DensityDataset2D ds;
  ds.split = std::move(sp);
  ds.samples = Tensor(ds.split.size(), 2, std::move(xs));
  return ds;
}

void DensityDataset2D::save_binary(const std::string& path) const {
  auto os = open_out(path, true);
  write_header(os, 3, "density2d");
  w_u64(os, split.size());
  for (std::size_t i = 0; i < split.size(); ++i) {
    w_u8(os, static_cast<std::uint8_t>(split[i]));
    w_f64(os, samples(i, 0));
    w_f64(os, samples(i, 1));
  }
}

DensityDataset2D DensityDataset2D::load_binary(const std::string& path) {
  auto is = open_in(path, true);
  read_header(is, 3, path);
  DensityDataset2D ds;
  const std::uint64_t n = r_u64(is);
  ds.split.resize(n);
  ds.samples = Tensor(n, 2);
  for (std::uint64_t i = 0; i < n; ++i) {
    ds.split[i] = static_cast<Split>(r_u8(is));
    ds.samples(i, 0) = r_f64(is);
    ds.samples(i, 1) = r_f64(is);
  }
  if (!is) throw std::runtime_error("truncated dataset file: " + path);
  return ds;
}

PeriodicKind periodic_kind_from_string(const std::string& s) {
  if (s == "sine") return PeriodicKind::Sine;
  if (s == "sawtooth") return PeriodicKind::Sawtooth;
  if (s == "square") return PeriodicKind::Square;
  if (s == "triangle") return PeriodicKind::Triangle;
  throw std::invalid_argument("unknown periodic kind: " + s);
}

namespace {

double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

// Integral of sign(sin u) over [0, t]: rises to pi, falls back to 0 with
// period 2*pi.
double triangle_wave(double t) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(t, two_pi);
  if (r < 0) r += two_pi;
  return r <= std::numbers::pi ? r : two_pi - r;
}

}  // namespace

double periodic_flow(PeriodicKind kind, double t, double x) {
  switch (kind) {
    case PeriodicKind::Sine: return x + std::sin(t);
    case PeriodicKind::Sawtooth: return x + t - std::floor(t);
    case PeriodicKind::Square: return x + sign(std::sin(t));
    case PeriodicKind::Triangle: return x + triangle_wave(t);
  }
  return x;
}

TrajectoryDataset gen_periodic(PeriodicKind kind, std::size_t n,
                               std::uint64_t seed,
                               const PeriodicOptions& opts) {
  if (n < 1) throw std::invalid_argument("gen_periodic: n >= 1");
  static const char* names[] = {"sine", "sawtooth", "square", "triangle"};
  TrajectoryDataset ds;
  ds.kind = names[static_cast<int>(kind)];
  ds.dim = 1;
  const std::size_t n_extrap = std::max<std::size_t>(1, n / 5);
  std::size_t sid = 0;
  auto emit = [&](Split split, double x_lo, double x_hi, double t_lo,
                  double t_hi, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i, ++sid) {
      Rng rng(Rng::derive(seed, sid));
      const double x = rng.uniform(x_lo, x_hi);
      for (std::size_t q = 0; q < opts.queries_per_series; ++q) {
        const double t = rng.uniform(t_lo, t_hi);
        ds.rows.push_back(
            {split, sid, 0.0, t, {x}, {periodic_flow(kind, t, x)}});
      }
    }
  };
  const std::size_t n_train = (n * 6) / 10, n_val = (n * 8) / 10 - n_train;
  emit(Split::Train, opts.x_lo, opts.x_hi, opts.t_lo, opts.t_hi, n_train);
  emit(Split::Val, opts.x_lo, opts.x_hi, opts.t_lo, opts.t_hi, n_val);
  emit(Split::Test, opts.x_lo, opts.x_hi, opts.t_lo, opts.t_hi,
       n - n_train - n_val);
  emit(Split::ExtrapSpace, opts.x_extrap_lo, opts.x_extrap_hi, opts.t_lo,
       opts.t_hi, n_extrap);
  emit(Split::ExtrapTime, opts.x_lo, opts.x_hi, opts.t_hi, opts.t_extrap_hi,
       n_extrap);
  return ds;
}

Tensor sink_matrix() { return Tensor(2, 2, {-4.0, 10.0, -3.0, 2.0}); }

TrajectoryDataset gen_linear_system(std::size_t n, std::uint64_t seed,
                                    std::size_t queries_per_series) {
  if (n < 1) throw std::invalid_argument("gen_linear_system: n >= 1");
  TrajectoryDataset ds;
  ds.kind = "sink";
  ds.dim = 2;
  const Tensor A = sink_matrix();
  const std::size_t n_extrap = std::max<std::size_t>(1, n / 5);
  std::size_t sid = 0;
  auto emit = [&](Split split, double x_lo, double x_hi, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i, ++sid) {
      Rng rng(Rng::derive(seed, sid));
      const double x1 = rng.uniform(x_lo, x_hi), x2 = rng.uniform(x_lo, x_hi);
      for (std::size_t q = 0; q < queries_per_series; ++q) {
        const double t = rng.uniform(0.0, 10.0);
        const Tensor E = matrix_exp(t * A);
        ds.rows.push_back({split,
                           sid,
                           0.0,
                           t,
                           {x1, x2},
                           {E(0, 0) * x1 + E(0, 1) * x2,
                            E(1, 0) * x1 + E(1, 1) * x2}});
      }
    }
  };
  const std::size_t n_train = (n * 6) / 10, n_val = (n * 8) / 10 - n_train;
  emit(Split::Train, 0.0, 1.0, n_train);
  emit(Split::Val, 0.0, 1.0, n_val);
  emit(Split::Test, 0.0, 1.0, n - n_train - n_val);
  emit(Split::ExtrapSpace, 1.0, 2.0, n_extrap);
  return ds;
}

namespace {

Tensor lv_field(const Tensor& x) {
  Tensor dx(1, 2);
  dx(0, 0) = (2.0 / 3.0) * x(0, 0) - (2.0 / 3.0) * x(0, 0) * x(0, 1);
  dx(0, 1) = x(0, 0) * x(0, 1) - x(0, 1);
  return dx;
}

}  // namespace

TrajectoryDataset gen_ellipse(std::size_t n, std::uint64_t seed,
                              std::size_t queries_per_series) {
  if (n < 1) throw std::invalid_argument("gen_ellipse: n >= 1");
  TrajectoryDataset ds;
  ds.kind = "ellipse";
  ds.dim = 2;
  const SolverConfig cfg = SolverConfig::dopri5(1e-10, 1e-12);
  const std::size_t n_extrap = std::max<std::size_t>(1, n / 5);
  std::size_t sid = 0;
  auto emit = [&](Split split, double x_lo, double x_hi, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i, ++sid) {
      Rng rng(Rng::derive(seed, sid));
      const double x1 = rng.uniform(x_lo, x_hi), x2 = rng.uniform(x_lo, x_hi);
      std::vector<double> ts(queries_per_series);
      for (double& t : ts) t = rng.uniform(0.0, 10.0);
      std::sort(ts.begin(), ts.end());
      Tensor y(1, 2, {x1, x2});
      double t_prev = 0.0;
      SolveStats stats;
      auto field = [](double, const Tensor& x) { return lv_field(x); };
      for (double t : ts) {
        y = integrate(field, y, t_prev, t, cfg, stats);
        t_prev = t;
        ds.rows.push_back(
            {split, sid, 0.0, t, {x1, x2}, {y(0, 0), y(0, 1)}});
      }
    }
  };
  const std::size_t n_train = (n * 6) / 10, n_val = (n * 8) / 10 - n_train;
  emit(Split::Train, 0.0, 1.0, n_train);
  emit(Split::Val, 0.0, 1.0, n_val);
  emit(Split::Test, 0.0, 1.0, n - n_train - n_val);
  emit(Split::ExtrapSpace, 1.0, 2.0, n_extrap);
  return ds;
}

TrajectoryDataset gen_stiff(std::size_t n, std::uint64_t seed,
                            double interval_len, double t_max) {
  if (n < 1) throw std::invalid_argument("gen_stiff: n >= 1");
  TrajectoryDataset ds;
  ds.kind = "stiff";
  ds.dim = 1;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const double t1 =
        i == 0 ? 0.0 : rng.uniform(0.0, t_max - interval_len);
    const double t2 = t1 + interval_len;
    ds.rows.push_back({series_split(i, n), i, t1, t2, {stiff_reference(t1)},
                       {stiff_reference(t2)}});
  }
  // Evaluation curve: the whole grid from x0 = 0.
  const std::size_t steps = static_cast<std::size_t>(t_max / interval_len);
  for (std::size_t k = 1; k <= steps; ++k) {
    const double t = static_cast<double>(k) * interval_len;
    ds.rows.push_back(
        {Split::ExtrapTime, n + k, 0.0, t, {0.0}, {stiff_reference(t)}});
  }
  return ds;
}

TppKind tpp_kind_from_string(const std::string& s) {
  if (s == "poisson") return TppKind::Poisson;
  if (s == "renewal") return TppKind::Renewal;
  if (s == "hawkes1") return TppKind::Hawkes1;
  if (s == "hawkes2") return TppKind::Hawkes2;
  throw std::invalid_argument("unknown tpp kind: " + s);
}

std::string to_string(TppKind k) {
  switch (k) {
    case TppKind::Poisson: return "poisson";
    case TppKind::Renewal: return "renewal";
    case TppKind::Hawkes1: return "hawkes1";
    case TppKind::Hawkes2: return "hawkes2";
  }
  return "poisson";
}

namespace {

struct HawkesParams {
  double mu;
  std::vector<double> alpha, beta;
};

double hawkes_intensity(const HawkesParams& p, const std::vector<double>& ev,
                        double t) {
  double lam = p.mu;
  for (double ti : ev) {
    if (ti >= t) break;
    for (std::size_t j = 0; j < p.alpha.size(); ++j)
      lam += p.alpha[j] * p.beta[j] * std::exp(-p.beta[j] * (t - ti));
  }
  return lam;
}

// Intensity just after t, counting an event at exactly t with its full jump.
double hawkes_upper_bound(const HawkesParams& p, const std::vector<double>& ev,
                          double t) {
  double lam = p.mu;
  for (double ti : ev) {
    if (ti > t) break;
    for (std::size_t j = 0; j < p.alpha.size(); ++j)
      lam += p.alpha[j] * p.beta[j] * std::exp(-p.beta[j] * (t - ti));
  }
  return lam;
}

// Ogata thinning; between events the exponential-kernel intensity only
// decays, so the value just after the last accepted point dominates.
EventSequence gen_hawkes_seq(const HawkesParams& p, std::size_t seq_len,
                             Rng& rng) {
  EventSequence s;
  double t = 0.0;
  while (s.times.size() < seq_len) {
    const double ub = hawkes_upper_bound(p, s.times, t);
    t += rng.exponential(ub);
    if (rng.uniform(0.0, 1.0) * ub <= hawkes_intensity(p, s.times, t))
      s.times.push_back(t);
  }
  s.T = s.times.back();
  // Exact log-likelihood under the generating intensity.
  double ll = 0.0;
  for (std::size_t i = 0; i < s.times.size(); ++i)
    ll += std::log(hawkes_intensity(p, s.times, s.times[i]));
  double comp = p.mu * s.T;
  for (double ti : s.times)
    for (std::size_t j = 0; j < p.alpha.size(); ++j)
      comp += p.alpha[j] * (1.0 - std::exp(-p.beta[j] * (s.T - ti)));
  ll -= comp;
  s.gt_nll = -ll / static_cast<double>(s.times.size());
  return s;
}

EventSequence gen_poisson_seq(std::size_t seq_len, Rng& rng) {
  EventSequence s;
  double t = 0.0;
  for (std::size_t i = 0; i < seq_len; ++i) {
    t += rng.exponential(1.0);
    s.times.push_back(t);
  }
  s.T = t;
  s.gt_nll = s.T / static_cast<double>(seq_len);  // -sum log 1 + T
  return s;
}

EventSequence gen_renewal_seq(std::size_t seq_len, Rng& rng) {
  constexpr double mu = 1.0, sigma = 6.0;
  const double log_norm = std::log(sigma * std::sqrt(2.0 * std::numbers::pi));
  EventSequence s;
  double t = 0.0, nll = 0.0;
  for (std::size_t i = 0; i < seq_len; ++i) {
    const double z = rng.normal();
    const double tau = std::exp(mu + sigma * z);
    t += tau;
    s.times.push_back(t);
    // -log of the log-normal density at tau
    nll += log_norm + std::log(tau) + 0.5 * z * z;
  }
  s.T = t;
  s.gt_nll = nll / static_cast<double>(seq_len);
  return s;
}

}  // namespace

EventSequenceDataset gen_tpp(TppKind kind, std::size_t n_seq,
                             std::size_t seq_len, std::uint64_t seed) {
  if (n_seq < 1 || seq_len < 1)
    throw std::invalid_argument("gen_tpp: n_seq, seq_len >= 1");
  EventSequenceDataset ds;
  ds.kind = to_string(kind);
  const HawkesParams h1{0.2, {0.8}, {1.0}};
  const HawkesParams h2{0.2, {0.4, 0.4}, {1.0, 20.0}};
  for (std::size_t i = 0; i < n_seq; ++i) {
    Rng rng(Rng::derive(seed, i));
    EventSequence s;
    switch (kind) {
      case TppKind::Poisson: s = gen_poisson_seq(seq_len, rng); break;
      case TppKind::Renewal: s = gen_renewal_seq(seq_len, rng); break;
      case TppKind::Hawkes1: s = gen_hawkes_seq(h1, seq_len, rng); break;
      case TppKind::Hawkes2: s = gen_hawkes_seq(h2, seq_len, rng); break;
    }
    s.split = series_split(i, n_seq);
    ds.seqs.push_back(std::move(s));
  }
  return ds;
}

DensityDataset2D gen_density2d(std::size_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("gen_density2d: n >= 1");
  DensityDataset2D ds;
  ds.samples = Tensor(n, 2);
  ds.split.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(Rng::derive(seed, i));
    ds.split[i] = series_split(i, n);
    if (rng.uniform(0.0, 1.0) < 0.5) {
      ds.samples(i, 0) = rng.normal(0.0, 0.05);
      ds.samples(i, 1) = rng.normal(0.0, 0.05);
    } else {
      const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double r = 1.0 + rng.normal(0.0, 0.01);
      ds.samples(i, 0) = r * std::cos(theta);
      ds.samples(i, 1) = r * std::sin(theta);
    }
  }
  return ds;
}

}  // namespace nf
