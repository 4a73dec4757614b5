#include "nf/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

namespace nf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

const std::set<std::string>& periodic_names() {
  static const std::set<std::string> s{"sine", "sawtooth", "square",
                                       "triangle"};
  return s;
}

TimeEmbedding::Kind embedding_from_string(const std::string& s) {
  if (s == "linear") return TimeEmbedding::Kind::Linear;
  if (s == "tanh-linear") return TimeEmbedding::Kind::TanhLinear;
  if (s == "fourier") return TimeEmbedding::Kind::Fourier;
  throw std::invalid_argument("unknown embedding: " + s);
}

std::vector<Tensor> snapshot(const std::vector<Parameter*>& ps) {
  std::vector<Tensor> out;
  out.reserve(ps.size());
  for (auto* p : ps) out.push_back(p->value);
  return out;
}

void restore(const std::vector<Parameter*>& ps,
             const std::vector<Tensor>& snap) {
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = snap[i];
}

std::vector<std::vector<std::size_t>> make_batches(
    std::vector<std::size_t> idx, std::size_t batch_size, Rng& rng) {
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < idx.size(); i += batch_size) {
    const std::size_t hi = std::min(i + batch_size, idx.size());
    out.emplace_back(idx.begin() + i, idx.begin() + hi);
  }
  return out;
}

// Shared scaffold: epoch loop, lr decay, early stopping on validation
// loss with best-parameter restore. Validation time is excluded from the
// per-epoch wall clock.
RunReport run_loop(const ExperimentConfig& cfg,
                   const std::vector<Parameter*>& params, Adam& adam,
                   const std::function<double(std::size_t, std::size_t&)>&
                       train_epoch,
                   const std::function<double()>& train_loss_now,
                   const std::function<double()>& val_loss_now) {
  RunReport rep;
  rep.config_hash = cfg.hash();

  if (cfg.epochs == 0) {
    EpochRow row;
    row.train_loss = train_loss_now();
    row.val_loss = val_loss_now();
    rep.rows.push_back(row);
    return rep;
  }

  double best_val = std::numeric_limits<double>::infinity();
  std::vector<Tensor> best;
  std::size_t bad = 0;
  double cum = 0.0;
  for (std::size_t e = 1; e <= cfg.epochs; ++e) {
    const auto t0 = Clock::now();
    std::size_t nfev = 0;
    const double tl = train_epoch(e, nfev);
    adam.set_lr(adam.lr() * cfg.lr_decay);
    const double es = seconds_since(t0);
    cum += es;

    const double vl = val_loss_now();
    rep.rows.push_back({e, tl, vl, es, cum, nfev});
    if (vl < best_val) {
      best_val = vl;
      best = snapshot(params);
      bad = 0;
    } else if (++bad >= cfg.patience) {
      break;
    }
  }
  rep.train_seconds = cum;
  if (!best.empty()) restore(params, best);
  return rep;
}

void require_finite_loss(double v, const char* what, std::size_t epoch,
                         std::size_t batch) {
  if (!std::isfinite(v))
    throw std::runtime_error(std::string(what) + ": non-finite loss at epoch " +
                             std::to_string(epoch) + ", batch " +
                             std::to_string(batch));
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

// ---- config ----

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  if (!j.is_object())
    throw std::invalid_argument("config: expected a JSON object");
  bool saw_batch = false, saw_queries = false;
  for (const auto& [key, val] : j.items()) {
    if (key == "experiment") c.experiment = val.get<std::string>();
    else if (key == "data") c.data = val.get<std::string>();
    else if (key == "n_series") c.n_series = val.get<std::size_t>();
    else if (key == "data_seed") c.data_seed = val.get<std::uint64_t>();
    else if (key == "queries_per_series") {
      c.queries_per_series = val.get<std::size_t>();
      saw_queries = true;
    } else if (key == "model") c.model = val.get<std::string>();
    else if (key == "encoder") c.encoder = val.get<std::string>();
    else if (key == "embedding") c.embedding = val.get<std::string>();
    else if (key == "flow_layers") c.flow_layers = val.get<std::size_t>();
    else if (key == "units") c.units = val.get<std::size_t>();
    else if (key == "hidden_dim") c.hidden_dim = val.get<std::size_t>();
    else if (key == "spectral_coeff") c.spectral_coeff = val.get<double>();
    else if (key == "solver") c.solver = val.get<std::string>();
    else if (key == "solver_steps") c.solver_steps = val.get<std::size_t>();
    else if (key == "rtol") c.rtol = val.get<double>();
    else if (key == "atol") c.atol = val.get<double>();
    else if (key == "mixture_k") c.mixture_k = val.get<std::size_t>();
    else if (key == "n_mc") c.n_mc = val.get<std::size_t>();
    else if (key == "normalize_tau") c.normalize_tau = val.get<bool>();
    else if (key == "log1p_tau") c.log1p_tau = val.get<bool>();
    else if (key == "lr") c.lr = val.get<double>();
    else if (key == "weight_decay") c.weight_decay = val.get<double>();
    else if (key == "lr_decay") c.lr_decay = val.get<double>();
    else if (key == "batch_size") {
      c.batch_size = val.get<std::size_t>();
      saw_batch = true;
    } else if (key == "epochs") c.epochs = val.get<std::size_t>();
    else if (key == "patience") c.patience = val.get<std::size_t>();
    else if (key == "gamma") c.gamma = val.get<double>();
    else if (key == "seed") c.seed = val.get<std::uint64_t>();
    else throw std::invalid_argument("unknown config field: " + key);
  }
  // Appendix-style defaults: smaller batches for event/density models,
  // 100-event sequences for point processes.
  if (!saw_batch && (c.experiment == "tpp" || c.experiment == "density"))
    c.batch_size = 50;
  if (!saw_queries && c.experiment == "tpp") c.queries_per_series = 100;
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  return from_json(json::parse(in));
}

json ExperimentConfig::to_json() const {
  json j;
  j["experiment"] = experiment;
  j["data"] = data;
  j["n_series"] = n_series;
  j["data_seed"] = data_seed;
  j["queries_per_series"] = queries_per_series;
  j["model"] = model;
  j["encoder"] = encoder;
  j["embedding"] = embedding;
  j["flow_layers"] = flow_layers;
  j["units"] = units;
  j["hidden_dim"] = hidden_dim;
  j["spectral_coeff"] = spectral_coeff;
  j["solver"] = solver;
  j["solver_steps"] = solver_steps;
  j["rtol"] = rtol;
  j["atol"] = atol;
  j["mixture_k"] = mixture_k;
  j["n_mc"] = n_mc;
  j["normalize_tau"] = normalize_tau;
  j["log1p_tau"] = log1p_tau;
  j["lr"] = lr;
  j["weight_decay"] = weight_decay;
  j["lr_decay"] = lr_decay;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["patience"] = patience;
  j["gamma"] = gamma;
  j["seed"] = seed;
  return j;
}

std::string ExperimentConfig::hash() const {
  const std::string s = to_json().dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("config: " + msg);
  };
  const std::set<std::string> experiments{"trajectory", "stiff", "tpp",
                                          "density"};
  if (!experiments.count(experiment)) fail("unknown experiment: " + experiment);

  if (experiment == "trajectory") {
    if (!periodic_names().count(data) && data != "sink" && data != "ellipse")
      fail("unknown trajectory data: " + data);
    const std::set<std::string> models{"resnet-flow", "gru-flow",
                                       "coupling-flow", "ode"};
    if (!models.count(model)) fail("unknown trajectory model: " + model);
  } else if (experiment == "stiff") {
    if (data != "stiff") fail("stiff experiment requires data=stiff");
    const std::set<std::string> models{"resnet-flow", "gru-flow",
                                       "coupling-flow", "ode"};
    if (!models.count(model)) fail("unknown stiff model: " + model);
  } else if (experiment == "tpp") {
    tpp_kind_from_string(data);
    if (model != "mixture" && model != "intensity")
      fail("unknown tpp model: " + model);
    encoder_kind_from_string(encoder);
  } else {
    if (data != "density2d") fail("unknown density data: " + data);
    if (model != "coupling" && model != "cnf")
      fail("unknown density model: " + model);
  }

  embedding_from_string(embedding);
  method_from_string(solver);
  if (n_series == 0) fail("n_series must be positive");
  if (queries_per_series == 0) fail("queries_per_series must be positive");
  if (flow_layers == 0) fail("flow_layers must be positive");
  if (units == 0) fail("units must be positive");
  if (hidden_dim == 0) fail("hidden_dim must be positive");
  if (!(spectral_coeff > 0.0 && spectral_coeff < 1.0))
    fail("spectral_coeff must be in (0, 1)");
  if (solver_steps == 0) fail("solver_steps must be positive");
  if (!(rtol > 0.0)) fail("rtol must be positive");
  if (!(atol > 0.0)) fail("atol must be positive");
  if (mixture_k == 0) fail("mixture_k must be positive");
  if (n_mc == 0) fail("n_mc must be positive");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (weight_decay < 0.0) fail("weight_decay must be nonnegative");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) fail("lr_decay must be in (0, 1]");
  if (batch_size == 0) fail("batch_size must be positive");
  if (gamma < 0.0) fail("gamma must be nonnegative");
}

// ---- report ----

void RunReport::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << kReportCsvHeader << "\n";
  for (const auto& r : rows)
    out << r.epoch << "," << format_double(r.train_loss) << ","
        << format_double(r.val_loss) << "," << format_double(r.epoch_seconds)
        << "," << format_double(r.cum_seconds) << "," << r.nfev << "\n";
}

void RunReport::save_metrics_json(const std::string& path) const {
  json j;
  j["schema_version"] = kReportSchemaVersion;
  j["config_hash"] = config_hash;
  j["train_seconds"] = train_seconds;
  j["total_seconds"] = total_seconds;
  json m;
  for (const auto& [k, v] : metrics) m[k] = v;
  j["metrics"] = m;
  json env;
  env["compiler"] = __VERSION__;
#if defined(__linux__)
  env["platform"] = "linux";
#elif defined(__APPLE__)
  env["platform"] = "darwin";
#else
  env["platform"] = "other";
#endif
  j["environment"] = env;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
}

// ---- dataset generation ----

TrajectoryDataset generate_trajectory_dataset(const ExperimentConfig& cfg) {
  if (cfg.experiment == "stiff") return gen_stiff(cfg.n_series, cfg.data_seed);
  if (periodic_names().count(cfg.data)) {
    PeriodicOptions opts;
    opts.queries_per_series = cfg.queries_per_series;
    return gen_periodic(periodic_kind_from_string(cfg.data), cfg.n_series,
                        cfg.data_seed, opts);
  }
  if (cfg.data == "sink")
    return gen_linear_system(cfg.n_series, cfg.data_seed,
                             cfg.queries_per_series);
  if (cfg.data == "ellipse")
    return gen_ellipse(cfg.n_series, cfg.data_seed, cfg.queries_per_series);
  throw std::invalid_argument("unknown trajectory data: " + cfg.data);
}

EventSequenceDataset generate_event_dataset(const ExperimentConfig& cfg) {
  return gen_tpp(tpp_kind_from_string(cfg.data), cfg.n_series,
                 cfg.queries_per_series, cfg.data_seed);
}

DensityDataset2D generate_density_dataset(const ExperimentConfig& cfg) {
  return gen_density2d(cfg.n_series, cfg.data_seed);
}

// ---- trajectory model ----

ad::Value TrajectoryModel::predict(ad::Tape& tape, const TrajectoryBatch& b,
                                   SolveStats* stats) const {
  const std::size_t n = b.x0.rows(), d = b.x0.cols();
  auto x0 = tape.constant(b.x0);
  if (!is_ode) {
    bool shifted = false;
    for (std::size_t i = 0; i < n; ++i)
      if (b.t0(i, 0) != 0.0) shifted = true;
    auto t = tape.constant(b.t);
    if (!shifted) return flow.forward(tape, t, x0);
    // Pull the observed state back to t = 0, then evaluate at the query.
    auto z = flow.inverse(tape, tape.constant(b.t0), x0);
    return flow.forward(tape, t, z);
  }
  // One solver call over s in [0, 1] with per-row intervals [t0_i, t_i].
  Tensor span(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) span(i, j) = b.t(i, 0) - b.t0(i, 0);
  auto sc = tape.constant(span);
  auto g = [&](double s, const ad::Value& y) {
    Tensor u(n, 1);
    for (std::size_t i = 0; i < n; ++i)
      u(i, 0) = b.t0(i, 0) + s * (b.t(i, 0) - b.t0(i, 0));
    return ad::mul(field.eval(tape, tape.constant(u), y), sc);
  };
  SolveStats st;
  auto out = integrate(g, x0, 0.0, 1.0, scfg, st);
  if (stats) {
    stats->accepted += st.accepted;
    stats->rejected += st.rejected;
    stats->nfev += st.nfev;
  }
  return out;
}

Tensor TrajectoryModel::predict(const TrajectoryBatch& b,
                                SolveStats* stats) const {
  ad::Tape tape;
  return predict(tape, b, stats).val();
}

std::vector<Parameter*> TrajectoryModel::params() {
  if (!is_ode) return flow.params();
  std::vector<Parameter*> out;
  field.f.collect_params(out);
  return out;
}

void TrajectoryModel::project() {
  if (!is_ode) flow.project();
}

void TrajectoryModel::save(const std::string& path) const {
  json m;
  m["is_ode"] = is_ode;
  m["dim"] = dim;
  if (is_ode) {
    m["field"] = vector_field_to_json(field);
    m["solver"] = solver_config_to_json(scfg);
  } else {
    m["flow"] = flow_stack_to_json(flow);
  }
  save_model(path, "trajectory", m);
}

TrajectoryModel TrajectoryModel::load(const std::string& path) {
  std::string type;
  const json m = load_model(path, &type);
  if (type != "trajectory")
    throw std::runtime_error("model file is not a trajectory model: " + path);
  TrajectoryModel out;
  out.is_ode = m.at("is_ode").get<bool>();
  out.dim = m.at("dim").get<std::size_t>();
  if (out.is_ode) {
    out.field = vector_field_from_json(m.at("field"));
    out.scfg = solver_config_from_json(m.at("solver"));
  } else {
    out.flow = flow_stack_from_json(m.at("flow"));
  }
  return out;
}

TrajectoryModel make_trajectory_model(const ExperimentConfig& cfg,
                                      std::size_t dim, Rng& rng) {
  TrajectoryModel m;
  m.dim = dim;
  if (cfg.model == "ode") {
    m.is_ode = true;
    m.field = VectorField(dim, cfg.units, 2, rng);
    const auto method = method_from_string(cfg.solver);
    if (method == SolverConfig::Method::Euler)
      m.scfg = SolverConfig::euler(cfg.solver_steps);
    else if (method == SolverConfig::Method::RK4)
      m.scfg = SolverConfig::rk4(cfg.solver_steps);
    else
      m.scfg = SolverConfig::dopri5(cfg.rtol, cfg.atol);
    return m;
  }
  const auto embed = embedding_from_string(cfg.embedding);
  for (std::size_t i = 0; i < cfg.flow_layers; ++i) {
    if (cfg.model == "resnet-flow")
      m.flow.layers.push_back(std::make_unique<ResNetFlowLayer>(
          dim, cfg.units, 2, cfg.spectral_coeff, rng, embed));
    else if (cfg.model == "gru-flow")
      m.flow.layers.push_back(std::make_unique<GRUFlowLayer>(
          dim, cfg.units, 2, cfg.spectral_coeff, rng));
    else if (cfg.model == "coupling-flow")
      m.flow.layers.push_back(std::make_unique<CouplingFlowLayer>(
          dim, dim == 1 || i % 2 == 0, cfg.units, 2, rng, embed));
    else
      throw std::invalid_argument("unknown trajectory model: " + cfg.model);
  }
  return m;
}

// ---- tpp model ----

std::vector<Parameter*> TppModel::params() {
  std::vector<Parameter*> out;
  if (mixture) {
    mix.enc.collect_params(out);
    mix.dec.collect_params(out);
  } else {
    inten.enc.collect_params(out);
    inten.head.collect_params(out);
  }
  return out;
}

void TppModel::project() {
  if (mixture)
    mix.enc.project();
  else
    inten.enc.project();
}

void TppModel::save(const std::string& path) const {
  json m;
  m["mixture"] = mixture;
  m["model"] = mixture ? tpp_mixture_to_json(mix) : tpp_intensity_to_json(inten);
  save_model(path, "tpp", m);
}

TppModel TppModel::load(const std::string& path) {
  std::string type;
  const json m = load_model(path, &type);
  if (type != "tpp")
    throw std::runtime_error("model file is not a tpp model: " + path);
  TppModel out;
  out.mixture = m.at("mixture").get<bool>();
  if (out.mixture)
    out.mix = tpp_mixture_from_json(m.at("model"));
  else
    out.inten = tpp_intensity_from_json(m.at("model"));
  return out;
}

TppModel make_tpp_model(const ExperimentConfig& cfg,
                        const EventSequenceDataset& ds, Rng& rng) {
  TppModel m;
  m.mixture = (cfg.model == "mixture");
  const auto kind = encoder_kind_from_string(cfg.encoder);
  const auto xform =
      InterEventTransform::fit(ds, cfg.normalize_tau, cfg.log1p_tau);
  if (m.mixture) {
    m.mix.enc = make_event_encoder(kind, cfg.hidden_dim, cfg.units,
                                   cfg.flow_layers, cfg.spectral_coeff, rng);
    m.mix.dec = MixtureDecoder(cfg.hidden_dim, cfg.units, cfg.mixture_k, rng);
    m.mix.xform = xform;
  } else {
    m.inten.enc = make_event_encoder(kind, cfg.hidden_dim, cfg.units,
                                     cfg.flow_layers, cfg.spectral_coeff, rng);
    m.inten.head = IntensityHead(cfg.hidden_dim, cfg.units, rng);
    m.inten.xform = xform;
  }
  return m;
}

// ---- density model ----

std::vector<Parameter*> DensityModel::params() {
  std::vector<Parameter*> out;
  if (cnf)
    field.collect_params(out);
  else
    coupling.collect_params(out);
  return out;
}

void DensityModel::save(const std::string& path) const {
  json m;
  m["cnf"] = cnf;
  m["model"] =
      cnf ? density_cnf_to_json(field) : density_coupling_to_json(coupling);
  save_model(path, "density", m);
}

DensityModel DensityModel::load(const std::string& path) {
  std::string type;
  const json m = load_model(path, &type);
  if (type != "density")
    throw std::runtime_error("model file is not a density model: " + path);
  DensityModel out;
  out.cnf = m.at("cnf").get<bool>();
  if (out.cnf)
    out.field = density_cnf_from_json(m.at("model"));
  else
    out.coupling = density_coupling_from_json(m.at("model"));
  return out;
}

DensityModel make_density_model(const ExperimentConfig& cfg, Rng& rng) {
  DensityModel m;
  m.cnf = (cfg.model == "cnf");
  if (m.cnf) {
    m.field = TimeVaryingCNF(2, cfg.units, 2, rng);
    const auto method = method_from_string(cfg.solver);
    if (method == SolverConfig::Method::Euler)
      m.field.cfg = SolverConfig::euler(cfg.solver_steps);
    else if (method == SolverConfig::Method::RK4)
      m.field.cfg = SolverConfig::rk4(cfg.solver_steps);
    else
      m.field.cfg = SolverConfig::dopri5(cfg.rtol, cfg.atol);
  } else {
    m.coupling =
        TimeVaryingCouplingDensity(2, cfg.flow_layers, cfg.units, rng);
  }
  return m;
}

// ---- trajectory training ----

double eval_trajectory_mse(const TrajectoryModel& model,
                           const TrajectoryDataset& ds, Split split,
                           SolveStats* stats) {
  const auto idx = ds.split_indices(split);
  if (idx.empty())
    throw std::invalid_argument("eval: empty split " + to_string(split));
  double sum = 0.0;
  std::size_t count = 0;
  const std::size_t chunk = 512;
  for (std::size_t i = 0; i < idx.size(); i += chunk) {
    const std::vector<std::size_t> part(
        idx.begin() + i, idx.begin() + std::min(i + chunk, idx.size()));
    const auto b = ds.batch(part);
    const Tensor pred = model.predict(b, stats);
    for (std::size_t k = 0; k < pred.size(); ++k) {
      const double e = pred[k] - b.target[k];
      sum += e * e;
    }
    count += pred.size();
  }
  return sum / static_cast<double>(count);
}

RunReport train_trajectory(const ExperimentConfig& cfg,
                           const TrajectoryDataset& ds,
                           TrajectoryModel& model) {
  const auto t_total = Clock::now();
  auto params = model.params();
  Adam adam(params, AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  const auto train_idx = ds.split_indices(Split::Train);
  Rng rng(Rng::derive(cfg.seed, 0x7261696eull));

  auto train_epoch = [&](std::size_t epoch, std::size_t& nfev) {
    double sum = 0.0;
    std::size_t nb = 0;
    for (const auto& part : make_batches(train_idx, cfg.batch_size, rng)) {
      const auto b = ds.batch(part);
      ad::Tape tape;
      SolveStats st;
      auto pred = model.predict(tape, b, &st);
      nfev += st.nfev;
      auto loss =
          ad::mean_all(ad::square(ad::sub(pred, tape.constant(b.target))));
      if (cfg.gamma > 0.0 && !model.is_ode)
        loss = ad::add(loss, ad::scale(autonomous_penalty(tape, model.flow,
                                                          b.t, b.x0, rng),
                                       cfg.gamma));
      const double lv = loss.val().item();
      require_finite_loss(lv, "train_trajectory", epoch, nb);
      adam.step(tape.backward(loss));
      model.project();
      sum += lv;
      ++nb;
    }
    return sum / static_cast<double>(nb);
  };
  auto train_now = [&] { return eval_trajectory_mse(model, ds, Split::Train); };
  auto val_now = [&] { return eval_trajectory_mse(model, ds, Split::Val); };

  RunReport rep = run_loop(cfg, params, adam, train_epoch, train_now, val_now);
  rep.metrics["train_mse"] = train_now();
  rep.metrics["val_mse"] = val_now();
  for (Split s : {Split::Test, Split::ExtrapSpace, Split::ExtrapTime})
    if (!ds.split_indices(s).empty())
      rep.metrics[to_string(s) + "_mse"] = eval_trajectory_mse(model, ds, s);
  rep.total_seconds = seconds_since(t_total);
  return rep;
}

// ---- tpp training ----

namespace {

// Equal-length groups, as the batched losses require.
std::map<std::size_t, std::vector<std::size_t>> group_by_length(
    const EventSequenceDataset& ds, Split split) {
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i : ds.split_indices(split))
    groups[ds.seqs[i].times.size()].push_back(i);
  return groups;
}

ad::Value tpp_batch_nll(ad::Tape& tape, const TppModel& model,
                        const EventSequenceDataset& ds,
                        const std::vector<std::size_t>& part,
                        std::size_t n_mc, Rng& rng) {
  std::vector<const EventSequence*> seqs;
  seqs.reserve(part.size());
  for (std::size_t i : part) seqs.push_back(&ds.seqs[i]);
  if (model.mixture)
    return nll_mixture(tape, model.mix.enc, model.mix.dec, model.mix.xform,
                       seqs);
  return nll_continuous(tape, model.inten.enc, model.inten.head,
                        model.inten.xform, seqs, n_mc, rng);
}

}  // namespace

double eval_tpp_nll(const TppModel& model, const EventSequenceDataset& ds,
                    Split split, std::size_t n_mc, std::uint64_t seed) {
  const auto groups = group_by_length(ds, split);
  if (groups.empty())
    throw std::invalid_argument("eval: empty split " + to_string(split));
  double total = 0.0;
  std::size_t events = 0;
  std::size_t stream = 0;
  const std::size_t chunk = 100;
  for (const auto& [len, idx] : groups) {
    for (std::size_t i = 0; i < idx.size(); i += chunk) {
      const std::vector<std::size_t> part(
          idx.begin() + i, idx.begin() + std::min(i + chunk, idx.size()));
      Rng rng(Rng::derive(seed, 0x6d63u + stream++));
      ad::Tape tape;
      const double nll =
          tpp_batch_nll(tape, model, ds, part, n_mc, rng).val().item();
      total += nll * static_cast<double>(part.size() * len);
      events += part.size() * len;
    }
  }
  return total / static_cast<double>(events);
}

double mean_gt_nll(const EventSequenceDataset& ds, Split split) {
  double total = 0.0;
  std::size_t events = 0;
  for (std::size_t i : ds.split_indices(split)) {
    const auto& s = ds.seqs[i];
    total += s.gt_nll * static_cast<double>(s.times.size());
    events += s.times.size();
  }
  return total / static_cast<double>(events);
}

RunReport train_tpp(const ExperimentConfig& cfg, const EventSequenceDataset& ds,
                    TppModel& model) {
  const auto t_total = Clock::now();
  auto params = model.params();
  Adam adam(params, AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  const auto groups = group_by_length(ds, Split::Train);
  Rng rng(Rng::derive(cfg.seed, 0x747070ull));

  auto train_epoch = [&](std::size_t epoch, std::size_t& nfev) {
    (void)nfev;
    std::vector<std::vector<std::size_t>> batches;
    for (const auto& [len, idx] : groups)
      for (auto& b : make_batches(idx, cfg.batch_size, rng))
        batches.push_back(std::move(b));
    std::shuffle(batches.begin(), batches.end(), rng.engine());
    double sum = 0.0;
    std::size_t nb = 0;
    for (const auto& part : batches) {
      ad::Tape tape;
      auto loss = tpp_batch_nll(tape, model, ds, part, cfg.n_mc, rng);
      const double lv = loss.val().item();
      require_finite_loss(lv, "train_tpp", epoch, nb);
      adam.step(tape.backward(loss));
      model.project();
      sum += lv;
      ++nb;
    }
    return sum / static_cast<double>(nb);
  };
  auto train_now = [&] {
    return eval_tpp_nll(model, ds, Split::Train, cfg.n_mc, cfg.seed);
  };
  auto val_now = [&] {
    return eval_tpp_nll(model, ds, Split::Val, cfg.n_mc, cfg.seed);
  };

  RunReport rep = run_loop(cfg, params, adam, train_epoch, train_now, val_now);
  rep.metrics["train_nll"] = train_now();
  rep.metrics["val_nll"] = val_now();
  rep.metrics["test_nll"] =
      eval_tpp_nll(model, ds, Split::Test, cfg.n_mc, cfg.seed);
  rep.metrics["gt_nll_train"] = mean_gt_nll(ds, Split::Train);
  rep.metrics["gt_nll_val"] = mean_gt_nll(ds, Split::Val);
  rep.metrics["gt_nll_test"] = mean_gt_nll(ds, Split::Test);
  rep.total_seconds = seconds_since(t_total);
  return rep;
}

// ---- density training ----

namespace {

Tensor density_rows(const DensityDataset2D& ds,
                    const std::vector<std::size_t>& idx) {
  Tensor x(idx.size(), ds.samples.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < ds.samples.cols(); ++j)
      x(i, j) = ds.samples(idx[i], j);
  return x;
}

ad::Value density_log_prob(ad::Tape& tape, const DensityModel& model,
                           const std::vector<double>& t, const Tensor& x) {
  if (model.cnf) return model.field.log_prob(tape, t, tape.constant(x));
  Tensor tcol(t.size(), 1);
  for (std::size_t i = 0; i < t.size(); ++i) tcol(i, 0) = t[i];
  return model.coupling.log_prob(tape, tape.constant(tcol),
                                 tape.constant(x));
}

}  // namespace

double eval_density_nll(const DensityModel& model, const DensityDataset2D& ds,
                        Split split) {
  const auto idx = ds.split_indices(split);
  if (idx.empty())
    throw std::invalid_argument("eval: empty split " + to_string(split));
  double sum = 0.0;
  const std::size_t chunk = 256;
  for (std::size_t i = 0; i < idx.size(); i += chunk) {
    const std::vector<std::size_t> part(
        idx.begin() + i, idx.begin() + std::min(i + chunk, idx.size()));
    const Tensor x = density_rows(ds, part);
    ad::Tape tape;
    const auto lp = density_log_prob(
        tape, model, std::vector<double>(part.size(), 1.0), x);
    for (std::size_t k = 0; k < part.size(); ++k) sum -= lp.val()(k, 0);
  }
  return sum / static_cast<double>(idx.size());
}

RunReport train_density(const ExperimentConfig& cfg,
                        const DensityDataset2D& ds, DensityModel& model) {
  const auto t_total = Clock::now();
  auto params = model.params();
  Adam adam(params, AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  const auto train_idx = ds.split_indices(Split::Train);
  Rng rng(Rng::derive(cfg.seed, 0x64656e73ull));

  // Per-sample times from U(0, 1): the model carries the base density at
  // t = 0 toward the data along t, with the data fully weighted at t = 1.
  auto train_epoch = [&](std::size_t epoch, std::size_t& nfev) {
    (void)nfev;
    double sum = 0.0;
    std::size_t nb = 0;
    for (const auto& part : make_batches(train_idx, cfg.batch_size, rng)) {
      const Tensor x = density_rows(ds, part);
      std::vector<double> t(part.size());
      for (auto& ti : t) ti = rng.uniform(0.0, 1.0);
      ad::Tape tape;
      auto loss = ad::neg(ad::mean_all(density_log_prob(tape, model, t, x)));
      const double lv = loss.val().item();
      require_finite_loss(lv, "train_density", epoch, nb);
      adam.step(tape.backward(loss));
      sum += lv;
      ++nb;
    }
    return sum / static_cast<double>(nb);
  };
  auto train_now = [&] { return eval_density_nll(model, ds, Split::Train); };
  auto val_now = [&] { return eval_density_nll(model, ds, Split::Val); };

  RunReport rep = run_loop(cfg, params, adam, train_epoch, train_now, val_now);
  rep.metrics["train_nll"] = train_now();
  rep.metrics["val_nll"] = val_now();
  if (!ds.split_indices(Split::Test).empty())
    rep.metrics["test_nll"] = eval_density_nll(model, ds, Split::Test);
  rep.total_seconds = seconds_since(t_total);
  return rep;
}

}  // namespace nf
