#include "nf/density.hpp"

#include <cmath>
#include <numbers>

namespace nf {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

}  // namespace

ad::Value gaussian_log_prob(ad::Tape& tape, const ad::Value& z) {
  (void)tape;
  const double c = -0.5 * kLog2Pi * static_cast<double>(z.cols());
  return ad::add_const(ad::scale(ad::sum_cols(ad::square(z)), -0.5), c);
}

double gaussian_log_prob(const Tensor& z_row) {
  double s = 0.0;
  for (std::size_t i = 0; i < z_row.size(); ++i) s += z_row[i] * z_row[i];
  return -0.5 * s - 0.5 * kLog2Pi * static_cast<double>(z_row.size());
}

TimeVaryingCouplingDensity::TimeVaryingCouplingDensity(std::size_t d,
                                                       std::size_t n_layers,
                                                       std::size_t units,
                                                       Rng& rng) {
  for (std::size_t i = 0; i < n_layers; ++i)
    flow.layers.push_back(
        std::make_unique<CouplingFlowLayer>(d, i % 2 == 0, units, 1, rng));
}

ad::Value TimeVaryingCouplingDensity::log_prob(ad::Tape& tape,
                                               const ad::Value& t,
                                               const ad::Value& x) const {
  auto z = flow.inverse(tape, t, x);
  auto ld = flow.log_det_forward(tape, t, z);
  return ad::sub(gaussian_log_prob(tape, z), ld);
}

Tensor TimeVaryingCouplingDensity::log_prob(double t, const Tensor& x) const {
  ad::Tape tape;
  return log_prob(tape, tape.constant(Tensor::full(x.rows(), 1, t)),
                  tape.constant(x))
      .val();
}

Tensor TimeVaryingCouplingDensity::sample(double t, std::size_t n,
                                          Rng& rng) const {
  Tensor z(n, dim());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return flow.forward(t, z);
}

void TimeVaryingCouplingDensity::collect_params(
    std::vector<Parameter*>& out) {
  flow.collect_params(out);
}

TimeVaryingCNF::TimeVaryingCNF(std::size_t d, std::size_t units,
                               std::size_t hidden_layers, Rng& rng)
    : field(d, units, hidden_layers, rng, Activation::Tanh) {
  if (d > 3)
    throw std::invalid_argument("TimeVaryingCNF: exact trace needs d <= 3");
}

std::pair<ad::Value, ad::Value> TimeVaryingCNF::field_with_trace(
    ad::Tape& tape, const ad::Value& t, const ad::Value& x) const {
  const std::size_t n = x.rows(), d = x.cols();
  const MLP& net = field.f;
  ad::Value h = ad::concat_cols(t, x);
  // Forward-mode tangents, one per state coordinate (column 0 is time).
  std::vector<ad::Value> tang(d);
  for (std::size_t k = 0; k < d; ++k) {
    Tensor e(n, d + 1);
    for (std::size_t i = 0; i < n; ++i) e(i, k + 1) = 1.0;
    tang[k] = tape.constant(e);
  }
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const LinearLayer& l = net.layers[li];
    auto W = tape.leaf(l.W);
    auto pre = ad::affine(h, W, tape.leaf(l.b));
    auto Wt = ad::transpose(W);
    for (auto& v : tang) v = ad::matmul(v, Wt);
    const Activation act =
        li + 1 < net.layers.size() ? net.hidden_act : net.output_act;
    if (act == Activation::Tanh) {
      h = ad::tanh(pre);
      auto deriv = ad::add_const(ad::neg(ad::square(h)), 1.0);
      for (auto& v : tang) v = ad::mul(v, deriv);
    } else if (act == Activation::Identity) {
      h = pre;
    } else {
      throw std::logic_error(
          "field_with_trace: only tanh/identity activations supported");
    }
  }
  ad::Value trace;
  for (std::size_t k = 0; k < d; ++k) {
    auto tk = ad::select_cols(tang[k], {k});
    trace = trace.valid() ? ad::add(trace, tk) : tk;
  }
  return {h, trace};
}

ad::Value TimeVaryingCNF::log_prob(ad::Tape& tape,
                                   const std::vector<double>& t,
                                   const ad::Value& x) const {
  const std::size_t n = x.rows(), d = x.cols();
  if (t.size() != n)
    throw std::invalid_argument("TimeVaryingCNF::log_prob: |t| != rows");
  for (double ti : t)
    if (ti < 0)
      throw std::invalid_argument("TimeVaryingCNF::log_prob: t >= 0");

  Tensor scale_nd(n, d), scale_col(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    scale_col(i, 0) = t[i];
    for (std::size_t j = 0; j < d; ++j) scale_nd(i, j) = t[i];
  }
  auto sc_nd = tape.constant(scale_nd);
  auto sc_col = tape.constant(scale_col);

  std::vector<std::size_t> zi(d);
  for (std::size_t j = 0; j < d; ++j) zi[j] = j;

  // State integrated backward via s in [0, 1], u_i = t_i (1 - s), with a
  // trailing column accumulating the Jacobian trace integral.
  auto Y0 = ad::concat_cols(x, tape.constant(Tensor(n, 1)));
  auto g = [&](double s, const ad::Value& Y) {
    Tensor u(n, 1);
    for (std::size_t i = 0; i < n; ++i) u(i, 0) = t[i] * (1.0 - s);
    auto z = ad::select_cols(Y, zi);
    auto [f, tr] = field_with_trace(tape, tape.constant(u), z);
    auto dz = ad::neg(ad::mul(f, sc_nd));
    auto dl = ad::mul(tr, sc_col);
    return ad::concat_cols(dz, dl);
  };
  SolveStats stats;
  auto Yend = integrate(g, Y0, 0.0, 1.0, cfg, stats);
  auto zend = ad::select_cols(Yend, zi);
  auto ell = ad::select_cols(Yend, {d});
  return ad::sub(gaussian_log_prob(tape, zend), ell);
}

Tensor TimeVaryingCNF::log_prob(double t, const Tensor& x) const {
  ad::Tape tape;
  return log_prob(tape, std::vector<double>(x.rows(), t), tape.constant(x))
      .val();
}

void TimeVaryingCNF::collect_params(std::vector<Parameter*>& out) {
  field.f.collect_params(out);
}

namespace {

template <class F>
double grid_integral_impl(F&& log_prob_batch, double lo, double hi,
                          std::size_t n) {
  const double h = (hi - lo) / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor pts(n, 2);
    for (std::size_t j = 0; j < n; ++j) {
      pts(j, 0) = lo + (static_cast<double>(i) + 0.5) * h;
      pts(j, 1) = lo + (static_cast<double>(j) + 0.5) * h;
    }
    const Tensor lp = log_prob_batch(pts);
    for (std::size_t j = 0; j < n; ++j) total += std::exp(lp(j, 0));
  }
  return total * h * h;
}

}  // namespace

double grid_integral(const TimeVaryingCouplingDensity& model, double t,
                     double lo, double hi, std::size_t n) {
  return grid_integral_impl(
      [&](const Tensor& pts) { return model.log_prob(t, pts); }, lo, hi, n);
}

double grid_integral(const TimeVaryingCNF& model, double t, double lo,
                     double hi, std::size_t n) {
  return grid_integral_impl(
      [&](const Tensor& pts) { return model.log_prob(t, pts); }, lo, hi, n);
}

}  // namespace nf
