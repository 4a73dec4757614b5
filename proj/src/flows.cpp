#include "nf/flows.hpp"

#include <cmath>

namespace nf {

Tensor matrix_exp(const Tensor& A) {
  if (A.rows() != A.cols())
    throw std::invalid_argument("matrix_exp: square matrix required");
  ensure_finite(A, "matrix_exp");
  const std::size_t d = A.rows();
  // 1-norm (max column sum)
  double norm1 = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += std::abs(A(i, j));
    norm1 = std::max(norm1, s);
  }
  int s = 0;
  while (norm1 > 0.5) {
    norm1 /= 2.0;
    ++s;
  }
  Tensor B = std::pow(0.5, s) * A;
  Tensor result = Tensor::identity(d);
  Tensor term = Tensor::identity(d);
  for (int k = 1; k <= 13; ++k) {
    term = (1.0 / k) * matmul(term, B);
    result = result + term;
  }
  for (int i = 0; i < s; ++i) result = matmul(result, result);
  return result;
}

// ---- FlowLayer base ----

ad::Value FlowLayer::inverse(ad::Tape& tape, const ad::Value& t,
                             const ad::Value& y,
                             const InverseOptions& opts) const {
  ad::Value x = y;
  for (std::size_t k = 0; k < opts.max_iter; ++k) {
    ad::Value fx = forward(tape, t, x);
    // x <- y - (F(x) - x)
    ad::Value xn = ad::sub(y, ad::sub(fx, x));
    double delta = max_abs_diff(xn.val(), x.val());
    x = xn;
    if (delta < opts.tol) return x;
  }
  double resid = max_abs_diff(forward(tape, t, x).val(), y.val());
  throw FlowInverseError(
      "flow inverse: fixed point did not converge within " +
          std::to_string(opts.max_iter) + " iterations (residual " +
          std::to_string(resid) + ")",
      x.val(), resid, opts.max_iter);
}

ad::Value FlowLayer::log_det_forward(ad::Tape&, const ad::Value&,
                                     const ad::Value&) const {
  throw std::logic_error("log_det_forward: no tractable Jacobian for " +
                         kind() + " layer");
}

Tensor FlowLayer::forward(double t, const Tensor& x) const {
  ad::Tape tape;
  return forward(tape, tape.constant(Tensor::full(x.rows(), 1, t)),
                 tape.constant(x))
      .val();
}

Tensor FlowLayer::inverse(double t, const Tensor& y,
                          const InverseOptions& opts) const {
  ad::Tape tape;
  return inverse(tape, tape.constant(Tensor::full(y.rows(), 1, t)),
                 tape.constant(y), opts)
      .val();
}

// ---- ResNet flow ----

ResNetFlowLayer::ResNetFlowLayer(std::size_t d, std::size_t hidden,
                                 std::size_t hidden_layers,
                                 double spectral_coeff, Rng& rng,
                                 TimeEmbedding::Kind embed)
    : d_(d) {
  switch (embed) {
    case TimeEmbedding::Kind::TanhLinear:
      phi = TimeEmbedding::tanh_linear(d, rng);
      break;
    case TimeEmbedding::Kind::Fourier:
      phi = TimeEmbedding::fourier(d, 8, rng, /*bounded=*/true);
      break;
    default:
      throw std::invalid_argument(
          "ResNetFlowLayer: embedding must be bounded");
  }
  g = make_contractive_mlp(d + 1, d, hidden, hidden_layers, spectral_coeff,
                           rng);
}

ad::Value ResNetFlowLayer::forward(ad::Tape& tape, const ad::Value& t,
                                   const ad::Value& x) const {
  if (x.cols() != d_)
    throw std::invalid_argument("ResNetFlowLayer: state dim mismatch");
  ad::Value gv = g.forward(tape, ad::concat_cols(t, x));
  return ad::add(x, ad::mul(phi.forward(tape, t), gv));
}

void ResNetFlowLayer::collect_params(std::vector<Parameter*>& out) {
  phi.collect_params(out);
  g.collect_params(out);
}

// ---- GRU flow ----

GRUFlowLayer::GRUFlowLayer(std::size_t d, std::size_t hidden,
                           std::size_t hidden_layers, double spectral_coeff,
                           Rng& rng)
    : d_(d) {
  phi = TimeEmbedding::tanh_linear(d, rng, /*nonneg=*/true);
  f_z = make_contractive_mlp(d + 1, d, hidden, hidden_layers, spectral_coeff,
                             rng);
  f_r = make_contractive_mlp(d + 1, d, hidden, hidden_layers, spectral_coeff,
                             rng);
  f_c = make_contractive_mlp(d + 1, d, hidden, hidden_layers, spectral_coeff,
                             rng);
}

ad::Value GRUFlowLayer::residual(ad::Tape& tape, const ad::Value& t,
                                 const ad::Value& x) const {
  if (x.cols() != d_)
    throw std::invalid_argument("GRUFlowLayer: state dim mismatch");
  ad::Value tin = ad::concat_cols(t, x);
  ad::Value z = ad::scale(ad::sigmoid(f_z.forward(tape, tin)), kAlpha);
  ad::Value r = ad::scale(ad::sigmoid(f_r.forward(tape, tin)), kBeta);
  ad::Value c =
      ad::tanh(f_c.forward(tape, ad::concat_cols(t, ad::mul(r, x))));
  ad::Value one_minus_z = ad::add_const(ad::neg(z), 1.0);
  return ad::mul(phi.forward(tape, t),
                 ad::mul(one_minus_z, ad::sub(c, x)));
}

ad::Value GRUFlowLayer::forward(ad::Tape& tape, const ad::Value& t,
                                const ad::Value& x) const {
  return ad::add(x, residual(tape, t, x));
}

void GRUFlowLayer::collect_params(std::vector<Parameter*>& out) {
  phi.collect_params(out);
  f_z.collect_params(out);
  f_r.collect_params(out);
  f_c.collect_params(out);
}

void GRUFlowLayer::project() {
  f_z.project();
  f_r.project();
  f_c.project();
}

// ---- Coupling flow ----

CouplingFlowLayer::CouplingFlowLayer(std::size_t d, bool transform_even,
                                     std::size_t hidden,
                                     std::size_t hidden_layers, Rng& rng,
                                     TimeEmbedding::Kind embed)
    : d_(d) {
  if (d == 0) throw std::invalid_argument("CouplingFlowLayer: d >= 1");
  for (std::size_t i = 0; i < d; ++i)
    ((i % 2 == 0) == transform_even ? A : B).push_back(i);
  if (A.empty())
    throw std::invalid_argument("CouplingFlowLayer: empty transform set");
  // For d == 1, B is empty and the conditioners depend on t alone.
  const std::size_t in = 1 + B.size();
  std::vector<std::size_t> sizes;
  sizes.push_back(in);
  for (std::size_t i = 0; i < hidden_layers; ++i) sizes.push_back(hidden);
  sizes.push_back(A.size());
  u = MLP(sizes, Activation::Tanh, Activation::Identity, 0.0, rng);
  v = MLP(sizes, Activation::Tanh, Activation::Identity, 0.0, rng);
  switch (embed) {
    case TimeEmbedding::Kind::Linear:
      phi_u = TimeEmbedding::linear(A.size(), rng);
      phi_v = TimeEmbedding::linear(A.size(), rng);
      break;
    case TimeEmbedding::Kind::TanhLinear:
      phi_u = TimeEmbedding::tanh_linear(A.size(), rng);
      phi_v = TimeEmbedding::tanh_linear(A.size(), rng);
      break;
    case TimeEmbedding::Kind::Fourier:
      phi_u = TimeEmbedding::fourier(A.size(), 8, rng, /*bounded=*/false);
      phi_v = TimeEmbedding::fourier(A.size(), 8, rng, /*bounded=*/false);
      break;
  }
}

std::pair<ad::Value, ad::Value> CouplingFlowLayer::terms(
    ad::Tape& tape, const ad::Value& t, const ad::Value& xB) const {
  ad::Value inp = B.empty() ? t : ad::concat_cols(t, xB);
  ad::Value uu = u.forward(tape, inp);
  ad::Value vv = v.forward(tape, inp);
  ad::Value log_scale = ad::mul(uu, phi_u.forward(tape, t));
  ad::Value shift = ad::mul(vv, phi_v.forward(tape, t));
  return {log_scale, shift};
}

ad::Value CouplingFlowLayer::forward(ad::Tape& tape, const ad::Value& t,
                                     const ad::Value& x) const {
  if (x.cols() != d_)
    throw std::invalid_argument("CouplingFlowLayer: state dim mismatch");
  ad::Value xA = ad::select_cols(x, A);
  ad::Value xB = ad::select_cols(x, B);
  auto [log_scale, shift] = terms(tape, t, xB);
  ad::Value yA = ad::add(ad::mul(xA, ad::exp(log_scale)), shift);
  return ad::merge_cols(A, yA, B, xB, d_);
}

ad::Value CouplingFlowLayer::inverse(ad::Tape& tape, const ad::Value& t,
                                     const ad::Value& y,
                                     const InverseOptions&) const {
  if (y.cols() != d_)
    throw std::invalid_argument("CouplingFlowLayer: state dim mismatch");
  ad::Value yA = ad::select_cols(y, A);
  ad::Value yB = ad::select_cols(y, B);
  auto [log_scale, shift] = terms(tape, t, yB);
  ad::Value xA = ad::mul(ad::sub(yA, shift), ad::exp(ad::neg(log_scale)));
  return ad::merge_cols(A, xA, B, yB, d_);
}

ad::Value CouplingFlowLayer::log_det_forward(ad::Tape& tape,
                                             const ad::Value& t,
                                             const ad::Value& x) const {
  ad::Value xB = ad::select_cols(x, B);
  auto [log_scale, shift] = terms(tape, t, xB);
  (void)shift;
  return ad::sum_cols(log_scale);
}

void CouplingFlowLayer::collect_params(std::vector<Parameter*>& out) {
  u.collect_params(out);
  v.collect_params(out);
  phi_u.collect_params(out);
  phi_v.collect_params(out);
}

// ---- Linear flow ----

LinearFlow::LinearFlow(Tensor A) {
  if (A.rows() != A.cols())
    throw std::invalid_argument("LinearFlow: square matrix required");
  A_mat = Parameter(std::move(A));
}

ad::Value LinearFlow::apply(ad::Tape& tape, const ad::Value& t,
                            const ad::Value& x, double sign) const {
  const std::size_t n = x.rows(), d = dim();
  if (x.cols() != d)
    throw std::invalid_argument("LinearFlow: state dim mismatch");
  // Per-row propagator exp(sign * A * t_i); cached for the backward pass.
  auto mats = std::make_shared<std::vector<Tensor>>();
  mats->reserve(n);
  Tensor out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor E = matrix_exp((sign * t.val()(i, 0)) * A_mat.value);
    for (std::size_t r = 0; r < d; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += E(r, c) * x.val()(i, c);
      out(i, r) = s;
    }
    mats->push_back(std::move(E));
  }
  return tape.record(std::move(out), {x.node()}, [mats](ad::Node& nd) {
    if (!nd.parents[0]->requires_grad) return;
    const std::size_t n = nd.grad.rows(), d = nd.grad.cols();
    Tensor g(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor& E = (*mats)[i];
      for (std::size_t c = 0; c < d; ++c) {
        double s = 0.0;
        for (std::size_t r = 0; r < d; ++r) s += nd.grad(i, r) * E(r, c);
        g(i, c) = s;
      }
    }
    nd.parents[0]->accumulate(g);
  });
}

ad::Value LinearFlow::forward(ad::Tape& tape, const ad::Value& t,
                              const ad::Value& x) const {
  return apply(tape, t, x, 1.0);
}

ad::Value LinearFlow::inverse(ad::Tape& tape, const ad::Value& t,
                              const ad::Value& y,
                              const InverseOptions&) const {
  return apply(tape, t, y, -1.0);
}

ad::Value LinearFlow::log_det_forward(ad::Tape& tape, const ad::Value& t,
                                      const ad::Value& x) const {
  // log|det exp(At)| = t * tr(A)
  double tr = 0.0;
  for (std::size_t i = 0; i < dim(); ++i) tr += A_mat.value(i, i);
  Tensor out(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) out(i, 0) = tr * t.val()(i, 0);
  return tape.constant(std::move(out));
}

// ---- FlowStack ----

ad::Value FlowStack::forward(ad::Tape& tape, const ad::Value& t,
                             const ad::Value& x) const {
  ad::Value h = x;
  for (const auto& layer : layers) h = layer->forward(tape, t, h);
  return h;
}

ad::Value FlowStack::inverse(ad::Tape& tape, const ad::Value& t,
                             const ad::Value& y,
                             const InverseOptions& opts) const {
  ad::Value h = y;
  for (auto it = layers.rbegin(); it != layers.rend(); ++it)
    h = (*it)->inverse(tape, t, h, opts);
  return h;
}

ad::Value FlowStack::log_det_forward(ad::Tape& tape, const ad::Value& t,
                                     const ad::Value& x) const {
  ad::Value h = x;
  ad::Value acc;
  for (const auto& layer : layers) {
    ad::Value ld = layer->log_det_forward(tape, t, h);
    acc = acc.valid() ? ad::add(acc, ld) : ld;
    h = layer->forward(tape, t, h);
  }
  if (!acc.valid()) acc = tape.constant(Tensor(x.rows(), 1));
  return acc;
}

Tensor FlowStack::forward(double t, const Tensor& x) const {
  ad::Tape tape;
  return forward(tape, tape.constant(Tensor::full(x.rows(), 1, t)),
                 tape.constant(x))
      .val();
}

Tensor FlowStack::inverse(double t, const Tensor& y,
                          const InverseOptions& opts) const {
  ad::Tape tape;
  return inverse(tape, tape.constant(Tensor::full(y.rows(), 1, t)),
                 tape.constant(y), opts)
      .val();
}

void FlowStack::collect_params(std::vector<Parameter*>& out) {
  for (auto& layer : layers) layer->collect_params(out);
}

std::vector<Parameter*> FlowStack::params() {
  std::vector<Parameter*> out;
  collect_params(out);
  return out;
}

void FlowStack::project() {
  for (auto& layer : layers) layer->project();
}

std::vector<Tensor> solve_ivp(const FlowStack& stack, double t0,
                              const Tensor& x0,
                              const std::vector<double>& targets,
                              const InverseOptions& opts) {
  for (double t : targets)
    if (!std::isfinite(t)) throw std::invalid_argument("solve_ivp: target");
  if (!std::isfinite(t0)) throw std::invalid_argument("solve_ivp: t0");
  Tensor origin = (t0 == 0.0) ? x0 : stack.inverse(t0, x0, opts);
  std::vector<Tensor> out;
  out.reserve(targets.size());
  for (double t : targets) out.push_back(stack.forward(t, origin));
  return out;
}

ad::Value autonomous_penalty(ad::Tape& tape, const FlowStack& stack,
                             const Tensor& times, const Tensor& X, Rng& rng) {
  const std::size_t n = X.rows();
  if (times.rows() != n || times.cols() != 1)
    throw std::invalid_argument("autonomous_penalty: times must be n x 1");
  Tensor t1(n, 1), t2(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    double ti = times(i, 0);
    if (ti < 0) throw std::invalid_argument("autonomous_penalty: t >= 0");
    double a = rng.uniform(0.0, 1.0) * ti;
    t1(i, 0) = a;
    t2(i, 0) = ti - a;
  }
  ad::Value x = tape.constant(X);
  ad::Value full = stack.forward(tape, tape.constant(times), x);
  ad::Value comp = stack.forward(
      tape, tape.constant(t2),
      stack.forward(tape, tape.constant(t1), x));
  return ad::scale(ad::sum_all(ad::square(ad::sub(full, comp))),
                   1.0 / static_cast<double>(n));
}

double autonomous_penalty(const FlowStack& stack, const Tensor& times,
                          const Tensor& X, Rng& rng) {
  ad::Tape tape;
  return autonomous_penalty(tape, stack, times, X, rng).val().item();
}

}  // namespace nf
