#pragma once

#include <memory>
#include <vector>

#include "nf/embedding.hpp"
#include "nf/nn.hpp"

namespace nf {

// exp(A) by scaling-and-squaring with a degree-13 Taylor series.
Tensor matrix_exp(const Tensor& A);

struct InverseOptions {
  double tol = 1e-8;
  std::size_t max_iter = 200;
};

class FlowInverseError : public std::runtime_error {
 public:
  FlowInverseError(std::string msg, Tensor last, double residual,
                   std::size_t iters)
      : std::runtime_error(std::move(msg)),
        last_iterate(std::move(last)),
        residual_norm(residual),
        iterations(iters) {}
  Tensor last_iterate;
  double residual_norm;
  std::size_t iterations;
};

// A time-indexed invertible map F(t, x) with F(0, x) = x.
class FlowLayer {
 public:
  virtual ~FlowLayer() = default;
  virtual std::size_t dim() const = 0;
  virtual std::string kind() const = 0;

  // t: n x 1 times, x: n x d states -> n x d
  virtual ad::Value forward(ad::Tape& tape, const ad::Value& t,
                            const ad::Value& x) const = 0;
  // Default: fixed-point iteration x <- y - (F(t,x) - x). Analytic layers
  // override.
  virtual ad::Value inverse(ad::Tape& tape, const ad::Value& t,
                            const ad::Value& y,
                            const InverseOptions& opts) const;
  // log|det dF/dx| per row (n x 1); only layers with tractable Jacobians.
  virtual ad::Value log_det_forward(ad::Tape& tape, const ad::Value& t,
                                    const ad::Value& x) const;

  virtual void collect_params(std::vector<Parameter*>& out) = 0;
  virtual void project() {}

  // Non-taped single-point conveniences.
  Tensor forward(double t, const Tensor& x) const;
  Tensor inverse(double t, const Tensor& y,
                 const InverseOptions& opts = {}) const;
};

class ResNetFlowLayer : public FlowLayer {
 public:
  using FlowLayer::forward;
  using FlowLayer::inverse;
  ResNetFlowLayer() = default;
  // g: contractive MLP over (t, x)
  ResNetFlowLayer(std::size_t d, std::size_t hidden, std::size_t hidden_layers,
                  double spectral_coeff, Rng& rng,
                  TimeEmbedding::Kind embed = TimeEmbedding::Kind::TanhLinear);

  std::size_t dim() const override { return d_; }
  std::string kind() const override { return "resnet"; }
  ad::Value forward(ad::Tape&, const ad::Value& t,
                    const ad::Value& x) const override;
  void collect_params(std::vector<Parameter*>& out) override;
  void project() override { g.project(); }

  TimeEmbedding phi;
  MLP g;

 private:
  std::size_t d_ = 0;
};

class GRUFlowLayer : public FlowLayer {
 public:
  using FlowLayer::forward;
  using FlowLayer::inverse;
  static constexpr double kAlpha = 2.0 / 5.0;
  static constexpr double kBeta = 4.0 / 5.0;

  GRUFlowLayer() = default;
  GRUFlowLayer(std::size_t d, std::size_t hidden, std::size_t hidden_layers,
               double spectral_coeff, Rng& rng);

  std::size_t dim() const override { return d_; }
  std::string kind() const override { return "gru"; }
  ad::Value forward(ad::Tape&, const ad::Value& t,
                    const ad::Value& x) const override;
  // The residual phi(t)(1-z)(c-h); used by invariant tests.
  ad::Value residual(ad::Tape&, const ad::Value& t, const ad::Value& x) const;
  void collect_params(std::vector<Parameter*>& out) override;
  void project() override;

  TimeEmbedding phi;  // nonneg tanh-linear: phi(t) in [0,1) for t >= 0
  MLP f_z, f_r, f_c;

 private:
  std::size_t d_ = 0;
};

class CouplingFlowLayer : public FlowLayer {
 public:
  using FlowLayer::forward;
  using FlowLayer::inverse;
  CouplingFlowLayer() = default;
  // parity selects the transformed set A: even or odd indices. For d == 1
  // the conditioner set B is empty and u, v become functions of t alone.
  CouplingFlowLayer(std::size_t d, bool transform_even, std::size_t hidden,
                    std::size_t hidden_layers, Rng& rng,
                    TimeEmbedding::Kind embed = TimeEmbedding::Kind::Linear);

  std::size_t dim() const override { return d_; }
  std::string kind() const override { return "coupling"; }
  ad::Value forward(ad::Tape&, const ad::Value& t,
                    const ad::Value& x) const override;
  ad::Value inverse(ad::Tape&, const ad::Value& t, const ad::Value& y,
                    const InverseOptions&) const override;
  ad::Value log_det_forward(ad::Tape&, const ad::Value& t,
                            const ad::Value& x) const override;
  void collect_params(std::vector<Parameter*>& out) override;

  std::vector<std::size_t> A, B;
  MLP u, v;  // (t, x_B) -> |A|
  TimeEmbedding phi_u, phi_v;

 private:
  // scale/shift terms as n x |A| pairs
  std::pair<ad::Value, ad::Value> terms(ad::Tape&, const ad::Value& t,
                                        const ad::Value& xB) const;
  std::size_t d_ = 0;
};

// F(t, x) = exp(A t) x. A is set directly (not trained); gradients flow
// through x only.
class LinearFlow : public FlowLayer {
 public:
  using FlowLayer::forward;
  using FlowLayer::inverse;
  LinearFlow() = default;
  explicit LinearFlow(Tensor A);

  std::size_t dim() const override { return A_mat.value.rows(); }
  std::string kind() const override { return "linear"; }
  ad::Value forward(ad::Tape&, const ad::Value& t,
                    const ad::Value& x) const override;
  ad::Value inverse(ad::Tape&, const ad::Value& t, const ad::Value& y,
                    const InverseOptions&) const override;
  ad::Value log_det_forward(ad::Tape&, const ad::Value& t,
                            const ad::Value& x) const override;
  void collect_params(std::vector<Parameter*>&) override {}

  Parameter A_mat;

 private:
  ad::Value apply(ad::Tape&, const ad::Value& t, const ad::Value& x,
                  double sign) const;
};

// Composition F = F1 o ... o Fn of invertible time-indexed layers.
class FlowStack {
 public:
  std::vector<std::unique_ptr<FlowLayer>> layers;

  std::size_t dim() const { return layers.empty() ? 0 : layers[0]->dim(); }

  ad::Value forward(ad::Tape&, const ad::Value& t, const ad::Value& x) const;
  ad::Value inverse(ad::Tape&, const ad::Value& t, const ad::Value& y,
                    const InverseOptions& opts = {}) const;
  ad::Value log_det_forward(ad::Tape&, const ad::Value& t,
                            const ad::Value& x) const;

  Tensor forward(double t, const Tensor& x) const;
  Tensor inverse(double t, const Tensor& y,
                 const InverseOptions& opts = {}) const;

  void collect_params(std::vector<Parameter*>& out);
  std::vector<Parameter*> params();
  void project();
};

// Shift the initial condition to t=0, then evaluate at each target time.
std::vector<Tensor> solve_ivp(const FlowStack& stack, double t0,
                              const Tensor& x0,
                              const std::vector<double>& targets,
                              const InverseOptions& opts = {});

// Mean over the batch of || F(t_i, x_i) - F(t2, F(t1, x_i)) ||^2 with
// t_i = t1 + t2 split uniformly. Caller scales by gamma.
ad::Value autonomous_penalty(ad::Tape& tape, const FlowStack& stack,
                             const Tensor& times, const Tensor& X, Rng& rng);
double autonomous_penalty(const FlowStack& stack, const Tensor& times,
                          const Tensor& X, Rng& rng);

}  // namespace nf
