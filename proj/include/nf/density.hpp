#pragma once

#include "nf/flows.hpp"
#include "nf/ode.hpp"

namespace nf {

// log of the standard Gaussian density, summed over columns: n x d -> n x 1.
ad::Value gaussian_log_prob(ad::Tape& tape, const ad::Value& z);
double gaussian_log_prob(const Tensor& z_row);

// Density transported from a standard Gaussian by a stack of coupling
// layers; the log-determinant is available in closed form along the
// analytic inverse.
class TimeVaryingCouplingDensity {
 public:
  FlowStack flow;

  TimeVaryingCouplingDensity() = default;
  TimeVaryingCouplingDensity(std::size_t d, std::size_t n_layers,
                             std::size_t units, Rng& rng);

  std::size_t dim() const { return flow.dim(); }

  // t: n x 1 per-row times, x: n x d -> n x 1 log density
  ad::Value log_prob(ad::Tape& tape, const ad::Value& t,
                     const ad::Value& x) const;
  Tensor log_prob(double t, const Tensor& x) const;  // n x d -> n x 1
  Tensor sample(double t, std::size_t n, Rng& rng) const;

  void collect_params(std::vector<Parameter*>& out);
};

// Continuous normalizing flow with the Jacobian trace computed exactly
// from d forward-mode directional derivatives (d <= 3). The field's MLP
// must use tanh hidden units and an identity output.
class TimeVaryingCNF {
 public:
  VectorField field;
  SolverConfig cfg = SolverConfig::dopri5(1e-5, 1e-7);

  TimeVaryingCNF() = default;
  TimeVaryingCNF(std::size_t d, std::size_t units, std::size_t hidden_layers,
                 Rng& rng);

  std::size_t dim() const { return field.dim(); }

  // f(t, x) and exact per-row Jacobian trace at (t, x).
  std::pair<ad::Value, ad::Value> field_with_trace(ad::Tape& tape,
                                                   const ad::Value& t,
                                                   const ad::Value& x) const;

  // Per-row observation times t (n x 1 raw values), x: n x d.
  ad::Value log_prob(ad::Tape& tape, const std::vector<double>& t,
                     const ad::Value& x) const;
  Tensor log_prob(double t, const Tensor& x) const;

  void collect_params(std::vector<Parameter*>& out);
};

// Quadrature of exp(log_prob) over [lo, hi]^2 on an n x n midpoint grid.
double grid_integral(const TimeVaryingCouplingDensity& model, double t,
                     double lo, double hi, std::size_t n);
double grid_integral(const TimeVaryingCNF& model, double t, double lo,
                     double hi, std::size_t n);

}  // namespace nf
