#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "nf/nn.hpp"

namespace nf {

struct VectorField {
  MLP f;  // (t, x) in R^{d+1} -> R^d, unconstrained

  VectorField() = default;
  VectorField(std::size_t d, std::size_t hidden, std::size_t hidden_layers,
              Rng& rng, Activation act = Activation::Tanh)
      : f([&] {
          std::vector<std::size_t> sizes{d + 1};
          for (std::size_t i = 0; i < hidden_layers; ++i)
            sizes.push_back(hidden);
          sizes.push_back(d);
          return MLP(sizes, act, Activation::Identity, 0.0, rng);
        }()) {}

  std::size_t dim() const { return f.out_dim(); }
  Tensor eval(double t, const Tensor& x) const;  // batched, non-taped
  ad::Value eval(ad::Tape& tape, const ad::Value& t_col,
                 const ad::Value& x) const;
};

struct SolverConfig {
  enum class Method { Euler, RK4, Dopri5 };
  Method method = Method::Dopri5;
  std::size_t steps = 20;     // fixed-step methods
  double rtol = 1e-3;         // Appendix-style training tolerances
  double atol = 1e-4;
  double h0 = 0.0;            // 0: pick (t1-t0)/100
  std::size_t max_steps = 100000;

  static SolverConfig euler(std::size_t steps);
  static SolverConfig rk4(std::size_t steps);
  static SolverConfig dopri5(double rtol, double atol, double h0 = 0.0,
                             std::size_t max_steps = 100000);
};

SolverConfig::Method method_from_string(const std::string& s);
std::string to_string(SolverConfig::Method m);

struct SolveStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t nfev = 0;
};

struct ODESolution {
  Tensor end_state;
  SolveStats stats;
};

namespace detail {

inline const Tensor& raw(const Tensor& t) { return t; }
inline const Tensor& raw(const ad::Value& v) { return v.val(); }

struct Term {
  double coef;
  const Tensor* s;
};

inline Tensor lincomb(const Tensor& y, double h,
                      std::initializer_list<std::pair<double, const Tensor*>>
                          terms) {
  Tensor r = y;
  for (auto& [c, s] : terms) {
    const double hc = h * c;
    if (hc == 0.0) continue;
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += hc * (*s)[i];
  }
  return r;
}

inline ad::Value lincomb(
    const ad::Value& y, double h,
    std::initializer_list<std::pair<double, const ad::Value*>> terms) {
  ad::Value r = y;
  for (auto& [c, s] : terms) {
    const double hc = h * c;
    if (hc == 0.0) continue;
    r = ad::add(r, ad::scale(*s, hc));
  }
  return r;
}

// Scaled RMS norm of the embedded error estimate.
double error_norm(const Tensor& err, const Tensor& y0, const Tensor& y1,
                  double rtol, double atol);

}  // namespace detail

class OdeSolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Generic integrator over either plain Tensors or taped Values. The field
// is f(t, y) -> dy/dt; step-size control reads raw values only, so the
// taped variant backpropagates through the accepted discretization.
template <class S, class F>
S integrate(F&& field, S y, double t0, double t1, const SolverConfig& cfg,
            SolveStats& stats) {
  using detail::lincomb;
  using detail::raw;
  if (t1 < t0) throw std::invalid_argument("integrate: t1 >= t0 required");
  if (t1 == t0) return y;

  if (cfg.method == SolverConfig::Method::Euler) {
    if (cfg.steps < 1) throw std::invalid_argument("integrate: steps >= 1");
    const double h = (t1 - t0) / static_cast<double>(cfg.steps);
    for (std::size_t i = 0; i < cfg.steps; ++i) {
      const double t = t0 + h * static_cast<double>(i);
      S k = field(t, y);
      ++stats.nfev;
      y = lincomb(y, h, {{1.0, &k}});
      ++stats.accepted;
    }
    return y;
  }

  if (cfg.method == SolverConfig::Method::RK4) {
    if (cfg.steps < 1) throw std::invalid_argument("integrate: steps >= 1");
    const double h = (t1 - t0) / static_cast<double>(cfg.steps);
    for (std::size_t i = 0; i < cfg.steps; ++i) {
      const double t = t0 + h * static_cast<double>(i);
      S k1 = field(t, y);
      S y2 = lincomb(y, h, {{0.5, &k1}});
      S k2 = field(t + 0.5 * h, y2);
      S y3 = lincomb(y, h, {{0.5, &k2}});
      S k3 = field(t + 0.5 * h, y3);
      S y4 = lincomb(y, h, {{1.0, &k3}});
      S k4 = field(t + h, y4);
      stats.nfev += 4;
      y = lincomb(y, h,
                  {{1.0 / 6, &k1}, {1.0 / 3, &k2}, {1.0 / 3, &k3},
                   {1.0 / 6, &k4}});
      ++stats.accepted;
    }
    return y;
  }

  // Dormand-Prince 5(4)
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5,
                          c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                          a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                          a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113,
                          b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                          b6 = 11.0 / 84;
  static constexpr double e1 = b1 - 5179.0 / 57600, e3 = b3 - 7571.0 / 16695,
                          e4 = b4 - 393.0 / 640, e5 = b5 + 92097.0 / 339200,
                          e6 = b6 - 187.0 / 2100, e7 = -1.0 / 40;

  double t = t0;
  double h = cfg.h0 > 0 ? cfg.h0 : (t1 - t0) / 100.0;
  std::size_t total = 0;
  while (t < t1) {
    if (++total > cfg.max_steps)
      throw OdeSolverError("ode_solve: dopri5 exceeded " +
                           std::to_string(cfg.max_steps) + " steps on [" +
                           std::to_string(t0) + ", " + std::to_string(t1) +
                           "]");
    h = std::min(h, t1 - t);
    S k1 = field(t, y);
    S k2 = field(t + c2 * h, lincomb(y, h, {{a21, &k1}}));
    S k3 = field(t + c3 * h, lincomb(y, h, {{a31, &k1}, {a32, &k2}}));
    S k4 = field(t + c4 * h,
                 lincomb(y, h, {{a41, &k1}, {a42, &k2}, {a43, &k3}}));
    S k5 = field(t + c5 * h,
                 lincomb(y, h,
                         {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}));
    S k6 = field(t + h, lincomb(y, h,
                                {{a61, &k1},
                                 {a62, &k2},
                                 {a63, &k3},
                                 {a64, &k4},
                                 {a65, &k5}}));
    S y5 = lincomb(
        y, h, {{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
    S k7 = field(t + h, y5);
    stats.nfev += 7;
    Tensor err = detail::lincomb(
        Tensor(raw(y).rows(), raw(y).cols()), h,
        {{e1, &raw(k1)},
         {e3, &raw(k3)},
         {e4, &raw(k4)},
         {e5, &raw(k5)},
         {e6, &raw(k6)},
         {e7, &raw(k7)}});
    const double en =
        detail::error_norm(err, raw(y), raw(y5), cfg.rtol, cfg.atol);
    if (en <= 1.0) {
      t += h;
      y = y5;
      ++stats.accepted;
    } else {
      ++stats.rejected;
    }
    const double factor =
        std::clamp(0.9 * std::pow(std::max(en, 1e-10), -0.2), 0.2, 5.0);
    h *= factor;
  }
  return y;
}

// Spec-facing single solve.
ODESolution ode_solve(const VectorField& f, const Tensor& x0, double t0,
                      double t1, const SolverConfig& cfg);

// Batched time reparameterization: integrates dx_i/ds = t_i f(s t_i, x_i)
// over s in [0, 1] in one solver call.
Tensor batched_solve(const VectorField& f, const Tensor& X0,
                     const std::vector<double>& T1, const SolverConfig& cfg,
                     SolveStats* stats = nullptr);
ad::Value batched_solve(ad::Tape& tape, const VectorField& f,
                        const ad::Value& X0, const std::vector<double>& T1,
                        const SolverConfig& cfg, SolveStats* stats = nullptr);

// Closed-form solution of dx/dt = -1000 x + 3000 - 2000 e^{-t}, x(0) = 0.
double stiff_reference(double t);
double stiff_field(double t, double x);

}  // namespace nf
