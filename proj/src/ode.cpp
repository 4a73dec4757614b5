#include "nf/ode.hpp"

namespace nf {

Tensor VectorField::eval(double t, const Tensor& x) const {
  Tensor in(x.rows(), x.cols() + 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    in(i, 0) = t;
    for (std::size_t j = 0; j < x.cols(); ++j) in(i, j + 1) = x(i, j);
  }
  return f.forward(in);
}

ad::Value VectorField::eval(ad::Tape& tape, const ad::Value& t_col,
                            const ad::Value& x) const {
  return f.forward(tape, ad::concat_cols(t_col, x));
}

SolverConfig SolverConfig::euler(std::size_t steps) {
  SolverConfig c;
  c.method = Method::Euler;
  c.steps = steps;
  return c;
}

SolverConfig SolverConfig::rk4(std::size_t steps) {
  SolverConfig c;
  c.method = Method::RK4;
  c.steps = steps;
  return c;
}

SolverConfig SolverConfig::dopri5(double rtol, double atol, double h0,
                                  std::size_t max_steps) {
  if (!(rtol > 0) || !(atol > 0))
    throw std::invalid_argument("SolverConfig: tolerances > 0");
  SolverConfig c;
  c.method = Method::Dopri5;
  c.rtol = rtol;
  c.atol = atol;
  c.h0 = h0;
  c.max_steps = max_steps;
  return c;
}

SolverConfig::Method method_from_string(const std::string& s) {
  if (s == "euler") return SolverConfig::Method::Euler;
  if (s == "rk4") return SolverConfig::Method::RK4;
  if (s == "dopri5") return SolverConfig::Method::Dopri5;
  throw std::invalid_argument("unknown solver method: " + s);
}

std::string to_string(SolverConfig::Method m) {
  switch (m) {
    case SolverConfig::Method::Euler: return "euler";
    case SolverConfig::Method::RK4: return "rk4";
    case SolverConfig::Method::Dopri5: return "dopri5";
  }
  return "euler";
}

namespace detail {

double error_norm(const Tensor& err, const Tensor& y0, const Tensor& y1,
                  double rtol, double atol) {
  double s = 0.0;
  for (std::size_t i = 0; i < err.size(); ++i) {
    const double sc = atol + rtol * std::max(std::abs(y0[i]),
                                             std::abs(y1[i]));
    const double e = err[i] / sc;
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(err.size()));
}

}  // namespace detail

ODESolution ode_solve(const VectorField& f, const Tensor& x0, double t0,
                      double t1, const SolverConfig& cfg) {
  ODESolution sol;
  auto field = [&](double t, const Tensor& y) { return f.eval(t, y); };
  sol.end_state = integrate(field, x0, t0, t1, cfg, sol.stats);
  return sol;
}

Tensor batched_solve(const VectorField& f, const Tensor& X0,
                     const std::vector<double>& T1, const SolverConfig& cfg,
                     SolveStats* stats) {
  const std::size_t n = X0.rows(), d = X0.cols();
  if (T1.size() != n)
    throw std::invalid_argument("batched_solve: |T1| must match rows");
  for (double t : T1)
    if (t < 0) throw std::invalid_argument("batched_solve: end times >= 0");
  auto field = [&](double s, const Tensor& Y) {
    Tensor in(n, d + 1);
    for (std::size_t i = 0; i < n; ++i) {
      in(i, 0) = s * T1[i];
      for (std::size_t j = 0; j < d; ++j) in(i, j + 1) = Y(i, j);
    }
    Tensor dy = f.f.forward(in);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) dy(i, j) *= T1[i];
    return dy;
  };
  SolveStats local;
  Tensor out = integrate(field, X0, 0.0, 1.0, cfg, stats ? *stats : local);
  return out;
}

ad::Value batched_solve(ad::Tape& tape, const VectorField& f,
                        const ad::Value& X0, const std::vector<double>& T1,
                        const SolverConfig& cfg, SolveStats* stats) {
  const std::size_t n = X0.rows(), d = X0.cols();
  if (T1.size() != n)
    throw std::invalid_argument("batched_solve: |T1| must match rows");
  Tensor tscale(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) tscale(i, j) = T1[i];
  ad::Value scale_v = tape.constant(tscale);
  auto field = [&](double s, const ad::Value& Y) {
    Tensor tcol(n, 1);
    for (std::size_t i = 0; i < n; ++i) tcol(i, 0) = s * T1[i];
    ad::Value dy = f.eval(tape, tape.constant(tcol), Y);
    return ad::mul(dy, scale_v);
  };
  SolveStats local;
  return integrate(field, X0, 0.0, 1.0, cfg, stats ? *stats : local);
}

double stiff_reference(double t) {
  if (t < 0) throw std::invalid_argument("stiff_reference: t >= 0");
  return 3.0 - (2000.0 / 999.0) * std::exp(-t) -
         (997.0 / 999.0) * std::exp(-1000.0 * t);
}

double stiff_field(double t, double x) {
  return -1000.0 * x + 3000.0 - 2000.0 * std::exp(-t);
}

}  // namespace nf
