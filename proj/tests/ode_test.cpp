#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nf/flows.hpp"
#include "nf/ode.hpp"
#include "util.hpp"

using namespace nf;

namespace {

// x' = cos(t) x, x(0) = 1 -> x(t) = exp(sin t).
Tensor smooth_field(double t, const Tensor& x) { return std::cos(t) * x; }

double fixed_step_error(SolverConfig::Method m, std::size_t steps) {
  SolverConfig cfg = m == SolverConfig::Method::Euler
                         ? SolverConfig::euler(steps)
                         : SolverConfig::rk4(steps);
  SolveStats stats;
  const Tensor end = integrate(smooth_field, Tensor::full(1, 1, 1.0), 0.0, 2.0,
                               cfg, stats);
  return std::abs(end.item() - std::exp(std::sin(2.0)));
}

double order_slope(SolverConfig::Method m) {
  // Least-squares slope of log error against log h.
  std::vector<double> xs, ys;
  for (std::size_t steps : {10, 20, 40, 80}) {
    xs.push_back(std::log(2.0 / static_cast<double>(steps)));
    ys.push_back(std::log(fixed_step_error(m, steps)));
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= xs.size();
  my /= ys.size();
  double num = 0, den = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    num += (xs[i] - mx) * (ys[i] - my);
    den += (xs[i] - mx) * (xs[i] - mx);
  }
  return num / den;
}

}  // namespace

TEST_CASE("euler converges at first order") {
  const double slope = order_slope(SolverConfig::Method::Euler);
  CHECK(slope > 0.8);
  CHECK(slope < 1.2);
}

TEST_CASE("rk4 converges at fourth order") {
  const double slope = order_slope(SolverConfig::Method::RK4);
  CHECK(slope > 3.8);
  CHECK(slope < 4.2);
}

TEST_CASE("dopri5 meets its tolerance against a matrix-exponential oracle") {
  Rng rng(1);
  const Tensor A = test::random_tensor(3, 3, rng, 0.6);
  auto field = [&](double, const Tensor& x) {
    return matmul(x, transpose(A));
  };
  const Tensor x0 = test::random_tensor(1, 3, rng);
  for (double rtol : {1e-3, 1e-6, 1e-9}) {
    SolveStats stats;
    const Tensor end = integrate(field, x0, 0.0, 2.0,
                                 SolverConfig::dopri5(rtol, rtol * 1e-2),
                                 stats);
    const Tensor expect = matmul(x0, transpose(matrix_exp(2.0 * A)));
    CHECK(max_abs_diff(end, expect) <= 100.0 * rtol);
  }
}

TEST_CASE("dopri5 reports accepted and rejected steps") {
  SolveStats stats;
  integrate(smooth_field, Tensor::full(1, 1, 1.0), 0.0, 2.0,
            SolverConfig::dopri5(1e-6, 1e-8), stats);
  CHECK(stats.accepted > 0);
  CHECK(stats.nfev == 7 * (stats.accepted + stats.rejected));
}

TEST_CASE("fixed-step solvers count function evaluations exactly") {
  SolveStats es, rs;
  integrate(smooth_field, Tensor::full(1, 1, 1.0), 0.0, 1.0,
            SolverConfig::euler(17), es);
  integrate(smooth_field, Tensor::full(1, 1, 1.0), 0.0, 1.0,
            SolverConfig::rk4(9), rs);
  CHECK(es.nfev == 17);
  CHECK(rs.nfev == 36);
}

TEST_CASE("dopri5 aborts with the interval after too many steps") {
  auto cfg = SolverConfig::dopri5(1e-12, 1e-14);
  cfg.max_steps = 3;
  SolveStats stats;
  bool threw = false;
  try {
    integrate(smooth_field, Tensor::full(1, 1, 1.0), 0.0, 2.0, cfg, stats);
  } catch (const OdeSolverError& e) {
    threw = true;
    CHECK(std::string(e.what()).find("2.0") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("batched solve matches per-element solves") {
  Rng rng(2);
  VectorField f(2, 12, 2, rng);
  const std::size_t n = 5;
  Tensor X0 = test::random_tensor(n, 2, rng);
  std::vector<double> T1{0.3, 0.9, 1.4, 0.05, 2.0};
  const auto cfg = SolverConfig::dopri5(1e-8, 1e-10);
  const Tensor batched = batched_solve(f, X0, T1, cfg);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor xi = Tensor::row({X0(i, 0), X0(i, 1)});
    const auto sol = ode_solve(f, xi, 0.0, T1[i], cfg);
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(std::abs(batched(i, j) - sol.end_state(0, j)) < 1e-5);
  }
}

TEST_CASE("gradients through the unrolled solver match finite differences") {
  Rng rng(3);
  VectorField f(2, 8, 1, rng);
  std::vector<Parameter*> ps;
  f.f.collect_params(ps);
  Tensor X0 = test::random_tensor(3, 2, rng);
  Tensor target = test::random_tensor(3, 2, rng);
  std::vector<double> T1{0.4, 0.8, 1.2};
  const auto cfg = SolverConfig::rk4(8);
  auto build = [&](ad::Tape& t) {
    auto end = batched_solve(t, f, t.constant(X0), T1, cfg);
    return ad::mean_all(ad::square(ad::sub(end, t.constant(target))));
  };
  CHECK(test::max_grad_error(build, ps, 1e-5) < 1e-4);
}

TEST_CASE("gradients through the adaptive solver match finite differences") {
  Rng rng(4);
  VectorField f(1, 6, 1, rng);
  std::vector<Parameter*> ps;
  f.f.collect_params(ps);
  Tensor X0 = test::random_tensor(2, 1, rng);
  std::vector<double> T1{0.5, 1.0};
  const auto cfg = SolverConfig::dopri5(1e-6, 1e-8);
  auto build = [&](ad::Tape& t) {
    auto end = batched_solve(t, f, t.constant(X0), T1, cfg);
    return ad::mean_all(ad::square(end));
  };
  // Step-size decisions are data dependent; gradients are exact only for
  // a frozen discretization, so compare a touch more loosely.
  CHECK(test::max_grad_error(build, ps, 1e-6) < 1e-3);
}

TEST_CASE("stiff reference satisfies the stiff equation") {
  for (double t = 0.0; t <= 15.0; t += 0.093) {
    const double x = stiff_reference(t);
    // Closed-form derivative of the reference solution.
    const double dx = (2000.0 / 999.0) * std::exp(-t) +
                      (997.0 * 1000.0 / 999.0) * std::exp(-1000.0 * t);
    CHECK(std::abs(dx - stiff_field(t, x)) < 1e-6);
  }
  CHECK(stiff_reference(0.0) == doctest::Approx(0.0));
}

TEST_CASE("ode_solve validates its interval") {
  Rng rng(5);
  VectorField f(1, 4, 1, rng);
  CHECK_THROWS(ode_solve(f, Tensor::full(1, 1, 0.0), 1.0, 0.5,
                         SolverConfig::euler(4)));
}
