#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "nf/density.hpp"
#include "util.hpp"

using namespace nf;

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

void zero_net(MLP& net) {
  for (auto& l : net.layers) {
    for (std::size_t i = 0; i < l.W.value.size(); ++i) l.W.value[i] = 0.0;
    for (std::size_t i = 0; i < l.b.value.size(); ++i) l.b.value[i] = 0.0;
  }
}

double det2(const Tensor& m) {
  return m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
}

double lu_det(Tensor m) {
  const std::size_t n = m.rows();
  double d = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(m(r, c)) > std::abs(m(piv, c))) piv = r;
    if (piv != c) {
      for (std::size_t k = 0; k < n; ++k) std::swap(m(c, k), m(piv, k));
      d = -d;
    }
    if (m(c, c) == 0.0) return 0.0;
    d *= m(c, c);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = m(r, c) / m(c, c);
      for (std::size_t k = c; k < n; ++k) m(r, k) -= f * m(c, k);
    }
  }
  return d;
}

}  // namespace

TEST_CASE("gaussian log-prob matches the closed form") {
  Tensor z(2, 3);
  z(0, 0) = 0.5;
  z(0, 1) = -1.0;
  z(0, 2) = 2.0;
  ad::Tape tape;
  const Tensor lp = gaussian_log_prob(tape, tape.constant(z)).val();
  const double expect0 =
      -0.5 * (0.25 + 1.0 + 4.0) - 1.5 * kLog2Pi;
  CHECK(lp(0, 0) == doctest::Approx(expect0).epsilon(1e-14));
  CHECK(lp(1, 0) == doctest::Approx(-1.5 * kLog2Pi).epsilon(1e-14));
  Tensor row(1, 3);
  row[0] = 0.5;
  row[1] = -1.0;
  row[2] = 2.0;
  CHECK(gaussian_log_prob(row) == doctest::Approx(expect0).epsilon(1e-14));
}

TEST_CASE("coupling density equals the base at t = 0") {
  Rng rng(1);
  TimeVaryingCouplingDensity model(2, 4, 16, rng);
  Tensor origin(1, 2);
  CHECK(model.log_prob(0.0, origin)(0, 0) ==
        doctest::Approx(-kLog2Pi).epsilon(1e-10));
  for (int i = 0; i < 10; ++i) {
    const Tensor x = test::random_tensor(1, 2, rng);
    const double base = gaussian_log_prob(x);
    CHECK(model.log_prob(0.0, x)(0, 0) == doctest::Approx(base).epsilon(1e-10));
  }
}

TEST_CASE("pure shift layer translates the base density") {
  Rng rng(2);
  TimeVaryingCouplingDensity model(2, 1, 8, rng);
  auto* layer = dynamic_cast<CouplingFlowLayer*>(model.flow.layers[0].get());
  REQUIRE(layer != nullptr);
  zero_net(layer->u);  // scale term vanishes, leaving x_A + v phi_v
  for (double t : {0.3, 1.0}) {
    const Tensor mode = model.flow.forward(t, Tensor(1, 2));
    CHECK(model.log_prob(t, mode)(0, 0) ==
          doctest::Approx(-kLog2Pi).epsilon(1e-9));
  }
}

TEST_CASE("coupling density normalizes on a grid") {
  Rng rng(3);
  TimeVaryingCouplingDensity model(2, 4, 16, rng);
  // Wide box: an untrained stack spreads mass well beyond the data range.
  for (double t : {0.25, 0.5, 1.0}) {
    const double integral = grid_integral(model, t, -10.0, 10.0, 500);
    CHECK(integral > 0.98);
    CHECK(integral < 1.02);
  }
}

TEST_CASE("sampling and log-prob are consistent under a shift") {
  Rng rng(4);
  TimeVaryingCouplingDensity model(2, 2, 8, rng);
  const Tensor s = model.sample(0.7, 50, rng);
  CHECK(s.rows() == 50);
  const Tensor lp = model.log_prob(0.7, s);
  CHECK(lp.all_finite());
  // Round-trip through the stack inverse.
  const Tensor z = model.flow.inverse(0.7, s);
  CHECK(max_abs_diff(model.flow.forward(0.7, z), s) < 1e-9);
}

TEST_CASE("cnf with a zero field is the base density at every time") {
  Rng rng(5);
  TimeVaryingCNF model(2, 8, 1, rng);
  zero_net(model.field.f);
  for (double t : {0.0, 0.4, 1.3}) {
    const Tensor x = test::random_tensor(1, 2, rng);
    CHECK(model.log_prob(t, x)(0, 0) ==
          doctest::Approx(gaussian_log_prob(x)).epsilon(1e-10));
  }
}

TEST_CASE("cnf trace matches a numerical divergence") {
  Rng rng(6);
  TimeVaryingCNF model(3, 10, 2, rng);
  for (int i = 0; i < 5; ++i) {
    const double t = rng.uniform(0.0, 1.0);
    const Tensor x = test::random_tensor(1, 3, rng);
    ad::Tape tape;
    auto [f, tr] = model.field_with_trace(
        tape, tape.constant(Tensor::full(1, 1, t)), tape.constant(x));
    (void)f;
    double div = 0.0;
    const double h = 1e-6;
    for (std::size_t j = 0; j < 3; ++j) {
      Tensor xp = x, xm = x;
      xp(0, j) += h;
      xm(0, j) -= h;
      const Tensor fp = model.field.eval(t, xp);
      const Tensor fm = model.field.eval(t, xm);
      div += (fp(0, j) - fm(0, j)) / (2.0 * h);
    }
    CHECK(tr.val().item() == doctest::Approx(div).epsilon(1e-5));
  }
}

TEST_CASE("cnf with a linear field matches the matrix solution") {
  Rng rng(7);
  Tensor A(2, 2);
  A(0, 0) = 0.3;
  A(0, 1) = -0.5;
  A(1, 0) = 0.2;
  A(1, 1) = -0.1;

  TimeVaryingCNF model(2, 4, 0, rng);
  // Collapse the field to f(t, x) = A x with an explicit single layer.
  model.field.f = MLP({3, 2}, Activation::Tanh, Activation::Identity, 0.0, rng);
  zero_net(model.field.f);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      model.field.f.layers[0].W.value(i, 1 + j) = A(i, j);
  model.cfg = SolverConfig::dopri5(1e-10, 1e-12);

  const double trA = A(0, 0) + A(1, 1);
  for (double t : {0.4, 1.0}) {
    const Tensor x = test::random_tensor(1, 2, rng);
    const Tensor z = matmul(x, transpose(matrix_exp(-t * A)));
    const double expect = gaussian_log_prob(z) - t * trA;
    CHECK(model.log_prob(t, x)(0, 0) ==
          doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("determinant of the matrix exponential equals exp of the trace") {
  Rng rng(8);
  for (int i = 0; i < 10; ++i) {
    const std::size_t n = 2 + static_cast<std::size_t>(i % 3);
    const Tensor A = test::random_tensor(n, n, rng, 0.8);
    double tr = 0.0;
    for (std::size_t k = 0; k < n; ++k) tr += A(k, k);
    const double lhs = lu_det(matrix_exp(A));
    const double rhs = std::exp(tr);
    CHECK(std::abs(lhs - rhs) / std::abs(rhs) < 1e-8);
  }
}

TEST_CASE("jacobian determinant of a 2d coupling map is exact") {
  Rng rng(9);
  TimeVaryingCouplingDensity model(2, 3, 8, rng);
  const double t = 0.8;
  const Tensor x = test::random_tensor(1, 2, rng);
  ad::Tape tape;
  const double ld = model.flow
                        .log_det_forward(tape,
                                         tape.constant(Tensor::full(1, 1, t)),
                                         tape.constant(x))
                        .val()
                        .item();
  Tensor J(2, 2);
  const double h = 1e-6;
  for (std::size_t j = 0; j < 2; ++j) {
    Tensor xp = x, xm = x;
    xp(0, j) += h;
    xm(0, j) -= h;
    const Tensor fp = model.flow.forward(t, xp);
    const Tensor fm = model.flow.forward(t, xm);
    for (std::size_t k = 0; k < 2; ++k) J(k, j) = (fp(0, k) - fm(0, k)) / (2 * h);
  }
  CHECK(ld == doctest::Approx(std::log(std::abs(det2(J)))).epsilon(1e-5));
}

TEST_CASE("cnf rejects dimensions beyond the exact-trace range") {
  Rng rng(10);
  CHECK_THROWS(TimeVaryingCNF(4, 8, 1, rng));
}

TEST_CASE("coupling log-prob gradients match finite differences") {
  Rng rng(11);
  TimeVaryingCouplingDensity model(2, 2, 6, rng);
  std::vector<Parameter*> ps;
  model.collect_params(ps);
  Tensor x = test::random_tensor(3, 2, rng);
  Tensor tcol(3, 1);
  for (int i = 0; i < 3; ++i) tcol(i, 0) = 0.2 + 0.3 * i;
  auto build = [&](ad::Tape& t) {
    return ad::neg(ad::mean_all(
        model.log_prob(t, t.constant(tcol), t.constant(x))));
  };
  CHECK(test::max_grad_error(build, ps, 1e-5) < 1e-4);
}

TEST_CASE("cnf log-prob gradients match finite differences") {
  Rng rng(12);
  TimeVaryingCNF model(2, 6, 1, rng);
  model.cfg = SolverConfig::rk4(8);
  std::vector<Parameter*> ps;
  model.collect_params(ps);
  Tensor x = test::random_tensor(2, 2, rng);
  std::vector<double> t{0.5, 1.0};
  auto build = [&](ad::Tape& tp) {
    return ad::neg(ad::mean_all(model.log_prob(tp, t, tp.constant(x))));
  };
  CHECK(test::max_grad_error(build, ps, 1e-5) < 1e-4);
}
