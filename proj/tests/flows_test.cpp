#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nf/flows.hpp"
#include "util.hpp"

using namespace nf;

namespace {

double det_small(Tensor m) {
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

// Numerical Jacobian determinant of x -> F(t, x) at one point.
double numeric_log_det(const FlowLayer& layer, double t, const Tensor& x,
                       double h = 1e-6) {
  const std::size_t d = x.cols();
  Tensor J(d, d);
  for (std::size_t j = 0; j < d; ++j) {
    Tensor xp = x, xm = x;
    xp(0, j) += h;
    xm(0, j) -= h;
    const Tensor fp = layer.forward(t, xp);
    const Tensor fm = layer.forward(t, xm);
    for (std::size_t i = 0; i < d; ++i) J(i, j) = (fp(0, i) - fm(0, i)) / (2 * h);
  }
  return std::log(std::abs(det_small(J)));
}

std::vector<std::unique_ptr<FlowLayer>> sample_layers(std::size_t d, Rng& rng) {
  std::vector<std::unique_ptr<FlowLayer>> out;
  out.push_back(std::make_unique<ResNetFlowLayer>(d, 16, 2, 0.9, rng));
  out.push_back(std::make_unique<GRUFlowLayer>(d, 16, 2, 0.9, rng));
  out.push_back(std::make_unique<CouplingFlowLayer>(d, true, 16, 2, rng));
  return out;
}

}  // namespace

TEST_CASE("matrix exponential special cases") {
  CHECK(max_abs_diff(matrix_exp(Tensor(3, 3)), Tensor::identity(3)) < 1e-15);

  Tensor diag(2, 2);
  diag(0, 0) = 1.0;
  diag(1, 1) = -2.0;
  const Tensor e = matrix_exp(diag);
  CHECK(e(0, 0) == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
  CHECK(e(1, 1) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
  CHECK(std::abs(e(0, 1)) < 1e-15);

  Tensor nil(2, 2);  // exp of nilpotent: I + N
  nil(0, 1) = 3.0;
  const Tensor en = matrix_exp(nil);
  CHECK(en(0, 0) == 1.0);
  CHECK(en(0, 1) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(en(1, 0) == 0.0);

  // exp(A) exp(-A) = I for a random matrix.
  Rng rng(1);
  const Tensor A = test::random_tensor(4, 4, rng);
  const Tensor prod = matmul(matrix_exp(A), matrix_exp(-1.0 * A));
  CHECK(max_abs_diff(prod, Tensor::identity(4)) < 1e-12);

  // Rotation block: exp([[0,-w],[w,0]] t) is the rotation by w t.
  Tensor rot(2, 2);
  rot(0, 1) = -2.0;
  rot(1, 0) = 2.0;
  const Tensor er = matrix_exp(rot);
  CHECK(er(0, 0) == doctest::Approx(std::cos(2.0)).epsilon(1e-12));
  CHECK(er(1, 0) == doctest::Approx(std::sin(2.0)).epsilon(1e-12));
}

TEST_CASE("every flow layer is the identity at t = 0") {
  Rng rng(2);
  for (auto& layer : sample_layers(3, rng)) {
    for (int i = 0; i < 20; ++i) {
      const Tensor x = test::random_tensor(1, 3, rng, 2.0);
      CHECK(max_abs_diff(layer->forward(0.0, x), x) < 1e-12);
    }
  }
  LinearFlow lin(test::random_tensor(3, 3, rng));
  const Tensor x = test::random_tensor(1, 3, rng);
  CHECK(max_abs_diff(lin.forward(0.0, x), x) < 1e-12);
}

TEST_CASE("fixed-point inversion round-trips for contractive layers") {
  Rng rng(4);
  ResNetFlowLayer res(3, 16, 2, 0.9, rng);
  GRUFlowLayer gru(3, 16, 2, 0.9, rng);
  for (const FlowLayer* layer : {static_cast<const FlowLayer*>(&res),
                                 static_cast<const FlowLayer*>(&gru)}) {
    for (int i = 0; i < 20; ++i) {
      const double t = rng.uniform(0.0, 5.0);
      const Tensor x = test::random_tensor(1, 3, rng, 2.0);
      const Tensor y = layer->forward(t, x);
      CHECK(max_abs_diff(layer->inverse(t, y), x) < 1e-6);
    }
  }
}

TEST_CASE("analytic inverses round-trip tightly") {
  Rng rng(5);
  CouplingFlowLayer cpl(3, false, 16, 2, rng);
  LinearFlow lin(test::random_tensor(3, 3, rng, 0.5));
  for (const FlowLayer* layer : {static_cast<const FlowLayer*>(&cpl),
                                 static_cast<const FlowLayer*>(&lin)}) {
    for (int i = 0; i < 20; ++i) {
      const double t = rng.uniform(0.0, 3.0);
      const Tensor x = test::random_tensor(1, 3, rng, 2.0);
      const Tensor y = layer->forward(t, x);
      CHECK(max_abs_diff(layer->inverse(t, y), x) < 1e-10);
    }
  }
}

TEST_CASE("failed inversion reports the last iterate") {
  Rng rng(19);
  // A wildly expansive resnet layer: scale weights far beyond contraction.
  ResNetFlowLayer res(2, 8, 1, 0.9, rng);
  for (auto& l : res.g.layers)
    for (std::size_t i = 0; i < l.W.value.size(); ++i) l.W.value[i] *= 50.0;
  const Tensor y = Tensor::full(1, 2, 1.0);
  InverseOptions opts;
  opts.max_iter = 5;
  bool threw = false;
  try {
    res.inverse(3.0, y, opts);
  } catch (const FlowInverseError& e) {
    threw = true;
    CHECK(e.iterations == 5);
    CHECK(e.last_iterate.rows() == 1);
  }
  CHECK(threw);
}

TEST_CASE("coupling log-determinant matches a numerical jacobian") {
  Rng rng(6);
  for (std::size_t d : {1u, 2u, 3u, 4u}) {
    CouplingFlowLayer cpl(d, true, 12, 2, rng);
    for (int i = 0; i < 10; ++i) {
      const double t = rng.uniform(0.1, 2.0);
      const Tensor x = test::random_tensor(1, d, rng);
      ad::Tape tape;
      const double ld = cpl.log_det_forward(tape,
                                            tape.constant(Tensor::full(1, 1, t)),
                                            tape.constant(x))
                            .val()
                            .item();
      const double num = numeric_log_det(cpl, t, x);
      CHECK(std::abs(ld - num) / std::max(1.0, std::abs(num)) < 1e-6);
    }
  }
}

TEST_CASE("stacked log-determinant matches the composed jacobian") {
  Rng rng(7);
  FlowStack stack;
  stack.layers.push_back(std::make_unique<CouplingFlowLayer>(3, true, 8, 1, rng));
  stack.layers.push_back(std::make_unique<CouplingFlowLayer>(3, false, 8, 1, rng));
  for (int i = 0; i < 10; ++i) {
    const double t = rng.uniform(0.1, 2.0);
    const Tensor x = test::random_tensor(1, 3, rng);
    ad::Tape tape;
    const double ld = stack.log_det_forward(tape,
                                            tape.constant(Tensor::full(1, 1, t)),
                                            tape.constant(x))
                          .val()
                          .item();
    // Composite Jacobian determinant via finite differences on the stack.
    const std::size_t d = 3;
    Tensor J(d, d);
    const double h = 1e-6;
    for (std::size_t j = 0; j < d; ++j) {
      Tensor xp = x, xm = x;
      xp(0, j) += h;
      xm(0, j) -= h;
      const Tensor fp = stack.forward(t, xp);
      const Tensor fm = stack.forward(t, xm);
      for (std::size_t k = 0; k < d; ++k)
        J(k, j) = (fp(0, k) - fm(0, k)) / (2 * h);
    }
    CHECK(std::abs(ld - std::log(std::abs(det_small(J)))) < 1e-5);
  }
}

TEST_CASE("linear flow satisfies the semigroup property") {
  Rng rng(8);
  LinearFlow lin(test::random_tensor(2, 2, rng));
  for (int i = 0; i < 10; ++i) {
    const double s = rng.uniform(0.0, 2.0), t = rng.uniform(0.0, 2.0);
    const Tensor x = test::random_tensor(1, 2, rng);
    const Tensor a = lin.forward(s + t, x);
    const Tensor b = lin.forward(s, lin.forward(t, x));
    CHECK(max_abs_diff(a, b) < 1e-10);
  }
}

TEST_CASE("linear flow reproduces the matrix exponential solution") {
  Rng rng(9);
  const Tensor A = test::random_tensor(3, 3, rng, 0.7);
  LinearFlow lin(A);
  const Tensor x0 = test::random_tensor(1, 3, rng);
  for (double t : {0.3, 1.0, 2.5}) {
    const Tensor expect = matmul(x0, transpose(matrix_exp(t * A)));
    CHECK(max_abs_diff(lin.forward(t, x0), expect) < 1e-12);
  }
}

TEST_CASE("solve_ivp shifts the initial condition before evaluating") {
  Rng rng(10);
  const Tensor A = test::random_tensor(2, 2, rng, 0.5);
  FlowStack stack;
  stack.layers.push_back(std::make_unique<LinearFlow>(A));
  const Tensor x0 = test::random_tensor(1, 2, rng);
  const double t0 = 0.7;
  const auto sols = solve_ivp(stack, t0, x0, {1.0, 1.5, 3.0});
  std::size_t k = 0;
  for (double t : {1.0, 1.5, 3.0}) {
    const Tensor expect = matmul(x0, transpose(matrix_exp((t - t0) * A)));
    CHECK(max_abs_diff(sols[k++], expect) < 1e-9);
  }
}

TEST_CASE("flow gradients match finite differences") {
  Rng rng(13);
  Tensor tcol(4, 1), x(4, 2), target(4, 2);
  for (int i = 0; i < 4; ++i) {
    tcol(i, 0) = rng.uniform(0.1, 2.0);
    for (int j = 0; j < 2; ++j) {
      x(i, j) = rng.normal();
      target(i, j) = rng.normal();
    }
  }
  FlowStack stack;
  stack.layers.push_back(std::make_unique<ResNetFlowLayer>(2, 8, 1, 0.9, rng));
  stack.layers.push_back(std::make_unique<CouplingFlowLayer>(2, true, 8, 1, rng));
  stack.layers.push_back(std::make_unique<GRUFlowLayer>(2, 8, 1, 0.9, rng));
  auto ps = stack.params();
  auto build = [&](ad::Tape& t) {
    auto pred = stack.forward(t, t.constant(tcol), t.constant(x));
    return ad::mean_all(ad::square(ad::sub(pred, t.constant(target))));
  };
  CHECK(test::max_grad_error(build, ps, 1e-5) < 1e-4);
}

TEST_CASE("gradient through the analytic coupling inverse") {
  Rng rng(14);
  CouplingFlowLayer cpl(2, true, 8, 1, rng);
  std::vector<Parameter*> ps;
  cpl.collect_params(ps);
  Tensor tcol(3, 1), y(3, 2);
  for (int i = 0; i < 3; ++i) {
    tcol(i, 0) = rng.uniform(0.1, 1.5);
    y(i, 0) = rng.normal();
    y(i, 1) = rng.normal();
  }
  auto build = [&](ad::Tape& t) {
    auto z = cpl.inverse(t, t.constant(tcol), t.constant(y), InverseOptions{});
    return ad::mean_all(ad::square(z));
  };
  CHECK(test::max_grad_error(build, ps, 1e-5) < 1e-4);
}

TEST_CASE("autonomous penalty vanishes for an autonomous flow") {
  Rng rng(15);
  LinearFlow* lin = new LinearFlow(test::random_tensor(2, 2, rng, 0.6));
  FlowStack stack;
  stack.layers.emplace_back(lin);
  Tensor times(8, 1), X(8, 2);
  for (int i = 0; i < 8; ++i) {
    times(i, 0) = rng.uniform(0.1, 2.0);
    X(i, 0) = rng.normal();
    X(i, 1) = rng.normal();
  }
  CHECK(std::abs(autonomous_penalty(stack, times, X, rng)) < 1e-9);
}

TEST_CASE("autonomous penalty is positive for a non-autonomous flow") {
  Rng rng(16);
  FlowStack stack;
  stack.layers.push_back(std::make_unique<ResNetFlowLayer>(2, 8, 1, 0.9, rng));
  Tensor times(8, 1), X(8, 2);
  for (int i = 0; i < 8; ++i) {
    times(i, 0) = rng.uniform(0.5, 2.0);
    X(i, 0) = rng.normal();
    X(i, 1) = rng.normal();
  }
  CHECK(autonomous_penalty(stack, times, X, rng) > 0.0);
}
