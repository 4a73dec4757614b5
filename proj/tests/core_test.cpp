#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nf/embedding.hpp"
#include "nf/nn.hpp"
#include "nf/optim.hpp"
#include "util.hpp"

using namespace nf;

TEST_CASE("tensor shapes and arithmetic") {
  Tensor a(2, 3);
  a(0, 0) = 1;
  a(0, 1) = 2;
  a(0, 2) = 3;
  a(1, 0) = 4;
  a(1, 1) = 5;
  a(1, 2) = 6;
  Tensor b = transpose(a);
  CHECK(b.rows() == 3);
  CHECK(b(2, 1) == 6);
  Tensor c = matmul(a, b);  // 2x2
  CHECK(c(0, 0) == doctest::Approx(14));
  CHECK(c(0, 1) == doctest::Approx(32));
  CHECK(c(1, 1) == doctest::Approx(77));
  Tensor i3 = Tensor::identity(3);
  CHECK(max_abs_diff(matmul(a, i3), a) == 0.0);
  CHECK((2.0 * a)(1, 2) == 12.0);
  CHECK(hadamard(a, a)(1, 0) == 16.0);
}

TEST_CASE("gradients of elementary ops match finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    Parameter x(test::random_tensor(3, 4, rng));
    Parameter w(test::random_tensor(2, 4, rng, 0.5));
    Parameter b(test::random_tensor(1, 2, rng, 0.5));
    std::vector<Parameter*> ps{&x, &w, &b};

    auto build = [&](ad::Tape& t) {
      auto xv = t.leaf(x);
      auto h = ad::affine(ad::tanh(xv), t.leaf(w), t.leaf(b));
      auto s = ad::sigmoid(h);
      auto e = ad::elu(ad::sub(h, s));
      auto p = ad::softplus(ad::mul(e, s));
      auto q = ad::div(p, ad::add_const(ad::square(s), 1.0));
      return ad::mean_all(ad::add(q, ad::scale(ad::abs(h), 0.3)));
    };
    CHECK(test::max_grad_error(build, ps) < 1e-4);
  }
}

TEST_CASE("gradients of structural ops match finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(100 + seed);
    Parameter x(test::random_tensor(4, 3, rng));
    Parameter y(test::random_tensor(4, 2, rng));
    std::vector<Parameter*> ps{&x, &y};

    auto build = [&](ad::Tape& t) {
      auto xv = t.leaf(x);
      auto yv = t.leaf(y);
      auto cat = ad::concat_cols(xv, yv);  // 4x5
      auto lse = ad::logsumexp_cols(cat);  // 4x1
      auto bc = ad::bcast_cols(lse, 3);
      auto sel = ad::select_cols(cat, {0, 2, 4});
      auto m = ad::merge_cols({0, 2}, ad::select_cols(cat, {1, 3}), {1},
                              ad::sum_cols(ad::exp(ad::scale(xv, 0.1))), 3);
      auto tr = ad::matmul(ad::transpose(sel), bc);  // 3x3
      return ad::add(ad::mean_all(m),
                     ad::sum_all(ad::sin(ad::scale(tr, 0.2))));
    };
    CHECK(test::max_grad_error(build, ps) < 1e-4);
  }
}

TEST_CASE("gradient through log and exp") {
  Rng rng(7);
  Parameter x(test::random_tensor(3, 3, rng, 0.3));
  auto build = [&](ad::Tape& t) {
    auto v = ad::exp(t.leaf(x));
    return ad::mean_all(ad::log(ad::add_const(v, 2.0)));
  };
  CHECK(test::max_grad_error(build, {&x}) < 1e-4);
}

TEST_CASE("backward accumulates over reused nodes") {
  Parameter x(Tensor::full(1, 1, 0.7));
  ad::Tape tape;
  auto v = tape.leaf(x);
  auto loss = ad::sum_all(ad::add(ad::mul(v, v), v));  // x^2 + x
  auto g = tape.backward(loss);
  CHECK(g.at(&x)[0] == doctest::Approx(2 * 0.7 + 1));
}

TEST_CASE("spectral projection bounds the top singular value") {
  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    LinearLayer layer(6, 5, 0.9, rng);
    layer.W.value = test::random_tensor(5, 6, rng, 2.0);
    for (int i = 0; i < 50; ++i) layer.project(20);
    // Oracle: long power iteration from a fresh start.
    Tensor u = test::random_tensor(5, 1, rng);
    Tensor v = test::random_tensor(6, 1, rng);
    const double sigma = power_iteration_sigma(layer.W.value, u, v, 1000);
    CHECK(sigma <= 0.9 + 1e-6);
  }
}

TEST_CASE("contractive mlp is a contraction") {
  Rng rng(11);
  MLP f = make_contractive_mlp(3, 3, 16, 2, 0.9, rng);
  for (auto& l : f.layers)
    for (int i = 0; i < 50; ++i) l.project();
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    Tensor a = test::random_tensor(1, 3, rng, 2.0);
    Tensor b = test::random_tensor(1, 3, rng, 2.0);
    const double num = (f.forward(a) - f.forward(b)).max_abs();
    const double den = (a - b).max_abs();
    if (den > 1e-8) worst = std::max(worst, num / den);
  }
  // max-norm ratio of a 0.9-Lipschitz (in 2-norm) map can exceed 0.9 by
  // the norm-equivalence factor sqrt(3), but never 0.9 * sqrt(3).
  CHECK(worst < 0.9 * std::sqrt(3.0));

  // 2-norm check on sampled pairs: the true contraction property.
  double worst2 = 0.0;
  for (int i = 0; i < 200; ++i) {
    Tensor a = test::random_tensor(1, 3, rng, 2.0);
    Tensor b = test::random_tensor(1, 3, rng, 2.0);
    auto nrm = [](const Tensor& t) {
      double s = 0;
      for (std::size_t k = 0; k < t.size(); ++k) s += t[k] * t[k];
      return std::sqrt(s);
    };
    const double den = nrm(a - b);
    if (den > 1e-8) worst2 = std::max(worst2, nrm(f.forward(a) - f.forward(b)) / den);
  }
  CHECK(worst2 < 0.9 + 1e-9);
}

TEST_CASE("adam matches a hand-computed update") {
  Parameter p(Tensor::full(1, 2, 1.0));
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.01;
  Adam opt({&p}, cfg);

  Tensor g(1, 2);
  g[0] = 0.5;
  g[1] = -2.0;
  ad::GradMap grads;
  grads[&p] = g;
  opt.step(grads);

  for (int i = 0; i < 2; ++i) {
    const double m = 0.1 * g[i];          // (1-beta1) g
    const double v = 0.001 * g[i] * g[i]; // (1-beta2) g^2
    const double mhat = m / (1 - 0.9);
    const double vhat = v / (1 - 0.999);
    // Decay applies after the update, to the updated value.
    const double expect =
        (1.0 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8)) * (1.0 - 0.1 * 0.01);
    CHECK(p.value[i] == doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("time embeddings vanish at zero") {
  Rng rng(5);
  for (auto e : {TimeEmbedding::linear(4, rng),
                 TimeEmbedding::tanh_linear(4, rng),
                 TimeEmbedding::tanh_linear(4, rng, true),
                 TimeEmbedding::fourier(4, 3, rng, false),
                 TimeEmbedding::fourier(4, 3, rng, true)}) {
    CHECK(e.forward(0.0).max_abs() < 1e-14);
  }
}

TEST_CASE("tanh-linear embedding closed form") {
  Rng rng(6);
  auto e = TimeEmbedding::tanh_linear(1, rng, true);
  e.alpha.value[0] = 1.0;
  CHECK(e.forward(10.0)[0] == doctest::Approx(std::tanh(10.0)));
  e.alpha.value[0] = -1.0;  // |alpha| keeps phi nonnegative
  CHECK(e.forward(10.0)[0] == doctest::Approx(std::tanh(10.0)));
}

TEST_CASE("bounded fourier embedding stays in (-1, 1)") {
  Rng rng(9);
  auto e = TimeEmbedding::fourier(3, 4, rng, true);
  for (double t = -20.0; t <= 20.0; t += 0.37) {
    const Tensor v = e.forward(t);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(v[i]) < 1.0);
  }
}

TEST_CASE("embedding gradients match finite differences") {
  Rng rng(12);
  auto e = TimeEmbedding::fourier(3, 2, rng, true);
  std::vector<Parameter*> ps;
  e.collect_params(ps);
  Tensor tcol(4, 1);
  for (int i = 0; i < 4; ++i) tcol(i, 0) = 0.3 * (i + 1);
  auto build = [&](ad::Tape& t) {
    return ad::mean_all(ad::square(e.forward(t, t.constant(tcol))));
  };
  CHECK(test::max_grad_error(build, ps) < 1e-4);
}

TEST_CASE("rng streams are reproducible and distinct") {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(Rng::derive(0, 1) != Rng::derive(1, 0));
  CHECK(Rng::derive(3, 5) != Rng::derive(3, 6));
  // Nearby seeds must not alias nearby streams.
  CHECK(Rng::derive(0, 2) != Rng::derive(1, 1));
}
