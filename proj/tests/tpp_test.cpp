#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "nf/tpp.hpp"
#include "util.hpp"

using namespace nf;

namespace {

void zero_net(MLP& net) {
  for (auto& l : net.layers) {
    for (std::size_t i = 0; i < l.W.value.size(); ++i) l.W.value[i] = 0.0;
    for (std::size_t i = 0; i < l.b.value.size(); ++i) l.b.value[i] = 0.0;
  }
}

EventSequence make_seq(std::vector<double> times) {
  EventSequence s;
  s.T = times.back();
  s.times = std::move(times);
  return s;
}

// Deterministic quadrature replacement for the MC compensator estimate.
double quadrature_nll(const EventEncoder& enc, const IntensityHead& head,
                      const InterEventTransform& xform,
                      const EventSequence& seq, std::size_t grid) {
  ad::Tape tape;
  auto s = enc.initial_state(tape, 1);
  double integral = 0.0, events = 0.0;
  for (double tau : inter_event_times(seq)) {
    const double h = tau / static_cast<double>(grid);
    double acc = 0.0;
    for (std::size_t j = 0; j <= grid; ++j) {
      const double delta = h * static_cast<double>(j);
      const double lam =
          head.lambda(tape, enc.evolve(tape, s, {delta})).val().item();
      acc += (j == 0 || j == grid) ? 0.5 * lam : lam;
    }
    integral += acc * h;
    auto hbar = enc.evolve(tape, s, {tau});
    events += std::log(head.lambda(tape, hbar).val().item());
    s = enc.cell.step(
        tape, tape.constant(Tensor::scalar(xform.transform(tau))), hbar);
  }
  return (integral - events) / static_cast<double>(seq.times.size());
}

}  // namespace

TEST_CASE("mixture decoder closed form for a pinned component") {
  Rng rng(1);
  MixtureDecoder dec(4, 8, 1, rng);
  zero_net(dec.net);
  // Outputs (logit, mean, pre-scale); pick the pre-scale bias so that
  // softplus(b) + 1e-6 = 1.
  dec.net.layers.back().b.value[2] = std::log(std::exp(1.0 - 1e-6) - 1.0);
  const Tensor h(1, 4);
  const double lp = dec.log_prob(h, 1.0);
  CHECK(lp == doctest::Approx(-0.9189385332046727).epsilon(1e-9));
  // At u = e the z-score is 1: subtract 1/2 and the log-u jacobian.
  const double lp_e = dec.log_prob(h, std::exp(1.0));
  CHECK(lp_e == doctest::Approx(-0.9189385332046727 - 0.5 - 1.0).epsilon(1e-9));
}

TEST_CASE("taped and plain mixture log-probs agree") {
  Rng rng(2);
  MixtureDecoder dec(6, 12, 8, rng);
  Tensor h = test::random_tensor(3, 6, rng);
  Tensor u(3, 1);
  u(0, 0) = 0.2;
  u(1, 0) = 1.7;
  u(2, 0) = 4.1;
  ad::Tape tape;
  const Tensor lp = dec.log_prob(tape, tape.constant(h), u).val();
  for (std::size_t i = 0; i < 3; ++i) {
    Tensor row(1, 6);
    for (std::size_t j = 0; j < 6; ++j) row(0, j) = h(i, j);
    CHECK(lp(i, 0) == doctest::Approx(dec.log_prob(row, u(i, 0))).epsilon(1e-12));
  }
}

TEST_CASE("mixture density integrates to one") {
  Rng rng(3);
  MixtureDecoder dec(5, 10, 8, rng);
  for (int trial = 0; trial < 3; ++trial) {
    const Tensor h = test::random_tensor(1, 5, rng);
    // Integrate over u in (0, 1e3) by trapezoid in w = log u.
    const double wlo = -30.0, whi = std::log(1e3);
    const std::size_t n = 20000;
    const double hw = (whi - wlo) / static_cast<double>(n);
    double total = 0.0;
    for (std::size_t j = 0; j <= n; ++j) {
      const double w = wlo + hw * static_cast<double>(j);
      const double u = std::exp(w);
      const double v = std::exp(dec.log_prob(h, u)) * u;
      total += (j == 0 || j == n) ? 0.5 * v : v;
    }
    total *= hw;
    CHECK(total >= 0.999);
    CHECK(total <= 1.0 + 1e-6);
  }
}

TEST_CASE("constant unit intensity gives nll T over n") {
  Rng rng(4);
  auto enc = make_event_encoder(EncoderKind::DiscreteGru, 4, 8, 1, 0.9, rng);
  IntensityHead head(4, 8, rng);
  zero_net(head.net);
  head.net.layers.back().b.value[0] = std::log(std::exp(1.0) - 1.0);
  InterEventTransform xform;
  const auto seq = make_seq({0.5, 1.2, 3.0});
  Rng mc(0);
  ad::Tape tape;
  const double nll =
      nll_continuous(tape, enc, head, xform, {&seq}, 20, mc).val().item();
  CHECK(nll == doctest::Approx(3.0 / 3.0).epsilon(1e-8));
}

TEST_CASE("constant doubled intensity matches the poisson likelihood") {
  Rng rng(5);
  auto enc = make_event_encoder(EncoderKind::GruFlow, 4, 8, 1, 0.9, rng);
  IntensityHead head(4, 8, rng);
  zero_net(head.net);
  head.net.layers.back().b.value[0] = std::log(std::exp(2.0) - 1.0);
  InterEventTransform xform;
  const auto seq = make_seq({1.0, 2.5, 4.0, 5.0});
  Rng mc(1);
  ad::Tape tape;
  const double nll =
      nll_continuous(tape, enc, head, xform, {&seq}, 20, mc).val().item();
  // integral 2 * 5, events 4 log 2
  CHECK(nll == doctest::Approx((10.0 - 4.0 * std::log(2.0)) / 4.0)
                   .epsilon(1e-8));
}

TEST_CASE("mean normalization is absorbed by shifting mixture means") {
  Rng rng(6);
  auto enc = make_event_encoder(EncoderKind::DiscreteGru, 4, 8, 1, 0.9, rng);
  MixtureDecoder dec(4, 8, 4, rng);
  const double mean_tau = 2.7;

  InterEventTransform norm;
  norm.normalize = true;
  norm.mean_tau = mean_tau;
  InterEventTransform raw;

  // Shift every mean-output bias by log mean_tau; for a log-normal this
  // rescales the variable, which the jacobian term of the normalized
  // model accounts for exactly.
  MixtureDecoder shifted = dec;
  for (std::size_t k = 4; k < 8; ++k)
    shifted.net.layers.back().b.value[k] += std::log(mean_tau);

  // Single-event sequences keep the hidden states identical across the
  // two parameterizations.
  for (double t : {0.3, 1.9, 6.2}) {
    const auto seq = make_seq({t});
    ad::Tape ta, tb;
    const double a =
        nll_mixture(ta, enc, dec, norm, {&seq}).val().item();
    const double b =
        nll_mixture(tb, enc, shifted, raw, {&seq}).val().item();
    CHECK(a == doctest::Approx(b).epsilon(1e-9));
  }
}

TEST_CASE("stratified mc compensator is unbiased against quadrature") {
  Rng rng(7);
  auto enc = make_event_encoder(EncoderKind::CouplingFlow, 4, 8, 2, 0.9, rng);
  IntensityHead head(4, 8, rng);
  InterEventTransform xform;
  const auto seq = make_seq({0.4, 1.1, 1.9});

  const std::size_t reps = 200;
  std::vector<double> samples;
  for (std::size_t r = 0; r < reps; ++r) {
    Rng mc(1000 + r);
    ad::Tape tape;
    samples.push_back(
        nll_continuous(tape, enc, head, xform, {&seq}, 20, mc).val().item());
  }
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= static_cast<double>(reps);
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  var /= static_cast<double>(reps - 1);
  const double se = std::sqrt(var / static_cast<double>(reps));

  const double oracle = quadrature_nll(enc, head, xform, seq, 400);
  CHECK(std::abs(mean - oracle) < 3.0 * se + 1e-7);
}

TEST_CASE("mc variance shrinks faster than 1 over n_mc") {
  Rng rng(8);
  auto enc = make_event_encoder(EncoderKind::GruFlow, 4, 8, 1, 0.9, rng);
  IntensityHead head(4, 8, rng);
  InterEventTransform xform;
  const auto seq = make_seq({0.7, 1.5, 2.6});

  auto variance = [&](std::size_t n_mc) {
    std::vector<double> samples;
    for (std::size_t r = 0; r < 120; ++r) {
      Rng mc(5000 + r);
      ad::Tape tape;
      samples.push_back(nll_continuous(tape, enc, head, xform, {&seq}, n_mc,
                                       mc)
                            .val()
                            .item());
    }
    double mean = 0.0;
    for (double s : samples) mean += s;
    mean /= samples.size();
    double var = 0.0;
    for (double s : samples) var += (s - mean) * (s - mean);
    return var / (samples.size() - 1);
  };
  const double v2 = variance(2), v8 = variance(8);
  CHECK(v8 < v2 / 4.0);  // stratification beats the 1/n monte-carlo rate
}

TEST_CASE("encoders leave the state unchanged over a zero interval") {
  Rng rng(9);
  for (auto kind : {EncoderKind::DiscreteGru, EncoderKind::GruFlow,
                    EncoderKind::ResNetFlow, EncoderKind::CouplingFlow,
                    EncoderKind::JumpOde}) {
    auto enc = make_event_encoder(kind, 6, 8, 2, 0.9, rng);
    ad::Tape tape;
    auto h = enc.initial_state(tape, 3);
    auto h2 = enc.evolve(tape, h, {0.0, 0.0, 0.0});
    CHECK(max_abs_diff(h.val(), h2.val()) < 1e-12);
  }
}

TEST_CASE("encode_sequence produces one state per event plus the start") {
  Rng rng(10);
  auto enc = make_event_encoder(EncoderKind::CouplingFlow, 5, 8, 2, 0.9, rng);
  InterEventTransform xform;
  const auto seq = make_seq({0.5, 1.0, 2.0, 2.2});
  ad::Tape tape;
  const auto states = encode_sequence(tape, enc, xform, seq);
  CHECK(states.size() == 5);
  Tensor h0 = enc.h0.value;
  for (std::size_t i = 0; i < h0.size(); ++i)
    CHECK(states[0].val()[i] == doctest::Approx(std::tanh(h0[i])));
}

TEST_CASE("inter-event times reject non-increasing sequences") {
  CHECK_THROWS(inter_event_times(make_seq({1.0, 1.0})));
  CHECK_THROWS(inter_event_times(make_seq({1.0, 0.5})));
  CHECK(inter_event_times(make_seq({0.5, 2.0})) ==
        std::vector<double>{0.5, 1.5});
}

TEST_CASE("mixture nll gradients match finite differences") {
  Rng rng(11);
  auto enc = make_event_encoder(EncoderKind::CouplingFlow, 4, 6, 2, 0.9, rng);
  MixtureDecoder dec(4, 6, 3, rng);
  InterEventTransform xform;
  xform.log1p = true;
  const auto s1 = make_seq({0.4, 1.0, 1.8});
  const auto s2 = make_seq({0.9, 1.3, 2.4});
  std::vector<Parameter*> ps;
  enc.collect_params(ps);
  dec.collect_params(ps);
  auto build = [&](ad::Tape& t) {
    return nll_mixture(t, enc, dec, xform, {&s1, &s2});
  };
  CHECK(test::max_grad_error(build, ps, 1e-5) < 1e-4);
}

TEST_CASE("continuous nll gradients match finite differences") {
  Rng rng(12);
  auto enc = make_event_encoder(EncoderKind::GruFlow, 4, 6, 1, 0.9, rng);
  IntensityHead head(4, 6, rng);
  InterEventTransform xform;
  const auto seq = make_seq({0.6, 1.4});
  std::vector<Parameter*> ps;
  enc.collect_params(ps);
  head.collect_params(ps);
  auto build = [&](ad::Tape& t) {
    Rng mc(77);  // frozen sample points keep the loss deterministic
    return nll_continuous(t, enc, head, xform, {&seq}, 5, mc);
  };
  CHECK(test::max_grad_error(build, ps, 1e-5) < 1e-4);
}

TEST_CASE("transform jacobians match numerical derivatives") {
  InterEventTransform x;
  x.normalize = true;
  x.log1p = true;
  x.mean_tau = 1.7;
  for (double tau : {0.2, 1.0, 4.3}) {
    const double h = 1e-7;
    const double num =
        (x.transform(tau + h) - x.transform(tau - h)) / (2.0 * h);
    CHECK(x.log_jacobian(tau) == doctest::Approx(std::log(num)).epsilon(1e-6));
  }
  CHECK_THROWS(x.transform(0.0));
}
