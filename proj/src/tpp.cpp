#include "nf/tpp.hpp"

#include <cmath>
#include <numbers>

namespace nf {

EncoderKind encoder_kind_from_string(const std::string& s) {
  if (s == "discrete-gru") return EncoderKind::DiscreteGru;
  if (s == "gru-flow") return EncoderKind::GruFlow;
  if (s == "resnet-flow") return EncoderKind::ResNetFlow;
  if (s == "coupling-flow") return EncoderKind::CouplingFlow;
  if (s == "jump-ode") return EncoderKind::JumpOde;
  throw std::invalid_argument("unknown encoder kind: " + s);
}

std::string to_string(EncoderKind k) {
  switch (k) {
    case EncoderKind::DiscreteGru: return "discrete-gru";
    case EncoderKind::GruFlow: return "gru-flow";
    case EncoderKind::ResNetFlow: return "resnet-flow";
    case EncoderKind::CouplingFlow: return "coupling-flow";
    case EncoderKind::JumpOde: return "jump-ode";
  }
  return "discrete-gru";
}

GruCell::GruCell(std::size_t feat, std::size_t hidden, Rng& rng)
    : wz(feat + hidden, hidden, 0.0, rng),
      wr(feat + hidden, hidden, 0.0, rng),
      wc(feat + hidden, hidden, 0.0, rng) {}

ad::Value GruCell::step(ad::Tape& tape, const ad::Value& feat,
                        const ad::Value& h) const {
  auto in = ad::concat_cols(feat, h);
  auto z = ad::sigmoid(ad::affine(in, tape.leaf(wz.W), tape.leaf(wz.b)));
  auto r = ad::sigmoid(ad::affine(in, tape.leaf(wr.W), tape.leaf(wr.b)));
  auto cin = ad::concat_cols(feat, ad::mul(r, h));
  auto c = ad::tanh(ad::affine(cin, tape.leaf(wc.W), tape.leaf(wc.b)));
  // h' = z h + (1 - z) c; both end points inside (-1, 1) keep h' there
  return ad::add(c, ad::mul(z, ad::sub(h, c)));
}

void GruCell::collect_params(std::vector<Parameter*>& out) {
  for (LinearLayer* l : {&wz, &wr, &wc}) {
    out.push_back(&l->W);
    out.push_back(&l->b);
  }
}

ad::Value EventEncoder::initial_state(ad::Tape& tape, std::size_t n) const {
  return ad::bcast_rows(ad::tanh(tape.leaf(h0)), n);
}

ad::Value EventEncoder::evolve(ad::Tape& tape, const ad::Value& h,
                               const std::vector<double>& dt) const {
  if (dt.size() != h.rows())
    throw std::invalid_argument("EventEncoder::evolve: dt size mismatch");
  for (double d : dt)
    if (d < 0) throw std::invalid_argument("EventEncoder::evolve: dt >= 0");
  if (kind == EncoderKind::DiscreteGru) return h;
  if (kind == EncoderKind::JumpOde)
    return batched_solve(tape, field, h, dt, ode_cfg);
  Tensor tcol(dt.size(), 1);
  for (std::size_t i = 0; i < dt.size(); ++i) tcol(i, 0) = dt[i];
  return flow.forward(tape, tape.constant(tcol), h);
}

void EventEncoder::collect_params(std::vector<Parameter*>& out) {
  out.push_back(&h0);
  cell.collect_params(out);
  if (kind == EncoderKind::JumpOde)
    field.f.collect_params(out);
  else if (kind != EncoderKind::DiscreteGru)
    flow.collect_params(out);
}

void EventEncoder::project() {
  if (kind != EncoderKind::DiscreteGru && kind != EncoderKind::JumpOde)
    flow.project();
}

EventEncoder make_event_encoder(EncoderKind kind, std::size_t hidden,
                                std::size_t units, std::size_t n_layers,
                                double spectral_coeff, Rng& rng) {
  EventEncoder enc;
  enc.kind = kind;
  enc.hidden = hidden;
  enc.h0 = Parameter(Tensor(1, hidden));
  enc.cell = GruCell(1, hidden, rng);
  switch (kind) {
    case EncoderKind::DiscreteGru: break;
    case EncoderKind::GruFlow:
      for (std::size_t i = 0; i < n_layers; ++i)
        enc.flow.layers.push_back(std::make_unique<GRUFlowLayer>(
            hidden, units, 1, spectral_coeff, rng));
      break;
    case EncoderKind::ResNetFlow:
      for (std::size_t i = 0; i < n_layers; ++i)
        enc.flow.layers.push_back(std::make_unique<ResNetFlowLayer>(
            hidden, units, 1, spectral_coeff, rng));
      break;
    case EncoderKind::CouplingFlow:
      for (std::size_t i = 0; i < n_layers; ++i)
        enc.flow.layers.push_back(std::make_unique<CouplingFlowLayer>(
            hidden, i % 2 == 0, units, 1, rng));
      break;
    case EncoderKind::JumpOde:
      enc.field = VectorField(hidden, units, n_layers, rng);
      break;
  }
  return enc;
}

MixtureDecoder::MixtureDecoder(std::size_t hidden, std::size_t units,
                               std::size_t K, Rng& rng)
    : K(K),
      net({hidden, units, 3 * K}, Activation::Tanh, Activation::Identity, 0.0,
          rng) {}

namespace {

constexpr double kLogSqrt2Pi = 0.9189385332046727;  // log sqrt(2 pi)

}  // namespace

ad::Value MixtureDecoder::log_prob(ad::Tape& tape, const ad::Value& h,
                                   const Tensor& u) const {
  const std::size_t n = h.rows();
  if (u.rows() != n || u.cols() != 1)
    throw std::invalid_argument("MixtureDecoder::log_prob: u must be n x 1");
  Tensor logu(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(u(i, 0) > 0))
      throw std::invalid_argument(
          "MixtureDecoder::log_prob: observations must be positive");
    logu(i, 0) = std::log(u(i, 0));
  }
  auto out = net.forward(tape, h);
  std::vector<std::size_t> iw(K), im(K), is(K);
  for (std::size_t k = 0; k < K; ++k) {
    iw[k] = k;
    im[k] = K + k;
    is[k] = 2 * K + k;
  }
  auto logits = ad::select_cols(out, iw);
  auto means = ad::select_cols(out, im);
  auto sigma = ad::add_const(ad::softplus(ad::select_cols(out, is)), 1e-6);
  auto logw = ad::sub(logits, ad::bcast_cols(ad::logsumexp_cols(logits), K));
  Tensor logu_b(n, K);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < K; ++k) logu_b(i, k) = logu(i, 0);
  auto z = ad::div(ad::sub(tape.constant(logu_b), means), sigma);
  auto comp = ad::add_const(
      ad::sub(ad::neg(ad::scale(ad::square(z), 0.5)), ad::log(sigma)),
      -kLogSqrt2Pi);
  return ad::sub(ad::logsumexp_cols(ad::add(logw, comp)),
                 tape.constant(logu));
}

double MixtureDecoder::log_prob(const Tensor& h_row, double u) const {
  if (!(u > 0))
    throw std::invalid_argument(
        "MixtureDecoder::log_prob: observations must be positive");
  const Tensor out = net.forward(h_row);
  const double logu = std::log(u);
  double lse_w = -1e300, lse = -1e300;
  std::vector<double> terms(K);
  for (std::size_t k = 0; k < K; ++k)
    lse_w = std::max(lse_w, out(0, k));
  double sw = 0;
  for (std::size_t k = 0; k < K; ++k) sw += std::exp(out(0, k) - lse_w);
  const double logz = lse_w + std::log(sw);
  for (std::size_t k = 0; k < K; ++k) {
    const double logw = out(0, k) - logz;
    const double mu = out(0, K + k);
    const double sp = out(0, 2 * K + k);
    const double sig = std::log1p(std::exp(-std::abs(sp))) +
                       std::max(sp, 0.0) + 1e-6;
    const double zz = (logu - mu) / sig;
    terms[k] = logw - 0.5 * zz * zz - std::log(sig) - kLogSqrt2Pi;
    lse = std::max(lse, terms[k]);
  }
  double s = 0;
  for (double t : terms) s += std::exp(t - lse);
  return lse + std::log(s) - logu;
}

void MixtureDecoder::collect_params(std::vector<Parameter*>& out) {
  net.collect_params(out);
}

IntensityHead::IntensityHead(std::size_t hidden, std::size_t units, Rng& rng)
    : net({hidden, units, 1}, Activation::Tanh, Activation::Identity, 0.0,
          rng) {}

ad::Value IntensityHead::lambda(ad::Tape& tape, const ad::Value& h) const {
  return ad::add_const(ad::softplus(net.forward(tape, h)), 1e-10);
}

void IntensityHead::collect_params(std::vector<Parameter*>& out) {
  net.collect_params(out);
}

double InterEventTransform::transform(double tau) const {
  if (!(tau > 0))
    throw std::invalid_argument("InterEventTransform: tau must be positive");
  double u = normalize ? tau / mean_tau : tau;
  if (log1p) u = std::log1p(u);
  return u;
}

double InterEventTransform::log_jacobian(double tau) const {
  double lj = 0.0, u = tau;
  if (normalize) {
    lj -= std::log(mean_tau);
    u /= mean_tau;
  }
  if (log1p) lj -= std::log1p(u);
  return lj;
}

InterEventTransform InterEventTransform::fit(const EventSequenceDataset& ds,
                                             bool normalize, bool log1p) {
  InterEventTransform x;
  x.normalize = normalize;
  x.log1p = log1p;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i : ds.split_indices(Split::Train)) {
    const auto taus = inter_event_times(ds.seqs[i]);
    for (double t : taus) sum += t;
    count += taus.size();
  }
  if (count > 0 && sum > 0) x.mean_tau = sum / static_cast<double>(count);
  return x;
}

std::vector<double> inter_event_times(const EventSequence& seq) {
  std::vector<double> taus;
  double prev = 0.0;
  for (double t : seq.times) {
    if (t <= prev)
      throw std::invalid_argument("event times must be strictly increasing");
    taus.push_back(t - prev);
    prev = t;
  }
  return taus;
}

std::vector<ad::Value> encode_sequence(ad::Tape& tape,
                                       const EventEncoder& enc,
                                       const InterEventTransform& xform,
                                       const EventSequence& seq) {
  std::vector<ad::Value> states{enc.initial_state(tape, 1)};
  for (double tau : inter_event_times(seq)) {
    auto hbar = enc.evolve(tape, states.back(), {tau});
    auto feat = tape.constant(Tensor::scalar(xform.transform(tau)));
    states.push_back(enc.cell.step(tape, feat, hbar));
  }
  return states;
}

namespace {

std::size_t check_equal_lengths(const std::vector<const EventSequence*>& seqs) {
  if (seqs.empty()) throw std::invalid_argument("empty sequence batch");
  const std::size_t L = seqs[0]->times.size();
  if (L == 0) throw std::invalid_argument("empty event sequence");
  for (const auto* s : seqs)
    if (s->times.size() != L)
      throw std::invalid_argument("sequence batch must have equal lengths");
  return L;
}

}  // namespace

ad::Value nll_mixture(ad::Tape& tape, const EventEncoder& enc,
                      const MixtureDecoder& dec,
                      const InterEventTransform& xform,
                      const std::vector<const EventSequence*>& seqs) {
  const std::size_t L = check_equal_lengths(seqs);
  const std::size_t n = seqs.size();
  std::vector<std::vector<double>> taus(n);
  for (std::size_t q = 0; q < n; ++q) taus[q] = inter_event_times(*seqs[q]);

  ad::Value s = enc.initial_state(tape, n);
  ad::Value loglik;
  double jacobian = 0.0;
  for (std::size_t i = 0; i < L; ++i) {
    std::vector<double> dt(n);
    Tensor u(n, 1);
    for (std::size_t q = 0; q < n; ++q) {
      dt[q] = taus[q][i];
      u(q, 0) = xform.transform(taus[q][i]);
      jacobian += xform.log_jacobian(taus[q][i]);
    }
    auto lp = ad::sum_all(dec.log_prob(tape, s, u));
    loglik = loglik.valid() ? ad::add(loglik, lp) : lp;
    auto hbar = enc.evolve(tape, s, dt);
    s = enc.cell.step(tape, tape.constant(u), hbar);
  }
  const double inv = 1.0 / static_cast<double>(n * L);
  return ad::add_const(ad::scale(ad::neg(loglik), inv), -jacobian * inv);
}

ad::Value nll_continuous(ad::Tape& tape, const EventEncoder& enc,
                         const IntensityHead& head,
                         const InterEventTransform& xform,
                         const std::vector<const EventSequence*>& seqs,
                         std::size_t n_mc, Rng& rng) {
  if (n_mc < 1) throw std::invalid_argument("nll_continuous: n_mc >= 1");
  const std::size_t L = check_equal_lengths(seqs);
  const std::size_t n = seqs.size();
  std::vector<std::vector<double>> taus(n);
  for (std::size_t q = 0; q < n; ++q) taus[q] = inter_event_times(*seqs[q]);

  ad::Value s = enc.initial_state(tape, n);
  ad::Value events, integral;
  for (std::size_t i = 0; i < L; ++i) {
    std::vector<double> dt(n);
    Tensor u(n, 1), w(n, 1);
    for (std::size_t q = 0; q < n; ++q) {
      dt[q] = taus[q][i];
      u(q, 0) = xform.transform(taus[q][i]);
      w(q, 0) = taus[q][i] / static_cast<double>(n_mc);
    }
    // Stratified estimate of the compensator over each interval.
    auto wv = tape.constant(w);
    for (std::size_t j = 0; j < n_mc; ++j) {
      std::vector<double> delta(n);
      for (std::size_t q = 0; q < n; ++q)
        delta[q] = taus[q][i] *
                   (static_cast<double>(j) + rng.uniform(0.0, 1.0)) /
                   static_cast<double>(n_mc);
      auto lam = head.lambda(tape, enc.evolve(tape, s, delta));
      auto term = ad::sum_all(ad::mul(wv, lam));
      integral = integral.valid() ? ad::add(integral, term) : term;
    }
    auto hbar = enc.evolve(tape, s, dt);
    auto loglam = ad::sum_all(ad::log(head.lambda(tape, hbar)));
    events = events.valid() ? ad::add(events, loglam) : loglam;
    s = enc.cell.step(tape, tape.constant(u), hbar);
  }
  const double inv = 1.0 / static_cast<double>(n * L);
  return ad::scale(ad::sub(integral, events), inv);
}

}  // namespace nf
