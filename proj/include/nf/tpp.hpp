#pragma once

#include <string>
#include <vector>

#include "nf/data.hpp"
#include "nf/flows.hpp"
#include "nf/ode.hpp"

namespace nf {

enum class EncoderKind { DiscreteGru, GruFlow, ResNetFlow, CouplingFlow,
                         JumpOde };

EncoderKind encoder_kind_from_string(const std::string& s);
std::string to_string(EncoderKind k);

// Standard GRU update cell applied at event times.
struct GruCell {
  LinearLayer wz, wr, wc;

  GruCell() = default;
  GruCell(std::size_t feat, std::size_t hidden, Rng& rng);

  ad::Value step(ad::Tape& tape, const ad::Value& feat,
                 const ad::Value& h) const;
  void collect_params(std::vector<Parameter*>& out);
};

// Continuous-time hidden state: evolves between events by a flow or an
// ODE solve, updated at events by the GRU cell.
struct EventEncoder {
  EncoderKind kind = EncoderKind::DiscreteGru;
  std::size_t hidden = 0;
  Parameter h0;  // 1 x hidden, state is tanh(h0) at t = 0
  GruCell cell;
  FlowStack flow;
  VectorField field;
  SolverConfig ode_cfg = SolverConfig::dopri5(1e-3, 1e-4);

  ad::Value initial_state(ad::Tape& tape, std::size_t n) const;
  // Evolve each row of h by its own elapsed time dt[i] >= 0.
  ad::Value evolve(ad::Tape& tape, const ad::Value& h,
                   const std::vector<double>& dt) const;

  void collect_params(std::vector<Parameter*>& out);
  void project();
};

EventEncoder make_event_encoder(EncoderKind kind, std::size_t hidden,
                                std::size_t units, std::size_t n_layers,
                                double spectral_coeff, Rng& rng);

// Log-normal mixture over the (transformed) next inter-event time.
struct MixtureDecoder {
  std::size_t K = 8;
  MLP net;  // hidden -> 3K: logits, means, log-scales

  MixtureDecoder() = default;
  MixtureDecoder(std::size_t hidden, std::size_t units, std::size_t K,
                 Rng& rng);

  // u: n x 1 positive observations; returns n x 1 log density.
  ad::Value log_prob(ad::Tape& tape, const ad::Value& h,
                     const Tensor& u) const;
  double log_prob(const Tensor& h_row, double u) const;

  void collect_params(std::vector<Parameter*>& out);
};

struct IntensityHead {
  MLP net;  // hidden -> 1

  IntensityHead() = default;
  IntensityHead(std::size_t hidden, std::size_t units, Rng& rng);

  ad::Value lambda(ad::Tape& tape, const ad::Value& h) const;  // n x 1, > 0
  void collect_params(std::vector<Parameter*>& out);
};

// tau -> tau / mean -> log(tau/mean + 1), with the change-of-variables
// terms carried into the likelihood.
struct InterEventTransform {
  double mean_tau = 1.0;
  bool normalize = false;
  bool log1p = false;

  double transform(double tau) const;
  double log_jacobian(double tau) const;  // log |du/dtau|

  static InterEventTransform fit(const EventSequenceDataset& ds,
                                 bool normalize, bool log1p);
};

// Inter-event times of a sequence, t0 = 0.
std::vector<double> inter_event_times(const EventSequence& seq);

// Hidden states after 0, 1, ..., n events (n + 1 entries, single sequence).
std::vector<ad::Value> encode_sequence(ad::Tape& tape,
                                       const EventEncoder& enc,
                                       const InterEventTransform& xform,
                                       const EventSequence& seq);

// Mean per-event NLL of the mixture model over equal-length sequences.
ad::Value nll_mixture(ad::Tape& tape, const EventEncoder& enc,
                      const MixtureDecoder& dec,
                      const InterEventTransform& xform,
                      const std::vector<const EventSequence*>& seqs);

// Mean per-event NLL of the continuous-intensity model; the integral of
// lambda is estimated with n_mc stratified samples per interval.
ad::Value nll_continuous(ad::Tape& tape, const EventEncoder& enc,
                         const IntensityHead& head,
                         const InterEventTransform& xform,
                         const std::vector<const EventSequence*>& seqs,
                         std::size_t n_mc, Rng& rng);

}  // namespace nf
