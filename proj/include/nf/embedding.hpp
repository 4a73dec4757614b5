#pragma once

#include "nf/autodiff.hpp"
#include "nf/rng.hpp"

namespace nf {

// Vector-valued function of time with phi(0) = 0, used to switch flow
// layers off at t = 0.
struct TimeEmbedding {
  enum class Kind { Linear, TanhLinear, Fourier };

  Kind kind = Kind::Linear;
  std::size_t dim = 0;
  Parameter alpha;  // 1 x d (Linear/TanhLinear) or K x d (Fourier)
  Parameter beta;   // K x d (Fourier only)
  bool bounded = false;  // Fourier: wrap the sum in tanh
  bool nonneg = false;   // TanhLinear: use |alpha| so phi(t) in [0,1) for t>=0

  static TimeEmbedding linear(std::size_t d, Rng& rng);
  static TimeEmbedding tanh_linear(std::size_t d, Rng& rng,
                                   bool nonneg = false);
  static TimeEmbedding fourier(std::size_t d, std::size_t k, Rng& rng,
                               bool bounded);

  // t: n x 1 column of times -> n x d
  ad::Value forward(ad::Tape& tape, const ad::Value& t) const;
  Tensor forward(double t) const;

  void collect_params(std::vector<Parameter*>& out);
};

}  // namespace nf
