#pragma once

#include <cmath>
#include <functional>

#include "nf/autodiff.hpp"
#include "nf/rng.hpp"

namespace nf::test {

// Central-difference check of every parameter gradient against the tape.
// Returns the worst relative error.
inline double max_grad_error(
    const std::function<ad::Value(ad::Tape&)>& build,
    const std::vector<Parameter*>& params, double h = 1e-5) {
  ad::Tape tape;
  auto loss = build(tape);
  auto grads = tape.backward(loss);
  double worst = 0.0;
  for (auto* p : params) {
    const Tensor* g = nullptr;
    auto it = grads.find(p);
    if (it != grads.end()) g = &it->second;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      ad::Tape t1;
      const double lp = build(t1).val().item();
      p->value[i] = orig - h;
      ad::Tape t2;
      const double lm = build(t2).val().item();
      p->value[i] = orig;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = g ? (*g)[i] : 0.0;
      const double rel =
          std::abs(fd - an) / std::max(1e-4, std::abs(fd) + std::abs(an));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

inline Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng,
                            double sd = 1.0) {
  Tensor t(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, sd);
  return t;
}

}  // namespace nf::test
