#pragma once

#include <unordered_map>
#include <vector>

#include "nf/autodiff.hpp"

namespace nf {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled: lr * wd * param subtracted
};

// Standard Adam with bias correction and decoupled weight decay.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg);

  void step(const ad::GradMap& grads);
  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  long step_count() const { return t_; }

 private:
  struct Moments {
    Tensor m, v;
  };
  std::vector<Parameter*> params_;
  std::unordered_map<const Parameter*, Moments> state_;
  AdamConfig cfg_;
  long t_ = 0;
};

}  // namespace nf
