#include "nf/optim.hpp"

#include <cmath>

namespace nf {

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.lr > 0)) throw std::invalid_argument("Adam: lr > 0 required");
  for (Parameter* p : params_) {
    Moments m;
    m.m = Tensor(p->value.rows(), p->value.cols());
    m.v = Tensor(p->value.rows(), p->value.cols());
    state_.emplace(p, std::move(m));
  }
}

void Adam::step(const ad::GradMap& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Parameter* p : params_) {
    auto git = grads.find(p);
    Moments& mo = state_.at(p);
    if (git != grads.end()) {
      const Tensor& g = git->second;
      if (!g.same_shape(p->value))
        throw std::invalid_argument("Adam::step: gradient shape mismatch");
      for (std::size_t i = 0; i < g.size(); ++i) {
        mo.m[i] = cfg_.beta1 * mo.m[i] + (1.0 - cfg_.beta1) * g[i];
        mo.v[i] = cfg_.beta2 * mo.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = mo.m[i] / bc1;
        const double vhat = mo.v[i] / bc2;
        p->value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
    if (cfg_.weight_decay != 0.0)
      for (std::size_t i = 0; i < p->value.size(); ++i)
        p->value[i] -= cfg_.lr * cfg_.weight_decay * p->value[i];
  }
}

}  // namespace nf
