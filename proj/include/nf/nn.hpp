#pragma once

#include <string>
#include <vector>

#include "nf/autodiff.hpp"
#include "nf/rng.hpp"
#include "nf/tensor.hpp"

namespace nf {

enum class Activation { Identity, Tanh, Sigmoid, Elu };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

// Largest singular value via power iteration with caller-persisted vectors.
double power_iteration_sigma(const Tensor& W, Tensor& u, Tensor& v, int iters);

// Returns W * (coeff/sigma) if sigma > coeff, else W unchanged.
Tensor spectral_normalize(const Tensor& W, double coeff, int iters);

struct LinearLayer {
  Parameter W;  // out x in
  Parameter b;  // 1 x out
  double spectral_coeff = 0.0;  // 0 = unconstrained
  Tensor u, v;                  // persistent power-iteration vectors

  LinearLayer() = default;
  LinearLayer(std::size_t in, std::size_t out, double coeff, Rng& rng);

  std::size_t in_dim() const { return W.value.cols(); }
  std::size_t out_dim() const { return W.value.rows(); }

  // Rescale stored weight so its top singular value stays <= coeff.
  void project(int iters = 1);
};

class MLP {
 public:
  MLP() = default;
  // sizes: {in, hidden..., out}
  MLP(std::vector<std::size_t> sizes, Activation hidden, Activation output,
      double spectral_coeff, Rng& rng);

  ad::Value forward(ad::Tape& tape, const ad::Value& x) const;
  Tensor forward(const Tensor& x) const;

  void collect_params(std::vector<Parameter*>& out);
  void project();  // one power iteration per constrained layer
  void zero_last_layer();

  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }

  std::vector<LinearLayer> layers;
  Activation hidden_act = Activation::Tanh;
  Activation output_act = Activation::Identity;
};

// Contractive network per the flow layer contracts: tanh hidden units,
// identity output, every weight spectrally bounded by coeff.
MLP make_contractive_mlp(std::size_t in, std::size_t out, std::size_t hidden,
                         std::size_t hidden_layers, double coeff, Rng& rng);

ad::Value apply_activation(Activation a, const ad::Value& x);
double activation_scalar(Activation a, double x);

}  // namespace nf
