#include "nf/nn.hpp"

#include <cmath>

namespace nf {

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "tanh") return Activation::Tanh;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "elu") return Activation::Elu;
  throw std::invalid_argument("unknown activation: " + s);
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Elu: return "elu";
  }
  return "identity";
}

double activation_scalar(Activation a, double x) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::Tanh: return std::tanh(x);
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
    case Activation::Elu: return x > 0 ? x : std::expm1(x);
  }
  return x;
}

ad::Value apply_activation(Activation a, const ad::Value& x) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::Tanh: return ad::tanh(x);
    case Activation::Sigmoid: return ad::sigmoid(x);
    case Activation::Elu: return ad::elu(x);
  }
  return x;
}

double power_iteration_sigma(const Tensor& W, Tensor& u, Tensor& v,
                             int iters) {
  const std::size_t out = W.rows(), in = W.cols();
  if (u.size() != out) u = Tensor::full(out, 1, 1.0 / std::sqrt((double)out));
  if (v.size() != in) v = Tensor::full(in, 1, 1.0 / std::sqrt((double)in));
  auto normalize = [](Tensor& x) {
    double n = 0.0;
    for (double e : x.data()) n += e * e;
    n = std::sqrt(n);
    if (n > 0)
      for (double& e : x.data()) e /= n;
    return n;
  };
  double sigma = 0.0;
  for (int it = 0; it < iters; ++it) {
    // v <- W^T u, u <- W v
    Tensor vn(in, 1);
    for (std::size_t j = 0; j < in; ++j)
      for (std::size_t i = 0; i < out; ++i) vn(j, 0) += W(i, j) * u(i, 0);
    if (normalize(vn) == 0.0) return 0.0;
    v = vn;
    Tensor un(out, 1);
    for (std::size_t i = 0; i < out; ++i)
      for (std::size_t j = 0; j < in; ++j) un(i, 0) += W(i, j) * v(j, 0);
    sigma = normalize(un);
    if (sigma == 0.0) return 0.0;
    u = un;
  }
  return sigma;
}

Tensor spectral_normalize(const Tensor& W, double coeff, int iters) {
  if (iters < 1) throw std::invalid_argument("spectral_normalize: iters >= 1");
  if (!(coeff > 0.0 && coeff < 1.0))
    throw std::invalid_argument("spectral_normalize: coeff in (0,1)");
  Tensor u, v;
  double sigma = power_iteration_sigma(W, u, v, iters);
  if (sigma <= coeff) return W;
  return (coeff / sigma) * W;
}

LinearLayer::LinearLayer(std::size_t in, std::size_t out, double coeff,
                         Rng& rng)
    : spectral_coeff(coeff) {
  Tensor w(out, in);
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  for (auto& x : w.data()) x = rng.uniform(-bound, bound);
  W = Parameter(std::move(w));
  b = Parameter(Tensor(1, out));
  if (spectral_coeff > 0.0) project(20);
}

void LinearLayer::project(int iters) {
  if (spectral_coeff <= 0.0) return;
  double sigma = power_iteration_sigma(W.value, u, v, iters);
  if (sigma > spectral_coeff)
    W.value = (spectral_coeff / sigma) * W.value;
}

MLP::MLP(std::vector<std::size_t> sizes, Activation hidden, Activation output,
         double spectral_coeff, Rng& rng)
    : hidden_act(hidden), output_act(output) {
  if (sizes.size() < 2) throw std::invalid_argument("MLP: need >= 2 sizes");
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i)
    layers.emplace_back(sizes[i], sizes[i + 1], spectral_coeff, rng);
}

ad::Value MLP::forward(ad::Tape& tape, const ad::Value& x) const {
  if (x.cols() != in_dim())
    throw std::invalid_argument("MLP::forward: input dim " +
                                x.val().shape_str() + ", expected cols " +
                                std::to_string(in_dim()));
  ad::Value h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = ad::affine(h, tape.leaf(layers[i].W), tape.leaf(layers[i].b));
    h = apply_activation(i + 1 < layers.size() ? hidden_act : output_act, h);
  }
  return h;
}

Tensor MLP::forward(const Tensor& x) const {
  if (x.cols() != in_dim())
    throw std::invalid_argument("MLP::forward: input dim mismatch");
  ensure_finite(x, "MLP::forward");
  Tensor h = x;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const auto& L = layers[li];
    Tensor y(h.rows(), L.out_dim());
    for (std::size_t i = 0; i < h.rows(); ++i)
      for (std::size_t j = 0; j < L.out_dim(); ++j) {
        double s = L.b.value[j];
        for (std::size_t k = 0; k < L.in_dim(); ++k)
          s += h(i, k) * L.W.value(j, k);
        y(i, j) = s;
      }
    Activation act = li + 1 < layers.size() ? hidden_act : output_act;
    for (auto& v : y.data()) v = activation_scalar(act, v);
    h = std::move(y);
  }
  return h;
}

void MLP::collect_params(std::vector<Parameter*>& out) {
  for (auto& l : layers) {
    out.push_back(&l.W);
    out.push_back(&l.b);
  }
}

void MLP::project() {
  for (auto& l : layers) l.project(1);
}

void MLP::zero_last_layer() {
  auto& l = layers.back();
  for (auto& x : l.W.value.data()) x = 0.0;
  for (auto& x : l.b.value.data()) x = 0.0;
}

MLP make_contractive_mlp(std::size_t in, std::size_t out, std::size_t hidden,
                         std::size_t hidden_layers, double coeff, Rng& rng) {
  std::vector<std::size_t> sizes;
  sizes.push_back(in);
  for (std::size_t i = 0; i < hidden_layers; ++i) sizes.push_back(hidden);
  sizes.push_back(out);
  return MLP(std::move(sizes), Activation::Tanh, Activation::Identity, coeff,
             rng);
}

}  // namespace nf
