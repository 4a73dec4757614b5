#include "nf/embedding.hpp"

#include <cmath>

namespace nf {

TimeEmbedding TimeEmbedding::linear(std::size_t d, Rng& rng) {
  TimeEmbedding e;
  e.kind = Kind::Linear;
  e.dim = d;
  Tensor a(1, d);
  for (auto& x : a.data()) x = rng.uniform(-1.0, 1.0);
  e.alpha = Parameter(std::move(a));
  return e;
}

TimeEmbedding TimeEmbedding::tanh_linear(std::size_t d, Rng& rng,
                                         bool nonneg) {
  TimeEmbedding e = linear(d, rng);
  e.kind = Kind::TanhLinear;
  e.nonneg = nonneg;
  return e;
}

TimeEmbedding TimeEmbedding::fourier(std::size_t d, std::size_t k, Rng& rng,
                                     bool bounded) {
  TimeEmbedding e;
  e.kind = Kind::Fourier;
  e.dim = d;
  e.bounded = bounded;
  Tensor a(k, d), b(k, d);
  for (auto& x : a.data()) x = rng.normal(0.0, 1.0 / std::sqrt((double)k));
  for (auto& x : b.data()) x = rng.uniform(0.1, 3.0);
  e.alpha = Parameter(std::move(a));
  e.beta = Parameter(std::move(b));
  return e;
}

ad::Value TimeEmbedding::forward(ad::Tape& tape, const ad::Value& t) const {
  if (t.cols() != 1)
    throw std::invalid_argument("TimeEmbedding: t must be n x 1");
  const std::size_t n = t.rows();
  ad::Value tb = ad::bcast_cols(t, dim);
  switch (kind) {
    case Kind::Linear:
      return ad::mul(tb, ad::bcast_rows(tape.leaf(alpha), n));
    case Kind::TanhLinear: {
      ad::Value a = tape.leaf(alpha);
      if (nonneg) a = ad::abs(a);
      return ad::tanh(ad::mul(tb, ad::bcast_rows(a, n)));
    }
    case Kind::Fourier: {
      // sum_k alpha_k * sin(beta_k * t), per output dim
      const std::size_t K = alpha.value.rows();
      ad::Value aleaf = tape.leaf(alpha);
      ad::Value bleaf = tape.leaf(beta);
      ad::Value sum;
      for (std::size_t k = 0; k < K; ++k) {
        ad::Value arow = ad::select_row(aleaf, k);
        ad::Value brow = ad::select_row(bleaf, k);
        ad::Value term = ad::mul(
            ad::sin(ad::mul(tb, ad::bcast_rows(brow, n))),
            ad::bcast_rows(arow, n));
        sum = sum.valid() ? ad::add(sum, term) : term;
      }
      return bounded ? ad::tanh(sum) : sum;
    }
  }
  throw std::logic_error("TimeEmbedding: bad kind");
}

Tensor TimeEmbedding::forward(double t) const {
  Tensor out(1, dim);
  switch (kind) {
    case Kind::Linear:
      for (std::size_t j = 0; j < dim; ++j) out[j] = alpha.value[j] * t;
      break;
    case Kind::TanhLinear:
      for (std::size_t j = 0; j < dim; ++j) {
        double a = nonneg ? std::abs(alpha.value[j]) : alpha.value[j];
        out[j] = std::tanh(a * t);
      }
      break;
    case Kind::Fourier: {
      const std::size_t K = alpha.value.rows();
      for (std::size_t j = 0; j < dim; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k)
          s += alpha.value(k, j) * std::sin(beta.value(k, j) * t);
        out[j] = bounded ? std::tanh(s) : s;
      }
      break;
    }
  }
  return out;
}

void TimeEmbedding::collect_params(std::vector<Parameter*>& out) {
  out.push_back(&alpha);
  if (kind == Kind::Fourier) out.push_back(&beta);
}

}  // namespace nf
