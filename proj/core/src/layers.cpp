// SPDX-License-Identifier: Apache-2.0
#include "tfm/layers.hpp"

#include <cmath>
#include <numbers>

#include "tfm/error.hpp"

namespace tfm {

Linear::Linear(std::string prefix, std::size_t in, std::size_t out, Init weight_init, bool with_bias)
    : weight_(prefix + ".w"),
      bias_(with_bias ? prefix + ".b" : std::string()),
      in_(in),
      out_(out),
      weight_init_(weight_init) {}

void Linear::declare(ParamStore& store) const {
  store.declare(weight_, in_, out_, weight_init_);
  if (!bias_.empty()) store.declare(bias_, 1, out_, Init::kZeros);
}

Tensor2D Linear::forward(const ParamStore& store, const Tensor2D& x) const {
  if (x.cols() != in_) {
    throw NumericError(weight_ + ": input width " + std::to_string(x.cols()) + ", expected " +
                       std::to_string(in_));
  }
  Tensor2D y = matmul(x, store.value(weight_));
  if (bias_.empty()) return y;
  const auto bias = store.value(bias_).row(0);
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < out_; ++c) row[c] += bias[c];
  }
  return y;
}

Tensor2D Linear::backward(ParamStore& store, const Tensor2D& x, const Tensor2D& dy) const {
  store.grad(weight_) += matmul_tn(x, dy);
  if (bias_.empty()) return matmul_nt(dy, store.value(weight_));
  auto db = store.grad(bias_).row(0);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    const auto row = dy.row(r);
    for (std::size_t c = 0; c < out_; ++c) db[c] += row[c];
  }
  return matmul_nt(dy, store.value(weight_));
}

LayerNorm::LayerNorm(std::string prefix, std::size_t dim)
    : gain_(prefix + ".gain"), shift_(prefix + ".shift"), dim_(dim) {}

void LayerNorm::declare(ParamStore& store) const {
  store.declare(gain_, 1, dim_, Init::kOnes);
  store.declare(shift_, 1, dim_, Init::kZeros);
}

Tensor2D LayerNorm::forward(const ParamStore& store, const Tensor2D& x, Cache& cache) const {
  if (x.cols() != dim_) throw NumericError(gain_ + ": width mismatch");
  const auto gain = store.value(gain_).row(0);
  const auto shift = store.value(shift_).row(0);
  const auto n = static_cast<double>(dim_);
  cache.normalized = Tensor2D(x.rows(), dim_);
  cache.inv_std.assign(x.rows(), 0.0);
  Tensor2D y(x.rows(), dim_);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto in = x.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= n;
    const double inv_std = 1.0 / std::sqrt(var + kEpsilon);
    cache.inv_std[r] = inv_std;
    auto xhat = cache.normalized.row(r);
    auto out = y.row(r);
    for (std::size_t c = 0; c < dim_; ++c) {
      xhat[c] = (in[c] - mean) * inv_std;
      out[c] = gain[c] * xhat[c] + shift[c];
    }
  }
  return y;
}

Tensor2D LayerNorm::backward(ParamStore& store, const Cache& cache, const Tensor2D& dy) const {
  const auto gain = store.value(gain_).row(0);
  auto dgain = store.grad(gain_).row(0);
  auto dshift = store.grad(shift_).row(0);
  const auto n = static_cast<double>(dim_);
  Tensor2D dx(dy.rows(), dim_);
  std::vector<double> dxhat(dim_);
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    const auto g = dy.row(r);
    const auto xhat = cache.normalized.row(r);
    double sum = 0.0;
    double dot = 0.0;
    for (std::size_t c = 0; c < dim_; ++c) {
      dgain[c] += g[c] * xhat[c];
      dshift[c] += g[c];
      dxhat[c] = g[c] * gain[c];
      sum += dxhat[c];
      dot += dxhat[c] * xhat[c];
    }
    auto out = dx.row(r);
    const double scale = cache.inv_std[r] / n;
    for (std::size_t c = 0; c < dim_; ++c) out[c] = scale * (n * dxhat[c] - sum - xhat[c] * dot);
  }
  return dx;
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/π)
constexpr double kGeluA = 0.044715;
}  // namespace

double gelu(double x) {
  const double inner = kGeluC * (x + kGeluA * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(inner));
}

double gelu_derivative(double x) {
  const double inner = kGeluC * (x + kGeluA * x * x * x);
  const double t = std::tanh(inner);
  const double dinner = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner;
}

FeedForward::FeedForward(const std::string& prefix, std::size_t dim, std::size_t hidden)
    : expand_(prefix + ".expand", dim, hidden), contract_(prefix + ".contract", hidden, dim) {}

void FeedForward::declare(ParamStore& store) const {
  expand_.declare(store);
  contract_.declare(store);
}

Tensor2D FeedForward::forward(const ParamStore& store, const Tensor2D& x, Cache& cache) const {
  cache.input = x;
  cache.pre_activation = expand_.forward(store, x);
  cache.activation = cache.pre_activation;
  for (double& v : cache.activation.data()) v = gelu(v);
  return contract_.forward(store, cache.activation);
}

Tensor2D FeedForward::backward(ParamStore& store, const Cache& cache, const Tensor2D& dy) const {
  Tensor2D dact = contract_.backward(store, cache.activation, dy);
  for (std::size_t i = 0; i < dact.size(); ++i) {
    dact.data()[i] *= gelu_derivative(cache.pre_activation.data()[i]);
  }
  return expand_.backward(store, cache.input, dact);
}

}  // namespace tfm
