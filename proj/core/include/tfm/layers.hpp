// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "tfm/param_store.hpp"
#include "tfm/tensor.hpp"

namespace tfm {

// Every layer exposes an explicit forward and a matching backward. Backward
// returns the input gradient and accumulates parameter gradients into the
// store's grad slots.

/// y = x·W + b, W is in×out, b is 1×out. Without a bias the bias name is
/// empty and y = x·W.
class Linear {
 public:
  Linear() = default;
  Linear(std::string prefix, std::size_t in, std::size_t out, Init weight_init = Init::kGlorotUniform,
         bool with_bias = true);

  void declare(ParamStore& store) const;
  Tensor2D forward(const ParamStore& store, const Tensor2D& x) const;
  Tensor2D backward(ParamStore& store, const Tensor2D& x, const Tensor2D& dy) const;

  const std::string& weight_name() const { return weight_; }
  const std::string& bias_name() const { return bias_; }
  std::size_t in() const { return in_; }
  std::size_t out() const { return out_; }

 private:
  std::string weight_;
  std::string bias_;
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  Init weight_init_ = Init::kGlorotUniform;
};

/// Row-wise layer normalization with learned gain and shift.
class LayerNorm {
 public:
  struct Cache {
    Tensor2D normalized;
    std::vector<double> inv_std;
  };

  static constexpr double kEpsilon = 1e-5;

  LayerNorm() = default;
  LayerNorm(std::string prefix, std::size_t dim);

  void declare(ParamStore& store) const;
  Tensor2D forward(const ParamStore& store, const Tensor2D& x, Cache& cache) const;
  Tensor2D backward(ParamStore& store, const Cache& cache, const Tensor2D& dy) const;

 private:
  std::string gain_;
  std::string shift_;
  std::size_t dim_ = 0;
};

/// tanh approximation of GELU; smooth everywhere, which keeps finite
/// differences well behaved.
double gelu(double x);
double gelu_derivative(double x);

/// Linear → GELU → Linear.
class FeedForward {
 public:
  struct Cache {
    Tensor2D input;
    Tensor2D pre_activation;
    Tensor2D activation;
  };

  FeedForward() = default;
  FeedForward(const std::string& prefix, std::size_t dim, std::size_t hidden);

  void declare(ParamStore& store) const;
  Tensor2D forward(const ParamStore& store, const Tensor2D& x, Cache& cache) const;
  Tensor2D backward(ParamStore& store, const Cache& cache, const Tensor2D& dy) const;

 private:
  Linear expand_;
  Linear contract_;
};

}  // namespace tfm
