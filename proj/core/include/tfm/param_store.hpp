// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tfm/tensor.hpp"

namespace tfm {

enum class Init { kGlorotUniform, kZeros, kOnes, kIdentity };

struct Param {
  Tensor2D value;
  Tensor2D grad;
};

/// Named parameters with same-shape gradient slots. Initial values depend only
/// on (seed, name, shape, init kind), never on declaration order.
///
/// Not synchronized: callers must not mutate a store while a forward or
/// backward pass reading it is in flight.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Declares `name` if absent. Redeclaring with a different shape throws.
  void declare(const std::string& name, std::size_t rows, std::size_t cols, Init init);

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const Tensor2D& value(const std::string& name) const;
  Tensor2D& mutable_value(const std::string& name);
  Tensor2D& grad(const std::string& name);
  const Tensor2D& grad(const std::string& name) const;

  void zero_grad();
  double grad_norm() const;
  /// Plain SGD with global-norm clipping (clip <= 0 disables clipping).
  void sgd_step(double learning_rate, double clip);

  std::vector<std::string> names() const;
  std::size_t parameter_count() const;

  const std::map<std::string, Param>& params() const { return params_; }
  std::map<std::string, Param>& params() { return params_; }

 private:
  std::uint64_t seed_;
  std::map<std::string, Param> params_;
};

/// Deterministic initial value for a named parameter.
Tensor2D initial_value(std::uint64_t seed, const std::string& name, std::size_t rows,
                       std::size_t cols, Init init);

}  // namespace tfm
