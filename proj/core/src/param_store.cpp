// SPDX-License-Identifier: Apache-2.0
#include "tfm/param_store.hpp"

#include <cmath>

#include "tfm/error.hpp"
#include "tfm/rng.hpp"

namespace tfm {

Tensor2D initial_value(std::uint64_t seed, const std::string& name, std::size_t rows,
                       std::size_t cols, Init init) {
  Tensor2D t(rows, cols);
  switch (init) {
    case Init::kZeros:
      break;
    case Init::kOnes:
      t.fill(1.0);
      break;
    case Init::kIdentity:
      if (rows != cols) throw ConfigError("identity init needs a square shape: " + name);
      t = Tensor2D::identity(rows);
      break;
    case Init::kGlorotUniform: {
      const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
      const std::uint64_t key = splitmix64(seed ^ fnv1a(name));
      for (std::size_t i = 0; i < t.size(); ++i) {
        const double u = unit_double(splitmix64(key + i));
        t.data()[i] = (2.0 * u - 1.0) * limit;
      }
      break;
    }
  }
  return t;
}

void ParamStore::declare(const std::string& name, std::size_t rows, std::size_t cols, Init init) {
  auto it = params_.find(name);
  if (it != params_.end()) {
    if (it->second.value.rows() != rows || it->second.value.cols() != cols) {
      throw ConfigError("parameter " + name + " redeclared with a different shape");
    }
    return;
  }
  Param p{initial_value(seed_, name, rows, cols, init), Tensor2D(rows, cols)};
  params_.emplace(name, std::move(p));
}

namespace {
[[noreturn]] void missing(const std::string& name) {
  throw ConfigError("unknown parameter: " + name);
}
}  // namespace

const Tensor2D& ParamStore::value(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) missing(name);
  return it->second.value;
}

Tensor2D& ParamStore::mutable_value(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) missing(name);
  return it->second.value;
}

Tensor2D& ParamStore::grad(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) missing(name);
  return it->second.grad;
}

const Tensor2D& ParamStore::grad(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) missing(name);
  return it->second.grad;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p.grad.fill(0.0);
}

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (const auto& [_, p] : params_)
    for (double g : p.grad.data()) s += g * g;
  return std::sqrt(s);
}

void ParamStore::sgd_step(double learning_rate, double clip) {
  double scale = 1.0;
  if (clip > 0.0) {
    const double norm = grad_norm();
    if (norm > clip) scale = clip / norm;
  }
  for (auto& [_, p] : params_) {
    auto& v = p.value.data();
    const auto& g = p.grad.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= learning_rate * scale * g[i];
  }
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.value.size();
  return n;
}

}  // namespace tfm
