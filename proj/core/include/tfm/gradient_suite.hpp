// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tfm/grad_check.hpp"
#include "tfm/param_store.hpp"
#include "tfm/tensor.hpp"

namespace tfm {

/// A differentiable map from (inputs, parameters) to one output matrix.
/// `backward` must run its own forward, accumulate parameter gradients for
/// the upstream gradient `dy`, and return one gradient per input.
struct DifferentiableCase {
  std::string name;
  ParamStore store;
  std::vector<Tensor2D> inputs;
  std::function<Tensor2D(const ParamStore&, const std::vector<Tensor2D>&)> forward;
  std::function<std::vector<Tensor2D>(ParamStore&, const std::vector<Tensor2D>&, const Tensor2D&)> backward;
};

struct CaseReport {
  std::string name;
  std::size_t coordinates = 0;
  GradCheckResult result;
};

/// Checks the scalar s = Σ out ⊙ R, with R a fixed random matrix, against
/// central differences over every input and parameter coordinate.
CaseReport check_case(DifferentiableCase& c, std::uint64_t seed, double h);

/// Standard cases at toy sizes (L=4, T=3, dim=8, heads=2): every layer, the
/// temporal encoder, the depth-1 fusion stack with all four modules, and the
/// feature composer in both paradigms.
std::vector<DifferentiableCase> standard_cases(std::uint64_t seed);

std::vector<CaseReport> run_gradient_suite(std::uint64_t seed, double h = 1e-3);

}  // namespace tfm
