// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "tfm/flow.hpp"
#include "tfm/spatial.hpp"

namespace tfm {

/// Knobs of the desk-scale probe experiment.
struct TrainingConfig {
  double learning_rate = 0.05;
  int epochs = 40;
  double grad_clip = 5.0;
  std::size_t batch_size = 4;
  double eval_fraction = 0.25;
  double tile_occlusion_rate = 0.5;
  double evidence_noise = 0.3;

  bool operator==(const TrainingConfig&) const = default;
};

struct PipelineConfig {
  int window = 20;   // historical frames n
  int f_t = 20;      // frames per instance
  int tole_pts = 5;  // minimum valid frames
  std::size_t n_t = 30;  // instance cap (T_max)
  RangeSpec point_cloud_range;  // R_p, applied at extraction
  RangeSpec perceptual_range;   // R_t, applied by the temporal stage
  FusionConfig fusion;
  QueryParadigm paradigm = QueryParadigm::kPointLevel;
  std::uint64_t seed = 0;
  TrainingConfig training;

  /// tole_pts ≤ f_t ≤ window, valid ranges, valid fusion settings. Throws
  /// ConfigError.
  void validate() const;
  bool operator==(const PipelineConfig&) const = default;
};

/// Canonical form: every key present, keys sorted, fixed indentation.
std::string config_to_json(const PipelineConfig& cfg);
/// Missing keys take defaults; unknown keys are InputErrors.
PipelineConfig config_from_json(std::string_view text);

}  // namespace tfm
