// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>

#include "tfm/config.hpp"
#include "tfm/flow.hpp"
#include "tfm/param_store.hpp"
#include "tfm/spatial.hpp"
#include "tfm/temporal.hpp"

namespace tfm {

/// All learned stages of the module, built from one config.
class TfmModel {
 public:
  explicit TfmModel(const PipelineConfig& cfg);

  /// Declares every parameter; values depend only on cfg.seed and names.
  ParamStore make_params() const;
  void declare(ParamStore& store) const;

  const PipelineConfig& config() const { return cfg_; }
  const TemporalEncoder& temporal() const { return temporal_; }
  const FusionStack& fusion() const { return fusion_; }
  const FeatureComposer& composer() const { return composer_; }

 private:
  PipelineConfig cfg_;
  TemporalEncoder temporal_;
  FusionStack fusion_;
  FeatureComposer composer_;
};

TemporalEncoderConfig temporal_config(const PipelineConfig& cfg);

/// Extraction stage: group, warp, and clip to the point-cloud range.
FlowFrameSet extract_flow(const PipelineConfig& cfg, const std::vector<ObjectObservation>& observations,
                          const std::map<std::int64_t, PoseRecord>& poses, std::int64_t current_frame);

struct PreparedFlow {
  Selection selection;
  std::size_t instances_in_region = 0;
  std::size_t candidates = 0;
};

/// Temporal preprocessing: clip to the perceptual region, validity filter,
/// sector weighting, top-N_t selection with padding.
PreparedFlow prepare_flow(const PipelineConfig& cfg, const FlowFrameSet& extracted);

/// Intermediate values of one forward pass, kept for backward.
struct ForwardTrace {
  TemporalOutput temporal;
  TemporalEncoder::Cache temporal_cache;
  SpatialMask mask;
  FusionStack::Cache fusion_cache;
  FusionOutput fused;
  FeatureMatrix lanes_prime;
};

/// Temporal encoding → spatial mask → fusion → composition. With
/// `drop_flow` the flow batch is treated as empty (no valid instance).
FeatureMatrix forward_model(const TfmModel& model, const ParamStore& store, const Selection& selection,
                            const FeatureMatrix& lanes, const std::optional<BoolGrid>& lane_mask,
                            bool drop_flow, ForwardTrace* trace = nullptr);

/// Accumulates parameter gradients for dL′.
void backward_model(const TfmModel& model, ParamStore& store, const ForwardTrace& trace,
                    const Selection& selection, const Tensor2D& dlanes_prime);

struct Diagnostics {
  std::int64_t current_frame = 0;
  std::size_t observations = 0;
  std::size_t instances_extracted = 0;
  std::size_t instances_in_region = 0;
  std::size_t candidates = 0;
  std::size_t real_instances = 0;
  double temporal_mask_fill = 0.0;
  double spatial_mask_fill = 0.0;
  std::array<double, 4> block_fill{};  // L→L, L→T, T→L, T→T
  std::map<std::string, double> timings_ms;
};

struct PipelineResult {
  FeatureMatrix lanes_prime;
  Diagnostics diagnostics;
};

/// End-to-end: extract → clip → filter → weight/select → encode → mask →
/// fuse → compose. An empty trajectory log is not an error. The current
/// frame defaults to the latest pose.
PipelineResult run_pipeline(const PipelineConfig& cfg, const ParamStore& store,
                            std::istream& trajectory_jsonl, std::istream& pose_jsonl,
                            const FeatureMatrix& lanes, std::optional<std::int64_t> current_frame = std::nullopt,
                            const std::optional<BoolGrid>& lane_mask = std::nullopt);

std::string diagnostics_to_json(const Diagnostics& d, bool include_timings);

}  // namespace tfm
