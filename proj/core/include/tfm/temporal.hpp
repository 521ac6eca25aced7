// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "tfm/attention.hpp"
#include "tfm/flow.hpp"
#include "tfm/layers.hpp"
#include "tfm/param_store.hpp"
#include "tfm/tensor.hpp"

namespace tfm {

/// Dense feature block, one row per token (TF_feat, L_feat).
using FeatureMatrix = Tensor2D;

/// A flow instance that passed the validity threshold, cut to the last f_t
/// frames. centers[k] / valid[k] refer to frame current − 1 − k.
struct Candidate {
  std::string track_id;
  Category category = Category::kOther;
  std::vector<PointBEV> centers;
  std::vector<bool> valid;

  std::size_t valid_count() const;
};

/// Keeps instances with at least `tole_pts` valid frames among the last
/// `f_t`. A frame is valid when it is present (and therefore in range after
/// clipping) and not occluded.
std::vector<Candidate> validity_filter(const FlowFrameSet& flow, int tole_pts, int f_t);

/// Ego-centric weighting: w = a(θ)·d(r).
///   a = 1 inside the frontal sector |θ| ≤ half_angle, else
///       max(angular_floor, cos(|θ| − half_angle));
///   d = 1 for r ≤ near_range, then linear down to far_scale at far_range,
///       constant beyond.
struct SectorWeighting {
  double half_angle = 0.5235987755982988;  // 30°
  double angular_floor = 0.25;
  double near_range = 30.0;
  double far_range = 55.90169943749474;  // corner of the default range
  double far_scale = 0.5;

  static SectorWeighting for_range(const RangeSpec& range);
};

double ego_sector_weight(const PointBEV& center, const SectorWeighting& weighting = {});

/// Maximum per-frame weight over the candidate's valid frames.
double instance_weight(const Candidate& candidate, const SectorWeighting& weighting);

struct InstanceSlot {
  std::string track_id;
  Category category = Category::kOther;
  std::vector<PointBEV> centers;  // zero for padding and missing frames
  bool instance_valid = false;
  double weight = 0.0;
};

/// Always exactly T_max slots, real ones first.
struct RefinedFlowBatch {
  std::size_t frames = 0;
  std::vector<InstanceSlot> slots;

  std::size_t real_count() const;
};

/// T_max × f_t grid; true means the frame participates.
struct TemporalMask {
  BoolGrid bits;
};

struct Selection {
  RefinedFlowBatch batch;
  TemporalMask mask;
};

/// Top-T_max candidates by weight (ties by track id ascending), then padding.
Selection select_instances(const std::vector<Candidate>& candidates, std::span<const double> weights,
                           std::size_t t_max, std::size_t frames);

struct TemporalEncoderConfig {
  std::size_t dim = 16;
  std::size_t heads = 2;
  std::size_t ffn_hidden = 32;
  std::size_t frames = 20;
  bool normalize_coords = true;
  RangeSpec range;
};

struct TemporalOutput {
  FeatureMatrix features;      // T_max × dim, zero rows for padding
  std::vector<bool> validity;  // per slot, consumed by the spatial mask
};

/// Per instance: embed each frame as coord·W + b + category row + offset row,
/// run one masked self-attention layer over the frames, then take the masked
/// mean over valid frames.
class TemporalEncoder {
 public:
  struct InstanceCache {
    std::size_t slot = 0;
    Tensor2D coords;
    MaskedAttentionLayer::Cache layer;
    std::vector<std::size_t> valid_frames;
  };
  struct Cache {
    std::vector<InstanceCache> instances;
    std::size_t rows = 0;
  };

  explicit TemporalEncoder(TemporalEncoderConfig config);

  void declare(ParamStore& store) const;
  const TemporalEncoderConfig& config() const { return config_; }

  /// Coordinate channels fed to the embedding for one slot (f_t × 2).
  Tensor2D coordinate_inputs(const InstanceSlot& slot) const;

  TemporalOutput forward(const ParamStore& store, const RefinedFlowBatch& batch,
                         const TemporalMask& mask, Cache* cache = nullptr) const;
  void backward(ParamStore& store, const Cache& cache, const RefinedFlowBatch& batch,
                const Tensor2D& dfeatures) const;

 private:
  TemporalEncoderConfig config_;
  Linear coord_embed_;
  std::string category_table_;
  std::string offset_table_;
  MaskedAttentionLayer layer_;
};

TemporalOutput encode_temporal(const TemporalEncoder& encoder, const ParamStore& store,
                               const RefinedFlowBatch& batch, const TemporalMask& mask);

}  // namespace tfm
