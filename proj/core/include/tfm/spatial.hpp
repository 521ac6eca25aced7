// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tfm/attention.hpp"
#include "tfm/layers.hpp"
#include "tfm/param_store.hpp"
#include "tfm/temporal.hpp"

namespace tfm {

enum class Pipe { kAll, kLtLl };
enum class QueryParadigm { kInstanceBased, kPointLevel };

std::string_view pipe_name(Pipe p);
Pipe parse_pipe(std::string_view s);
std::string_view paradigm_name(QueryParadigm q);
QueryParadigm parse_paradigm(std::string_view s);

struct FusionConfig {
  Pipe pipe = Pipe::kLtLl;
  int depth = 1;
  bool normalize_coords = true;
  std::size_t heads = 2;
  std::size_t dim = 16;

  /// depth ∈ {1, 2, 3}, dim divisible by heads.
  void validate() const;
  std::size_t ffn_hidden() const { return 2 * dim; }
  bool operator==(const FusionConfig&) const = default;
};

enum class MaskBlock { kLaneToLane, kLaneToFlow, kFlowToLane, kFlowToFlow };

/// (L+T)×(L+T) grid; lane tokens first, then flow tokens. Row = query.
struct SpatialMask {
  std::size_t lanes = 0;
  std::size_t flows = 0;
  BoolGrid bits;

  BoolGrid block(MaskBlock b) const;
};

/// M_{T→T}[a][b] = v[a] ∧ v[b];  M_{L→T}[l][t] = v[t];  M_{T→L}[t][l] = v[t];
/// M_{L→L} = upstream lane mask, or all-true.
SpatialMask build_spatial_mask(std::size_t lanes, const std::vector<bool>& flow_validity,
                               const std::optional<BoolGrid>& upstream_lane_mask = std::nullopt);

std::string spatial_mask_to_json(const SpatialMask& mask);
/// Accepts either a full grid {"lanes","flows","bits"} or the compact
/// {"flow_validity":[...], "lanes": L, "lane_mask": optional grid} form.
SpatialMask spatial_mask_from_json(std::string_view text, std::optional<std::size_t> lanes_hint = std::nullopt);

/// Outputs of the four staged modules. stages[0], stages[1] have T rows;
/// stages[2], stages[3] have L rows. A skipped module passes its input.
struct FusionOutput {
  std::array<FeatureMatrix, 4> stages;
};

/// Four masked-attention modules applied in order T→T, T→L, L→T, L→L, each a
/// stack of `depth` layers followed by its own identity-initialised output
/// projection. With Pipe::kLtLl the first two are skipped entirely. Every
/// layer has independent weights.
class FusionStack {
 public:
  struct ModuleCache {
    std::vector<MaskedAttentionLayer::Cache> layers;
    std::vector<Tensor2D> layer_inputs;
    Tensor2D stacked;
  };
  struct Cache {
    std::array<ModuleCache, 4> modules;
    std::array<bool, 4> ran{};
  };

  explicit FusionStack(FusionConfig config);

  void declare(ParamStore& store) const;
  const FusionConfig& config() const { return config_; }
  bool module_active(std::size_t index) const;

  FusionOutput forward(const ParamStore& store, const FeatureMatrix& lanes, const FeatureMatrix& flows,
                       const SpatialMask& mask, Cache* cache = nullptr) const;
  /// Gradient of stages[3]; returns {dLanes, dFlows}.
  std::pair<Tensor2D, Tensor2D> backward(ParamStore& store, const Cache& cache,
                                         const Tensor2D& dfused) const;

 private:
  struct Module {
    std::vector<MaskedAttentionLayer> layers;
    Linear projection;
  };

  FusionConfig config_;
  std::array<Module, 4> modules_;
};

FusionOutput fuse(const FusionStack& stack, const ParamStore& store, const FeatureMatrix& lanes,
                  const FeatureMatrix& flows, const SpatialMask& mask);

/// L′ = 𝒯(F4) + I(paradigm)·L with 𝒯 an affine map initialised to identity;
/// I = 0 for instance-based queries and 1 for point-level queries.
class FeatureComposer {
 public:
  explicit FeatureComposer(std::size_t dim);

  void declare(ParamStore& store) const;
  const Linear& transform() const { return transform_; }

  FeatureMatrix forward(const ParamStore& store, const FeatureMatrix& fused, const FeatureMatrix& lanes,
                        QueryParadigm paradigm) const;
  /// Returns {dFused, dLanes}.
  std::pair<Tensor2D, Tensor2D> backward(ParamStore& store, const FeatureMatrix& fused,
                                         QueryParadigm paradigm, const Tensor2D& dout) const;

 private:
  Linear transform_;
};

FeatureMatrix compose_features(const FeatureComposer& composer, const ParamStore& store,
                               const FeatureMatrix& fused, const FeatureMatrix& lanes,
                               QueryParadigm paradigm);

}  // namespace tfm
