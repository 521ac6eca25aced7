// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tfm/config.hpp"
#include "tfm/pipeline.hpp"
#include "tfm/scene.hpp"

namespace tfm {

/// Files written for one synthetic scene directory.
inline constexpr const char* kTrajectoryFile = "trajectories.jsonl";
inline constexpr const char* kPoseFile = "poses.jsonl";
inline constexpr const char* kGroundTruthFile = "ground_truth.json";
inline constexpr const char* kOccupancyFile = "occupancy.pgm";
inline constexpr const char* kLaneFeatureFile = "lane_features.bin";
inline constexpr const char* kSceneSpecFile = "scene.json";

/// Generates one scene and writes it, plus toy lane features, into `dir`.
void write_scene(const std::filesystem::path& dir, const SceneSpec& spec, const TrainingConfig& training,
                 std::size_t dim, const LaneTiling& tiling = {});

/// Writes `count` random scenes as dir/scene_0000 … Returns the scene
/// directories in order.
std::vector<std::filesystem::path> build_dataset(const std::filesystem::path& dir, std::size_t count,
                                                 std::uint64_t seed, bool occlusion_heavy,
                                                 const TrainingConfig& training, std::size_t dim);

/// One scene ready for training: selected flow batch plus lane tokens.
struct SceneSample {
  std::string name;
  Selection selection;
  LaneFeatureSample lanes;
  std::size_t occluded_cells = 0;
};

/// Loads every scene_* directory under `dir`, sorted by name, and runs the
/// extraction and selection stages on each.
std::vector<SceneSample> load_dataset(const PipelineConfig& cfg, const std::filesystem::path& dir);

/// Linear occupancy head on top of L′ plus the module it reads from.
class ProbeModel {
 public:
  ProbeModel(const PipelineConfig& cfg, std::size_t cells);

  /// Fresh parameters for one run; initial values depend on `seed` only.
  ParamStore make_params(std::uint64_t seed) const;

  /// Mean binary cross-entropy over the occluded tiles' cells. Returns the
  /// summed loss and the number of terms so callers can pool scenes.
  struct LossSum {
    double total = 0.0;
    std::size_t terms = 0;
    double mean() const { return terms == 0 ? 0.0 : total / static_cast<double>(terms); }
  };
  LossSum loss(const ParamStore& store, const SceneSample& scene, bool drop_flow) const;

  /// Forward and backward for one scene; gradients are scaled by
  /// `1 / normalizer` and accumulated.
  LossSum accumulate(ParamStore& store, const SceneSample& scene, bool drop_flow, double normalizer) const;

  const TfmModel& module() const { return model_; }

 private:
  TfmModel model_;
  Linear head_;
};

/// Mean loss over `scenes`, pooled over all occluded cells.
double mean_loss(const ProbeModel& probe, const ParamStore& store, const std::vector<SceneSample>& scenes,
                 bool drop_flow);

/// One SGD step over `batch`. Returns the pooled loss before the update.
double train_step(const ProbeModel& probe, ParamStore& store, const std::vector<const SceneSample*>& batch,
                  bool drop_flow, double learning_rate, double grad_clip);

struct RunCurve {
  std::vector<double> train_loss;  // per epoch, before that epoch's updates
  std::vector<double> eval_loss;   // per epoch, after that epoch's updates
};

struct SeedResult {
  std::uint64_t seed = 0;
  double with_flow = 0.0;             // trained and evaluated with flow
  double without_flow = 0.0;          // trained and evaluated without flow
  double train_with_infer_without = 0.0;
  RunCurve with_flow_curve;
  RunCurve without_flow_curve;
};

struct MaskStats {
  double mean_real_instances = 0.0;
  double mean_temporal_fill = 0.0;
  double mean_spatial_fill = 0.0;
};

struct ExperimentReport {
  std::size_t train_scenes = 0;
  std::size_t eval_scenes = 0;
  bool infer_without_flow = false;
  std::vector<SeedResult> seeds;
  double median_with_flow = 0.0;
  double median_without_flow = 0.0;
  double median_train_with_infer_without = 0.0;
  MaskStats masks;
  double seconds = 0.0;
};

double median(std::vector<double> values);

/// Trains the probe with and without flow for every seed and evaluates on the
/// held-out tail of the dataset. Non-finite losses abort with a NumericError
/// naming the seed.
ExperimentReport run_experiment(const PipelineConfig& cfg, const std::filesystem::path& dataset_dir,
                                const std::vector<std::uint64_t>& seeds, bool infer_without_flow);

ExperimentReport run_experiment(const PipelineConfig& cfg, const std::vector<SceneSample>& scenes,
                                const std::vector<std::uint64_t>& seeds, bool infer_without_flow);

std::string report_to_json(const ExperimentReport& report, bool include_timing);

}  // namespace tfm
