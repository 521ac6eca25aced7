// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tfm/flow.hpp"
#include "tfm/geometry.hpp"
#include "tfm/tensor.hpp"

namespace tfm {

/// Polyline with cumulative arc length.
class Polyline {
 public:
  Polyline() = default;
  explicit Polyline(std::vector<PointBEV> points);

  const std::vector<PointBEV>& points() const { return points_; }
  double length() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }
  PointBEV point_at(double s) const;
  /// Tangent heading at arc length s.
  double heading_at(double s) const;
  double distance_to(const PointBEV& p) const;
  /// Arc length of the closest point.
  double project(const PointBEV& p) const;

 private:
  std::vector<PointBEV> points_;
  std::vector<double> cumulative_;
};

struct LaneSpec {
  std::vector<PointBEV> centerline;  // world frame, meters
  double width = 3.5;
  bool reversed = false;  // traffic drives from the last point to the first
};

/// Parameters of one synthetic scene. World frame = ego frame at frame 0.
struct SceneSpec {
  std::uint64_t seed = 0;
  std::vector<LaneSpec> lanes;
  std::size_t n_vehicles = 12;
  std::size_t n_pedestrians = 4;
  double occlusion_rate = 0.0;
  double frame_drop_rate = 0.0;
  int frames = 25;
  std::vector<PointBEV> ego_path;
  double ego_speed = 8.0;  // m/s along ego_path
  double dt = 0.2;         // seconds per frame
  double vehicle_speed_min = 5.0;
  double vehicle_speed_max = 12.0;
  double lateral_noise = 0.3;  // meters, bounded well below half a lane
  double min_spacing = 8.0;
  /// Vehicles are spawned within this arc-length radius of the ego's final
  /// position projected onto each lane.
  double spawn_radius = 80.0;
  RangeSpec range;
  double cell = 0.5;

  /// Throws ConfigError on out-of-range probabilities, frames < 2, empty
  /// ego path, or non-positive cell size.
  void validate(int min_frames = 2) const;
};

/// Random road layout: a curved main road with 2–4 lanes (some opposing),
/// optionally a crossing road. Occlusion-heavy scenes use high occlusion and
/// frame-drop rates.
SceneSpec random_scene_spec(std::uint64_t seed, bool occlusion_heavy);

std::string scene_spec_to_json(const SceneSpec& spec);
SceneSpec scene_spec_from_json(std::string_view text);

/// Row-major boolean raster over a range; cell (ix, iy) covers
/// [x_min + ix·cell, x_min + (ix+1)·cell) × [y_min + iy·cell, …).
class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  OccupancyGrid(const RangeSpec& range, double cell);

  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  double cell() const { return cell_; }
  const RangeSpec& range() const { return range_; }

  bool at(std::size_t ix, std::size_t iy) const { return cells_[iy * nx_ + ix] != 0; }
  void set(std::size_t ix, std::size_t iy, bool v) { cells_[iy * nx_ + ix] = v ? 1 : 0; }
  /// Marks the cell containing p; returns false when p is outside the range.
  bool mark(const PointBEV& p);
  bool contains_marked(const PointBEV& p) const;
  PointBEV cell_center(std::size_t ix, std::size_t iy) const;
  std::size_t count() const;

  const std::vector<std::uint8_t>& cells() const { return cells_; }
  bool operator==(const OccupancyGrid&) const = default;

 private:
  RangeSpec range_;
  double cell_ = 0.5;
  std::size_t nx_ = 0;
  std::size_t ny_ = 0;
  std::vector<std::uint8_t> cells_;
};

struct ObjectState {
  std::int64_t frame = 0;
  std::string track_id;
  Category category = Category::kOther;
  PointBEV world;
};

struct GroundTruth {
  std::int64_t current_frame = 0;
  OccupancyGrid navigable;  // in the current ego frame
  std::vector<ObjectState> objects;
};

struct SceneOutput {
  std::vector<ObjectObservation> trajectory;
  std::vector<PoseRecord> poses;
  GroundTruth truth;
};

/// Deterministic for a given spec. Vehicles follow lane centerlines with
/// bounded lateral noise; pedestrians stay off lane corridors. Occlusion and
/// frame drops are i.i.d. per (track, frame) and drawn from a counter keyed
/// on (seed, track, frame), so raising a rate can only add events.
SceneOutput generate(const SceneSpec& spec);

std::string trajectory_to_jsonl(const std::vector<ObjectObservation>& records);
std::string poses_to_jsonl(const std::vector<PoseRecord>& poses);
std::string ground_truth_to_json(const GroundTruth& truth);
/// Portable greymap: navigable cells white, others black; +x to the right,
/// +y up.
std::string occupancy_to_pgm(const OccupancyGrid& grid);

struct FlowOccupancy {
  OccupancyGrid vehicle;
  OccupancyGrid pedestrian;
};

/// Marks every cell touched by a warped observation: vehicles into one
/// channel, pedestrians into a separate non-navigable channel.
FlowOccupancy flow_occupancy_oracle(const FlowFrameSet& flow, const RangeSpec& range, double cell);

/// |marked ∧ truth| / |marked|; 1 when nothing is marked.
double occupancy_precision(const OccupancyGrid& marked, const OccupancyGrid& truth);

/// Toy stand-in for an upstream lane encoder. The range is cut into
/// tiles_x × tiles_y tiles (one lane token each); every tile is split into
/// cells_x × cells_y coarse cells whose lane occupancy is the prediction
/// target.
struct LaneTiling {
  std::size_t tiles_x = 4;
  std::size_t tiles_y = 2;
  std::size_t cells_x = 2;
  std::size_t cells_y = 4;
  double occupied_fraction = 0.2;  // coarse cell is lane when ≥ this share is navigable

  std::size_t tokens() const { return tiles_x * tiles_y; }
  std::size_t cells_per_tile() const { return cells_x * cells_y; }
};

struct LaneFeatureSample {
  Tensor2D features;           // tokens × dim
  Tensor2D targets;            // tokens × cells_per_tile, 0/1
  std::vector<bool> occluded;  // per token
};

/// Feature row layout: [tile x, tile y (normalized), occlusion flag,
/// per-cell visual evidence…, zeros]. Occluded tiles carry no evidence.
LaneFeatureSample synthesize_lane_features(const GroundTruth& truth, const LaneTiling& tiling,
                                           std::size_t dim, double tile_occlusion_rate,
                                           double evidence_noise, std::uint64_t seed);

}  // namespace tfm
