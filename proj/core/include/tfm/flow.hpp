// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tfm/geometry.hpp"

namespace tfm {

enum class Category { kVehicle, kPedestrian, kCyclist, kOther };

std::string_view category_name(Category c);
/// Unknown strings map to kOther; `known` reports whether the string matched.
Category parse_category(std::string_view s, bool* known = nullptr);
inline constexpr std::size_t kCategoryCount = 4;

/// Axis-aligned rectangle in ego coordinates, closed on every side.
struct RangeSpec {
  double x_min = -50.0;
  double x_max = 50.0;
  double y_min = -25.0;
  double y_max = 25.0;

  /// Throws ConfigError unless x_min < x_max and y_min < y_max.
  void validate() const;
  bool contains(const PointBEV& p) const;
  /// Distance from the origin to the farthest corner.
  double corner_distance() const;
  /// Affine map of the rectangle onto [−1, 1]².
  PointBEV normalize(const PointBEV& p) const;

  bool operator==(const RangeSpec&) const = default;
};

/// One tracked-object record as it appears in the trajectory log.
struct ObjectObservation {
  std::int64_t frame = 0;
  std::string track_id;
  Category category = Category::kOther;
  PointBEV center;
  bool occluded = false;
};

struct PoseRecord {
  std::int64_t frame = 0;
  double t = 0.0;
  RigidPose pose;
};

struct FlowSlot {
  PointBEV center;  // current-frame ego coordinates
  bool occluded = false;

  bool operator==(const FlowSlot&) const = default;
};

struct FlowInstance {
  std::string track_id;
  Category category = Category::kOther;
  /// slots[j] holds the observation from frame current − 1 − j.
  std::vector<std::optional<FlowSlot>> slots;

  std::size_t observed_count() const;
  bool operator==(const FlowInstance&) const = default;
};

struct ParseStats {
  std::size_t trajectory_records = 0;
  std::size_t parsed = 0;
  std::size_t out_of_window = 0;
  std::size_t unknown_category = 0;
  std::size_t pose_records = 0;

  bool operator==(const ParseStats&) const = default;
};

/// Historical observations of every track, warped into the current frame.
/// Instances are ordered by track id.
struct FlowFrameSet {
  std::int64_t current_frame = 0;
  int window = 0;
  std::vector<FlowInstance> instances;
  ParseStats stats;

  bool operator==(const FlowFrameSet&) const = default;
};

/// Line-oriented readers; malformed lines raise InputError with the line
/// number. Blank lines are skipped.
std::vector<ObjectObservation> read_trajectory_log(std::istream& in, std::size_t* unknown_categories = nullptr);
std::map<std::int64_t, PoseRecord> read_pose_log(std::istream& in);

void write_observation(std::ostream& out, const ObjectObservation& obs);
void write_pose(std::ostream& out, const PoseRecord& pose);

/// Groups observations of frames current−window … current−1 by track id and
/// warps each center with compose_relative(pose[current], pose[frame]).
/// Observations are taken verbatim; there is no smoothing or interpolation.
FlowFrameSet parse_log(std::istream& trajectory_jsonl, std::istream& pose_jsonl,
                       std::int64_t current_frame, int window);

/// Same as parse_log over already-decoded records.
FlowFrameSet build_flow(const std::vector<ObjectObservation>& observations,
                        const std::map<std::int64_t, PoseRecord>& poses, std::int64_t current_frame,
                        int window);

/// Empties slots whose center lies outside `range` and drops instances left
/// with no observation. Occluded observations are kept.
FlowFrameSet clip_to_range(const FlowFrameSet& flow, const RangeSpec& range);

std::string flow_to_json(const FlowFrameSet& flow);
FlowFrameSet flow_from_json(std::string_view text);

}  // namespace tfm
