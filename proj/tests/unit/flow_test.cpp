// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>
#include <string>

#include "tfm/error.hpp"
#include "tfm/flow.hpp"
#include "tfm/rng.hpp"

namespace tfm {
namespace {

std::string pose_line(int frame, double x, double y, double yaw) {
  std::ostringstream ss;
  write_pose(ss, {frame, 0.1 * frame, RigidPose(x, y, yaw)});
  return ss.str();
}

std::string obs_line(int frame, const std::string& id, const std::string& cat, double x, double y,
                     bool occluded = false) {
  return "{\"frame\":" + std::to_string(frame) + ",\"id\":\"" + id + "\",\"cat\":\"" + cat +
         "\",\"x\":" + std::to_string(x) + ",\"y\":" + std::to_string(y) +
         ",\"occluded\":" + (occluded ? "true" : "false") + "}\n";
}

/// Ego moving along +x at 1 m per frame, frames 0..last.
std::string straight_poses(int last) {
  std::string s;
  for (int f = 0; f <= last; ++f) s += pose_line(f, f, 0.0, 0.0);
  return s;
}

FlowFrameSet parse(const std::string& traj, const std::string& poses, int frame, int window) {
  std::istringstream t(traj), p(poses);
  return parse_log(t, p, frame, window);
}

TEST(ParseLog, AdvancingEgoWarpsHistoryBehindIt) {
  // The object sits at each past frame's ego origin; after warping it trails
  // the current ego by one metre per frame.
  std::string traj;
  for (int f = 0; f < 3; ++f) traj += obs_line(f, "a", "vehicle", 0.0, 0.0);
  const FlowFrameSet flow = parse(traj, straight_poses(3), 3, 3);
  ASSERT_EQ(flow.instances.size(), 1u);
  const auto& slots = flow.instances[0].slots;
  ASSERT_EQ(slots.size(), 3u);
  for (int k = 0; k < 3; ++k) {
    ASSERT_TRUE(slots[k].has_value());
    EXPECT_EQ(slots[k]->center.x, -(k + 1.0));
    EXPECT_EQ(slots[k]->center.y, 0.0);
  }
}

TEST(ParseLog, EmptyTrajectoryLogGivesNoInstances) {
  const FlowFrameSet flow = parse("", straight_poses(5), 5, 5);
  EXPECT_TRUE(flow.instances.empty());
  EXPECT_EQ(flow.stats.trajectory_records, 0u);
  EXPECT_EQ(flow.window, 5);
}

TEST(ParseLog, GroupsByTrackId) {
  std::string traj;
  for (int f = 5; f < 10; ++f) traj += obs_line(f, "busy", "pedestrian", 1.0, 2.0);
  traj += obs_line(5, "once", "cyclist", 3.0, 0.0);
  const FlowFrameSet flow = parse(traj, straight_poses(10), 10, 5);
  ASSERT_EQ(flow.instances.size(), 2u);
  EXPECT_EQ(flow.instances[0].track_id, "busy");
  EXPECT_EQ(flow.instances[0].observed_count(), 5u);
  EXPECT_EQ(flow.instances[0].category, Category::kPedestrian);
  EXPECT_EQ(flow.instances[1].track_id, "once");
  EXPECT_EQ(flow.instances[1].observed_count(), 1u);
  EXPECT_TRUE(flow.instances[1].slots[4].has_value());
}

TEST(ParseLog, OccludedObservationsAreKept) {
  const FlowFrameSet flow = parse(obs_line(2, "a", "vehicle", 0, 0, true), straight_poses(3), 3, 2);
  ASSERT_EQ(flow.instances.size(), 1u);
  EXPECT_TRUE(flow.instances[0].slots[0]->occluded);
}

TEST(ParseLog, UnknownCategoryMapsToOtherAndIsCounted) {
  const FlowFrameSet flow = parse(obs_line(2, "a", "tram", 0, 0), straight_poses(3), 3, 2);
  ASSERT_EQ(flow.instances.size(), 1u);
  EXPECT_EQ(flow.instances[0].category, Category::kOther);
  EXPECT_EQ(flow.stats.unknown_category, 1u);
}

TEST(ParseLog, CountsRecordsOutsideWindow) {
  std::string traj;
  for (int f = 0; f <= 6; ++f) traj += obs_line(f, "a", "vehicle", 0, 0);
  const FlowFrameSet flow = parse(traj, straight_poses(6), 6, 3);
  // Frames 3, 4, 5 are inside; 0, 1, 2 are too old and 6 is the current frame.
  EXPECT_EQ(flow.stats.trajectory_records, 7u);
  EXPECT_EQ(flow.stats.parsed, 3u);
  EXPECT_EQ(flow.stats.out_of_window, 4u);
  EXPECT_EQ(flow.stats.parsed + flow.stats.out_of_window, flow.stats.trajectory_records);
}

TEST(ParseLog, MissingPoseNamesTheFrame) {
  std::string poses = pose_line(0, 0, 0, 0) + pose_line(2, 2, 0, 0) + pose_line(3, 3, 0, 0);
  try {
    parse("", poses, 3, 3);
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("frame 1"), std::string::npos) << e.what();
  }
}

TEST(ParseLog, MalformedRecordReportsLineNumber) {
  const std::string traj = obs_line(1, "a", "vehicle", 0, 0) + "\n{\"frame\": 2, \"id\": \n";
  try {
    parse(traj, straight_poses(3), 3, 2);
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(ParseLog, MissingFieldIsMalformed) {
  EXPECT_THROW(parse("{\"frame\":1,\"id\":\"a\",\"cat\":\"vehicle\",\"x\":0}\n", straight_poses(2), 2, 1),
               InputError);
}

TEST(ParseLog, DuplicateObservationIsRejected) {
  const std::string traj = obs_line(1, "a", "vehicle", 0, 0) + obs_line(1, "a", "vehicle", 1, 0);
  EXPECT_THROW(parse(traj, straight_poses(2), 2, 1), InputError);
}

TEST(ParseLog, DuplicatePoseIsRejected) {
  EXPECT_THROW(parse("", straight_poses(2) + pose_line(1, 0, 0, 0), 2, 1), InputError);
}

TEST(ParseLog, ZeroWindowIsAConfigError) {
  EXPECT_THROW(parse("", straight_poses(2), 2, 0), ConfigError);
}

TEST(ParseLog, RecordOrderDoesNotMatter) {
  Rng rng(11);
  std::vector<std::string> lines;
  std::string poses;
  for (int f = 0; f <= 12; ++f) poses += pose_line(f, rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-3, 3));
  for (int f = 0; f < 12; ++f) {
    for (int id = 0; id < 4; ++id) {
      if (rng.bernoulli(0.7)) {
        lines.push_back(obs_line(f, "t" + std::to_string(id), "vehicle", rng.uniform(-30, 30),
                                 rng.uniform(-20, 20), rng.bernoulli(0.2)));
      }
    }
  }
  std::string forward;
  for (const auto& l : lines) forward += l;
  std::string backward;
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) backward += *it;
  EXPECT_EQ(parse(forward, poses, 12, 8), parse(backward, poses, 12, 8));
}

FlowFrameSet single_point_flow(double x, double y) {
  FlowFrameSet flow;
  flow.current_frame = 1;
  flow.window = 1;
  FlowInstance inst;
  inst.track_id = "p";
  inst.slots = {FlowSlot{{x, y}, false}};
  flow.instances.push_back(inst);
  return flow;
}

TEST(ClipToRange, DropsPointPastTheEdge) {
  EXPECT_TRUE(clip_to_range(single_point_flow(51, 0), RangeSpec{}).instances.empty());
}

TEST(ClipToRange, BoundaryIsInclusive) {
  EXPECT_EQ(clip_to_range(single_point_flow(50, 0), RangeSpec{}).instances.size(), 1u);
  EXPECT_EQ(clip_to_range(single_point_flow(-50, -25), RangeSpec{}).instances.size(), 1u);
}

TEST(ClipToRange, EmptiesOnlyOutsideSlots) {
  FlowFrameSet flow = single_point_flow(0, 0);
  flow.window = 2;
  flow.instances[0].slots.push_back(FlowSlot{{0, 30}, true});
  const FlowFrameSet clipped = clip_to_range(flow, RangeSpec{});
  ASSERT_EQ(clipped.instances.size(), 1u);
  EXPECT_TRUE(clipped.instances[0].slots[0].has_value());
  EXPECT_FALSE(clipped.instances[0].slots[1].has_value());
}

TEST(ClipToRange, IsIdempotent) {
  Rng rng(3);
  FlowFrameSet flow;
  flow.current_frame = 20;
  flow.window = 10;
  for (int id = 0; id < 40; ++id) {
    FlowInstance inst;
    inst.track_id = "t" + std::to_string(id);
    inst.slots.resize(10);
    for (auto& s : inst.slots) {
      if (rng.bernoulli(0.6)) s = FlowSlot{{rng.uniform(-80, 80), rng.uniform(-40, 40)}, rng.bernoulli(0.3)};
    }
    flow.instances.push_back(inst);
  }
  const RangeSpec range{-30, 45, -10, 20};
  const FlowFrameSet once = clip_to_range(flow, range);
  EXPECT_EQ(clip_to_range(once, range), once);
  EXPECT_LT(once.instances.size(), flow.instances.size());
}

TEST(RangeSpec, RejectsEmptyRectangle) {
  EXPECT_THROW((RangeSpec{1, 1, -1, 1}).validate(), ConfigError);
  EXPECT_THROW((RangeSpec{-1, 1, 2, 1}).validate(), ConfigError);
  EXPECT_NO_THROW(RangeSpec{}.validate());
}

TEST(FlowJson, RoundTrips) {
  std::string traj;
  for (int f = 0; f < 4; ++f) traj += obs_line(f, "a", "cyclist", 0.5 * f, -1.25, f == 2);
  traj += obs_line(1, "b", "other", 7, 3);
  const FlowFrameSet flow = parse(traj, straight_poses(4), 4, 4);
  EXPECT_EQ(flow_from_json(flow_to_json(flow)), flow);
}

TEST(FlowJson, RejectsSlotCountMismatch) {
  FlowFrameSet flow = single_point_flow(0, 0);
  flow.window = 3;
  EXPECT_THROW(flow_from_json(flow_to_json(flow)), InputError);
}

}  // namespace
}  // namespace tfm
