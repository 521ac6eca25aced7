// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <map>
#include <set>

#include "tfm/error.hpp"
#include "tfm/flow.hpp"
#include "tfm/scene.hpp"

namespace tfm {
namespace {

std::map<std::int64_t, PoseRecord> pose_map(const SceneOutput& out) {
  std::map<std::int64_t, PoseRecord> m;
  for (const auto& p : out.poses) m.emplace(p.frame, p);
  return m;
}

SceneSpec clean_spec(std::uint64_t seed) {
  SceneSpec spec = random_scene_spec(seed, false);
  spec.occlusion_rate = 0.0;
  spec.frame_drop_rate = 0.0;
  return spec;
}

TEST(Polyline, ArcLengthAndProjection) {
  const Polyline line({{0, 0}, {3, 0}, {3, 4}});
  EXPECT_DOUBLE_EQ(line.length(), 7.0);
  EXPECT_EQ(line.point_at(5.0), (PointBEV{3, 2}));
  EXPECT_DOUBLE_EQ(line.distance_to({1, 2}), 2.0);
  EXPECT_DOUBLE_EQ(line.project({5, 1}), 4.0);
}

TEST(Generate, NoEventsMeansEveryStateIsObserved) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const SceneOutput out = generate(clean_spec(seed));
    EXPECT_EQ(out.trajectory.size(), out.truth.objects.size());
    for (const auto& obs : out.trajectory) EXPECT_FALSE(obs.occluded);
  }
}

TEST(Generate, NoAgentsGivesEmptyLogAndAllPoses) {
  SceneSpec spec = clean_spec(4);
  spec.n_vehicles = 0;
  spec.n_pedestrians = 0;
  const SceneOutput out = generate(spec);
  EXPECT_TRUE(out.trajectory.empty());
  EXPECT_EQ(out.poses.size(), static_cast<std::size_t>(spec.frames));
  EXPECT_EQ(trajectory_to_jsonl(out.trajectory), "");
}

TEST(Generate, IsDeterministic) {
  const SceneSpec spec = random_scene_spec(5, true);
  const SceneOutput a = generate(spec), b = generate(spec);
  EXPECT_EQ(trajectory_to_jsonl(a.trajectory), trajectory_to_jsonl(b.trajectory));
  EXPECT_EQ(poses_to_jsonl(a.poses), poses_to_jsonl(b.poses));
  EXPECT_EQ(ground_truth_to_json(a.truth), ground_truth_to_json(b.truth));
}

TEST(Generate, VehiclesStayInsideLaneCorridors) {
  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    const SceneSpec spec = random_scene_spec(seed, seed % 2 == 0);
    std::vector<Polyline> lanes;
    for (const auto& l : spec.lanes) lanes.emplace_back(l.centerline);
    const SceneOutput out = generate(spec);
    for (const auto& o : out.truth.objects) {
      if (o.category != Category::kVehicle) continue;
      double best = 1e9;
      std::size_t which = 0;
      for (std::size_t i = 0; i < lanes.size(); ++i) {
        const double d = lanes[i].distance_to(o.world);
        if (d < best) best = d, which = i;
      }
      EXPECT_LT(best, 0.5 * spec.lanes[which].width) << o.track_id << " frame " << o.frame;
    }
  }
}

TEST(Generate, VehiclesInRangeSitOnNavigableCells) {
  for (std::uint64_t seed = 20; seed < 25; ++seed) {
    const SceneOutput out = generate(random_scene_spec(seed, false));
    const RigidTransform to_now = out.poses.back().pose.inverse();
    const OccupancyGrid& grid = out.truth.navigable;
    for (const auto& o : out.truth.objects) {
      if (o.category != Category::kVehicle) continue;
      OccupancyGrid single(grid.range(), grid.cell());
      if (!single.mark(to_now.apply(o.world))) continue;
      EXPECT_EQ(occupancy_precision(single, grid), 1.0) << o.track_id << " frame " << o.frame;
    }
  }
}

TEST(Generate, PedestriansStartOffTheLanes) {
  const SceneSpec spec = random_scene_spec(30, false);
  const SceneOutput out = generate(spec);
  std::vector<Polyline> lanes;
  for (const auto& l : spec.lanes) lanes.emplace_back(l.centerline);
  for (const auto& o : out.truth.objects) {
    if (o.category != Category::kPedestrian) continue;
    for (std::size_t i = 0; i < lanes.size(); ++i) {
      EXPECT_GT(lanes[i].distance_to(o.world), 0.5 * spec.lanes[i].width);
    }
  }
}

TEST(Generate, MoreOcclusionNeverAddsValidObservations) {
  for (std::uint64_t seed = 40; seed < 46; ++seed) {
    SceneSpec spec = random_scene_spec(seed, false);
    std::size_t previous = SIZE_MAX;
    for (double rate : {0.0, 0.1, 0.3, 0.6, 1.0}) {
      spec.occlusion_rate = rate;
      std::size_t visible = 0;
      for (const auto& obs : generate(spec).trajectory) visible += obs.occluded ? 0 : 1;
      EXPECT_LE(visible, previous) << "seed " << seed << " rate " << rate;
      previous = visible;
    }
    EXPECT_EQ(previous, 0u);
  }
}

TEST(Generate, RejectsOvercrowdedLanes) {
  SceneSpec spec = clean_spec(50);
  spec.n_vehicles = 10000;
  EXPECT_THROW(generate(spec), ConfigError);
}

TEST(SceneSpec, ValidatesProbabilities) {
  SceneSpec spec = clean_spec(51);
  spec.occlusion_rate = 1.5;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec.occlusion_rate = 0.2;
  spec.frames = 1;
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(SceneSpec, JsonRoundTrip) {
  const SceneSpec spec = random_scene_spec(52, true);
  EXPECT_EQ(scene_spec_to_json(scene_spec_from_json(scene_spec_to_json(spec))), scene_spec_to_json(spec));
}

FlowFrameSet single_track(std::vector<PointBEV> centers, Category cat) {
  FlowFrameSet flow;
  flow.window = static_cast<int>(centers.size());
  FlowInstance inst;
  inst.track_id = "x";
  inst.category = cat;
  for (const auto& c : centers) inst.slots.push_back(FlowSlot{c, false});
  flow.instances.push_back(inst);
  return flow;
}

TEST(FlowOccupancy, EmptyFlowMarksNothing) {
  const FlowOccupancy occ = flow_occupancy_oracle(FlowFrameSet{}, RangeSpec{}, 0.5);
  EXPECT_EQ(occ.vehicle.count(), 0u);
  EXPECT_EQ(occ.pedestrian.count(), 0u);
}

TEST(FlowOccupancy, MarksExactlyTheTraversedCells) {
  const RangeSpec range{-2, 2, -1, 1};
  const FlowFrameSet flow = single_track({{-1.75, 0.25}, {-0.75, 0.25}, {0.25, 0.25}, {1.25, 0.25}}, Category::kVehicle);
  const FlowOccupancy occ = flow_occupancy_oracle(flow, range, 0.5);
  EXPECT_EQ(occ.vehicle.count(), 4u);
  EXPECT_EQ(occ.pedestrian.count(), 0u);
  const std::set<std::size_t> expected_x = {0, 2, 4, 6};
  for (std::size_t ix = 0; ix < occ.vehicle.nx(); ++ix) {
    for (std::size_t iy = 0; iy < occ.vehicle.ny(); ++iy) {
      EXPECT_EQ(occ.vehicle.at(ix, iy), iy == 2 && expected_x.count(ix) == 1) << ix << "," << iy;
    }
  }
}

TEST(FlowOccupancy, PedestriansUseTheirOwnChannel) {
  const FlowOccupancy occ = flow_occupancy_oracle(single_track({{0.1, 0.1}}, Category::kPedestrian), RangeSpec{}, 0.5);
  EXPECT_EQ(occ.vehicle.count(), 0u);
  EXPECT_EQ(occ.pedestrian.count(), 1u);
}

TEST(FlowOccupancy, PrecisionCountsMarkedCellsOnly) {
  const RangeSpec range{0, 2, 0, 1};
  OccupancyGrid marked(range, 0.5), truth(range, 0.5);
  marked.set(0, 0, true);
  marked.set(1, 0, true);
  truth.set(0, 0, true);
  truth.set(3, 1, true);
  EXPECT_DOUBLE_EQ(occupancy_precision(marked, truth), 0.5);
  EXPECT_DOUBLE_EQ(occupancy_precision(OccupancyGrid(range, 0.5), truth), 1.0);
}

TEST(FlowOccupancy, DefaultSceneIsPrecise) {
  const SceneSpec spec = random_scene_spec(60, false);
  const SceneOutput out = generate(spec);
  const FlowFrameSet flow = clip_to_range(build_flow(out.trajectory, pose_map(out), out.truth.current_frame, spec.frames - 1),
                                          spec.range);
  const FlowOccupancy occ = flow_occupancy_oracle(flow, spec.range, spec.cell);
  EXPECT_GT(occ.vehicle.count(), 0u);
  EXPECT_GE(occupancy_precision(occ.vehicle, out.truth.navigable), 0.95);
}

TEST(OccupancyGrid, PgmHeaderAndOrientation) {
  OccupancyGrid g(RangeSpec{0, 1.5, 0, 1}, 0.5);
  g.set(0, 1, true);  // top-left once flipped
  EXPECT_EQ(occupancy_to_pgm(g), "P2\n3 2\n255\n255 0 0\n0 0 0\n");
}

TEST(LaneFeatures, OccludedTilesCarryNoEvidence) {
  const SceneOutput out = generate(clean_spec(70));
  const LaneTiling tiling;
  const LaneFeatureSample s = synthesize_lane_features(out.truth, tiling, 16, 0.5, 0.3, 7);
  ASSERT_EQ(s.features.rows(), tiling.tokens());
  for (std::size_t t = 0; t < tiling.tokens(); ++t) {
    EXPECT_EQ(s.features(t, 2), s.occluded[t] ? 1.0 : 0.0);
    for (std::size_t k = 0; k < tiling.cells_per_tile(); ++k) {
      if (s.occluded[t]) {
        EXPECT_EQ(s.features(t, 3 + k), 0.0);
      }
      const double target = s.targets(t, k);
      EXPECT_TRUE(target == 0.0 || target == 1.0);
    }
  }
  EXPECT_THROW(synthesize_lane_features(out.truth, tiling, 8, 0.5, 0.3, 7), ConfigError);
}

}  // namespace
}  // namespace tfm
