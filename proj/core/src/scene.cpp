// SPDX-License-Identifier: Apache-2.0
#include "tfm/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "tfm/error.hpp"
#include "tfm/rng.hpp"

namespace tfm {

using nlohmann::json;

Polyline::Polyline(std::vector<PointBEV> points) : points_(std::move(points)) {
  if (points_.size() < 2) throw ConfigError("polyline needs at least two points");
  cumulative_.reserve(points_.size());
  cumulative_.push_back(0.0);
  for (std::size_t i = 1; i < points_.size(); ++i) {
    cumulative_.push_back(cumulative_.back() + distance(points_[i - 1], points_[i]));
  }
}

namespace {
std::size_t segment_at(const std::vector<double>& cumulative, double s) {
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), s);
  std::size_t i = it == cumulative.begin() ? 0 : static_cast<std::size_t>(it - cumulative.begin()) - 1;
  return std::min(i, cumulative.size() - 2);
}

double segment_distance(const PointBEV& a, const PointBEV& b, const PointBEV& p, double* t_out = nullptr) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  if (t_out) *t_out = t;
  return std::hypot(a.x + t * dx - p.x, a.y + t * dy - p.y);
}
}  // namespace

PointBEV Polyline::point_at(double s) const {
  const std::size_t i = segment_at(cumulative_, s);
  const double seg = cumulative_[i + 1] - cumulative_[i];
  const double t = seg > 0.0 ? (s - cumulative_[i]) / seg : 0.0;
  return {points_[i].x + t * (points_[i + 1].x - points_[i].x),
          points_[i].y + t * (points_[i + 1].y - points_[i].y)};
}

double Polyline::heading_at(double s) const {
  const std::size_t i = segment_at(cumulative_, s);
  return std::atan2(points_[i + 1].y - points_[i].y, points_[i + 1].x - points_[i].x);
}

double Polyline::distance_to(const PointBEV& p) const {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
    best = std::min(best, segment_distance(points_[i], points_[i + 1], p));
  }
  return best;
}

double Polyline::project(const PointBEV& p) const {
  double best = std::numeric_limits<double>::infinity();
  double best_s = 0.0;
  for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
    double t = 0.0;
    const double d = segment_distance(points_[i], points_[i + 1], p, &t);
    if (d < best) {
      best = d;
      best_s = cumulative_[i] + t * (cumulative_[i + 1] - cumulative_[i]);
    }
  }
  return best_s;
}

void SceneSpec::validate(int min_frames) const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(occlusion_rate) || !prob(frame_drop_rate)) {
    throw ConfigError("scene: occlusion_rate and frame_drop_rate must lie in [0, 1]");
  }
  if (frames < min_frames) {
    throw ConfigError("scene: frames must be >= " + std::to_string(min_frames));
  }
  if (ego_path.size() < 2) throw ConfigError("scene: ego_path needs at least two points");
  if (!(cell > 0.0)) throw ConfigError("scene: cell must be positive");
  if (!(dt > 0.0)) throw ConfigError("scene: dt must be positive");
  if (!(min_spacing > 0.0)) throw ConfigError("scene: min_spacing must be positive");
  if (vehicle_speed_min < 0.0 || vehicle_speed_max < vehicle_speed_min) {
    throw ConfigError("scene: invalid vehicle speed interval");
  }
  for (const auto& lane : lanes) {
    if (lane.centerline.size() < 2) throw ConfigError("scene: lane needs at least two points");
    if (!(lane.width > 0.0)) throw ConfigError("scene: lane width must be positive");
    if (!(lateral_noise >= 0.0 && lateral_noise < 0.5 * lane.width)) {
      throw ConfigError("scene: lateral noise must stay below half the lane width");
    }
  }
  range.validate();
}

namespace {

std::vector<PointBEV> sample_curve(double x0, double x1, double step, double offset, double slope,
                                   double curvature) {
  std::vector<PointBEV> pts;
  for (double x = x0; x <= x1 + 1e-9; x += step) {
    pts.push_back({x, offset + slope * x + 0.5 * curvature * x * x});
  }
  return pts;
}

}  // namespace

SceneSpec random_scene_spec(std::uint64_t seed, bool occlusion_heavy) {
  Rng rng(splitmix64(seed ^ 0x5ce9e5ce9eULL));
  SceneSpec spec;
  spec.seed = seed;
  const double slope = rng.uniform(-0.08, 0.08);
  const double curvature = rng.uniform(-0.0025, 0.0025);
  const auto main_lanes = static_cast<int>(2 + rng.below(3));
  const auto ego_lane = static_cast<int>(rng.below(static_cast<std::uint64_t>(main_lanes)));
  const double width = 3.5;
  for (int i = 0; i < main_lanes; ++i) {
    LaneSpec lane;
    lane.width = width;
    lane.centerline = sample_curve(-150.0, 250.0, 2.5, (i - ego_lane) * width, slope, curvature);
    lane.reversed = i != ego_lane && rng.bernoulli(0.35);
    spec.lanes.push_back(std::move(lane));
  }
  spec.ego_path = spec.lanes[static_cast<std::size_t>(ego_lane)].centerline;

  if (rng.bernoulli(0.5)) {
    const double xc = rng.uniform(10.0, 80.0);
    const double lean = rng.uniform(-0.2, 0.2);
    for (int i = 0; i < 2; ++i) {
      LaneSpec lane;
      lane.width = width;
      const double off = (i == 0 ? -0.5 : 0.5) * width;
      for (double y = -150.0; y <= 150.0 + 1e-9; y += 2.5) {
        lane.centerline.push_back({xc + off + lean * y, y});
      }
      lane.reversed = i == 1;
      spec.lanes.push_back(std::move(lane));
    }
  }
  spec.n_vehicles = 10 + rng.below(11);
  spec.n_pedestrians = 2 + rng.below(5);
  spec.ego_speed = rng.uniform(5.0, 10.0);
  if (occlusion_heavy) {
    spec.occlusion_rate = 0.35;
    spec.frame_drop_rate = 0.15;
  } else {
    spec.occlusion_rate = 0.05;
    spec.frame_drop_rate = 0.02;
  }
  return spec;
}

namespace {

json points_to_json(const std::vector<PointBEV>& pts) {
  json a = json::array();
  for (const auto& p : pts) a.push_back({p.x, p.y});
  return a;
}

std::vector<PointBEV> points_from_json(const json& j) {
  std::vector<PointBEV> pts;
  for (const auto& p : j) pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return pts;
}

json range_to_json(const RangeSpec& r) { return {r.x_min, r.x_max, r.y_min, r.y_max}; }

RangeSpec range_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw InputError("range must be [x_min, x_max, y_min, y_max]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

}  // namespace

std::string scene_spec_to_json(const SceneSpec& spec) {
  json j;
  j["seed"] = spec.seed;
  json lanes = json::array();
  for (const auto& l : spec.lanes) {
    lanes.push_back({{"centerline", points_to_json(l.centerline)}, {"width", l.width}, {"reversed", l.reversed}});
  }
  j["lanes"] = lanes;
  j["n_vehicles"] = spec.n_vehicles;
  j["n_pedestrians"] = spec.n_pedestrians;
  j["occlusion_rate"] = spec.occlusion_rate;
  j["frame_drop_rate"] = spec.frame_drop_rate;
  j["frames"] = spec.frames;
  j["ego_path"] = points_to_json(spec.ego_path);
  j["ego_speed"] = spec.ego_speed;
  j["dt"] = spec.dt;
  j["vehicle_speed_min"] = spec.vehicle_speed_min;
  j["vehicle_speed_max"] = spec.vehicle_speed_max;
  j["lateral_noise"] = spec.lateral_noise;
  j["min_spacing"] = spec.min_spacing;
  j["spawn_radius"] = spec.spawn_radius;
  j["range"] = range_to_json(spec.range);
  j["cell"] = spec.cell;
  return j.dump(1);
}

SceneSpec scene_spec_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    SceneSpec spec;
    spec.seed = j.value("seed", spec.seed);
    if (j.contains("lanes")) {
      for (const auto& jl : j.at("lanes")) {
        LaneSpec lane;
        lane.centerline = points_from_json(jl.at("centerline"));
        lane.width = jl.value("width", lane.width);
        lane.reversed = jl.value("reversed", false);
        spec.lanes.push_back(std::move(lane));
      }
    }
    spec.n_vehicles = j.value("n_vehicles", spec.n_vehicles);
    spec.n_pedestrians = j.value("n_pedestrians", spec.n_pedestrians);
    spec.occlusion_rate = j.value("occlusion_rate", spec.occlusion_rate);
    spec.frame_drop_rate = j.value("frame_drop_rate", spec.frame_drop_rate);
    spec.frames = j.value("frames", spec.frames);
    if (j.contains("ego_path")) spec.ego_path = points_from_json(j.at("ego_path"));
    spec.ego_speed = j.value("ego_speed", spec.ego_speed);
    spec.dt = j.value("dt", spec.dt);
    spec.vehicle_speed_min = j.value("vehicle_speed_min", spec.vehicle_speed_min);
    spec.vehicle_speed_max = j.value("vehicle_speed_max", spec.vehicle_speed_max);
    spec.lateral_noise = j.value("lateral_noise", spec.lateral_noise);
    spec.min_spacing = j.value("min_spacing", spec.min_spacing);
    spec.spawn_radius = j.value("spawn_radius", spec.spawn_radius);
    if (j.contains("range")) spec.range = range_from_json(j.at("range"));
    spec.cell = j.value("cell", spec.cell);
    return spec;
  } catch (const json::exception& e) {
    throw InputError(std::string("scene spec JSON: ") + e.what());
  }
}

OccupancyGrid::OccupancyGrid(const RangeSpec& range, double cell) : range_(range), cell_(cell) {
  range.validate();
  if (!(cell > 0.0)) throw ConfigError("occupancy grid: cell must be positive");
  nx_ = static_cast<std::size_t>(std::ceil((range.x_max - range.x_min) / cell - 1e-9));
  ny_ = static_cast<std::size_t>(std::ceil((range.y_max - range.y_min) / cell - 1e-9));
  cells_.assign(nx_ * ny_, 0);
}

namespace {
bool cell_index(const RangeSpec& r, double cell, std::size_t nx, std::size_t ny, const PointBEV& p,
                std::size_t& ix, std::size_t& iy) {
  if (!r.contains(p)) return false;
  ix = std::min(nx - 1, static_cast<std::size_t>((p.x - r.x_min) / cell));
  iy = std::min(ny - 1, static_cast<std::size_t>((p.y - r.y_min) / cell));
  return true;
}
}  // namespace

bool OccupancyGrid::mark(const PointBEV& p) {
  std::size_t ix = 0, iy = 0;
  if (!cell_index(range_, cell_, nx_, ny_, p, ix, iy)) return false;
  set(ix, iy, true);
  return true;
}

bool OccupancyGrid::contains_marked(const PointBEV& p) const {
  std::size_t ix = 0, iy = 0;
  return cell_index(range_, cell_, nx_, ny_, p, ix, iy) && at(ix, iy);
}

PointBEV OccupancyGrid::cell_center(std::size_t ix, std::size_t iy) const {
  return {range_.x_min + (static_cast<double>(ix) + 0.5) * cell_,
          range_.y_min + (static_cast<double>(iy) + 0.5) * cell_};
}

std::size_t OccupancyGrid::count() const {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

namespace {

/// Counter-keyed uniform draw for per-(track, frame) events.
double event_draw(std::uint64_t seed, const std::string& track, std::int64_t frame, std::uint64_t channel) {
  std::uint64_t key = splitmix64(seed ^ 0xa0761d6478bd642fULL);
  key = splitmix64(key ^ fnv1a(track));
  key = splitmix64(key ^ static_cast<std::uint64_t>(frame));
  key = splitmix64(key ^ channel);
  return unit_double(key);
}

struct Track {
  std::string id;
  Category category = Category::kVehicle;
  std::vector<std::optional<PointBEV>> world;  // per frame
};

/// Lane polylines restricted to segments near a world-frame box, for fast
/// corridor tests.
struct CorridorIndex {
  struct Segment {
    PointBEV a;
    PointBEV b;
    double half_width;
  };
  std::vector<Segment> segments;

  bool inside(const PointBEV& p, double margin = 0.0) const {
    for (const auto& s : segments) {
      if (segment_distance(s.a, s.b, p) <= s.half_width + margin) return true;
    }
    return false;
  }
};

CorridorIndex build_corridors(const std::vector<LaneSpec>& lanes, const RigidPose& frame_pose,
                              const RangeSpec& range, double pad) {
  CorridorIndex idx;
  const RigidTransform to_local = frame_pose.inverse();
  for (const auto& lane : lanes) {
    for (std::size_t i = 0; i + 1 < lane.centerline.size(); ++i) {
      const PointBEV a = to_local.apply(lane.centerline[i]);
      const PointBEV b = to_local.apply(lane.centerline[i + 1]);
      const double reach = lane.width + pad;
      const bool near = std::max(a.x, b.x) >= range.x_min - reach && std::min(a.x, b.x) <= range.x_max + reach &&
                        std::max(a.y, b.y) >= range.y_min - reach && std::min(a.y, b.y) <= range.y_max + reach;
      if (near) idx.segments.push_back({lane.centerline[i], lane.centerline[i + 1], 0.5 * lane.width});
    }
  }
  return idx;
}

}  // namespace

SceneOutput generate(const SceneSpec& spec) {
  spec.validate();
  Rng rng(splitmix64(spec.seed ^ 0x9e3779b97f4a7c15ULL));
  const auto frames = static_cast<std::size_t>(spec.frames);
  const std::int64_t current = spec.frames - 1;

  const Polyline ego_path(spec.ego_path);
  const double s0 = ego_path.project({0.0, 0.0});
  std::vector<RigidPose> poses(frames);
  for (std::size_t k = 0; k < frames; ++k) {
    const double s = std::min(ego_path.length(), s0 + spec.ego_speed * spec.dt * static_cast<double>(k));
    const PointBEV p = ego_path.point_at(s);
    poses[k] = RigidPose(p.x, p.y, ego_path.heading_at(s));
  }
  const RigidPose& final_pose = poses.back();
  const PointBEV final_ego{final_pose.x(), final_pose.y()};

  std::vector<Polyline> lanes;
  for (const auto& l : spec.lanes) lanes.emplace_back(l.centerline);

  // Vehicle slots: per lane, evenly spaced arc positions (at the final frame)
  // inside the spawn window, shifted by a random per-lane offset.
  struct Slot {
    std::size_t lane;
    double s;
  };
  std::vector<Slot> slots;
  for (std::size_t li = 0; li < lanes.size(); ++li) {
    const double center = lanes[li].project(final_ego);
    const double lo = std::max(0.0, center - spec.spawn_radius);
    const double hi = std::min(lanes[li].length(), center + spec.spawn_radius);
    if (hi <= lo) continue;
    const auto capacity = static_cast<std::size_t>(std::floor((hi - lo) / spec.min_spacing)) + 1;
    const double slack = (hi - lo) - static_cast<double>(capacity - 1) * spec.min_spacing;
    const double shift = rng.uniform(0.0, std::max(0.0, slack));
    for (std::size_t j = 0; j < capacity; ++j) {
      slots.push_back({li, lo + shift + static_cast<double>(j) * spec.min_spacing});
    }
  }
  if (spec.n_vehicles > slots.size()) {
    throw ConfigError("scene infeasible: " + std::to_string(spec.n_vehicles) +
                      " vehicles exceed lane capacity " + std::to_string(slots.size()) +
                      " at min spacing " + std::to_string(spec.min_spacing) + " m");
  }
  // Partial Fisher-Yates to choose distinct slots.
  for (std::size_t i = 0; i < spec.n_vehicles; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(slots.size() - i));
    std::swap(slots[i], slots[j]);
  }

  std::vector<double> lane_speed(lanes.size());
  for (auto& v : lane_speed) v = rng.uniform(spec.vehicle_speed_min, spec.vehicle_speed_max);

  std::vector<Track> tracks;
  char id[32];
  for (std::size_t i = 0; i < spec.n_vehicles; ++i) {
    const Slot& slot = slots[i];
    const Polyline& lane = lanes[slot.lane];
    const double dir = spec.lanes[slot.lane].reversed ? -1.0 : 1.0;
    const double bias = rng.uniform(-0.5, 0.5) * spec.lateral_noise;
    Track t;
    std::snprintf(id, sizeof(id), "veh_%03zu", i);
    t.id = id;
    t.category = Category::kVehicle;
    t.world.resize(frames);
    for (std::size_t k = 0; k < frames; ++k) {
      const double jitter = rng.uniform(-0.5, 0.5) * spec.lateral_noise;
      const double s = slot.s - dir * lane_speed[slot.lane] * spec.dt * static_cast<double>(frames - 1 - k);
      if (s < 0.0 || s > lane.length()) continue;
      const PointBEV c = lane.point_at(s);
      const double h = lane.heading_at(s);
      const double off = bias + jitter;
      t.world[k] = PointBEV{c.x - std::sin(h) * off, c.y + std::cos(h) * off};
    }
    tracks.push_back(std::move(t));
  }

  // Pedestrians: keep 1.5 m clear of any lane corridor.
  const double ped_margin = 1.5;
  const CorridorIndex ped_corridors = build_corridors(spec.lanes, final_pose, spec.range, 60.0);
  for (std::size_t i = 0; i < spec.n_pedestrians; ++i) {
    PointBEV start{};
    bool placed = false;
    for (int attempt = 0; attempt < 2000 && !placed; ++attempt) {
      const PointBEV local{rng.uniform(spec.range.x_min, spec.range.x_max),
                           rng.uniform(spec.range.y_min, spec.range.y_max)};
      start = final_pose.apply(local);
      placed = !ped_corridors.inside(start, ped_margin);
    }
    if (!placed) throw ConfigError("scene infeasible: no room for pedestrians off the lanes");
    Track t;
    std::snprintf(id, sizeof(id), "ped_%03zu", i);
    t.id = id;
    t.category = Category::kPedestrian;
    t.world.resize(frames);
    // Walk backwards in time from the final position so the final frame is
    // guaranteed off-lane; earlier positions keep the same constraint.
    PointBEV pos = start;
    double heading = rng.uniform(-std::numbers::pi, std::numbers::pi);
    for (std::size_t step = 0; step < frames; ++step) {
      const std::size_t k = frames - 1 - step;
      t.world[k] = pos;
      heading += rng.uniform(-0.4, 0.4);
      const PointBEV next{pos.x + std::cos(heading) * 1.2 * spec.dt, pos.y + std::sin(heading) * 1.2 * spec.dt};
      if (!ped_corridors.inside(next, ped_margin)) pos = next;
    }
    tracks.push_back(std::move(t));
  }

  SceneOutput out;
  for (std::size_t k = 0; k < frames; ++k) {
    out.poses.push_back({static_cast<std::int64_t>(k), spec.dt * static_cast<double>(k), poses[k]});
  }
  for (std::size_t k = 0; k < frames; ++k) {
    const RigidTransform to_ego = poses[k].inverse();
    for (const auto& t : tracks) {
      if (!t.world[k]) continue;
      const auto frame = static_cast<std::int64_t>(k);
      out.truth.objects.push_back({frame, t.id, t.category, *t.world[k]});
      if (event_draw(spec.seed, t.id, frame, 1) < spec.frame_drop_rate) continue;
      ObjectObservation obs;
      obs.frame = frame;
      obs.track_id = t.id;
      obs.category = t.category;
      obs.center = to_ego.apply(*t.world[k]);
      obs.occluded = event_draw(spec.seed, t.id, frame, 2) < spec.occlusion_rate;
      out.trajectory.push_back(std::move(obs));
    }
  }

  out.truth.current_frame = current;
  out.truth.navigable = OccupancyGrid(spec.range, spec.cell);
  const CorridorIndex corridors = build_corridors(spec.lanes, final_pose, spec.range, 1.0);
  OccupancyGrid& grid = out.truth.navigable;
  for (std::size_t iy = 0; iy < grid.ny(); ++iy) {
    for (std::size_t ix = 0; ix < grid.nx(); ++ix) {
      grid.set(ix, iy, corridors.inside(final_pose.apply(grid.cell_center(ix, iy))));
    }
  }
  return out;
}

std::string trajectory_to_jsonl(const std::vector<ObjectObservation>& records) {
  std::ostringstream os;
  for (const auto& r : records) write_observation(os, r);
  return os.str();
}

std::string poses_to_jsonl(const std::vector<PoseRecord>& poses) {
  std::ostringstream os;
  for (const auto& p : poses) write_pose(os, p);
  return os.str();
}

std::string ground_truth_to_json(const GroundTruth& truth) {
  const OccupancyGrid& g = truth.navigable;
  json j;
  j["current_frame"] = truth.current_frame;
  j["range"] = range_to_json(g.range());
  j["cell"] = g.cell();
  j["nx"] = g.nx();
  j["ny"] = g.ny();
  std::string bits;
  bits.reserve(g.cells().size());
  for (auto c : g.cells()) bits.push_back(c ? '1' : '0');
  j["navigable"] = bits;
  json objects = json::array();
  for (const auto& o : truth.objects) {
    objects.push_back({{"frame", o.frame},
                       {"id", o.track_id},
                       {"cat", std::string(category_name(o.category))},
                       {"x", o.world.x},
                       {"y", o.world.y}});
  }
  j["objects"] = objects;
  return j.dump();
}

std::string occupancy_to_pgm(const OccupancyGrid& grid) {
  std::ostringstream os;
  os << "P2\n" << grid.nx() << ' ' << grid.ny() << "\n255\n";
  for (std::size_t row = 0; row < grid.ny(); ++row) {
    const std::size_t iy = grid.ny() - 1 - row;
    for (std::size_t ix = 0; ix < grid.nx(); ++ix) {
      os << (grid.at(ix, iy) ? 255 : 0) << (ix + 1 == grid.nx() ? '\n' : ' ');
    }
  }
  return os.str();
}

FlowOccupancy flow_occupancy_oracle(const FlowFrameSet& flow, const RangeSpec& range, double cell) {
  FlowOccupancy occ{OccupancyGrid(range, cell), OccupancyGrid(range, cell)};
  for (const auto& inst : flow.instances) {
    OccupancyGrid* target = nullptr;
    if (inst.category == Category::kVehicle) target = &occ.vehicle;
    if (inst.category == Category::kPedestrian) target = &occ.pedestrian;
    if (!target) continue;
    for (const auto& slot : inst.slots) {
      if (slot) target->mark(slot->center);
    }
  }
  return occ;
}

double occupancy_precision(const OccupancyGrid& marked, const OccupancyGrid& truth) {
  if (marked.nx() != truth.nx() || marked.ny() != truth.ny()) {
    throw ConfigError("occupancy_precision: grids differ in shape");
  }
  std::size_t hit = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < marked.cells().size(); ++i) {
    if (!marked.cells()[i]) continue;
    ++total;
    hit += truth.cells()[i] ? 1 : 0;
  }
  return total == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(total);
}

LaneFeatureSample synthesize_lane_features(const GroundTruth& truth, const LaneTiling& tiling,
                                           std::size_t dim, double tile_occlusion_rate,
                                           double evidence_noise, std::uint64_t seed) {
  const std::size_t cells = tiling.cells_per_tile();
  if (dim < 3 + cells) {
    throw ConfigError("lane features need dim >= " + std::to_string(3 + cells));
  }
  const OccupancyGrid& grid = truth.navigable;
  const RangeSpec& r = grid.range();
  const std::size_t tokens = tiling.tokens();
  LaneFeatureSample sample{Tensor2D(tokens, dim), Tensor2D(tokens, cells), std::vector<bool>(tokens)};

  const std::size_t gx = tiling.tiles_x * tiling.cells_x;
  const std::size_t gy = tiling.tiles_y * tiling.cells_y;
  std::vector<std::size_t> hits(gx * gy, 0), totals(gx * gy, 0);
  for (std::size_t iy = 0; iy < grid.ny(); ++iy) {
    for (std::size_t ix = 0; ix < grid.nx(); ++ix) {
      const PointBEV c = grid.cell_center(ix, iy);
      const auto cx = std::min(gx - 1, static_cast<std::size_t>((c.x - r.x_min) / (r.x_max - r.x_min) * static_cast<double>(gx)));
      const auto cy = std::min(gy - 1, static_cast<std::size_t>((c.y - r.y_min) / (r.y_max - r.y_min) * static_cast<double>(gy)));
      ++totals[cy * gx + cx];
      hits[cy * gx + cx] += grid.at(ix, iy) ? 1 : 0;
    }
  }

  Rng rng(splitmix64(seed ^ 0x1a7e5eedULL));
  for (std::size_t ty = 0; ty < tiling.tiles_y; ++ty) {
    for (std::size_t tx = 0; tx < tiling.tiles_x; ++tx) {
      const std::size_t token = ty * tiling.tiles_x + tx;
      const bool occluded = rng.bernoulli(tile_occlusion_rate);
      sample.occluded[token] = occluded;
      auto row = sample.features.row(token);
      row[0] = 2.0 * (static_cast<double>(tx) + 0.5) / static_cast<double>(tiling.tiles_x) - 1.0;
      row[1] = 2.0 * (static_cast<double>(ty) + 0.5) / static_cast<double>(tiling.tiles_y) - 1.0;
      row[2] = occluded ? 1.0 : 0.0;
      for (std::size_t cy = 0; cy < tiling.cells_y; ++cy) {
        for (std::size_t cx = 0; cx < tiling.cells_x; ++cx) {
          const std::size_t k = cy * tiling.cells_x + cx;
          const std::size_t g = (ty * tiling.cells_y + cy) * gx + (tx * tiling.cells_x + cx);
          const double frac = totals[g] ? static_cast<double>(hits[g]) / static_cast<double>(totals[g]) : 0.0;
          const double target = frac >= tiling.occupied_fraction ? 1.0 : 0.0;
          sample.targets(token, k) = target;
          const double noise = rng.normal() * evidence_noise;
          row[3 + k] = occluded ? 0.0 : (2.0 * target - 1.0) + noise;
        }
      }
    }
  }
  return sample;
}

}  // namespace tfm
