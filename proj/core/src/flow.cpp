// SPDX-License-Identifier: Apache-2.0
#include "tfm/flow.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "tfm/error.hpp"

namespace tfm {

using nlohmann::json;

std::string_view category_name(Category c) {
  switch (c) {
    case Category::kVehicle: return "vehicle";
    case Category::kPedestrian: return "pedestrian";
    case Category::kCyclist: return "cyclist";
    case Category::kOther: return "other";
  }
  return "other";
}

Category parse_category(std::string_view s, bool* known) {
  if (known) *known = true;
  if (s == "vehicle") return Category::kVehicle;
  if (s == "pedestrian") return Category::kPedestrian;
  if (s == "cyclist") return Category::kCyclist;
  if (s == "other") return Category::kOther;
  if (known) *known = false;
  return Category::kOther;
}

void RangeSpec::validate() const {
  if (!(x_min < x_max) || !(y_min < y_max)) {
    throw ConfigError("invalid range: need x_min < x_max and y_min < y_max");
  }
}

bool RangeSpec::contains(const PointBEV& p) const {
  return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max;
}

double RangeSpec::corner_distance() const {
  const double dx = std::max(std::abs(x_min), std::abs(x_max));
  const double dy = std::max(std::abs(y_min), std::abs(y_max));
  return std::hypot(dx, dy);
}

PointBEV RangeSpec::normalize(const PointBEV& p) const {
  return {2.0 * (p.x - x_min) / (x_max - x_min) - 1.0, 2.0 * (p.y - y_min) / (y_max - y_min) - 1.0};
}

std::size_t FlowInstance::observed_count() const {
  std::size_t n = 0;
  for (const auto& s : slots) n += s.has_value() ? 1 : 0;
  return n;
}

namespace {

template <typename F>
void for_each_record(std::istream& in, const char* log_name, F&& handle) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
      handle(record);
    } catch (const json::exception& e) {
      throw InputError(std::string(log_name) + " line " + std::to_string(line_no) +
                       ": malformed record (" + e.what() + ")");
    } catch (const InputError& e) {
      throw InputError(std::string(log_name) + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

double finite_number(const json& record, const char* key) {
  const double v = record.at(key).get<double>();
  if (!std::isfinite(v)) throw InputError(std::string("non-finite ") + key);
  return v;
}

}  // namespace

std::vector<ObjectObservation> read_trajectory_log(std::istream& in, std::size_t* unknown_categories) {
  std::vector<ObjectObservation> out;
  std::size_t unknown = 0;
  for_each_record(in, "trajectory log", [&](const json& r) {
    if (!r.is_object()) throw InputError("record is not an object");
    ObjectObservation obs;
    obs.frame = r.at("frame").get<std::int64_t>();
    obs.track_id = r.at("id").get<std::string>();
    bool known = true;
    obs.category = parse_category(r.at("cat").get<std::string>(), &known);
    if (!known) ++unknown;
    obs.center = {finite_number(r, "x"), finite_number(r, "y")};
    obs.occluded = r.at("occluded").get<bool>();
    out.push_back(std::move(obs));
  });
  if (unknown_categories) *unknown_categories = unknown;
  return out;
}

std::map<std::int64_t, PoseRecord> read_pose_log(std::istream& in) {
  std::map<std::int64_t, PoseRecord> out;
  for_each_record(in, "pose log", [&](const json& r) {
    if (!r.is_object()) throw InputError("record is not an object");
    PoseRecord p;
    p.frame = r.at("frame").get<std::int64_t>();
    p.t = finite_number(r, "t");
    p.pose = RigidPose(finite_number(r, "x"), finite_number(r, "y"), finite_number(r, "yaw"));
    if (!out.emplace(p.frame, p).second) {
      throw InputError("duplicate pose for frame " + std::to_string(p.frame));
    }
  });
  return out;
}

void write_observation(std::ostream& out, const ObjectObservation& obs) {
  json r;
  r["frame"] = obs.frame;
  r["id"] = obs.track_id;
  r["cat"] = std::string(category_name(obs.category));
  r["x"] = obs.center.x;
  r["y"] = obs.center.y;
  r["occluded"] = obs.occluded;
  out << r.dump() << '\n';
}

void write_pose(std::ostream& out, const PoseRecord& pose) {
  json r;
  r["frame"] = pose.frame;
  r["t"] = pose.t;
  r["x"] = pose.pose.x();
  r["y"] = pose.pose.y();
  r["yaw"] = pose.pose.yaw();
  out << r.dump() << '\n';
}

FlowFrameSet build_flow(const std::vector<ObjectObservation>& observations,
                        const std::map<std::int64_t, PoseRecord>& poses, std::int64_t current_frame,
                        int window) {
  if (window < 1) throw ConfigError("window must be >= 1");
  auto pose_of = [&](std::int64_t frame) -> const RigidPose& {
    auto it = poses.find(frame);
    if (it == poses.end()) throw InputError("missing pose for frame " + std::to_string(frame));
    return it->second.pose;
  };
  const RigidPose& now = pose_of(current_frame);

  FlowFrameSet flow;
  flow.current_frame = current_frame;
  flow.window = window;
  flow.stats.trajectory_records = observations.size();
  flow.stats.pose_records = poses.size();

  std::map<std::string, FlowInstance> grouped;
  for (const auto& obs : observations) {
    const std::int64_t back = current_frame - obs.frame;
    if (back < 1 || back > window) {
      ++flow.stats.out_of_window;
      continue;
    }
    const RigidTransform to_now = compose_relative(now, pose_of(obs.frame));
    auto [it, inserted] = grouped.try_emplace(obs.track_id);
    FlowInstance& inst = it->second;
    if (inserted) {
      inst.track_id = obs.track_id;
      inst.category = obs.category;
      inst.slots.resize(static_cast<std::size_t>(window));
    }
    auto& slot = inst.slots[static_cast<std::size_t>(back - 1)];
    if (slot.has_value()) {
      throw InputError("track " + obs.track_id + " observed twice in frame " +
                       std::to_string(obs.frame));
    }
    slot = FlowSlot{to_now.apply(obs.center), obs.occluded};
    ++flow.stats.parsed;
  }
  // Frames without observations still need a pose: the window is anchored on
  // the ego trajectory, not on the objects.
  for (int k = 1; k <= window; ++k) pose_of(current_frame - k);

  flow.instances.reserve(grouped.size());
  for (auto& [_, inst] : grouped) flow.instances.push_back(std::move(inst));
  return flow;
}

FlowFrameSet parse_log(std::istream& trajectory_jsonl, std::istream& pose_jsonl,
                       std::int64_t current_frame, int window) {
  std::size_t unknown = 0;
  auto observations = read_trajectory_log(trajectory_jsonl, &unknown);
  auto poses = read_pose_log(pose_jsonl);
  FlowFrameSet flow = build_flow(observations, poses, current_frame, window);
  flow.stats.unknown_category = unknown;
  return flow;
}

FlowFrameSet clip_to_range(const FlowFrameSet& flow, const RangeSpec& range) {
  FlowFrameSet out;
  out.current_frame = flow.current_frame;
  out.window = flow.window;
  out.stats = flow.stats;
  for (const auto& inst : flow.instances) {
    FlowInstance clipped = inst;
    for (auto& slot : clipped.slots) {
      if (slot && !range.contains(slot->center)) slot.reset();
    }
    if (clipped.observed_count() > 0) out.instances.push_back(std::move(clipped));
  }
  return out;
}

std::string flow_to_json(const FlowFrameSet& flow) {
  json j;
  j["current_frame"] = flow.current_frame;
  j["window"] = flow.window;
  json instances = json::array();
  for (const auto& inst : flow.instances) {
    json slots = json::array();
    for (const auto& s : inst.slots) {
      if (!s) {
        slots.push_back(nullptr);
      } else {
        slots.push_back({{"x", s->center.x}, {"y", s->center.y}, {"occluded", s->occluded}});
      }
    }
    instances.push_back(
        {{"id", inst.track_id}, {"cat", std::string(category_name(inst.category))}, {"slots", slots}});
  }
  j["instances"] = std::move(instances);
  j["stats"] = {{"trajectory_records", flow.stats.trajectory_records},
                {"parsed", flow.stats.parsed},
                {"out_of_window", flow.stats.out_of_window},
                {"unknown_category", flow.stats.unknown_category},
                {"pose_records", flow.stats.pose_records}};
  return j.dump(1);
}

FlowFrameSet flow_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    FlowFrameSet flow;
    flow.current_frame = j.at("current_frame").get<std::int64_t>();
    flow.window = j.at("window").get<int>();
    if (flow.window < 1) throw InputError("flow window must be >= 1");
    for (const auto& ji : j.at("instances")) {
      FlowInstance inst;
      inst.track_id = ji.at("id").get<std::string>();
      inst.category = parse_category(ji.at("cat").get<std::string>());
      for (const auto& js : ji.at("slots")) {
        if (js.is_null()) {
          inst.slots.emplace_back();
        } else {
          inst.slots.push_back(FlowSlot{{js.at("x").get<double>(), js.at("y").get<double>()},
                                        js.at("occluded").get<bool>()});
        }
      }
      if (inst.slots.size() != static_cast<std::size_t>(flow.window)) {
        throw InputError("instance " + inst.track_id + " has " + std::to_string(inst.slots.size()) +
                         " slots, expected " + std::to_string(flow.window));
      }
      flow.instances.push_back(std::move(inst));
    }
    if (j.contains("stats")) {
      const auto& s = j["stats"];
      flow.stats.trajectory_records = s.value("trajectory_records", std::size_t{0});
      flow.stats.parsed = s.value("parsed", std::size_t{0});
      flow.stats.out_of_window = s.value("out_of_window", std::size_t{0});
      flow.stats.unknown_category = s.value("unknown_category", std::size_t{0});
      flow.stats.pose_records = s.value("pose_records", std::size_t{0});
    }
    return flow;
  } catch (const json::exception& e) {
    throw InputError(std::string("flow JSON: ") + e.what());
  }
}

}  // namespace tfm
