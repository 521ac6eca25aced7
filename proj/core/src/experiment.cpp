// SPDX-License-Identifier: Apache-2.0
#include "tfm/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tfm/error.hpp"
#include "tfm/rng.hpp"
#include "tfm/tensor_io.hpp"

namespace tfm {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  return in;
}

// Numerically stable BCE on a logit.
double bce(double logit, double target) {
  return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace

void write_scene(const fs::path& dir, const SceneSpec& spec, const TrainingConfig& training, std::size_t dim,
                 const LaneTiling& tiling) {
  const SceneOutput scene = generate(spec);
  fs::create_directories(dir);
  write_text(dir / kTrajectoryFile, trajectory_to_jsonl(scene.trajectory));
  write_text(dir / kPoseFile, poses_to_jsonl(scene.poses));
  write_text(dir / kGroundTruthFile, ground_truth_to_json(scene.truth));
  write_text(dir / kOccupancyFile, occupancy_to_pgm(scene.truth.navigable));
  write_text(dir / kSceneSpecFile, scene_spec_to_json(spec));

  const LaneFeatureSample lanes = synthesize_lane_features(scene.truth, tiling, dim, training.tile_occlusion_rate,
                                                           training.evidence_noise, spec.seed);
  Tensor2D occluded(lanes.occluded.size(), 1);
  for (std::size_t i = 0; i < lanes.occluded.size(); ++i) occluded(i, 0) = lanes.occluded[i] ? 1.0 : 0.0;
  save_tensors(dir / kLaneFeatureFile, {NamedTensor::from_matrix("lane_feat", lanes.features),
                                        NamedTensor::from_matrix("lane_target", lanes.targets),
                                        NamedTensor::from_matrix("lane_occluded", occluded)});
}

std::vector<fs::path> build_dataset(const fs::path& dir, std::size_t count, std::uint64_t seed,
                                    bool occlusion_heavy, const TrainingConfig& training, std::size_t dim) {
  std::vector<fs::path> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%04zu", i);
    const SceneSpec spec = random_scene_spec(splitmix64(seed + i), occlusion_heavy);
    write_scene(dir / name, spec, training, dim);
    out.push_back(dir / name);
  }
  return out;
}

std::vector<SceneSample> load_dataset(const PipelineConfig& cfg, const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("dataset directory not found: " + dir.string());
  std::vector<fs::path> scene_dirs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && entry.path().filename().string().rfind("scene_", 0) == 0) {
      scene_dirs.push_back(entry.path());
    }
  }
  std::sort(scene_dirs.begin(), scene_dirs.end());
  if (scene_dirs.empty()) throw InputError("no scene_* directories in " + dir.string());

  std::vector<SceneSample> samples;
  samples.reserve(scene_dirs.size());
  for (const auto& sd : scene_dirs) {
    SceneSample s;
    s.name = sd.filename().string();
    auto traj_in = open_input(sd / kTrajectoryFile);
    auto pose_in = open_input(sd / kPoseFile);
    const auto observations = read_trajectory_log(traj_in);
    const auto poses = read_pose_log(pose_in);
    if (poses.empty()) throw InputError(s.name + ": pose log is empty");
    const FlowFrameSet flow = extract_flow(cfg, observations, poses, poses.rbegin()->first);
    s.selection = prepare_flow(cfg, flow).selection;

    const auto tensors = load_tensors(sd / kLaneFeatureFile);
    s.lanes.features = find_tensor(tensors, "lane_feat").as_matrix();
    s.lanes.targets = find_tensor(tensors, "lane_target").as_matrix();
    const Tensor2D occluded = find_tensor(tensors, "lane_occluded").as_matrix();
    if (s.lanes.features.cols() != cfg.fusion.dim) {
      throw InputError(s.name + ": lane feature dim " + std::to_string(s.lanes.features.cols()) +
                       " does not match configured dim " + std::to_string(cfg.fusion.dim));
    }
    if (occluded.rows() != s.lanes.features.rows() || s.lanes.targets.rows() != s.lanes.features.rows()) {
      throw InputError(s.name + ": lane tensors disagree on token count");
    }
    s.lanes.occluded.resize(occluded.rows());
    for (std::size_t i = 0; i < occluded.rows(); ++i) {
      s.lanes.occluded[i] = occluded(i, 0) != 0.0;
      if (s.lanes.occluded[i]) s.occluded_cells += s.lanes.targets.cols();
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

ProbeModel::ProbeModel(const PipelineConfig& cfg, std::size_t cells)
    : model_(cfg), head_("probe", cfg.fusion.dim, cells) {}

ParamStore ProbeModel::make_params(std::uint64_t seed) const {
  ParamStore store(seed);
  model_.declare(store);
  head_.declare(store);
  return store;
}

ProbeModel::LossSum ProbeModel::loss(const ParamStore& store, const SceneSample& scene, bool drop_flow) const {
  const FeatureMatrix lanes_prime =
      forward_model(model_, store, scene.selection, scene.lanes.features, std::nullopt, drop_flow);
  const Tensor2D logits = head_.forward(store, lanes_prime);
  LossSum sum;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (!scene.lanes.occluded[i]) continue;
    for (std::size_t k = 0; k < logits.cols(); ++k) {
      sum.total += bce(logits(i, k), scene.lanes.targets(i, k));
      ++sum.terms;
    }
  }
  return sum;
}

ProbeModel::LossSum ProbeModel::accumulate(ParamStore& store, const SceneSample& scene, bool drop_flow,
                                           double normalizer) const {
  ForwardTrace trace;
  const FeatureMatrix lanes_prime =
      forward_model(model_, store, scene.selection, scene.lanes.features, std::nullopt, drop_flow, &trace);
  const Tensor2D logits = head_.forward(store, lanes_prime);
  Tensor2D dlogits(logits.rows(), logits.cols());
  LossSum sum;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (!scene.lanes.occluded[i]) continue;
    for (std::size_t k = 0; k < logits.cols(); ++k) {
      const double y = scene.lanes.targets(i, k);
      sum.total += bce(logits(i, k), y);
      ++sum.terms;
      dlogits(i, k) = (sigmoid(logits(i, k)) - y) / normalizer;
    }
  }
  if (sum.terms == 0) return sum;
  const Tensor2D dlanes_prime = head_.backward(store, lanes_prime, dlogits);
  backward_model(model_, store, trace, scene.selection, dlanes_prime);
  return sum;
}

double mean_loss(const ProbeModel& probe, const ParamStore& store, const std::vector<SceneSample>& scenes,
                 bool drop_flow) {
  ProbeModel::LossSum pooled;
  for (const auto& s : scenes) {
    const auto part = probe.loss(store, s, drop_flow);
    pooled.total += part.total;
    pooled.terms += part.terms;
  }
  return pooled.mean();
}

double train_step(const ProbeModel& probe, ParamStore& store, const std::vector<const SceneSample*>& batch,
                  bool drop_flow, double learning_rate, double grad_clip) {
  std::size_t terms = 0;
  for (const auto* s : batch) terms += s->occluded_cells;
  if (terms == 0) return 0.0;
  store.zero_grad();
  double total = 0.0;
  for (const auto* s : batch) total += probe.accumulate(store, *s, drop_flow, static_cast<double>(terms)).total;
  store.sgd_step(learning_rate, grad_clip);
  return total / static_cast<double>(terms);
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

struct TrainedRun {
  ParamStore store;
  RunCurve curve;
};

void require_finite_loss(double v, std::uint64_t seed, const char* what) {
  if (!std::isfinite(v)) {
    throw NumericError("non-finite " + std::string(what) + " loss for seed " + std::to_string(seed));
  }
}

TrainedRun train(const ProbeModel& probe, const TrainingConfig& training, const std::vector<SceneSample>& train_set,
                 const std::vector<SceneSample>& eval_set, std::uint64_t seed, bool drop_flow) {
  TrainedRun run{probe.make_params(seed), {}};
  Rng shuffle(splitmix64(seed ^ 0x5b0ff1e5ULL));
  std::vector<const SceneSample*> order;
  for (const auto& s : train_set) order.push_back(&s);
  const std::size_t batch = std::max<std::size_t>(1, training.batch_size);
  for (int epoch = 0; epoch < training.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    double epoch_total = 0.0;
    std::size_t epoch_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      std::vector<const SceneSample*> chunk(order.begin() + static_cast<std::ptrdiff_t>(start),
                                            order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch)));
      const double l = train_step(probe, run.store, chunk, drop_flow, training.learning_rate, training.grad_clip);
      require_finite_loss(l, seed, "training");
      epoch_total += l;
      ++epoch_batches;
    }
    run.curve.train_loss.push_back(epoch_batches ? epoch_total / static_cast<double>(epoch_batches) : 0.0);
    const double e = mean_loss(probe, run.store, eval_set, drop_flow);
    require_finite_loss(e, seed, "evaluation");
    run.curve.eval_loss.push_back(e);
  }
  return run;
}

double fill_ratio(const BoolGrid& g) {
  const std::size_t n = g.rows() * g.cols();
  return n == 0 ? 0.0 : static_cast<double>(g.count()) / static_cast<double>(n);
}

}  // namespace

ExperimentReport run_experiment(const PipelineConfig& cfg, const fs::path& dataset_dir,
                                const std::vector<std::uint64_t>& seeds, bool infer_without_flow) {
  return run_experiment(cfg, load_dataset(cfg, dataset_dir), seeds, infer_without_flow);
}

ExperimentReport run_experiment(const PipelineConfig& cfg, const std::vector<SceneSample>& scenes,
                                const std::vector<std::uint64_t>& seeds, bool infer_without_flow) {
  cfg.validate();
  if (seeds.size() < 3) throw ConfigError("experiment needs at least 3 seeds");
  if (scenes.size() < 2) throw ConfigError("experiment needs at least 2 scenes");
  const auto start = std::chrono::steady_clock::now();
  const TrainingConfig& training = cfg.training;

  const auto eval_count = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(training.eval_fraction * static_cast<double>(scenes.size()))), 1,
      scenes.size() - 1);
  const std::vector<SceneSample> train_set(scenes.begin(), scenes.end() - static_cast<std::ptrdiff_t>(eval_count));
  const std::vector<SceneSample> eval_set(scenes.end() - static_cast<std::ptrdiff_t>(eval_count), scenes.end());

  ExperimentReport report;
  report.train_scenes = train_set.size();
  report.eval_scenes = eval_set.size();
  report.infer_without_flow = infer_without_flow;

  const ProbeModel probe(cfg, scenes.front().lanes.targets.cols());
  for (const auto& s : scenes) {
    report.masks.mean_real_instances += static_cast<double>(s.selection.batch.real_count());
    report.masks.mean_temporal_fill += fill_ratio(s.selection.mask.bits);
    std::vector<bool> validity;
    for (const auto& slot : s.selection.batch.slots) validity.push_back(slot.instance_valid);
    report.masks.mean_spatial_fill += fill_ratio(build_spatial_mask(s.lanes.features.rows(), validity).bits);
  }
  const auto n = static_cast<double>(scenes.size());
  report.masks.mean_real_instances /= n;
  report.masks.mean_temporal_fill /= n;
  report.masks.mean_spatial_fill /= n;

  std::vector<double> with, without, transfer;
  for (const std::uint64_t seed : seeds) {
    SeedResult r;
    r.seed = seed;
    const TrainedRun flow_run = train(probe, training, train_set, eval_set, seed, false);
    const TrainedRun lane_run = train(probe, training, train_set, eval_set, seed, true);
    r.with_flow = flow_run.curve.eval_loss.empty() ? mean_loss(probe, flow_run.store, eval_set, false)
                                                   : flow_run.curve.eval_loss.back();
    r.without_flow = lane_run.curve.eval_loss.empty() ? mean_loss(probe, lane_run.store, eval_set, true)
                                                      : lane_run.curve.eval_loss.back();
    r.with_flow_curve = flow_run.curve;
    r.without_flow_curve = lane_run.curve;
    if (infer_without_flow) {
      r.train_with_infer_without = mean_loss(probe, flow_run.store, eval_set, true);
      require_finite_loss(r.train_with_infer_without, seed, "evaluation");
      transfer.push_back(r.train_with_infer_without);
    }
    with.push_back(r.with_flow);
    without.push_back(r.without_flow);
    report.seeds.push_back(std::move(r));
  }
  report.median_with_flow = median(with);
  report.median_without_flow = median(without);
  report.median_train_with_infer_without = median(transfer);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string report_to_json(const ExperimentReport& report, bool include_timing) {
  nlohmann::json j;
  j["train_scenes"] = report.train_scenes;
  j["eval_scenes"] = report.eval_scenes;
  j["infer_without_flow"] = report.infer_without_flow;
  j["median"] = {{"with_flow", report.median_with_flow}, {"without_flow", report.median_without_flow}};
  if (report.infer_without_flow) j["median"]["train_with_infer_without"] = report.median_train_with_infer_without;
  j["masks"] = {{"mean_real_instances", report.masks.mean_real_instances},
                {"mean_temporal_fill", report.masks.mean_temporal_fill},
                {"mean_spatial_fill", report.masks.mean_spatial_fill}};
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& r : report.seeds) {
    nlohmann::json s;
    s["seed"] = r.seed;
    s["with_flow"] = r.with_flow;
    s["without_flow"] = r.without_flow;
    if (report.infer_without_flow) s["train_with_infer_without"] = r.train_with_infer_without;
    s["with_flow_curve"] = {{"train", r.with_flow_curve.train_loss}, {"eval", r.with_flow_curve.eval_loss}};
    s["without_flow_curve"] = {{"train", r.without_flow_curve.train_loss}, {"eval", r.without_flow_curve.eval_loss}};
    seeds.push_back(std::move(s));
  }
  j["seeds"] = std::move(seeds);
  if (include_timing) j["seconds"] = report.seconds;
  return j.dump(2) + "\n";
}

}  // namespace tfm
