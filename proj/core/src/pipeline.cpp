// SPDX-License-Identifier: Apache-2.0
#include "tfm/pipeline.hpp"

#include <chrono>
#include <istream>

#include "json.hpp"
#include "tfm/error.hpp"

namespace tfm {

TemporalEncoderConfig temporal_config(const PipelineConfig& cfg) {
  TemporalEncoderConfig t;
  t.dim = cfg.fusion.dim;
  t.heads = cfg.fusion.heads;
  t.ffn_hidden = cfg.fusion.ffn_hidden();
  t.frames = static_cast<std::size_t>(cfg.f_t);
  t.normalize_coords = cfg.fusion.normalize_coords;
  t.range = cfg.perceptual_range;
  return t;
}

TfmModel::TfmModel(const PipelineConfig& cfg)
    : cfg_((cfg.validate(), cfg)),
      temporal_(temporal_config(cfg)),
      fusion_(cfg.fusion),
      composer_(cfg.fusion.dim) {}

ParamStore TfmModel::make_params() const {
  ParamStore store(cfg_.seed);
  declare(store);
  return store;
}

void TfmModel::declare(ParamStore& store) const {
  temporal_.declare(store);
  fusion_.declare(store);
  composer_.declare(store);
}

FlowFrameSet extract_flow(const PipelineConfig& cfg, const std::vector<ObjectObservation>& observations,
                          const std::map<std::int64_t, PoseRecord>& poses, std::int64_t current_frame) {
  return clip_to_range(build_flow(observations, poses, current_frame, cfg.window), cfg.point_cloud_range);
}

PreparedFlow prepare_flow(const PipelineConfig& cfg, const FlowFrameSet& extracted) {
  PreparedFlow out;
  const FlowFrameSet region = clip_to_range(extracted, cfg.perceptual_range);
  out.instances_in_region = region.instances.size();
  const std::vector<Candidate> candidates = validity_filter(region, cfg.tole_pts, cfg.f_t);
  out.candidates = candidates.size();
  const SectorWeighting weighting = SectorWeighting::for_range(cfg.perceptual_range);
  std::vector<double> weights;
  weights.reserve(candidates.size());
  for (const auto& c : candidates) weights.push_back(instance_weight(c, weighting));
  out.selection = select_instances(candidates, weights, cfg.n_t, static_cast<std::size_t>(cfg.f_t));
  return out;
}

FeatureMatrix forward_model(const TfmModel& model, const ParamStore& store, const Selection& selection,
                            const FeatureMatrix& lanes, const std::optional<BoolGrid>& lane_mask,
                            bool drop_flow, ForwardTrace* trace) {
  ForwardTrace local;
  ForwardTrace& t = trace ? *trace : local;
  const std::size_t rows = selection.batch.slots.size();
  if (drop_flow) {
    t.temporal = TemporalOutput{FeatureMatrix(rows, model.config().fusion.dim), std::vector<bool>(rows, false)};
    t.temporal_cache = {};
    t.temporal_cache.rows = rows;
  } else {
    t.temporal = model.temporal().forward(store, selection.batch, selection.mask, &t.temporal_cache);
  }
  t.mask = build_spatial_mask(lanes.rows(), t.temporal.validity, lane_mask);
  t.fused = model.fusion().forward(store, lanes, t.temporal.features, t.mask, &t.fusion_cache);
  t.lanes_prime = model.composer().forward(store, t.fused.stages[3], lanes, model.config().paradigm);
  return t.lanes_prime;
}

void backward_model(const TfmModel& model, ParamStore& store, const ForwardTrace& trace,
                    const Selection& selection, const Tensor2D& dlanes_prime) {
  auto [dfused, dlanes_direct] =
      model.composer().backward(store, trace.fused.stages[3], model.config().paradigm, dlanes_prime);
  auto [dlanes, dflows] = model.fusion().backward(store, trace.fusion_cache, dfused);
  if (!trace.temporal_cache.instances.empty()) {
    model.temporal().backward(store, trace.temporal_cache, selection.batch, dflows);
  }
}

namespace {

double fill_ratio(const BoolGrid& g) {
  const std::size_t n = g.rows() * g.cols();
  return n == 0 ? 0.0 : static_cast<double>(g.count()) / static_cast<double>(n);
}

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, const ParamStore& store,
                            std::istream& trajectory_jsonl, std::istream& pose_jsonl,
                            const FeatureMatrix& lanes, std::optional<std::int64_t> current_frame,
                            const std::optional<BoolGrid>& lane_mask) {
  const TfmModel model(cfg);
  PipelineResult result;
  Diagnostics& d = result.diagnostics;

  auto start = Clock::now();
  std::size_t unknown = 0;
  const auto observations = read_trajectory_log(trajectory_jsonl, &unknown);
  const auto poses = read_pose_log(pose_jsonl);
  if (poses.empty()) throw InputError("pose log is empty");
  const std::int64_t frame = current_frame.value_or(poses.rbegin()->first);
  FlowFrameSet flow = extract_flow(cfg, observations, poses, frame);
  flow.stats.unknown_category = unknown;
  d.timings_ms["extract"] = ms_since(start);
  d.current_frame = frame;
  d.observations = flow.stats.parsed;
  d.instances_extracted = flow.instances.size();

  start = Clock::now();
  const PreparedFlow prepared = prepare_flow(cfg, flow);
  d.timings_ms["select"] = ms_since(start);
  d.instances_in_region = prepared.instances_in_region;
  d.candidates = prepared.candidates;
  d.real_instances = prepared.selection.batch.real_count();
  d.temporal_mask_fill = fill_ratio(prepared.selection.mask.bits);

  start = Clock::now();
  ForwardTrace trace;
  result.lanes_prime = forward_model(model, store, prepared.selection, lanes, lane_mask, false, &trace);
  d.timings_ms["encode_fuse_compose"] = ms_since(start);
  d.spatial_mask_fill = fill_ratio(trace.mask.bits);
  d.block_fill = {fill_ratio(trace.mask.block(MaskBlock::kLaneToLane)),
                  fill_ratio(trace.mask.block(MaskBlock::kLaneToFlow)),
                  fill_ratio(trace.mask.block(MaskBlock::kFlowToLane)),
                  fill_ratio(trace.mask.block(MaskBlock::kFlowToFlow))};
  require_finite(result.lanes_prime, "pipeline output");
  return result;
}

std::string diagnostics_to_json(const Diagnostics& d, bool include_timings) {
  nlohmann::json j;
  j["current_frame"] = d.current_frame;
  j["observations"] = d.observations;
  j["instances_extracted"] = d.instances_extracted;
  j["instances_in_region"] = d.instances_in_region;
  j["candidates"] = d.candidates;
  j["real_instances"] = d.real_instances;
  j["temporal_mask_fill"] = d.temporal_mask_fill;
  j["spatial_mask_fill"] = d.spatial_mask_fill;
  j["block_fill"] = {{"lane_to_lane", d.block_fill[0]},
                     {"lane_to_flow", d.block_fill[1]},
                     {"flow_to_lane", d.block_fill[2]},
                     {"flow_to_flow", d.block_fill[3]}};
  if (include_timings) j["timings_ms"] = d.timings_ms;
  return j.dump(2) + "\n";
}

}  // namespace tfm
