// SPDX-License-Identifier: Apache-2.0
#include "tfm/temporal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tfm/error.hpp"

namespace tfm {

std::size_t Candidate::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), true));
}

std::vector<Candidate> validity_filter(const FlowFrameSet& flow, int tole_pts, int f_t) {
  if (f_t < 1 || tole_pts < 1 || tole_pts > f_t) {
    throw ConfigError("validity_filter: need 1 <= tole_pts <= f_t");
  }
  const auto frames = static_cast<std::size_t>(f_t);
  std::vector<Candidate> out;
  for (const auto& inst : flow.instances) {
    Candidate c;
    c.track_id = inst.track_id;
    c.category = inst.category;
    c.centers.assign(frames, PointBEV{});
    c.valid.assign(frames, false);
    for (std::size_t k = 0; k < frames && k < inst.slots.size(); ++k) {
      const auto& slot = inst.slots[k];
      if (!slot) continue;
      c.centers[k] = slot->center;
      c.valid[k] = !slot->occluded;
    }
    if (c.valid_count() >= static_cast<std::size_t>(tole_pts)) out.push_back(std::move(c));
  }
  return out;
}

SectorWeighting SectorWeighting::for_range(const RangeSpec& range) {
  SectorWeighting w;
  w.far_range = std::max(range.corner_distance(), w.near_range);
  return w;
}

double ego_sector_weight(const PointBEV& center, const SectorWeighting& weighting) {
  const double bearing = std::abs(std::atan2(center.y, center.x));
  double angular = 1.0;
  if (bearing > weighting.half_angle) {
    angular = std::max(weighting.angular_floor, std::cos(bearing - weighting.half_angle));
  }
  const double r = std::hypot(center.x, center.y);
  double radial = 1.0;
  if (r > weighting.near_range) {
    const double span = weighting.far_range - weighting.near_range;
    const double t = span > 0.0 ? std::min(1.0, (r - weighting.near_range) / span) : 1.0;
    radial = 1.0 - t * (1.0 - weighting.far_scale);
  }
  return angular * radial;
}

double instance_weight(const Candidate& candidate, const SectorWeighting& weighting) {
  double best = 0.0;
  for (std::size_t k = 0; k < candidate.centers.size(); ++k) {
    if (candidate.valid[k]) best = std::max(best, ego_sector_weight(candidate.centers[k], weighting));
  }
  return best;
}

std::size_t RefinedFlowBatch::real_count() const {
  return static_cast<std::size_t>(
      std::count_if(slots.begin(), slots.end(), [](const InstanceSlot& s) { return s.instance_valid; }));
}

Selection select_instances(const std::vector<Candidate>& candidates, std::span<const double> weights,
                           std::size_t t_max, std::size_t frames) {
  if (t_max < 1) throw ConfigError("select_instances: T_max must be >= 1");
  if (weights.size() != candidates.size()) {
    throw ConfigError("select_instances: one weight per candidate required");
  }
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (weights[a] != weights[b]) return weights[a] > weights[b];
    return candidates[a].track_id < candidates[b].track_id;
  });

  Selection sel;
  sel.batch.frames = frames;
  sel.batch.slots.resize(t_max);
  sel.mask.bits = BoolGrid(t_max, frames);
  const std::size_t taken = std::min(t_max, order.size());
  for (std::size_t s = 0; s < taken; ++s) {
    const Candidate& c = candidates[order[s]];
    if (c.centers.size() != frames || c.valid.size() != frames) {
      throw ConfigError("select_instances: candidate " + c.track_id + " has the wrong frame count");
    }
    InstanceSlot& slot = sel.batch.slots[s];
    slot.track_id = c.track_id;
    slot.category = c.category;
    slot.centers = c.centers;
    slot.instance_valid = true;
    slot.weight = weights[order[s]];
    for (std::size_t k = 0; k < frames; ++k) sel.mask.bits.set(s, k, c.valid[k]);
  }
  for (std::size_t s = taken; s < t_max; ++s) {
    sel.batch.slots[s].centers.assign(frames, PointBEV{});
  }
  return sel;
}

TemporalEncoder::TemporalEncoder(TemporalEncoderConfig config)
    : config_(std::move(config)),
      coord_embed_("temporal.coord", 2, config_.dim),
      category_table_("temporal.category"),
      offset_table_("temporal.offset"),
      layer_("temporal.layer0", config_.dim, config_.heads, config_.ffn_hidden) {
  if (config_.frames < 1) throw ConfigError("temporal encoder: frames must be >= 1");
  config_.range.validate();
}

void TemporalEncoder::declare(ParamStore& store) const {
  coord_embed_.declare(store);
  store.declare(category_table_, kCategoryCount, config_.dim, Init::kGlorotUniform);
  store.declare(offset_table_, config_.frames, config_.dim, Init::kGlorotUniform);
  layer_.declare(store);
}

Tensor2D TemporalEncoder::coordinate_inputs(const InstanceSlot& slot) const {
  Tensor2D coords(config_.frames, 2);
  for (std::size_t k = 0; k < config_.frames; ++k) {
    PointBEV p = slot.centers.at(k);
    if (config_.normalize_coords) p = config_.range.normalize(p);
    coords(k, 0) = p.x;
    coords(k, 1) = p.y;
  }
  return coords;
}

TemporalOutput TemporalEncoder::forward(const ParamStore& store, const RefinedFlowBatch& batch,
                                        const TemporalMask& mask, Cache* cache) const {
  const std::size_t rows = batch.slots.size();
  const std::size_t frames = config_.frames;
  if (batch.frames != frames || mask.bits.rows() != rows || mask.bits.cols() != frames) {
    throw NumericError("encode_temporal: batch/mask shape does not match f_t = " +
                       std::to_string(frames));
  }
  TemporalOutput out{FeatureMatrix(rows, config_.dim), std::vector<bool>(rows, false)};
  if (cache) {
    cache->instances.clear();
    cache->rows = rows;
  }
  const Tensor2D& categories = store.value(category_table_);
  const Tensor2D& offsets = store.value(offset_table_);

  for (std::size_t s = 0; s < rows; ++s) {
    const InstanceSlot& slot = batch.slots[s];
    if (!slot.instance_valid || !mask.bits.row_any(s)) continue;
    out.validity[s] = true;

    InstanceCache ic;
    ic.slot = s;
    ic.coords = coordinate_inputs(slot);
    Tensor2D tokens = coord_embed_.forward(store, ic.coords);
    const auto cat_row = categories.row(static_cast<std::size_t>(slot.category));
    for (std::size_t k = 0; k < frames; ++k) {
      auto t = tokens.row(k);
      const auto off = offsets.row(k);
      for (std::size_t c = 0; c < config_.dim; ++c) t[c] += cat_row[c] + off[c];
    }
    BoolGrid frame_mask(frames, frames);
    for (std::size_t a = 0; a < frames; ++a) {
      if (!mask.bits(s, a)) continue;
      ic.valid_frames.push_back(a);
      for (std::size_t b = 0; b < frames; ++b) frame_mask.set(a, b, mask.bits(s, b));
    }
    Tensor2D mixed = layer_.forward(store, tokens, tokens, frame_mask, ic.layer);
    auto pooled = out.features.row(s);
    const double inv = 1.0 / static_cast<double>(ic.valid_frames.size());
    for (std::size_t k : ic.valid_frames) {
      const auto r = mixed.row(k);
      for (std::size_t c = 0; c < config_.dim; ++c) pooled[c] += r[c];
    }
    for (double& v : pooled) v *= inv;
    if (cache) cache->instances.push_back(std::move(ic));
  }
  require_finite(out.features, "encode_temporal");
  return out;
}

void TemporalEncoder::backward(ParamStore& store, const Cache& cache, const RefinedFlowBatch& batch,
                               const Tensor2D& dfeatures) const {
  if (dfeatures.rows() != cache.rows || dfeatures.cols() != config_.dim) {
    throw NumericError("TemporalEncoder::backward: gradient shape mismatch");
  }
  const std::size_t frames = config_.frames;
  Tensor2D& dcategories = store.grad(category_table_);
  Tensor2D& doffsets = store.grad(offset_table_);
  for (const InstanceCache& ic : cache.instances) {
    Tensor2D dmixed(frames, config_.dim);
    const auto g = dfeatures.row(ic.slot);
    const double inv = 1.0 / static_cast<double>(ic.valid_frames.size());
    for (std::size_t k : ic.valid_frames) {
      auto r = dmixed.row(k);
      for (std::size_t c = 0; c < config_.dim; ++c) r[c] = g[c] * inv;
    }
    auto [dq, dkv] = layer_.backward(store, ic.layer, dmixed);
    dq += dkv;
    coord_embed_.backward(store, ic.coords, dq);
    auto dcat = dcategories.row(static_cast<std::size_t>(batch.slots[ic.slot].category));
    for (std::size_t k = 0; k < frames; ++k) {
      const auto r = dq.row(k);
      auto doff = doffsets.row(k);
      for (std::size_t c = 0; c < config_.dim; ++c) {
        dcat[c] += r[c];
        doff[c] += r[c];
      }
    }
  }
}

TemporalOutput encode_temporal(const TemporalEncoder& encoder, const ParamStore& store,
                               const RefinedFlowBatch& batch, const TemporalMask& mask) {
  return encoder.forward(store, batch, mask);
}

}  // namespace tfm
