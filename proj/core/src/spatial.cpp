// SPDX-License-Identifier: Apache-2.0
#include "tfm/spatial.hpp"

#include "json.hpp"
#include "tfm/error.hpp"

namespace tfm {

using nlohmann::json;

std::string_view pipe_name(Pipe p) { return p == Pipe::kAll ? "all" : "lt-ll"; }

Pipe parse_pipe(std::string_view s) {
  if (s == "all" || s == "ALL") return Pipe::kAll;
  if (s == "lt-ll" || s == "LT_LL" || s == "lt_ll") return Pipe::kLtLl;
  throw ConfigError("unknown pipe: " + std::string(s) + " (expected all | lt-ll)");
}

std::string_view paradigm_name(QueryParadigm q) {
  return q == QueryParadigm::kInstanceBased ? "instance" : "point";
}

QueryParadigm parse_paradigm(std::string_view s) {
  if (s == "instance" || s == "instance_based") return QueryParadigm::kInstanceBased;
  if (s == "point" || s == "point_level") return QueryParadigm::kPointLevel;
  throw ConfigError("unknown paradigm: " + std::string(s) + " (expected instance | point)");
}

void FusionConfig::validate() const {
  if (depth < 1 || depth > 3) throw ConfigError("fusion depth must be 1, 2 or 3");
  if (heads == 0 || dim == 0 || dim % heads != 0) {
    throw ConfigError("fusion dim must be a positive multiple of heads");
  }
}

BoolGrid SpatialMask::block(MaskBlock b) const {
  switch (b) {
    case MaskBlock::kLaneToLane: return bits.block(0, 0, lanes, lanes);
    case MaskBlock::kLaneToFlow: return bits.block(0, lanes, lanes, flows);
    case MaskBlock::kFlowToLane: return bits.block(lanes, 0, flows, lanes);
    case MaskBlock::kFlowToFlow: return bits.block(lanes, lanes, flows, flows);
  }
  throw ConfigError("unknown mask block");
}

SpatialMask build_spatial_mask(std::size_t lanes, const std::vector<bool>& flow_validity,
                               const std::optional<BoolGrid>& upstream_lane_mask) {
  if (lanes < 1) throw ConfigError("build_spatial_mask: need at least one lane token");
  const std::size_t flows = flow_validity.size();
  SpatialMask m{lanes, flows, BoolGrid(lanes + flows, lanes + flows)};
  if (upstream_lane_mask && (upstream_lane_mask->rows() != lanes || upstream_lane_mask->cols() != lanes)) {
    throw ConfigError("upstream lane mask must be L×L");
  }
  for (std::size_t a = 0; a < lanes; ++a)
    for (std::size_t b = 0; b < lanes; ++b)
      m.bits.set(a, b, upstream_lane_mask ? (*upstream_lane_mask)(a, b) : true);
  for (std::size_t t = 0; t < flows; ++t) {
    const bool v = flow_validity[t];
    for (std::size_t l = 0; l < lanes; ++l) {
      m.bits.set(l, lanes + t, v);
      m.bits.set(lanes + t, l, v);
    }
    for (std::size_t u = 0; u < flows; ++u) m.bits.set(lanes + t, lanes + u, v && flow_validity[u]);
  }
  return m;
}

namespace {

json grid_to_json(const BoolGrid& g) {
  json rows = json::array();
  for (std::size_t r = 0; r < g.rows(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < g.cols(); ++c) row.push_back(g(r, c) ? 1 : 0);
    rows.push_back(std::move(row));
  }
  return rows;
}

BoolGrid grid_from_json(const json& j) {
  const std::size_t rows = j.size();
  const std::size_t cols = rows == 0 ? 0 : j.at(0).size();
  BoolGrid g(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (j.at(r).size() != cols) throw InputError("mask grid rows have unequal length");
    for (std::size_t c = 0; c < cols; ++c) {
      const auto& v = j.at(r).at(c);
      g.set(r, c, v.is_boolean() ? v.get<bool>() : v.get<int>() != 0);
    }
  }
  return g;
}

}  // namespace

std::string spatial_mask_to_json(const SpatialMask& mask) {
  json j;
  j["lanes"] = mask.lanes;
  j["flows"] = mask.flows;
  j["bits"] = grid_to_json(mask.bits);
  return j.dump();
}

SpatialMask spatial_mask_from_json(std::string_view text, std::optional<std::size_t> lanes_hint) {
  try {
    const json j = json::parse(text);
    if (j.contains("bits")) {
      SpatialMask m;
      m.lanes = j.at("lanes").get<std::size_t>();
      m.flows = j.at("flows").get<std::size_t>();
      m.bits = grid_from_json(j.at("bits"));
      if (m.bits.rows() != m.lanes + m.flows || m.bits.cols() != m.lanes + m.flows) {
        throw InputError("mask bits must be (lanes+flows) square");
      }
      return m;
    }
    std::vector<bool> validity;
    for (const auto& v : j.at("flow_validity")) validity.push_back(v.is_boolean() ? v.get<bool>() : v.get<int>() != 0);
    std::optional<std::size_t> lanes = lanes_hint;
    if (j.contains("lanes")) lanes = j.at("lanes").get<std::size_t>();
    if (!lanes) throw InputError("mask JSON needs \"lanes\" when given as flow_validity");
    std::optional<BoolGrid> lane_mask;
    if (j.contains("lane_mask")) lane_mask = grid_from_json(j.at("lane_mask"));
    return build_spatial_mask(*lanes, validity, lane_mask);
  } catch (const json::exception& e) {
    throw InputError(std::string("mask JSON: ") + e.what());
  }
}

FusionStack::FusionStack(FusionConfig config) : config_(config) {
  config_.validate();
  static constexpr const char* kNames[4] = {"fuse.t2t", "fuse.t2l", "fuse.l2t", "fuse.l2l"};
  for (std::size_t m = 0; m < 4; ++m) {
    for (int d = 0; d < config_.depth; ++d) {
      modules_[m].layers.emplace_back(std::string(kNames[m]) + ".layer" + std::to_string(d),
                                      config_.dim, config_.heads, config_.ffn_hidden());
    }
    modules_[m].projection =
        Linear(std::string(kNames[m]) + ".proj", config_.dim, config_.dim, Init::kIdentity);
  }
}

bool FusionStack::module_active(std::size_t index) const {
  return config_.pipe == Pipe::kAll || index >= 2;
}

void FusionStack::declare(ParamStore& store) const {
  for (std::size_t m = 0; m < 4; ++m) {
    if (!module_active(m)) continue;
    for (const auto& layer : modules_[m].layers) layer.declare(store);
    modules_[m].projection.declare(store);
  }
}

namespace {

constexpr std::array<MaskBlock, 4> kBlocks = {MaskBlock::kFlowToFlow, MaskBlock::kFlowToLane,
                                              MaskBlock::kLaneToFlow, MaskBlock::kLaneToLane};
constexpr std::array<bool, 4> kSelf = {true, false, false, true};

}  // namespace

FusionOutput FusionStack::forward(const ParamStore& store, const FeatureMatrix& lanes,
                                  const FeatureMatrix& flows, const SpatialMask& mask,
                                  Cache* cache) const {
  if (lanes.cols() != config_.dim || flows.cols() != config_.dim) {
    throw NumericError("fuse: feature width must equal fusion dim " + std::to_string(config_.dim));
  }
  if (mask.lanes != lanes.rows() || mask.flows != flows.rows()) {
    throw NumericError("fuse: mask is for L=" + std::to_string(mask.lanes) + ", T=" +
                       std::to_string(mask.flows) + " but features have L=" +
                       std::to_string(lanes.rows()) + ", T=" + std::to_string(flows.rows()));
  }
  require_finite(lanes, "fuse: lane features");
  require_finite(flows, "fuse: flow features");

  FeatureMatrix flow_stream = flows;
  FeatureMatrix lane_stream = lanes;
  FusionOutput out;
  for (std::size_t m = 0; m < 4; ++m) {
    const bool queries_are_flow = m < 2;
    FeatureMatrix& stream = queries_are_flow ? flow_stream : lane_stream;
    if (!module_active(m)) {
      out.stages[m] = stream;
      continue;
    }
    const FeatureMatrix& other = queries_are_flow ? lane_stream : flow_stream;
    const BoolGrid block = mask.block(kBlocks[m]);
    ModuleCache* mc = cache ? &cache->modules[m] : nullptr;
    if (mc) {
      mc->layers.assign(modules_[m].layers.size(), {});
      mc->layer_inputs.clear();
      cache->ran[m] = true;
    }
    FeatureMatrix x = stream;
    for (std::size_t d = 0; d < modules_[m].layers.size(); ++d) {
      MaskedAttentionLayer::Cache scratch;
      MaskedAttentionLayer::Cache& lc = mc ? mc->layers[d] : scratch;
      if (mc) mc->layer_inputs.push_back(x);
      x = modules_[m].layers[d].forward(store, x, kSelf[m] ? x : other, block, lc);
    }
    stream = modules_[m].projection.forward(store, x);
    if (mc) mc->stacked = std::move(x);
    out.stages[m] = stream;
  }
  return out;
}

std::pair<Tensor2D, Tensor2D> FusionStack::backward(ParamStore& store, const Cache& cache,
                                                    const Tensor2D& dfused) const {
  Tensor2D dlane = dfused;
  Tensor2D dflow;
  bool have_dflow = false;
  auto add_flow = [&](const Tensor2D& g) {
    if (!have_dflow) {
      dflow = g;
      have_dflow = true;
    } else {
      dflow += g;
    }
  };
  Tensor2D dlane_keys;  // gradient reaching the lane stream through T→L keys
  bool have_dlane_keys = false;

  for (std::size_t step = 0; step < 4; ++step) {
    const std::size_t m = 3 - step;
    const bool queries_are_flow = m < 2;
    if (!module_active(m)) continue;
    const ModuleCache& mc = cache.modules[m];
    if (!cache.ran[m]) throw NumericError("fuse backward: cache missing module output");
    Tensor2D& dstream = queries_are_flow ? dflow : dlane;
    if (queries_are_flow && !have_dflow) continue;  // nothing flows back into T
    Tensor2D dx = modules_[m].projection.backward(store, mc.stacked, dstream);
    Tensor2D dother;
    bool have_other = false;
    for (std::size_t i = modules_[m].layers.size(); i-- > 0;) {
      auto [dq, dkv] = modules_[m].layers[i].backward(store, mc.layers[i], dx);
      if (kSelf[m]) {
        dq += dkv;
      } else if (!have_other) {
        dother = std::move(dkv);
        have_other = true;
      } else {
        dother += dkv;
      }
      dx = std::move(dq);
    }
    dstream = std::move(dx);
    if (have_other) {
      if (queries_are_flow) {
        dlane_keys = have_dlane_keys ? dlane_keys + dother : dother;
        have_dlane_keys = true;
      } else {
        add_flow(dother);
      }
    }
  }
  if (have_dlane_keys) dlane += dlane_keys;
  return {std::move(dlane), std::move(dflow)};
}

FusionOutput fuse(const FusionStack& stack, const ParamStore& store, const FeatureMatrix& lanes,
                  const FeatureMatrix& flows, const SpatialMask& mask) {
  return stack.forward(store, lanes, flows, mask);
}

FeatureComposer::FeatureComposer(std::size_t dim)
    : transform_("compose.transform", dim, dim, Init::kIdentity) {}

void FeatureComposer::declare(ParamStore& store) const { transform_.declare(store); }

FeatureMatrix FeatureComposer::forward(const ParamStore& store, const FeatureMatrix& fused,
                                       const FeatureMatrix& lanes, QueryParadigm paradigm) const {
  require_same_shape(fused, lanes, "compose_features");
  FeatureMatrix out = transform_.forward(store, fused);
  if (paradigm == QueryParadigm::kPointLevel) out += lanes;
  return out;
}

std::pair<Tensor2D, Tensor2D> FeatureComposer::backward(ParamStore& store, const FeatureMatrix& fused,
                                                        QueryParadigm paradigm,
                                                        const Tensor2D& dout) const {
  Tensor2D dfused = transform_.backward(store, fused, dout);
  Tensor2D dlanes = paradigm == QueryParadigm::kPointLevel ? dout : Tensor2D(dout.rows(), dout.cols());
  return {std::move(dfused), std::move(dlanes)};
}

FeatureMatrix compose_features(const FeatureComposer& composer, const ParamStore& store,
                               const FeatureMatrix& fused, const FeatureMatrix& lanes,
                               QueryParadigm paradigm) {
  return composer.forward(store, fused, lanes, paradigm);
}

}  // namespace tfm
