// SPDX-License-Identifier: Apache-2.0
#include "tfm/gradient_suite.hpp"

#include "tfm/attention.hpp"
#include "tfm/layers.hpp"
#include "tfm/rng.hpp"
#include "tfm/spatial.hpp"
#include "tfm/temporal.hpp"

namespace tfm {

namespace {

Tensor2D random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Tensor2D m(rows, cols);
  for (double& v : m.data()) v = rng.normal() * scale;
  return m;
}

// Moves every parameter away from its structured initial value so identity
// and constant initialisations do not hide errors.
void perturb_params(ParamStore& store, Rng& rng, double scale) {
  for (auto& [name, p] : store.params()) {
    for (double& v : p.value.data()) v += rng.normal() * scale;
  }
}

std::vector<double*> coordinates(std::vector<Tensor2D>& inputs, ParamStore& store) {
  std::vector<double*> out;
  for (auto& t : inputs) {
    for (double& v : t.data()) out.push_back(&v);
  }
  for (auto& [name, p] : store.params()) {
    for (double& v : p.value.data()) out.push_back(&v);
  }
  return out;
}

double weighted_sum(const Tensor2D& out, const Tensor2D& weights) {
  require_same_shape(out, weights, "gradient case output");
  double s = 0.0;
  for (std::size_t i = 0; i < out.data().size(); ++i) s += out.data()[i] * weights.data()[i];
  return s;
}

}  // namespace

CaseReport check_case(DifferentiableCase& c, std::uint64_t seed, double h) {
  Rng rng(splitmix64(seed ^ fnv1a(c.name)));
  const Tensor2D probe_out = c.forward(c.store, c.inputs);
  const Tensor2D weights = random_matrix(rng, probe_out.rows(), probe_out.cols());

  c.store.zero_grad();
  const std::vector<Tensor2D> input_grads = c.backward(c.store, c.inputs, weights);
  std::vector<double> analytic;
  for (const auto& g : input_grads) analytic.insert(analytic.end(), g.data().begin(), g.data().end());
  for (const auto& [name, p] : c.store.params()) {
    analytic.insert(analytic.end(), p.grad.data().begin(), p.grad.data().end());
  }

  std::vector<double*> slots = coordinates(c.inputs, c.store);
  std::vector<double> point;
  point.reserve(slots.size());
  for (double* s : slots) point.push_back(*s);

  auto f = [&](const std::vector<double>& x) {
    for (std::size_t i = 0; i < slots.size(); ++i) *slots[i] = x[i];
    return weighted_sum(c.forward(c.store, c.inputs), weights);
  };
  CaseReport report{c.name, point.size(), grad_check(f, point, analytic, h)};
  for (std::size_t i = 0; i < slots.size(); ++i) *slots[i] = point[i];
  return report;
}

std::vector<DifferentiableCase> standard_cases(std::uint64_t seed) {
  constexpr std::size_t kLanes = 4, kFlows = 3, kDim = 8, kHeads = 2;
  Rng rng(splitmix64(seed ^ 0x9c4ec5ULL));
  std::vector<DifferentiableCase> cases;

  auto finish = [&](DifferentiableCase c) {
    perturb_params(c.store, rng, 0.3);
    cases.push_back(std::move(c));
  };

  {
    const Linear layer("lin", kDim, 5);
    DifferentiableCase c{"linear", ParamStore(seed), {random_matrix(rng, kLanes, kDim)}, {}, {}};
    layer.declare(c.store);
    c.forward = [layer](const ParamStore& s, const std::vector<Tensor2D>& in) { return layer.forward(s, in[0]); };
    c.backward = [layer](ParamStore& s, const std::vector<Tensor2D>& in, const Tensor2D& dy) {
      return std::vector<Tensor2D>{layer.backward(s, in[0], dy)};
    };
    finish(std::move(c));
  }
  {
    const LayerNorm layer("norm", kDim);
    DifferentiableCase c{"layer_norm", ParamStore(seed), {random_matrix(rng, kLanes, kDim)}, {}, {}};
    layer.declare(c.store);
    c.forward = [layer](const ParamStore& s, const std::vector<Tensor2D>& in) {
      LayerNorm::Cache cache;
      return layer.forward(s, in[0], cache);
    };
    c.backward = [layer](ParamStore& s, const std::vector<Tensor2D>& in, const Tensor2D& dy) {
      LayerNorm::Cache cache;
      layer.forward(s, in[0], cache);
      return std::vector<Tensor2D>{layer.backward(s, cache, dy)};
    };
    finish(std::move(c));
  }
  {
    const FeedForward layer("ffn", kDim, 2 * kDim);
    DifferentiableCase c{"feed_forward", ParamStore(seed), {random_matrix(rng, kLanes, kDim)}, {}, {}};
    layer.declare(c.store);
    c.forward = [layer](const ParamStore& s, const std::vector<Tensor2D>& in) {
      FeedForward::Cache cache;
      return layer.forward(s, in[0], cache);
    };
    c.backward = [layer](ParamStore& s, const std::vector<Tensor2D>& in, const Tensor2D& dy) {
      FeedForward::Cache cache;
      layer.forward(s, in[0], cache);
      return std::vector<Tensor2D>{layer.backward(s, cache, dy)};
    };
    finish(std::move(c));
  }

  // Mask with one fully masked query row and one partially masked row.
  BoolGrid mask(kLanes, kFlows);
  for (std::size_t i = 0; i < kLanes; ++i) {
    for (std::size_t j = 0; j < kFlows; ++j) mask.set(i, j, i != 2 && !(i == 1 && j == 0));
  }
  {
    DifferentiableCase c{"attention_core",
                         ParamStore(seed),
                         {random_matrix(rng, kLanes, kDim), random_matrix(rng, kFlows, kDim),
                          random_matrix(rng, kFlows, kDim)},
                         {},
                         {}};
    c.forward = [mask](const ParamStore&, const std::vector<Tensor2D>& in) {
      return attention_forward(in[0], in[1], in[2], mask, kHeads).first;
    };
    c.backward = [mask](ParamStore&, const std::vector<Tensor2D>& in, const Tensor2D& dy) {
      const auto cache = attention_forward(in[0], in[1], in[2], mask, kHeads).second;
      AttentionGrads g = attention_backward(cache, dy);
      return std::vector<Tensor2D>{g.dq, g.dk, g.dv};
    };
    finish(std::move(c));
  }
  {
    const MultiHeadAttention layer("mha", kDim, kHeads);
    DifferentiableCase c{"multi_head_attention",
                         ParamStore(seed),
                         {random_matrix(rng, kLanes, kDim), random_matrix(rng, kFlows, kDim)},
                         {},
                         {}};
    layer.declare(c.store);
    c.forward = [layer, mask](const ParamStore& s, const std::vector<Tensor2D>& in) {
      MultiHeadAttention::Cache cache;
      return layer.forward(s, in[0], in[1], mask, cache);
    };
    c.backward = [layer, mask](ParamStore& s, const std::vector<Tensor2D>& in, const Tensor2D& dy) {
      MultiHeadAttention::Cache cache;
      layer.forward(s, in[0], in[1], mask, cache);
      auto [dq, dkv] = layer.backward(s, cache, dy);
      return std::vector<Tensor2D>{dq, dkv};
    };
    finish(std::move(c));
  }
  {
    const MaskedAttentionLayer layer("layer", kDim, kHeads, 2 * kDim);
    DifferentiableCase c{"masked_attention_layer",
                         ParamStore(seed),
                         {random_matrix(rng, kLanes, kDim), random_matrix(rng, kFlows, kDim)},
                         {},
                         {}};
    layer.declare(c.store);
    c.forward = [layer, mask](const ParamStore& s, const std::vector<Tensor2D>& in) {
      MaskedAttentionLayer::Cache cache;
      return layer.forward(s, in[0], in[1], mask, cache);
    };
    c.backward = [layer, mask](ParamStore& s, const std::vector<Tensor2D>& in, const Tensor2D& dy) {
      MaskedAttentionLayer::Cache cache;
      layer.forward(s, in[0], in[1], mask, cache);
      auto [dq, dkv] = layer.backward(s, cache, dy);
      return std::vector<Tensor2D>{dq, dkv};
    };
    finish(std::move(c));
  }
  {
    TemporalEncoderConfig tc;
    tc.dim = kDim;
    tc.heads = kHeads;
    tc.ffn_hidden = 2 * kDim;
    tc.frames = 5;
    const TemporalEncoder encoder(tc);
    std::vector<Candidate> candidates;
    for (std::size_t i = 0; i < kFlows; ++i) {
      Candidate cand;
      cand.track_id = "t" + std::to_string(i);
      cand.category = static_cast<Category>(i % kCategoryCount);
      for (std::size_t k = 0; k < tc.frames; ++k) {
        cand.centers.push_back({rng.uniform(-40.0, 40.0), rng.uniform(-20.0, 20.0)});
        cand.valid.push_back(k != i);
      }
      candidates.push_back(std::move(cand));
    }
    const std::vector<double> weights{0.9, 0.5, 0.7};
    const Selection sel = select_instances(candidates, weights, kFlows + 1, tc.frames);
    DifferentiableCase c{"temporal_encoder", ParamStore(seed), {}, {}, {}};
    encoder.declare(c.store);
    c.forward = [encoder, sel](const ParamStore& s, const std::vector<Tensor2D>&) {
      return encoder.forward(s, sel.batch, sel.mask).features;
    };
    c.backward = [encoder, sel](ParamStore& s, const std::vector<Tensor2D>&, const Tensor2D& dy) {
      TemporalEncoder::Cache cache;
      encoder.forward(s, sel.batch, sel.mask, &cache);
      encoder.backward(s, cache, sel.batch, dy);
      return std::vector<Tensor2D>{};
    };
    finish(std::move(c));
  }
  {
    FusionConfig fc;
    fc.pipe = Pipe::kAll;
    fc.depth = 1;
    fc.dim = kDim;
    fc.heads = kHeads;
    const FusionStack stack(fc);
    const SpatialMask smask = build_spatial_mask(kLanes, {true, false, true});
    DifferentiableCase c{"fusion_stack",
                         ParamStore(seed),
                         {random_matrix(rng, kLanes, kDim), random_matrix(rng, kFlows, kDim)},
                         {},
                         {}};
    stack.declare(c.store);
    c.forward = [stack, smask](const ParamStore& s, const std::vector<Tensor2D>& in) {
      return stack.forward(s, in[0], in[1], smask).stages[3];
    };
    c.backward = [stack, smask](ParamStore& s, const std::vector<Tensor2D>& in, const Tensor2D& dy) {
      FusionStack::Cache cache;
      stack.forward(s, in[0], in[1], smask, &cache);
      auto [dl, dt] = stack.backward(s, cache, dy);
      return std::vector<Tensor2D>{dl, dt};
    };
    finish(std::move(c));
  }
  for (const QueryParadigm paradigm : {QueryParadigm::kInstanceBased, QueryParadigm::kPointLevel}) {
    const FeatureComposer composer(kDim);
    DifferentiableCase c{"composer_" + std::string(paradigm_name(paradigm)),
                         ParamStore(seed),
                         {random_matrix(rng, kLanes, kDim), random_matrix(rng, kLanes, kDim)},
                         {},
                         {}};
    composer.declare(c.store);
    c.forward = [composer, paradigm](const ParamStore& s, const std::vector<Tensor2D>& in) {
      return composer.forward(s, in[0], in[1], paradigm);
    };
    c.backward = [composer, paradigm](ParamStore& s, const std::vector<Tensor2D>& in, const Tensor2D& dy) {
      auto [df, dl] = composer.backward(s, in[0], paradigm, dy);
      return std::vector<Tensor2D>{df, dl};
    };
    finish(std::move(c));
  }
  return cases;
}

std::vector<CaseReport> run_gradient_suite(std::uint64_t seed, double h) {
  std::vector<CaseReport> reports;
  for (auto& c : standard_cases(seed)) reports.push_back(check_case(c, seed, h));
  return reports;
}

}  // namespace tfm
