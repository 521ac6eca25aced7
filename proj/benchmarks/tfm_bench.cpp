// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <sstream>

#include "tfm/attention.hpp"
#include "tfm/pipeline.hpp"
#include "tfm/rng.hpp"
#include "tfm/scene.hpp"

namespace {

tfm::Tensor2D random_matrix(tfm::Rng& rng, std::size_t rows, std::size_t cols) {
  tfm::Tensor2D m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

void BM_AttentionForward(benchmark::State& state) {
  const auto tokens = static_cast<std::size_t>(state.range(0));
  tfm::Rng rng(1);
  const auto q = random_matrix(rng, tokens, 16), k = random_matrix(rng, tokens, 16), v = random_matrix(rng, tokens, 16);
  const tfm::BoolGrid mask(tokens, tokens, true);
  for (auto _ : state) benchmark::DoNotOptimize(tfm::attention_forward(q, k, v, mask, 2));
}
BENCHMARK(BM_AttentionForward)->Arg(8)->Arg(38)->Arg(128);

void BM_AttentionBackward(benchmark::State& state) {
  const auto tokens = static_cast<std::size_t>(state.range(0));
  tfm::Rng rng(2);
  const auto q = random_matrix(rng, tokens, 16), k = random_matrix(rng, tokens, 16), v = random_matrix(rng, tokens, 16);
  const auto [out, cache] = tfm::attention_forward(q, k, v, tfm::BoolGrid(tokens, tokens, true), 2);
  const auto dy = random_matrix(rng, tokens, 16);
  for (auto _ : state) benchmark::DoNotOptimize(tfm::attention_backward(cache, dy));
}
BENCHMARK(BM_AttentionBackward)->Arg(8)->Arg(38)->Arg(128);

void BM_Pipeline(benchmark::State& state) {
  const tfm::PipelineConfig cfg;
  const tfm::ParamStore store = tfm::TfmModel(cfg).make_params();
  const tfm::SceneOutput scene = tfm::generate(tfm::random_scene_spec(3, false));
  const std::string traj = tfm::trajectory_to_jsonl(scene.trajectory);
  const std::string poses = tfm::poses_to_jsonl(scene.poses);
  tfm::Rng rng(3);
  const auto lanes = random_matrix(rng, 8, cfg.fusion.dim);
  for (auto _ : state) {
    std::istringstream t(traj), p(poses);
    benchmark::DoNotOptimize(tfm::run_pipeline(cfg, store, t, p, lanes));
  }
}
BENCHMARK(BM_Pipeline)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
