// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "tfm/config.hpp"
#include "tfm/error.hpp"

namespace tfm {
namespace {

TEST(Config, DefaultsMatchTheReferenceSetup) {
  const PipelineConfig cfg;
  EXPECT_EQ(cfg.f_t, 20);
  EXPECT_EQ(cfg.n_t, 30u);
  EXPECT_EQ(cfg.tole_pts, 5);
  EXPECT_EQ(cfg.fusion.pipe, Pipe::kLtLl);
  EXPECT_EQ(cfg.fusion.depth, 1);
  EXPECT_TRUE(cfg.fusion.normalize_coords);
  EXPECT_EQ(cfg.point_cloud_range, cfg.perceptual_range);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, CanonicalFormIsIdempotent) {
  PipelineConfig cfg;
  cfg.window = 24;
  cfg.tole_pts = 3;
  cfg.fusion.pipe = Pipe::kAll;
  cfg.fusion.depth = 2;
  cfg.paradigm = QueryParadigm::kInstanceBased;
  cfg.perceptual_range = RangeSpec{-30, 40, -20, 20};
  cfg.training.learning_rate = 0.125;
  const std::string once = config_to_json(cfg);
  EXPECT_EQ(config_from_json(once), cfg);
  EXPECT_EQ(config_to_json(config_from_json(once)), once);
}

TEST(Config, MissingKeysTakeDefaults) {
  const PipelineConfig cfg = config_from_json(R"({"tole_pts": 7})");
  EXPECT_EQ(cfg.tole_pts, 7);
  EXPECT_EQ(cfg.f_t, 20);
}

TEST(Config, UnknownKeysAreRejected) {
  EXPECT_THROW(config_from_json(R"({"tole_ptz": 7})"), InputError);
  EXPECT_THROW(config_from_json(R"({"fusion": {"deep": 2}})"), InputError);
}

TEST(Config, InfeasibleValuesAreConfigErrors) {
  EXPECT_THROW(config_from_json(R"({"tole_pts": 21})"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"window": 10})"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"fusion": {"depth": 4}})"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"point_cloud_range": [5, 5, -1, 1]})"), ConfigError);
}

TEST(Config, MalformedJsonIsAnInputError) { EXPECT_THROW(config_from_json("{"), InputError); }

}  // namespace
}  // namespace tfm
