// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "test_support.hpp"
#include "tfm/error.hpp"
#include "tfm/temporal.hpp"

namespace tfm {
namespace {

using testing::jitter;

FlowFrameSet flow_with_valid_frames(int window, int valid, int occluded = 0) {
  FlowFrameSet flow;
  flow.current_frame = window;
  flow.window = window;
  FlowInstance inst;
  inst.track_id = "a";
  inst.category = Category::kVehicle;
  inst.slots.resize(static_cast<std::size_t>(window));
  for (int k = 0; k < valid + occluded; ++k) {
    inst.slots[static_cast<std::size_t>(k)] = FlowSlot{{5.0 + k, 1.0}, k >= valid};
  }
  flow.instances.push_back(inst);
  return flow;
}

TEST(ValidityFilter, ThresholdIsInclusive) {
  EXPECT_EQ(validity_filter(flow_with_valid_frames(20, 5), 5, 20).size(), 1u);
  EXPECT_EQ(validity_filter(flow_with_valid_frames(20, 4), 5, 20).size(), 0u);
  EXPECT_EQ(validity_filter(flow_with_valid_frames(20, 20), 5, 20).size(), 1u);
}

TEST(ValidityFilter, OccludedFramesDoNotCount) {
  EXPECT_EQ(validity_filter(flow_with_valid_frames(20, 4, 6), 5, 20).size(), 0u);
  const auto kept = validity_filter(flow_with_valid_frames(20, 5, 3), 5, 20);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].valid_count(), 5u);
  EXPECT_FALSE(kept[0].valid[6]);
}

TEST(ValidityFilter, OnlyTheLastFtFramesCount) {
  FlowFrameSet flow = flow_with_valid_frames(25, 0);
  for (int k = 20; k < 25; ++k) flow.instances[0].slots[static_cast<std::size_t>(k)] = FlowSlot{{1, 1}, false};
  EXPECT_TRUE(validity_filter(flow, 5, 20).empty());
  EXPECT_EQ(validity_filter(flow, 5, 25).size(), 1u);
}

TEST(ValidityFilter, RejectsInfeasibleThreshold) {
  EXPECT_THROW(validity_filter(FlowFrameSet{}, 0, 20), ConfigError);
  EXPECT_THROW(validity_filter(FlowFrameSet{}, 21, 20), ConfigError);
}

TEST(SectorWeight, MatchesReferenceValues) {
  const SectorWeighting w;
  EXPECT_DOUBLE_EQ(ego_sector_weight({10, 0}, w), 1.0);
  EXPECT_NEAR(ego_sector_weight({10, 10}, w), 0.9659258262890683, 1e-12);
  EXPECT_NEAR(ego_sector_weight({-10, 0}, w), 0.25, 1e-12);
  EXPECT_NEAR(ego_sector_weight({0, 20}, w), 0.4999999999999999, 1e-12);
  EXPECT_NEAR(ego_sector_weight({40, 5}, w), 0.8009534322955206, 1e-12);
  EXPECT_NEAR(ego_sector_weight({-45, -20}, w), 0.15712825110462197, 1e-12);
  EXPECT_NEAR(ego_sector_weight({60, 0}, w), 0.5, 1e-12);
  EXPECT_NEAR(ego_sector_weight({25, -25}, w), 0.8660702102816723, 1e-12);
}

TEST(SectorWeight, DefaultFarRangeIsTheRangeCorner) {
  EXPECT_NEAR(SectorWeighting::for_range(RangeSpec{}).far_range, 55.90169943749474, 1e-12);
}

TEST(SectorWeight, FrontBeatsBackAtEqualRange) {
  for (double r : {5.0, 20.0, 40.0}) {
    EXPECT_GT(ego_sector_weight({r, 0}), ego_sector_weight({-r, 0}));
  }
}

TEST(SectorWeight, MonotoneInAngleAndRange) {
  double previous = 2.0;
  for (int deg = 0; deg <= 180; deg += 5) {
    const double a = deg * std::acos(-1.0) / 180.0;
    const double w = ego_sector_weight({20 * std::cos(a), 20 * std::sin(a)});
    EXPECT_LE(w, previous + 1e-15) << deg;
    EXPECT_GE(w, 0.0);
    previous = w;
  }
  previous = 2.0;
  for (double r = 1.0; r < 80.0; r += 1.5) {
    const double w = ego_sector_weight({r * 0.6, r * 0.8});
    EXPECT_LE(w, previous + 1e-15) << r;
    previous = w;
  }
}

Candidate candidate(const std::string& id, std::vector<PointBEV> centers) {
  Candidate c;
  c.track_id = id;
  c.category = Category::kVehicle;
  c.valid.assign(centers.size(), true);
  c.centers = std::move(centers);
  return c;
}

TEST(InstanceWeight, TakesMaximumOverValidFrames) {
  Candidate c = candidate("a", {{-10, 0}, {10, 0}, {0, 20}});
  EXPECT_DOUBLE_EQ(instance_weight(c, SectorWeighting{}), 1.0);
  c.valid[1] = false;
  EXPECT_NEAR(instance_weight(c, SectorWeighting{}), 0.5, 1e-12);
}

TEST(SelectInstances, KeepsHighestWeights) {
  std::vector<Candidate> cands;
  std::vector<double> weights;
  for (int i = 0; i < 40; ++i) {
    cands.push_back(candidate("t" + std::to_string(100 + i), {{1.0 * i, 0.0}, {0, 0}}));
    weights.push_back(static_cast<double>((i * 17) % 40));
  }
  const Selection sel = select_instances(cands, weights, 30, 2);
  ASSERT_EQ(sel.batch.slots.size(), 30u);
  EXPECT_EQ(sel.batch.real_count(), 30u);
  for (const auto& slot : sel.batch.slots) {
    const int i = std::stoi(slot.track_id.substr(1)) - 100;
    EXPECT_GE(weights[static_cast<std::size_t>(i)], 10.0) << slot.track_id;
  }
  for (std::size_t s = 1; s < 30; ++s) EXPECT_GE(sel.batch.slots[s - 1].weight, sel.batch.slots[s].weight);
}

TEST(SelectInstances, PadsToCapacity) {
  std::vector<Candidate> cands = {candidate("a", {{1, 1}}), candidate("b", {{2, 2}}), candidate("c", {{3, 3}})};
  const std::vector<double> weights = {0.2, 0.9, 0.5};
  const Selection sel = select_instances(cands, weights, 30, 1);
  ASSERT_EQ(sel.batch.slots.size(), 30u);
  EXPECT_EQ(sel.batch.real_count(), 3u);
  EXPECT_EQ(sel.batch.slots[0].track_id, "b");
  EXPECT_EQ(sel.batch.slots[1].track_id, "c");
  EXPECT_EQ(sel.batch.slots[2].track_id, "a");
  for (std::size_t s = 3; s < 30; ++s) {
    EXPECT_FALSE(sel.batch.slots[s].instance_valid);
    EXPECT_FALSE(sel.mask.bits.row_any(s));
    EXPECT_EQ(sel.batch.slots[s].centers[0], (PointBEV{0, 0}));
  }
}

TEST(SelectInstances, TiesBreakByTrackId) {
  std::vector<Candidate> cands = {candidate("zeta", {{1, 1}}), candidate("alpha", {{2, 2}})};
  const std::vector<double> weights = {0.7, 0.7};
  const Selection sel = select_instances(cands, weights, 1, 1);
  EXPECT_EQ(sel.batch.slots[0].track_id, "alpha");
}

TEST(SelectInstances, MaskCopiesValidity) {
  Candidate c = candidate("a", {{1, 1}, {2, 2}, {3, 3}});
  c.valid[1] = false;
  const Selection sel = select_instances({c}, std::vector<double>{1.0}, 2, 3);
  EXPECT_TRUE(sel.mask.bits(0, 0));
  EXPECT_FALSE(sel.mask.bits(0, 1));
  EXPECT_TRUE(sel.mask.bits(0, 2));
}

TEST(SelectInstances, NoCandidatesIsAllPadding) {
  const Selection sel = select_instances({}, {}, 5, 4);
  EXPECT_EQ(sel.batch.slots.size(), 5u);
  EXPECT_EQ(sel.batch.real_count(), 0u);
}

// Encoder fixture: 6 real-or-padded slots over 5 frames, small width.
class EncoderTest : public ::testing::Test {
 protected:
  static constexpr std::size_t kFrames = 5;
  static constexpr std::size_t kSlots = 6;

  EncoderTest() : encoder_(make_config()), store_(9) {
    encoder_.declare(store_);
    Rng rng(21);
    jitter(store_, rng, 0.2);
  }

  static TemporalEncoderConfig make_config() {
    TemporalEncoderConfig cfg;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.ffn_hidden = 16;
    cfg.frames = kFrames;
    return cfg;
  }

  Selection random_selection(Rng& rng, std::size_t real) const {
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < real; ++i) {
      Candidate c;
      c.track_id = "t" + std::to_string(i);
      c.category = static_cast<Category>(i % kCategoryCount);
      for (std::size_t k = 0; k < kFrames; ++k) {
        c.centers.push_back({rng.uniform(-50, 50), rng.uniform(-25, 25)});
        c.valid.push_back(k == 0 || rng.bernoulli(0.6));
      }
      cands.push_back(c);
    }
    std::vector<double> weights(real);
    for (std::size_t i = 0; i < real; ++i) weights[i] = 1.0 - 0.1 * static_cast<double>(i);
    return select_instances(cands, weights, kSlots, kFrames);
  }

  TemporalOutput encode(const Selection& sel) const { return encode_temporal(encoder_, store_, sel.batch, sel.mask); }

  TemporalEncoder encoder_;
  ParamStore store_;
};

TEST_F(EncoderTest, NoRealInstancesGivesZeros) {
  Rng rng(1);
  const TemporalOutput out = encode(random_selection(rng, 0));
  EXPECT_EQ(out.features.rows(), kSlots);
  for (double v : out.features.data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(std::count(out.validity.begin(), out.validity.end(), true), 0);
}

TEST_F(EncoderTest, SingleFrameEqualsThatTokenThroughTheLayer) {
  Rng rng(2);
  Selection sel = random_selection(rng, 1);
  for (std::size_t k = 1; k < kFrames; ++k) sel.mask.bits.set(0, k, false);
  const TemporalOutput out = encode(sel);

  // Rebuild the one token by hand and push it through a one-row layer.
  const InstanceSlot& slot = sel.batch.slots[0];
  const Tensor2D coords = encoder_.coordinate_inputs(slot);
  Linear embed("temporal.coord", 2, 8);
  Tensor2D token = slice_rows(embed.forward(store_, coords), 0, 1);
  const auto cat = store_.value("temporal.category").row(static_cast<std::size_t>(slot.category));
  const auto off = store_.value("temporal.offset").row(0);
  for (std::size_t c = 0; c < 8; ++c) token(0, c) += cat[c] + off[c];
  MaskedAttentionLayer layer("temporal.layer0", 8, 2, 16);
  MaskedAttentionLayer::Cache cache;
  BoolGrid one(1, 1);
  one.set(0, 0, true);
  const Tensor2D expected = layer.forward(store_, token, token, one, cache);
  for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(out.features(0, c), expected(0, c), 1e-12);
}

TEST_F(EncoderTest, MaskedFrameCoordinatesAreIgnored) {
  Rng rng(3);
  Selection sel = random_selection(rng, 4);
  sel.mask.bits.set(2, 3, false);
  const TemporalOutput before = encode(sel);
  sel.batch.slots[2].centers[3] = {rng.uniform(-50, 50), rng.uniform(-25, 25)};
  EXPECT_EQ(encode(sel).features, before.features);
}

TEST_F(EncoderTest, PaddingContentsAreIgnored) {
  Rng rng(4);
  Selection sel = random_selection(rng, 3);
  const TemporalOutput before = encode(sel);
  for (std::size_t s = 3; s < kSlots; ++s) {
    sel.batch.slots[s].category = Category::kCyclist;
    for (auto& c : sel.batch.slots[s].centers) c = {rng.uniform(-50, 50), rng.uniform(-25, 25)};
  }
  const TemporalOutput after = encode(sel);
  EXPECT_EQ(after.features, before.features);
  EXPECT_EQ(after.validity, before.validity);
}

TEST_F(EncoderTest, ClearingAMaskBitOnlyTouchesThatInstance) {
  Rng rng(5);
  Selection sel = random_selection(rng, 5);
  const TemporalOutput before = encode(sel);
  std::size_t frame = 0;
  while (!sel.mask.bits(1, frame)) ++frame;
  sel.mask.bits.set(1, frame, false);
  const TemporalOutput after = encode(sel);
  for (std::size_t s = 0; s < kSlots; ++s) {
    if (s == 1) continue;
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(after.features(s, c), before.features(s, c));
  }
}

TEST_F(EncoderTest, PermutingSlotsPermutesRows) {
  Rng rng(6);
  Selection sel = random_selection(rng, 5);
  const TemporalOutput before = encode(sel);
  const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  Selection shuffled = sel;
  for (std::size_t s = 0; s < perm.size(); ++s) {
    shuffled.batch.slots[s] = sel.batch.slots[perm[s]];
    for (std::size_t k = 0; k < kFrames; ++k) shuffled.mask.bits.set(s, k, sel.mask.bits(perm[s], k));
  }
  const TemporalOutput after = encode(shuffled);
  for (std::size_t s = 0; s < perm.size(); ++s) {
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(after.features(s, c), before.features(perm[s], c));
  }
}

TEST_F(EncoderTest, NormalizedCoordinatesStayInUnitBox) {
  Rng rng(7);
  const Selection sel = random_selection(rng, 5);
  for (std::size_t s = 0; s < 5; ++s) {
    const Tensor2D coords = encoder_.coordinate_inputs(sel.batch.slots[s]);
    for (double v : coords.data()) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  }
  const Tensor2D corner = encoder_.coordinate_inputs(
      InstanceSlot{"x", Category::kOther, std::vector<PointBEV>(kFrames, PointBEV{50, -25}), true, 1.0});
  EXPECT_DOUBLE_EQ(corner(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(corner(0, 1), -1.0);
}

TEST_F(EncoderTest, RejectsMismatchedMask) {
  Rng rng(8);
  Selection sel = random_selection(rng, 2);
  sel.mask.bits = BoolGrid(kSlots, kFrames + 1);
  EXPECT_THROW(encode(sel), NumericError);
}

}  // namespace
}  // namespace tfm
