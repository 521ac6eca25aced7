// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "test_support.hpp"
#include "tfm/error.hpp"
#include "tfm/grad_check.hpp"
#include "tfm/gradient_suite.hpp"
#include "tfm/layers.hpp"
#include "tfm/tensor_io.hpp"

namespace tfm {
namespace {

using testing::random_matrix;
using testing::TempDir;

TEST(Tensor, MatmulVariantsAgree) {
  Rng rng(1);
  const Tensor2D a = random_matrix(rng, 3, 4), b = random_matrix(rng, 4, 5), c = random_matrix(rng, 3, 5);
  EXPECT_LE(max_abs_diff(matmul_tn(transpose(a), b), matmul(a, b)), 1e-14);
  EXPECT_LE(max_abs_diff(matmul_nt(a, transpose(b)), matmul(a, b)), 1e-14);
  EXPECT_THROW(matmul(a, c), NumericError);
}

TEST(Tensor, RejectsBadDataLength) { EXPECT_THROW(Tensor2D(2, 2, std::vector<double>(3)), NumericError); }

TEST(Linear, AffineMap) {
  ParamStore store(0);
  const Linear lin("lin", 2, 3);
  lin.declare(store);
  store.mutable_value("lin.w") = Tensor2D(2, 3, {1, 2, 3, 4, 5, 6});
  store.mutable_value("lin.b") = Tensor2D(1, 3, {0.5, -0.5, 1});
  const Tensor2D y = lin.forward(store, Tensor2D(1, 2, {1, -1}));
  EXPECT_EQ(y, Tensor2D(1, 3, {-2.5, -3.5, -2}));
}

TEST(Linear, WithoutBiasDeclaresOnlyWeights) {
  ParamStore store(0);
  const Linear lin("nobias", 3, 3, Init::kGlorotUniform, false);
  lin.declare(store);
  EXPECT_TRUE(store.contains("nobias.w"));
  EXPECT_EQ(store.params().size(), 1u);
  EXPECT_TRUE(lin.bias_name().empty());
}

TEST(LayerNorm, ReferenceValues) {
  ParamStore store(0);
  const LayerNorm norm("ln", 4);
  norm.declare(store);
  LayerNorm::Cache cache;
  const Tensor2D y = norm.forward(store, Tensor2D(1, 4, {1, 2, 4, -1}), cache);
  EXPECT_NEAR(y(0, 0), -0.2773496714211406, 1e-12);
  EXPECT_NEAR(y(0, 1), 0.2773496714211406, 1e-12);
  EXPECT_NEAR(y(0, 2), 1.3867483571057029, 1e-12);
  EXPECT_NEAR(y(0, 3), -1.3867483571057029, 1e-12);
}

TEST(Gelu, ReferenceValues) {
  EXPECT_NEAR(gelu(0.5), 0.34571400982514394, 1e-14);
  EXPECT_NEAR(gelu(-1.2), -0.13829723086213508, 1e-14);
  EXPECT_EQ(gelu(0.0), 0.0);
}

TEST(GradCheck, SquareAtThree) {
  const auto r = grad_check_scalar([](double x) { return x * x; }, [](double x) { return 2 * x; }, 3.0, 1e-3);
  EXPECT_NEAR(r.numeric, 6.0, 1e-8);
  EXPECT_LT(r.max_relative_error, 1e-8);
}

TEST(GradCheck, BothStencilsAgreeOnCubic) {
  const auto f = [](double x) { return x * x * x; };
  const auto df = [](double x) { return 3 * x * x; };
  EXPECT_LT(grad_check_scalar(f, df, 1.5, 1e-3, Stencil::kTwoPoint).max_relative_error, 1e-6);
  EXPECT_LT(grad_check_scalar(f, df, 1.5, 1e-3, Stencil::kFourPoint).max_relative_error, 1e-10);
}

TEST(GradCheck, FlagsAWrongGradient) {
  const auto r = grad_check_scalar([](double x) { return std::sin(x); }, [](double x) { return std::cos(x) + 0.01; },
                                   0.4, 1e-3);
  EXPECT_GT(r.max_relative_error, 1e-3);
}

TEST(GradientSuite, EveryCasePasses) {
  for (std::uint64_t seed : {0u, 1u}) {
    for (const CaseReport& report : run_gradient_suite(seed)) {
      EXPECT_LT(report.result.max_relative_error, 1e-4) << report.name << " seed " << seed;
      EXPECT_GT(report.coordinates, 0u) << report.name;
    }
  }
}

TEST(ParamStore, InitDependsOnlyOnSeedNameAndShape) {
  ParamStore a(5), b(5), c(6);
  a.declare("x.w", 3, 4, Init::kGlorotUniform);
  a.declare("y.w", 4, 4, Init::kGlorotUniform);
  b.declare("y.w", 4, 4, Init::kGlorotUniform);
  b.declare("x.w", 3, 4, Init::kGlorotUniform);
  c.declare("x.w", 3, 4, Init::kGlorotUniform);
  EXPECT_EQ(a.value("x.w"), b.value("x.w"));
  EXPECT_EQ(a.value("y.w"), b.value("y.w"));
  EXPECT_NE(a.value("x.w"), c.value("x.w"));
  EXPECT_NE(a.value("x.w"), slice_rows(a.value("y.w"), 0, 3));
}

TEST(ParamStore, GlorotBound) {
  ParamStore store(1);
  store.declare("w", 30, 50, Init::kGlorotUniform);
  const double bound = std::sqrt(6.0 / 80.0);
  for (double v : store.value("w").data()) EXPECT_LE(std::abs(v), bound);
}

TEST(ParamStore, RedeclareWithOtherShapeThrows) {
  ParamStore store(1);
  store.declare("w", 2, 2, Init::kZeros);
  EXPECT_NO_THROW(store.declare("w", 2, 2, Init::kZeros));
  EXPECT_THROW(store.declare("w", 2, 3, Init::kZeros), ConfigError);
}

TEST(ParamStore, SgdClipsByGlobalNorm) {
  ParamStore store(1);
  store.declare("a", 1, 1, Init::kZeros);
  store.declare("b", 1, 1, Init::kZeros);
  store.grad("a")(0, 0) = 3.0;
  store.grad("b")(0, 0) = 4.0;
  EXPECT_DOUBLE_EQ(store.grad_norm(), 5.0);
  store.sgd_step(1.0, 1.0);
  EXPECT_NEAR(store.value("a")(0, 0), -0.6, 1e-15);
  EXPECT_NEAR(store.value("b")(0, 0), -0.8, 1e-15);
  store.sgd_step(0.5, 0.0);
  EXPECT_NEAR(store.value("a")(0, 0), -2.1, 1e-15);
  store.zero_grad();
  EXPECT_EQ(store.grad_norm(), 0.0);
}

TEST(TensorIo, RoundTripsBitExact) {
  Rng rng(2);
  NamedTensor rank3{"cube", {2, 1, 3}, {1, 2, 3, 4, 5, 6}};
  const std::vector<NamedTensor> tensors = {NamedTensor::from_matrix("m", random_matrix(rng, 3, 5)), rank3,
                                            NamedTensor::from_matrix("", Tensor2D(0, 4))};
  std::stringstream ss;
  write_tensors(ss, tensors);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 4), "TFM1");
  const auto back = read_tensors(ss);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].name, tensors[i].name);
    EXPECT_EQ(back[i].dims, tensors[i].dims);
    EXPECT_EQ(back[i].values, tensors[i].values);
  }
}

TEST(TensorIo, LittleEndianLayout) {
  std::stringstream ss;
  write_tensors(ss, {NamedTensor{"ab", {1}, {1.0}}});
  const std::string b = ss.str();
  // magic, u32 count=1, u16 len=2, "ab", u8 rank=1, u64 dim=1, f64 1.0
  ASSERT_EQ(b.size(), 4u + 4 + 2 + 2 + 1 + 8 + 8);
  EXPECT_EQ(static_cast<unsigned char>(b[4]), 1);
  EXPECT_EQ(static_cast<unsigned char>(b[8]), 2);
  EXPECT_EQ(b.substr(10, 2), "ab");
  EXPECT_EQ(static_cast<unsigned char>(b[12]), 1);
  EXPECT_EQ(static_cast<unsigned char>(b[13]), 1);
  EXPECT_EQ(static_cast<unsigned char>(b[b.size() - 1]), 0x3f);
  EXPECT_EQ(static_cast<unsigned char>(b[b.size() - 2]), 0xf0);
}

TEST(TensorIo, RejectsBadMagicAndTruncation) {
  std::stringstream bad("XXXX\x01\x00\x00\x00");
  EXPECT_THROW(read_tensors(bad), InputError);
  std::stringstream ss;
  write_tensors(ss, {NamedTensor::from_matrix("m", Tensor2D(2, 2, 1.0))});
  std::stringstream cut(ss.str().substr(0, ss.str().size() - 3));
  EXPECT_THROW(read_tensors(cut), InputError);
}

TEST(TensorIo, ParamsSaveAndLoad) {
  TempDir dir("params");
  ParamStore a(1), b(2);
  for (ParamStore* s : {&a, &b}) {
    s->declare("p.w", 3, 3, Init::kGlorotUniform);
    s->declare("p.b", 1, 3, Init::kZeros);
  }
  save_params(dir / "w.bin", a);
  load_params_into(dir / "w.bin", b);
  EXPECT_EQ(a.value("p.w"), b.value("p.w"));

  ParamStore other(3);
  other.declare("q.w", 3, 3, Init::kZeros);
  EXPECT_THROW(load_params_into(dir / "w.bin", other), InputError);
  EXPECT_THROW(find_tensor(load_tensors(dir / "w.bin"), "missing"), InputError);
}

}  // namespace
}  // namespace tfm
