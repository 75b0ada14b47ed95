#include <gtest/gtest.h>

#include <cmath>

#include "dff/layers.hpp"
#include "test_support.hpp"

namespace dff {
namespace {

using testing::grad_check;
using testing::probe_loss;
using testing::random_tensor;

LayerNormParams<double> unit_norm(std::size_t C) {
  return {Tensor<double>::full({C}, 1.0), Tensor<double>({C}), 1e-6};
}

TEST(LayerNorm, ConstantRowGivesZeros) {
  auto y = layer_norm(Tensor<double>::full({1, 4}, 1.0), unit_norm(4));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, SymmetricPair) {
  auto y = layer_norm(Tensor<double>({2}, {-1, 1}), unit_norm(2));
  EXPECT_NEAR(y[0], -1.0, 1e-6);
  EXPECT_NEAR(y[1], 1.0, 1e-6);
}

TEST(LayerNorm, RowStatistics) {
  Rng rng(12);
  auto x = random_tensor({8, 32}, rng, 3.0);
  auto y = layer_norm(x, unit_norm(32));
  for (std::size_t r = 0; r < 8; ++r) {
    double mu = 0, var = 0;
    for (std::size_t c = 0; c < 32; ++c) mu += y(r, c);
    mu /= 32;
    for (std::size_t c = 0; c < 32; ++c) var += (y(r, c) - mu) * (y(r, c) - mu);
    var /= 32;
    EXPECT_LT(std::abs(mu), 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-6);
  }
}

TEST(LayerNorm, ShiftInvariantPerPixel) {
  Rng rng(13);
  auto x = random_tensor({6, 16}, rng);
  auto shifted = x;
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 16; ++c) shifted(r, c) += 2.5 * static_cast<double>(r + 1);
  EXPECT_LT(max_abs_diff(layer_norm(x, unit_norm(16)), layer_norm(shifted, unit_norm(16))), 1e-10);
}

TEST(LayerNorm, ChannelMismatchIsShapeError) {
  EXPECT_THROW(layer_norm(Tensor<double>({2, 5}), unit_norm(4)), ShapeError);
}

TEST(StarRelu, DeadRegionGivesBias) {
  StarReLUParams<double> p{0.7, -0.3};
  auto y = star_relu(Tensor<double>({3}, {-2.0, -0.1, 0.0}), p);
  for (double v : y.data()) EXPECT_EQ(v, -0.3);
}

TEST(StarRelu, UnitScaleAtOne) {
  auto y = star_relu(Tensor<double>({1}, {1.0}), StarReLUParams<double>{1.0, 0.0});
  EXPECT_EQ(y[0], 1.0);
}

TEST(StarRelu, DefaultInitHasUnitMomentsUnderGaussianInput) {
  // E[relu(z)^2] = 1/2 and Var[relu(z)^2] = 3/2 - 1/4; the defaults standardize that.
  EXPECT_NEAR(kStarReluScale, 1.0 / std::sqrt(1.25), 1e-15);
  EXPECT_NEAR(kStarReluBias, -0.5 / std::sqrt(1.25), 1e-15);
  Rng rng(2024);
  auto z = random_tensor({1000000}, rng);
  auto y = star_relu(z, StarReLUParams<double>{});
  double mu = 0, var = 0;
  for (double v : y.data()) mu += v;
  mu /= static_cast<double>(y.size());
  for (double v : y.data()) var += (v - mu) * (v - mu);
  var /= static_cast<double>(y.size());
  EXPECT_NEAR(mu, 0.0, 1e-2);
  EXPECT_NEAR(var, 1.0, 1e-2);
}

TEST(PointwiseConv, IdentityAndZero) {
  Rng rng(3);
  auto x = random_tensor({2, 3, 3, 4}, rng);
  Tensor<double> eye({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye(i, i) = 1;
  EXPECT_EQ(pointwise_conv(x, eye), x);
  auto zero = pointwise_conv(x, Tensor<double>({4, 6}));
  for (double v : zero.data()) EXPECT_EQ(v, 0.0);
}

TEST(PointwiseConv, EqualsFlattenedMatmul) {
  Rng rng(4);
  auto x = random_tensor({2, 3, 5, 4}, rng);
  auto w = random_tensor({4, 7}, rng);
  auto y = pointwise_conv(x, w);
  ASSERT_EQ(y.shape(), (Shape{2, 3, 5, 7}));
  auto ref = matmul(x.reshaped({30, 4}), w);
  EXPECT_LT(max_abs_diff(y.reshaped({30, 7}), ref), 1e-14);
  EXPECT_THROW(pointwise_conv(x, Tensor<double>({3, 7})), ShapeError);
}

Tensor<double> depthwise_oracle(const Tensor<double>& x, const Tensor<double>& k) {
  const std::size_t B = x.extent(0), H = x.extent(1), W = x.extent(2), C = x.extent(3);
  const std::size_t Kh = k.extent(1), Kw = k.extent(2);
  Tensor<double> y(x.shape());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t w = 0; w < W; ++w)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t i = 0; i < Kh; ++i)
            for (std::size_t j = 0; j < Kw; ++j) {
              const long sh = static_cast<long>(h + i) - static_cast<long>(Kh / 2);
              const long sw = static_cast<long>(w + j) - static_cast<long>(Kw / 2);
              if (sh < 0 || sw < 0 || sh >= static_cast<long>(H) || sw >= static_cast<long>(W)) continue;
              y(b, h, w, c) += x(b, sh, sw, c) * k(c, i, j);
            }
  return y;
}

TEST(DepthwiseConv, CenterImpulseIsIdentity) {
  for (std::size_t C : {1u, 3u, 8u}) {
    Rng rng(C);
    auto x = random_tensor({2, 5, 6, C}, rng);
    Tensor<double> k({C, 7, 7});
    for (std::size_t c = 0; c < C; ++c) k(c, 3, 3) = 1;
    EXPECT_EQ(depthwise_conv(x, k), x);
  }
}

TEST(DepthwiseConv, ZeroKernelGivesZeros) {
  Rng rng(5);
  auto y = depthwise_conv(random_tensor({1, 4, 4, 2}, rng), Tensor<double>({2, 3, 3}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(DepthwiseConv, MatchesLoopOracle) {
  Rng rng(6);
  auto x = random_tensor({2, 8, 8, 3}, rng);
  auto k = random_tensor({3, 7, 7}, rng);
  EXPECT_LT(max_abs_diff(depthwise_conv(x, k), depthwise_oracle(x, k)), 1e-12);
}

TEST(DepthwiseConv, EvenKernelIsContractError) {
  EXPECT_THROW(depthwise_conv(Tensor<double>({1, 4, 4, 2}), Tensor<double>({2, 4, 4})), ContractError);
}

TEST(Conv2d, MatchesLoopOracle) {
  Rng rng(7);
  auto x = random_tensor({2, 9, 9, 3}, rng);
  auto w = random_tensor({3, 3, 3, 5}, rng);
  auto y = conv2d(x, w, 2, 1);
  ASSERT_EQ(y.shape(), (Shape{2, 5, 5, 5}));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t oy = 0; oy < 5; ++oy)
      for (std::size_t ox = 0; ox < 5; ++ox)
        for (std::size_t co = 0; co < 5; ++co) {
          double acc = 0;
          for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j)
              for (std::size_t ci = 0; ci < 3; ++ci) {
                const long sy = static_cast<long>(oy * 2 + i) - 1, sx = static_cast<long>(ox * 2 + j) - 1;
                if (sy < 0 || sx < 0 || sy >= 9 || sx >= 9) continue;
                acc += x(b, sy, sx, ci) * w(i, j, ci, co);
              }
          EXPECT_NEAR(y(b, oy, ox, co), acc, 1e-12);
        }
}

TEST(Conv2d, StemGeometry) {
  EXPECT_EQ(conv_output_extent(224, 7, 4, 2), 56u);
  EXPECT_EQ(conv_output_extent(56, 3, 2, 1), 28u);
  EXPECT_EQ(conv_output_extent(14, 3, 2, 1), 7u);
  EXPECT_EQ(conv_output_extent(32, 7, 4, 2), 8u);
}

TEST(GlobalAvgPool, ConstantAndOneHot) {
  auto y = global_avg_pool(Tensor<double>::full({2, 3, 3, 4}, 1.5));
  for (double v : y.data()) EXPECT_EQ(v, 1.5);
  Tensor<double> x({1, 4, 4, 1});
  x(0, 2, 1, 0) = 1.0;
  EXPECT_EQ(global_avg_pool(x)[0], 1.0 / 16.0);
}

TEST(GlobalAvgPool, MatchesDirectSum) {
  Rng rng(8);
  auto x = random_tensor({3, 5, 4, 6}, rng);
  auto y = global_avg_pool(x);
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t c = 0; c < 6; ++c) {
      double acc = 0;
      for (std::size_t h = 0; h < 5; ++h)
        for (std::size_t w = 0; w < 4; ++w) acc += x(b, h, w, c);
      EXPECT_NEAR(y(b, c), acc / 20.0, 1e-14);
    }
}

class LayerGradients : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(LayerGradients, EveryLayerMatchesFiniteDifferences) {
  const auto seed = GetParam();
  Rng rng(seed);
  ParameterStore<double> store;
  auto& x = store.add("x", random_tensor({2, 5, 5, 4}, rng));
  auto& scale = store.add("ln.scale", random_tensor({4}, rng));
  auto& shift = store.add("ln.shift", random_tensor({4}, rng));
  auto& s = store.add("act.s", Tensor<double>::scalar(0.9));
  auto& b = store.add("act.b", Tensor<double>::scalar(-0.4));
  auto& dk = store.add("dw.kernel", random_tensor({4, 3, 3}, rng));
  auto& cw = store.add("conv.weight", random_tensor({3, 3, 4, 3}, rng));
  auto& pw = store.add("pw.weight", random_tensor({4, 4}, rng));

  struct Case {
    const char* name;
    std::function<Var<double>(Tape<double>&)> fn;
    std::vector<Parameter<double>*> params;
  };
  // The inputs are shifted away from the ReLU kinks so central differences
  // never straddle a derivative jump.
  auto px = [&](Tape<double>& t) { return t.parameter(x); };
  const std::vector<Case> cases{
      {"layer_norm",
       [&](Tape<double>& t) {
         return probe_loss(layer_norm(px(t), t.parameter(scale), t.parameter(shift), 1e-6), seed);
       },
       {&x, &scale, &shift}},
      {"star_relu",
       [&](Tape<double>& t) { return probe_loss(star_relu(px(t), t.parameter(s), t.parameter(b)), seed); },
       {&x, &s, &b}},
      {"squared_relu", [&](Tape<double>& t) { return probe_loss(squared_relu(px(t)), seed); }, {&x}},
      {"relu", [&](Tape<double>& t) { return probe_loss(relu(px(t)), seed); }, {&x}},
      {"gelu", [&](Tape<double>& t) { return probe_loss(gelu(px(t)), seed); }, {&x}},
      {"depthwise_conv",
       [&](Tape<double>& t) { return probe_loss(depthwise_conv(px(t), t.parameter(dk)), seed); },
       {&x, &dk}},
      {"conv2d", [&](Tape<double>& t) { return probe_loss(conv2d(px(t), t.parameter(cw), 2, 1), seed); }, {&x, &cw}},
      {"pointwise", [&](Tape<double>& t) { return probe_loss(linear(px(t), t.parameter(pw)), seed); }, {&x, &pw}},
      {"global_avg_pool", [&](Tape<double>& t) { return probe_loss(global_avg_pool(px(t)), seed); }, {&x}},
  };
  for (auto& v : x.value.data()) {
    if (std::abs(v) < 1e-3) v = 0.1;
  }
  for (const auto& c : cases) {
    auto report = grad_check(c.fn, c.params);
    EXPECT_GT(report.probes, 0u) << c.name;
    EXPECT_LT(report.max_error, 1e-5) << c.name;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, LayerGradients, ::testing::Values(21u, 22u, 23u));

TEST(Modules, LayoutRecorderCollectsNamesWithoutAllocating) {
  LayoutRecorder<double> rec;
  auto ln = LayerNorm<double>::create(rec, "n", 8);
  auto fc = Linear<double>::create(rec, "fc", 8, 16, true);
  auto act = ActivationLayer<double>::create(rec, "act", Activation::StarReLU);
  EXPECT_EQ(ln.scale, nullptr);
  ASSERT_EQ(rec.specs().size(), 6u);
  EXPECT_EQ(rec.specs()[0].name, "n.scale");
  EXPECT_EQ(rec.specs()[3].shape, (Shape{16}));
  EXPECT_EQ(rec.specs()[4].name, "act.scale");
  (void)fc;
  (void)act;
}

TEST(Modules, MaterializedInitValues) {
  ParameterStore<double> store;
  Materializer<double> mat(store, Rng(1));
  auto ln = LayerNorm<double>::create(mat, "n", 4);
  auto act = ActivationLayer<double>::create(mat, "act", Activation::StarReLU);
  auto fc = Linear<double>::create(mat, "fc", 64, 64, true);
  auto rs = ResScale<double>::create(mat, "rs", 4);
  EXPECT_EQ(ln.scale->value, Tensor<double>::full({4}, 1.0));
  EXPECT_EQ(ln.shift->value, Tensor<double>({4}));
  EXPECT_EQ(act.s->value[0], kStarReluScale);
  EXPECT_EQ(act.b->value[0], kStarReluBias);
  EXPECT_EQ(rs.scale->value, Tensor<double>::full({4}, 1.0));
  double sq = 0;
  for (double v : fc.weight->value.data()) {
    EXPECT_LE(std::abs(v), 2 * kWeightInitStd);
    sq += v * v;
  }
  // Normal truncated at 2 sigma has variance 0.774 sigma^2.
  EXPECT_NEAR(std::sqrt(sq / 4096.0), kWeightInitStd * std::sqrt(0.7737), 1e-3);
  EXPECT_EQ(fc.bias->value, Tensor<double>({64}));
}

TEST(Modules, ActivationParsing) {
  EXPECT_EQ(parse_activation("starrelu"), Activation::StarReLU);
  EXPECT_EQ(parse_activation("gelu"), Activation::GELU);
  EXPECT_THROW(parse_activation("tanh"), ContractError);
}

}  // namespace
}  // namespace dff
