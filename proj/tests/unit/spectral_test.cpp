#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "dff/spectral.hpp"
#include "dff/oracle.hpp"
#include "test_support.hpp"

namespace dff {
namespace {

using cd = std::complex<double>;
using oracle::cyclic_convolution;
using oracle::direct_dft;
using oracle::direct_idft_half;
using testing::grad_check;
using testing::probe_loss;
using testing::random_tensor;

TEST(Rfft2, ImpulseGivesFlatSpectrum) {
  Tensor<double> x({4, 4});
  x[0] = 1;
  auto X = rfft2(x, plan_for<double>(4, 4));
  ASSERT_EQ(X.shape(), (Shape{4, 3}));
  for (auto v : X.data()) {
    EXPECT_NEAR(v.real(), 0.25, 1e-15);
    EXPECT_NEAR(v.imag(), 0.0, 1e-15);
  }
}

TEST(Rfft2, ConstantGivesDcOnly) {
  auto X = rfft2(Tensor<double>::full({2, 2}, 1.0), plan_for<double>(2, 2));
  EXPECT_NEAR(X(0, 0).real(), 2.0, 1e-15);
  EXPECT_NEAR(X(0, 0).imag(), 0.0, 1e-15);
  for (std::size_t i = 1; i < X.size(); ++i) EXPECT_NEAR(std::abs(X[i]), 0.0, 1e-15);
}

TEST(Irfft2, DcOnlyGivesConstant) {
  ComplexTensor<double> X({2, 2});
  X(0, 0) = 2.0;
  auto x = irfft2(X, plan_for<double>(2, 2));
  for (double v : x.data()) EXPECT_NEAR(v, 1.0, 1e-15);
}

TEST(Rfft2, PlanMismatchIsPlanError) {
  EXPECT_THROW(rfft2(Tensor<double>({4, 5}), plan_for<double>(4, 4)), PlanError);
  EXPECT_THROW(irfft2(ComplexTensor<double>({4, 4}), plan_for<double>(4, 4)), PlanError);
}

class SpectralSizes : public ::testing::TestWithParam<std::pair<std::size_t, std::size_t>> {};

TEST_P(SpectralSizes, ForwardMatchesDirectDft) {
  const auto [H, W] = GetParam();
  Rng rng(H * 100 + W);
  auto x = random_tensor({H, W}, rng);
  auto X = rfft2(x, plan_for<double>(H, W));
  auto ref = direct_dft(x, H, W);
  const std::size_t Wh = W / 2 + 1;
  for (std::size_t u = 0; u < H; ++u)
    for (std::size_t v = 0; v < Wh; ++v) EXPECT_LT(std::abs(X(u, v) - ref[u * W + v]), 1e-10) << u << "," << v;
}

TEST_P(SpectralSizes, InverseMatchesDirectInverse) {
  const auto [H, W] = GetParam();
  Rng rng(H * 31 + W);
  const std::size_t Wh = W / 2 + 1;
  ComplexTensor<double> X({H, Wh});
  for (auto& v : X.data()) v = cd(rng.normal(), rng.normal());
  auto x = irfft2(X, plan_for<double>(H, W));
  auto ref = direct_idft_half(X, H, W);
  for (std::size_t i = 0; i < H * W; ++i) EXPECT_NEAR(x[i], ref[i], 1e-10);
}

TEST_P(SpectralSizes, RoundTripIsIdentity) {
  const auto [H, W] = GetParam();
  Rng rng(H * 7 + W);
  auto x = random_tensor({3, H, W}, rng);
  const auto& plan = plan_for<double>(H, W);
  EXPECT_LT(max_abs_diff(irfft2(rfft2(x, plan), plan), x), 1e-12);
}

TEST_P(SpectralSizes, ParsevalWithHermitianMultiplicity) {
  const auto [H, W] = GetParam();
  Rng rng(H * 13 + W);
  auto x = random_tensor({H, W}, rng);
  auto X = rfft2(x, plan_for<double>(H, W));
  const std::size_t Wh = W / 2 + 1;
  double energy = 0, spectral = 0;
  for (double v : x.data()) energy += v * v;
  for (std::size_t u = 0; u < H; ++u) {
    for (std::size_t v = 0; v < Wh; ++v) {
      const bool self_mirrored = v == 0 || (W % 2 == 0 && v == W / 2);
      spectral += (self_mirrored ? 1.0 : 2.0) * std::norm(X(u, v));
    }
  }
  EXPECT_NEAR(spectral, energy, 1e-10 * energy);
}

TEST_P(SpectralSizes, Linearity) {
  const auto [H, W] = GetParam();
  Rng rng(H * 17 + W);
  auto x = random_tensor({H, W}, rng);
  auto y = random_tensor({H, W}, rng);
  const double a = 0.7, b = -1.9;
  const auto& plan = plan_for<double>(H, W);
  auto lhs = rfft2(add(scaled(x, a), scaled(y, b)), plan);
  auto X = rfft2(x, plan), Y = rfft2(y, plan);
  for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_LT(std::abs(lhs[i] - (a * X[i] + b * Y[i])), 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Sizes, SpectralSizes,
                         ::testing::Values(std::pair<std::size_t, std::size_t>{2, 2}, std::pair<std::size_t, std::size_t>{4, 4},
                                           std::pair<std::size_t, std::size_t>{7, 7}, std::pair<std::size_t, std::size_t>{7, 5},
                                           std::pair<std::size_t, std::size_t>{5, 7}, std::pair<std::size_t, std::size_t>{6, 6},
                                           std::pair<std::size_t, std::size_t>{14, 14}, std::pair<std::size_t, std::size_t>{1, 9},
                                           std::pair<std::size_t, std::size_t>{12, 3}));

TEST(ConvolutionTheorem, SpectralProductIsScaledCyclicConvolution) {
  for (std::size_t n : {7u, 8u}) {
    Rng rng(n);
    auto x = random_tensor({n, n}, rng);
    auto k = random_tensor({n, n}, rng);
    const auto& plan = plan_for<double>(n, n);
    auto X = rfft2(x, plan), K = rfft2(k, plan);
    for (std::size_t i = 0; i < X.size(); ++i) X[i] *= K[i];
    // Orthonormal scaling puts 1/sqrt(HW) on each of the three transforms;
    // the cyclic convolution carries none, hence the sqrt(HW) factor.
    auto y = scaled(irfft2(X, plan), std::sqrt(static_cast<double>(n * n)));
    auto ref = cyclic_convolution(x, k, n, n);
    for (std::size_t i = 0; i < n * n; ++i) EXPECT_NEAR(y[i], ref[i], 1e-10);
  }
}

TEST(NaiveOracle, AgreesWithDirectDft) {
  Rng rng(42);
  auto x = random_tensor({2, 5, 6}, rng);
  auto X = naive_rfft2(x);
  ASSERT_EQ(X.shape(), (Shape{2, 5, 4}));
  Tensor<double> plane({5, 6});
  std::copy(x.ptr() + 30, x.ptr() + 60, plane.ptr());
  auto ref = direct_dft(plane, 5, 6);
  for (std::size_t u = 0; u < 5; ++u)
    for (std::size_t v = 0; v < 4; ++v) EXPECT_LT(std::abs(X(1, u, v) - ref[u * 6 + v]), 1e-12);
  auto back = naive_irfft2(X, 6);
  EXPECT_LT(max_abs_diff(back, x), 1e-12);
}

TEST(Fft1d, BluesteinMatchesDirectForPrimeLength) {
  const std::size_t n = 97;
  Rng rng(97);
  std::vector<cd> data(n);
  for (auto& v : data) v = cd(rng.normal(), rng.normal());
  auto ref = data;
  Fft1d<double>(n).transform(data, false);
  for (std::size_t k = 0; k < n; ++k) {
    cd acc = 0;
    for (std::size_t j = 0; j < n; ++j) acc += ref[j] * std::polar(1.0, -2.0 * std::numbers::pi * ((j * k) % n) / n);
    EXPECT_LT(std::abs(data[k] - acc), 1e-10);
  }
}

TEST(Spectral, FloatPlanIsClose) {
  Rng rng(3);
  auto x = random_tensor({7, 7}, rng);
  auto xf = cast<float>(x);
  auto Xf = rfft2(xf, plan_for<float>(7, 7));
  auto X = rfft2(x, plan_for<double>(7, 7));
  for (std::size_t i = 0; i < X.size(); ++i) EXPECT_LT(std::abs(cd(Xf[i]) - X[i]), 1e-5);
}

TEST(SpectralGradients, ChannelsLastTransformsAndProduct) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    for (auto [H, W] : {std::pair<std::size_t, std::size_t>{4, 6}, {5, 5}, {3, 4}}) {
      Rng rng(seed * 1000 + H * 10 + W);
      ParameterStore<double> store;
      auto& x = store.add("x", random_tensor({2, H, W, 3}, rng));
      auto& k = store.add("k", random_tensor({H, W / 2 + 1, 3, 2}, rng), true);
      auto& s = store.add("s", random_tensor({2, H, W / 2 + 1, 3, 2}, rng), true);
      auto loss = [&](Tape<double>& t) {
        auto X = rfft2_channels_last(t.parameter(x));
        auto Y = complex_multiply(add(X, t.parameter(s)), t.parameter(k));
        return probe_loss(irfft2_channels_last(Y, W), seed);
      };
      auto report = grad_check(loss, {&x, &k, &s});
      EXPECT_LT(report.max_error, 1e-5) << H << "x" << W;
    }
  }
}

TEST(SpectralGradients, ChannelsLastMatchesPlaneTransform) {
  Rng rng(77);
  auto x = random_tensor({1, 5, 6, 2}, rng);
  Tape<double> tape(GradMode::Disabled);
  auto X = rfft2_channels_last(tape.constant(x));
  ASSERT_EQ(X.shape(), (Shape{1, 5, 4, 2, 2}));
  Tensor<double> plane({5, 6});
  for (std::size_t i = 0; i < 30; ++i) plane[i] = x[i * 2 + 1];
  auto ref = rfft2(plane, plan_for<double>(5, 6));
  for (std::size_t u = 0; u < 5; ++u) {
    for (std::size_t v = 0; v < 4; ++v) {
      EXPECT_NEAR(X.value()(0, u, v, 1, 0), ref(u, v).real(), 1e-14);
      EXPECT_NEAR(X.value()(0, u, v, 1, 1), ref(u, v).imag(), 1e-14);
    }
  }
}

TEST(FftCount, ButterfliesGrowAsNLogN) {
  for (std::size_t n : {8u, 16u, 32u}) {
    reset_fft_butterfly_count();
    rfft2(Tensor<double>({n, n}), plan_for<double>(n, n));
    EXPECT_GT(fft_butterfly_count(), 0u);
  }
}

}  // namespace
}  // namespace dff
