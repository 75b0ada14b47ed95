#pragma once

// Brute-force reference implementations shared by the tests, the acceptance
// runner and the oracle subcommand. None of them call the fast paths.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "dff/mixers.hpp"
#include "dff/tensor.hpp"

namespace dff::oracle {

using cd = std::complex<double>;

// Direct orthonormal 2D DFT of a single H x W plane, evaluated in long double.
inline std::vector<cd> direct_dft(const Tensor<double>& x, std::size_t H, std::size_t W) {
  std::vector<cd> out(H * W);
  const long double two_pi = 2.0L * std::numbers::pi_v<long double>;
  for (std::size_t u = 0; u < H; ++u) {
    for (std::size_t v = 0; v < W; ++v) {
      long double re = 0, im = 0;
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t w = 0; w < W; ++w) {
          const long double phase =
              -two_pi * (static_cast<long double>((u * h) % H) / H + static_cast<long double>((v * w) % W) / W);
          re += x[h * W + w] * std::cos(phase);
          im += x[h * W + w] * std::sin(phase);
        }
      }
      const long double s = 1.0L / std::sqrt(static_cast<long double>(H * W));
      out[u * W + v] = cd(static_cast<double>(re * s), static_cast<double>(im * s));
    }
  }
  return out;
}

// Direct inverse from a half spectrum: conjugate-symmetric completion, real part.
inline std::vector<double> direct_idft_half(const ComplexTensor<double>& X, std::size_t H, std::size_t W) {
  const std::size_t Wh = W / 2 + 1;
  std::vector<cd> full(H * W);
  for (std::size_t u = 0; u < H; ++u) {
    for (std::size_t v = 0; v < W; ++v) {
      full[u * W + v] = v < Wh ? X[u * Wh + v] : std::conj(X[((H - u) % H) * Wh + (W - v)]);
    }
  }
  std::vector<double> out(H * W);
  const long double two_pi = 2.0L * std::numbers::pi_v<long double>;
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t w = 0; w < W; ++w) {
      long double acc = 0;
      for (std::size_t u = 0; u < H; ++u) {
        for (std::size_t v = 0; v < W; ++v) {
          const long double phase =
              two_pi * (static_cast<long double>((u * h) % H) / H + static_cast<long double>((v * w) % W) / W);
          acc += full[u * W + v].real() * std::cos(phase) - full[u * W + v].imag() * std::sin(phase);
        }
      }
      out[h * W + w] = static_cast<double>(acc / std::sqrt(static_cast<long double>(H * W)));
    }
  }
  return out;
}

inline std::vector<double> cyclic_convolution(const Tensor<double>& x, const Tensor<double>& k, std::size_t H, std::size_t W) {
  std::vector<double> out(H * W, 0.0);
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t w = 0; w < W; ++w)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) out[h * W + w] += x[i * W + j] * k[((h + H - i) % H) * W + (w + W - j) % W];
  return out;
}

// Catmull-Rom cubic written out in expanded form.
inline double catmull_rom(double t) {
  t = std::abs(t);
  if (t <= 1) return 1.5 * t * t * t - 2.5 * t * t + 1.0;
  if (t < 2) return -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0;
  return 0.0;
}

/// Direct per-pixel bicubic evaluation of plane [H, W] at [newH, newW]
/// with half-pixel centers and clamped borders.
inline std::vector<double> bicubic_dense(const std::vector<double>& plane, std::size_t H, std::size_t W,
                                         std::size_t newH, std::size_t newW) {
  std::vector<double> out(newH * newW, 0.0);
  for (std::size_t oy = 0; oy < newH; ++oy) {
    const double sy = (oy + 0.5) * static_cast<double>(H) / static_cast<double>(newH) - 0.5;
    for (std::size_t ox = 0; ox < newW; ++ox) {
      const double sx = (ox + 0.5) * static_cast<double>(W) / static_cast<double>(newW) - 0.5;
      double acc = 0;
      for (long ty = static_cast<long>(std::floor(sy)) - 1; ty <= static_cast<long>(std::floor(sy)) + 2; ++ty) {
        for (long tx = static_cast<long>(std::floor(sx)) - 1; tx <= static_cast<long>(std::floor(sx)) + 2; ++tx) {
          const long cy = std::min<long>(std::max<long>(ty, 0), static_cast<long>(H) - 1);
          const long cx = std::min<long>(std::max<long>(tx, 0), static_cast<long>(W) - 1);
          acc += catmull_rom(sy - ty) * catmull_rom(sx - tx) * plane[cy * W + cx];
        }
      }
      out[oy * newW + ox] = acc;
    }
  }
  return out;
}

/// softmax(Q K^T / sqrt(d)) V per head, then the output projection, on a
/// single sample of L tokens x [L, C].
inline std::vector<double> dense_attention(const std::vector<double>& x, std::size_t L, std::size_t C,
                                           std::size_t heads, const Tensor<double>& wq, const Tensor<double>& wk,
                                           const Tensor<double>& wv, const Tensor<double>& wo,
                                           const Tensor<double>& bias) {
  auto project = [&](const Tensor<double>& w) {
    std::vector<double> out(L * C, 0.0);
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t o = 0; o < C; ++o)
        for (std::size_t i = 0; i < C; ++i) out[l * C + o] += x[l * C + i] * w(i, o);
    return out;
  };
  auto q = project(wq), k = project(wk), v = project(wv);
  const std::size_t d = C / heads;
  std::vector<double> ctx(L * C, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < L; ++i) {
      std::vector<double> p(L);
      double z = 0;
      for (std::size_t j = 0; j < L; ++j) {
        double dot = 0;
        for (std::size_t e = 0; e < d; ++e) dot += q[i * C + h * d + e] * k[j * C + h * d + e];
        p[j] = std::exp(dot / std::sqrt(static_cast<double>(d)));
        z += p[j];
      }
      for (std::size_t j = 0; j < L; ++j)
        for (std::size_t e = 0; e < d; ++e) ctx[i * C + h * d + e] += p[j] / z * v[j * C + h * d + e];
    }
  }
  std::vector<double> out(L * C, 0.0);
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t o = 0; o < C; ++o) {
      out[l * C + o] = bias[o];
      for (std::size_t i = 0; i < C; ++i) out[l * C + o] += ctx[l * C + i] * wo(i, o);
    }
  return out;
}

/// Unbiased HSIC evaluated term by term on explicit matrices: X [n, dx], Y [n, dy].
inline long double scalar_hsic(const std::vector<double>& X, std::size_t dx, const std::vector<double>& Y,
                               std::size_t dy, std::size_t n) {
  std::vector<long double> K(n * n, 0.0L), L(n * n, 0.0L);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      for (std::size_t e = 0; e < dx; ++e) K[i * n + j] += static_cast<long double>(X[i * dx + e]) * X[j * dx + e];
      for (std::size_t e = 0; e < dy; ++e) L[i * n + j] += static_cast<long double>(Y[i * dy + e]) * Y[j * dy + e];
    }
  // KL = K~ L~ as a full matrix product.
  std::vector<long double> KL(n * n, 0.0L);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t m = 0; m < n; ++m) KL[i * n + j] += K[i * n + m] * L[m * n + j];
  long double trace = 0, ones_k = 0, ones_l = 0, ones_kl = 0;
  for (std::size_t i = 0; i < n; ++i) trace += KL[i * n + i];
  for (std::size_t i = 0; i < n * n; ++i) {
    ones_k += K[i];
    ones_l += L[i];
    ones_kl += KL[i];
  }
  const long double nn = static_cast<long double>(n);
  return (trace + ones_k * ones_l / ((nn - 1) * (nn - 2)) - 2.0L / (nn - 2) * ones_kl) / (nn * (nn - 3));
}

/// Dynamic filter evaluated one basis filter at a time: each K_i is applied
/// as a static global filter to the premapped features, the outputs are
/// mixed with the routed coefficients, then projected by pw2.
inline Tensor<double> decomposed_dynamic_filter(const DynamicFilter<double>& df, const Tensor<double>& x) {
  Tape<double> tape(GradMode::Disabled);
  auto xv = tape.constant(x);
  const auto features = df.premap(xv);
  const Tensor<double> coeffs = df.route(xv).value();
  const auto& basis = df.basis->value;
  const std::size_t B = x.extent(0), H = x.extent(1), W = x.extent(2);
  const std::size_t N = basis.extent(2), Wh = basis.extent(1), Cm = features.shape()[3];
  Tensor<double> mixed(features.shape());
  for (std::size_t i = 0; i < N; ++i) {
    Tensor<double> k({H, Wh, Cm, 2});
    for (std::size_t p = 0; p < H * Wh; ++p)
      for (std::size_t c = 0; c < Cm; ++c)
        for (std::size_t r = 0; r < 2; ++r) k[(p * Cm + c) * 2 + r] = basis[(p * N + i) * 2 + r];
    const auto single = global_filter(features, tape.constant(k)).value();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t p = 0; p < H * W; ++p)
        for (std::size_t c = 0; c < Cm; ++c)
          mixed[(b * H * W + p) * Cm + c] += coeffs(b, i, c) * single[(b * H * W + p) * Cm + c];
  }
  return df.pw2(tape.constant(mixed)).value();
}


}  // namespace dff::oracle
