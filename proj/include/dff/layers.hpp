#pragma once

#include <cstddef>
#include <string>

#include "dff/autograd.hpp"
#include "dff/module.hpp"

namespace dff {

template <typename T>
struct LayerNormParams {
  Tensor<T> scale;
  Tensor<T> shift;
  T epsilon = T(1e-6);
};

/// StarReLU default init gives unit output variance for z ~ N(0, 1):
/// E[relu(z)^2] = 1/2 and Var[relu(z)^2] = 3/2 - 1/4 = 5/4.
inline constexpr double kStarReluScale = 0.8944271909999159;   // 1 / sqrt(1.25)
inline constexpr double kStarReluBias = -0.4472135954999579;   // -0.5 / sqrt(1.25)

template <typename T>
struct StarReLUParams {
  T s = T(kStarReluScale);
  T b = T(kStarReluBias);
};

// Pure forward kernels on channel-last tensors.

/// Normalizes over the last axis.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const LayerNormParams<T>& p);
template <typename T>
Tensor<T> star_relu(const Tensor<T>& x, const StarReLUParams<T>& p);
/// x [B, H, W, Cin] times w [Cin, Cout]; no bias.
template <typename T>
Tensor<T> pointwise_conv(const Tensor<T>& x, const Tensor<T>& w);
/// Per-channel cross-correlation of x [B, H, W, C] with k [C, Kh, Kw], stride 1,
/// zero padding (K-1)/2. Kernel extents must be odd.
template <typename T>
Tensor<T> depthwise_conv(const Tensor<T>& x, const Tensor<T>& k);
/// Dense strided conv: x [B, H, W, Cin], w [K, K, Cin, Cout].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride, std::size_t padding);
/// [B, H, W, C] -> [B, C]
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

// Differentiable versions.

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> scale, Var<T> shift, T epsilon);
template <typename T>
Var<T> star_relu(Var<T> x, Var<T> s, Var<T> b);
template <typename T>
Var<T> squared_relu(Var<T> x);
template <typename T>
Var<T> relu(Var<T> x);
template <typename T>
Var<T> gelu(Var<T> x);
template <typename T>
Var<T> depthwise_conv(Var<T> x, Var<T> k);
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, std::size_t stride, std::size_t padding);
template <typename T>
Var<T> global_avg_pool(Var<T> x);

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding);

/// Truncated-normal std used for every real weight matrix.
inline constexpr double kWeightInitStd = 0.02;

// Parameterized building blocks.

template <typename T>
struct LayerNorm {
  static LayerNorm create(Registrar<T>& reg, const std::string& prefix, std::size_t channels);
  Var<T> operator()(Var<T> x) const;

  Parameter<T>* scale = nullptr;
  Parameter<T>* shift = nullptr;
  T epsilon = T(1e-6);
};

enum class Activation { StarReLU, ReLU, GELU, SquaredReLU };

Activation parse_activation(const std::string& name);

template <typename T>
struct ActivationLayer {
  static ActivationLayer create(Registrar<T>& reg, const std::string& prefix, Activation kind);
  Var<T> operator()(Var<T> x) const;

  Activation kind = Activation::StarReLU;
  Parameter<T>* s = nullptr;  // StarReLU only
  Parameter<T>* b = nullptr;
};

/// Bias-free unless `with_bias`.
template <typename T>
struct Linear {
  static Linear create(Registrar<T>& reg, const std::string& prefix, std::size_t in, std::size_t out,
                       bool with_bias = false);
  Var<T> operator()(Var<T> x) const;

  Parameter<T>* weight = nullptr;
  Parameter<T>* bias = nullptr;
};

template <typename T>
struct DepthwiseConv {
  static DepthwiseConv create(Registrar<T>& reg, const std::string& prefix, std::size_t channels,
                              std::size_t kernel);
  Var<T> operator()(Var<T> x) const;

  Parameter<T>* kernel = nullptr;
};

template <typename T>
struct Conv2d {
  static Conv2d create(Registrar<T>& reg, const std::string& prefix, std::size_t in, std::size_t out,
                       std::size_t kernel, std::size_t stride, std::size_t padding);
  Var<T> operator()(Var<T> x) const;

  Parameter<T>* weight = nullptr;
  Parameter<T>* bias = nullptr;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Learnable per-channel multiplier, initialized to 1.
template <typename T>
struct ResScale {
  static ResScale create(Registrar<T>& reg, const std::string& prefix, std::size_t channels);
  Var<T> operator()(Var<T> x) const;

  Parameter<T>* scale = nullptr;
};

}  // namespace dff
