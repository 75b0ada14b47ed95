#pragma once

#include <cstddef>
#include <string>

#include "dff/layers.hpp"
#include "dff/module.hpp"

namespace dff {

/// Complex filter basis in real-pair layout [H, W/2+1, N, 2], bound to the
/// spatial extents (H, W) it filters.
template <typename T>
struct FilterBasis {
  Tensor<T> weights;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t num_filters() const { return weights.extent(2); }
};

/// Bicubic (Catmull-Rom, a = -0.5, clamped edges) resampling of every basis
/// plane to (new_height, new_width/2+1). Real and imaginary parts are
/// resampled independently.
template <typename T>
FilterBasis<T> interpolate_filter_basis(const FilterBasis<T>& basis, std::size_t new_height, std::size_t new_width);

/// Resamples x [H, W, inner] to [new_h, new_w, inner] with half-pixel centers.
template <typename T>
Tensor<T> bicubic_resample(const Tensor<T>& x, std::size_t new_h, std::size_t new_w);

/// The cubic convolution kernel with a = -0.5.
double cubic_weight(double t);

/// Per-sample filters: out[b, h, w, c] = sum_i coeffs[b, i, c] * basis[h, w, i]
/// (complex), coeffs [B, N, C], basis [H, Wh, N, 2] -> [B, H, Wh, C, 2].
template <typename T>
Var<T> mix_filter_basis(Var<T> coeffs, Var<T> basis);

/// irfft2(K * rfft2(x)) per channel; x [B, H, W, C], K [H, W/2+1, C, 2].
template <typename T>
Var<T> global_filter(Var<T> x, Var<T> filter);

/// Maps the spatial mean of x [B, H, W, C] through LN, fc1, StarReLU, fc2 and
/// a softmax over the N filters, giving coefficients [B, N, C'].
template <typename T>
struct RouteingMLP {
  static RouteingMLP create(Registrar<T>& reg, const std::string& prefix, std::size_t channels,
                            std::size_t num_filters, std::size_t out_channels, double ratio);
  Var<T> operator()(Var<T> x) const;

  LayerNorm<T> norm;
  Linear<T> fc1;
  ActivationLayer<T> act;
  Linear<T> fc2;
  std::size_t num_filters = 0;
  std::size_t out_channels = 0;
};

template <typename T>
Var<T> routeing_weights(Var<T> x, const RouteingMLP<T>& mlp) {
  return mlp(x);
}

struct MixerGeometry {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t expansion = 2;
  std::size_t num_filters = 4;
  double routeing_ratio = 0.25;
  Activation activation = Activation::StarReLU;
};

/// pw1 -> act -> [rfft2, multiply by the routed combination of the basis,
/// irfft2] -> pw2. Coefficients are computed from the input before pw1.
template <typename T>
struct DynamicFilter {
  static DynamicFilter create(Registrar<T>& reg, const std::string& prefix, const MixerGeometry& g);
  Var<T> operator()(Var<T> x) const;

  /// act(pw1(x)), the features that get filtered.
  Var<T> premap(Var<T> x) const;
  /// Frequency-domain filtering of premapped features with given coefficients.
  Var<T> filter(Var<T> features, Var<T> coeffs) const;

  Linear<T> pw1;
  ActivationLayer<T> act;
  RouteingMLP<T> route;
  Parameter<T>* basis = nullptr;
  Linear<T> pw2;
  std::size_t height = 0;
  std::size_t width = 0;
};

/// Static per-channel filter in place of the routed basis.
template <typename T>
struct GlobalFilter {
  static GlobalFilter create(Registrar<T>& reg, const std::string& prefix, const MixerGeometry& g);
  Var<T> operator()(Var<T> x) const;

  Linear<T> pw1;
  ActivationLayer<T> act;
  Parameter<T>* filter = nullptr;
  Linear<T> pw2;
  std::size_t height = 0;
  std::size_t width = 0;
};

/// Separable convolution: pw1 -> act -> depthwise 7x7 -> pw2.
template <typename T>
struct SepConv {
  static SepConv create(Registrar<T>& reg, const std::string& prefix, const MixerGeometry& g,
                        std::size_t kernel = 7);
  Var<T> operator()(Var<T> x) const;

  Linear<T> pw1;
  ActivationLayer<T> act;
  DepthwiseConv<T> dw;
  Linear<T> pw2;
};

/// Dense multi-head self-attention over the H*W tokens of x [B, H, W, C].
/// Weights are [C, C] each; proj_bias is [C].
template <typename T>
Tensor<T> attention_forward(const Tensor<T>& x, const Tensor<T>& wq, const Tensor<T>& wk, const Tensor<T>& wv,
                            const Tensor<T>& wo, const Tensor<T>& proj_bias, std::size_t heads);

/// Forward-only attention mixer. Its parameters are non-persistent and any
/// attempt to backpropagate through it raises ContractError.
template <typename T>
struct Attention {
  static Attention create(Registrar<T>& reg, const std::string& prefix, std::size_t channels,
                          std::size_t head_dim = 32);
  Var<T> operator()(Var<T> x) const;

  Parameter<T>* wq = nullptr;
  Parameter<T>* wk = nullptr;
  Parameter<T>* wv = nullptr;
  Parameter<T>* wo = nullptr;
  Parameter<T>* proj_bias = nullptr;
  std::size_t heads = 1;
};

/// Standard deviation of the complex filter initialization.
inline constexpr double kFilterInitStd = 0.02;

}  // namespace dff
