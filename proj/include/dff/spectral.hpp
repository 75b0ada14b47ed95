#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "dff/autograd.hpp"
#include "dff/tensor.hpp"

namespace dff {

/// Raised when a transform's operand does not match its plan.
class PlanError : public Error {
 public:
  using Error::Error;
};

/// Unnormalized 1D complex DFT of fixed length. Radix-2 for powers of two,
/// Bluestein's chirp-z otherwise.
template <typename T>
class Fft1d {
 public:
  explicit Fft1d(std::size_t n);

  std::size_t size() const { return n_; }
  /// In place; `inverse` uses the +i exponent and does not rescale.
  void transform(std::span<std::complex<T>> data, bool inverse) const;

 private:
  void radix2(std::complex<T>* data, bool inverse) const;
  void bluestein(std::complex<T>* data, bool inverse) const;

  std::size_t n_;
  bool pow2_;
  std::vector<std::size_t> bitrev_;
  std::vector<std::complex<T>> twiddles_;  // e^{-2 pi i k / n}, k < n/2
  // Bluestein state
  std::unique_ptr<Fft1d> inner_;
  std::vector<std::complex<T>> chirp_;       // e^{-i pi k^2 / n}
  std::vector<std::complex<T>> chirp_fft_;   // FFT of the conjugate chirp filter
};

/// Orthonormal 2D real transform over extents (H, W). The forward scale is
/// 1/sqrt(HW) and so is the inverse, so the pair is unitary.
template <typename T>
class SpectralPlan {
 public:
  SpectralPlan(std::size_t height, std::size_t width);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  /// floor(W/2) + 1 stored frequency columns.
  std::size_t half_width() const { return width_ / 2 + 1; }

  /// x laid out [batch, H, W, inner] -> out [batch, H, W/2+1, inner].
  void forward(std::span<const T> x, std::span<std::complex<T>> out, std::size_t batch, std::size_t inner) const;
  /// in [batch, H, W/2+1, inner] -> x [batch, H, W, inner]. Bins implied by
  /// Hermitian symmetry are rebuilt from the stored half.
  void inverse(std::span<const std::complex<T>> in, std::span<T> out, std::size_t batch, std::size_t inner) const;

 private:
  std::size_t height_, width_;
  Fft1d<T> rows_;
  Fft1d<T> cols_;
};

/// Shared, immutable plan for (H, W); constructed once per pair.
template <typename T>
const SpectralPlan<T>& plan_for(std::size_t height, std::size_t width);

/// rfft2 over the trailing two axes of x [..., H, W].
template <typename T>
ComplexTensor<T> rfft2(const Tensor<T>& x, const SpectralPlan<T>& plan);
/// Inverse of rfft2 for X [..., H, W/2+1].
template <typename T>
Tensor<T> irfft2(const ComplexTensor<T>& x, const SpectralPlan<T>& plan);

/// Channel-last variants on the tape: x [B, H, W, C] <-> pairs [B, H, W/2+1, C, 2].
template <typename T>
Var<T> rfft2_channels_last(Var<T> x);
template <typename T>
Var<T> irfft2_channels_last(Var<T> spectrum, std::size_t width);

/// Elementwise complex product of pair tensors; b may match the trailing dims of a.
template <typename T>
Var<T> complex_multiply(Var<T> a, Var<T> b);

/// Butterfly count of all transforms run on this thread since the last reset.
std::uint64_t fft_butterfly_count();
void reset_fft_butterfly_count();

/// Direct O((HW)^2) evaluation of the orthonormal 2D DFT; the independent
/// oracle for the fast path. Returns the half spectrum [..., H, W/2+1].
ComplexTensor<double> naive_rfft2(const Tensor<double>& x);
/// Direct inverse from a half spectrum, reconstructing the redundant bins.
Tensor<double> naive_irfft2(const ComplexTensor<double>& x, std::size_t width);

}  // namespace dff
