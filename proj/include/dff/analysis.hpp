#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dff/tensor.hpp"

namespace dff {

inline constexpr double kAmplitudeFloor = 1e-12;

struct SpectrumProfile {
  /// 2k/H for k = 0..floor(H/2): 0 is DC, 1 is the Nyquist corner.
  std::vector<double> frequency;
  /// log amplitude minus the log amplitude at frequency 0.
  std::vector<double> delta_log_amplitude;
  std::size_t layer_index = 0;
};

/// features [B, H, W, C] with H == W. Amplitudes of the 2D spectrum of every
/// (sample, channel) plane are averaged, then read along the diagonal from DC
/// towards the corner of the centered spectrum.
SpectrumProfile log_amplitude_profile(const Tensor<double>& features, std::size_t layer_index = 0);

/// CSV with header freq,delta_log_amp,layer.
void write_profiles_csv(std::ostream& out, const std::vector<SpectrumProfile>& profiles);

/// weight [H, W/2+1, N, 2] -> image [H, W, N] in (0, 1): sigmoid(log(|w| + 1e-6)),
/// mirrored to full width through Hermitian symmetry and rolled so DC sits at
/// (H/2, W/2). `width` selects the parity of the full width; 0 means width == H.
Tensor<double> visualize_filter(const Tensor<double>& weight, std::size_t width = 0);

using Rgb = std::array<std::uint8_t, 3>;
const std::array<Rgb, 256>& viridis();
/// Colormap slot of a value in [0, 1]: floor(256 v) clamped to [0, 255].
std::size_t colormap_index(double value);

struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB triples
};

/// Colors plane `index` of an [H, W, N] image.
RgbImage colorize(const Tensor<double>& image, std::size_t index);
/// Binary PPM (P6, maxval 255).
std::vector<std::uint8_t> encode_ppm(const RgbImage& image);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);

/// Unbiased HSIC of two n x n Gram matrices (n >= 4); the diagonals are ignored.
double hsic_unbiased(const Tensor<double>& K, const Tensor<double>& L);

/// X [n, ...] flattened to rows -> X X^T.
Tensor<double> linear_gram(const Tensor<double>& X);

struct CkaResult {
  /// [layers_a, layers_b]
  Tensor<double> matrix;
  std::vector<std::string> labels_a;
  std::vector<std::string> labels_b;
};

/// Mini-batch linear CKA. HSIC terms are summed over batches before the ratio.
class CkaAccumulator {
 public:
  CkaAccumulator(std::vector<std::string> labels_a, std::vector<std::string> labels_b);

  /// One mini-batch: one [n, ...] activation per layer for each model, with
  /// the same n on both sides.
  void add(const std::vector<Tensor<double>>& batch_a, const std::vector<Tensor<double>>& batch_b);
  std::size_t batches() const { return batches_; }
  CkaResult result() const;

 private:
  std::vector<std::string> labels_a_, labels_b_;
  Tensor<double> cross_;
  std::vector<double> self_a_, self_b_;
  std::size_t batches_ = 0;
};

/// acts[batch][layer]; both sides must use the same batch partition.
CkaResult linear_cka(const std::vector<std::vector<Tensor<double>>>& acts_a,
                     const std::vector<std::vector<Tensor<double>>>& acts_b);

void write_cka_csv(std::ostream& out, const CkaResult& result);

}  // namespace dff
