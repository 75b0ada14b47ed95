#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dff/checkpoint.hpp"
#include "dff/tensor.hpp"

namespace dff {

struct Dataset {
  Tensor<double> images;  // [N, H, W, C]
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  /// Copies the listed samples into a batch.
  Tensor<double> gather_images(std::span<const std::size_t> indices) const;
  std::vector<int> gather_labels(std::span<const std::size_t> indices) const;
};

/// Oriented carrier: `frequency` cycles across the grid along `angle_deg`.
struct CarrierBand {
  double frequency = 0;
  double angle_deg = 0;
};

struct SyntheticSpec {
  std::uint64_t seed = 0;
  std::size_t grid = 32;
  std::size_t classes = 4;
  std::size_t samples_per_class = 64;
  std::size_t channels = 3;
  double noise_sigma = 0.3;
  /// Uniform jitter of the carrier frequency, in cycles per grid.
  double frequency_jitter = 0.5;
  /// Per class, the bands one sample's carrier is drawn from.
  std::vector<std::vector<CarrierBand>> carrier_bands = default_bands();

  static std::vector<std::vector<CarrierBand>> default_bands();
};

/// Each sample is cos(2 pi f (x cos a + y sin a) / grid + phase) on every
/// channel plus independent N(0, sigma^2) noise per pixel and channel; (f, a)
/// is one of the class's bands chosen per sample. Labels cycle 0..classes-1.
Dataset gen_synthetic(const SyntheticSpec& spec);

class IdxMagicError : public IoError {
 public:
  using IoError::IoError;
};
class IdxCountMismatchError : public IoError {
 public:
  using IoError::IoError;
};
class IdxTruncatedError : public IoError {
 public:
  using IoError::IoError;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Parses in-memory IDX files (big-endian headers, uint8 payloads). Pixels
/// are scaled to [0, 1], replicated to 3 channels and resized by nearest
/// neighbour to height x width.
Dataset decode_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels, std::size_t height,
                   std::size_t width);
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t height,
                 std::size_t width);

}  // namespace dff
