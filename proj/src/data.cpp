#include "dff/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "dff/random.hpp"

namespace dff {

Tensor<double> Dataset::gather_images(std::span<const std::size_t> indices) const {
  Shape shape = images.shape();
  const std::size_t stride = images.size() / shape[0];
  shape[0] = indices.size();
  Tensor<double> out(shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw ContractError("sample index " + std::to_string(indices[i]) + " out of range");
    std::copy_n(images.ptr() + indices[i] * stride, stride, out.ptr() + i * stride);
  }
  return out;
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels.at(i));
  return out;
}

std::vector<std::vector<CarrierBand>> SyntheticSpec::default_bands() {
  // Classes 0/1 and 2/3 share frequencies and differ only in orientation.
  return {{{3, 0}, {8, 90}}, {{3, 90}, {8, 0}}, {{5, 45}, {10, 135}}, {{5, 135}, {10, 45}}};
}

Dataset gen_synthetic(const SyntheticSpec& spec) {
  if (spec.grid == 0 || spec.classes == 0 || spec.channels == 0) throw ContractError("synthetic spec has an empty extent");
  if (spec.carrier_bands.size() < spec.classes) {
    throw ContractError("synthetic spec lists bands for " + std::to_string(spec.carrier_bands.size()) + " classes, needs " +
                        std::to_string(spec.classes));
  }
  for (std::size_t c = 0; c < spec.classes; ++c)
    if (spec.carrier_bands[c].empty()) throw ContractError("class " + std::to_string(c) + " has no carrier band");

  const std::size_t N = spec.classes * spec.samples_per_class, G = spec.grid, C = spec.channels;
  Dataset out{Tensor<double>({N, G, G, C}), std::vector<int>(N), spec.classes};
  const Rng root = Rng(spec.seed).split("synthetic");
  for (std::size_t i = 0; i < N; ++i) {
    Rng rng = root.split(i);
    const std::size_t label = i % spec.classes;
    const auto& bands = spec.carrier_bands[label];
    const auto& band = bands[rng.below(bands.size())];
    const double f = band.frequency + spec.frequency_jitter * (2 * rng.uniform() - 1);
    const double phase = 2 * std::numbers::pi * rng.uniform();
    const double a = band.angle_deg * std::numbers::pi / 180;
    const double kx = 2 * std::numbers::pi * f * std::cos(a) / static_cast<double>(G);
    const double ky = 2 * std::numbers::pi * f * std::sin(a) / static_cast<double>(G);
    double* px = out.images.ptr() + i * G * G * C;
    for (std::size_t y = 0; y < G; ++y) {
      for (std::size_t x = 0; x < G; ++x) {
        const double s = std::cos(kx * static_cast<double>(x) + ky * static_cast<double>(y) + phase);
        for (std::size_t c = 0; c < C; ++c) *px++ = s + spec.noise_sigma * rng.normal();
      }
    }
    out.labels[i] = static_cast<int>(label);
  }
  return out;
}

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at, const char* what) {
  if (b.size() < at + 4) throw IdxTruncatedError(std::string("IDX ") + what + " header truncated");
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

Dataset decode_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels, std::size_t height,
                   std::size_t width) {
  if (read_be32(images, 0, "image") != kIdxImageMagic) throw IdxMagicError("IDX image file has wrong magic (expected 2051)");
  if (read_be32(labels, 0, "label") != kIdxLabelMagic) throw IdxMagicError("IDX label file has wrong magic (expected 2049)");
  const std::size_t count = read_be32(images, 4, "image"), rows = read_be32(images, 8, "image"),
                    cols = read_be32(images, 12, "image");
  const std::size_t label_count = read_be32(labels, 4, "label");
  if (count != label_count) {
    throw IdxCountMismatchError("IDX files disagree: " + std::to_string(count) + " images, " +
                                std::to_string(label_count) + " labels");
  }
  if (images.size() - 16 < count * rows * cols) throw IdxTruncatedError("IDX image payload truncated");
  if (labels.size() - 8 < count) throw IdxTruncatedError("IDX label payload truncated");
  if (height == 0 || width == 0 || rows == 0 || cols == 0) throw ContractError("IDX resize to an empty extent");

  Dataset out{Tensor<double>({count, height, width, 3}), std::vector<int>(count), 0};
  for (std::size_t n = 0; n < count; ++n) {
    const std::uint8_t* src = images.data() + 16 + n * rows * cols;
    double* dst = out.images.ptr() + n * height * width * 3;
    for (std::size_t y = 0; y < height; ++y) {
      const std::size_t sy = y * rows / height;
      for (std::size_t x = 0; x < width; ++x) {
        const double v = src[sy * cols + x * cols / width] / 255.0;
        *dst++ = v;
        *dst++ = v;
        *dst++ = v;
      }
    }
    out.labels[n] = labels[8 + n];
    out.num_classes = std::max<std::size_t>(out.num_classes, labels[8 + n] + 1u);
  }
  return out;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t height,
                 std::size_t width) {
  return decode_idx(slurp(images), slurp(labels), height, width);
}

}  // namespace dff
