#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dff/model.hpp"

namespace dff {

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};
class MagicMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class VersionMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class TruncatedPayloadError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class UnknownParameterError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class MissingParameterError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class EntryShapeError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

inline constexpr std::uint32_t kDfckVersion = 1;

/// 0 = real64, 1 = real32, 2 = complex stored as (re, im) pairs of 64-bit reals.
enum class DType : std::uint8_t { Real64 = 0, Real32 = 1, ComplexPair = 2 };

/// One named tensor. For complex entries `shape` is the complex shape and
/// `values` holds 2 * numel(shape) interleaved (re, im) reals.
struct DfckEntry {
  std::string name;
  DType dtype = DType::Real64;
  Shape shape;
  std::vector<double> values;
};

std::vector<std::uint8_t> encode_dfck(const std::vector<DfckEntry>& entries);
std::vector<DfckEntry> decode_dfck(std::span<const std::uint8_t> bytes);
void write_dfck(const std::filesystem::path& path, const std::vector<DfckEntry>& entries);
std::vector<DfckEntry> read_dfck(const std::filesystem::path& path);

/// Persistent parameters only; complex ones use DType::ComplexPair.
template <typename T>
std::vector<DfckEntry> checkpoint_entries(const ParameterStore<T>& params);

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path) {
  write_dfck(path, checkpoint_entries(model.parameters()));
}

/// Assigns entries by name. Complex filter entries whose spatial extents
/// differ from the model's are bicubically resampled to fit. Every
/// persistent parameter must be present.
template <typename T>
void load_parameters(Model<T>& model, const std::vector<DfckEntry>& entries);

/// Builds `cfg` and fills it from the checkpoint at `path`.
template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg) {
  Model<T> model(cfg, 0);
  load_parameters(model, read_dfck(path));
  return model;
}

/// Activation dump: entries named "act.<index>" in real64.
std::vector<DfckEntry> activation_entries(const std::vector<Tensor<double>>& activations);

}  // namespace dff
