#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace dff {

/// Counter-based generator: the i-th draw of a stream is a pure function of
/// (key, i), so streams can be split off a master seed without sharing state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(seed ^ 0x6a09e667f3bcc909ULL)) {}

  /// Independent child stream. Distinct ids give distinct streams.
  Rng split(std::uint64_t stream_id) const;
  /// Child stream keyed by a label, e.g. "data", "init", "shuffle".
  Rng split(std::string_view label) const;

  std::uint64_t next_u64() { return mix(key_ + kGamma * ++counter_); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  double normal();
  /// Normal(0, std^2) conditioned on |z| <= bound_in_std standard deviations.
  double truncated_normal(double std, double bound_in_std = 2.0);

  std::uint64_t key() const { return key_; }

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

  Rng(std::uint64_t key, int) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0;
  bool has_spare_ = false;
};

}  // namespace dff
