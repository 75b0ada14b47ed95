#include "dff/random.hpp"

#include <cmath>
#include <numbers>

namespace dff {

Rng Rng::split(std::uint64_t stream_id) const {
  return Rng(mix(key_ ^ mix(stream_id + 0x632be59bd9b4e019ULL)), 0);
}

Rng Rng::split(std::string_view label) const {
  // FNV-1a over the label.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return split(h);
}

std::size_t Rng::below(std::size_t n) {
  if (n <= 1) return 0;
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return static_cast<std::size_t>(v % n);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

double Rng::truncated_normal(double std, double bound_in_std) {
  double z;
  do {
    z = normal();
  } while (std::abs(z) > bound_in_std);
  return z * std;
}

}  // namespace dff
