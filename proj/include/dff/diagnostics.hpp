#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dff/model.hpp"

namespace dff {

/// One measured discrepancy against a reference and the bound it must stay under.
struct CheckResult {
  std::string suite;
  std::string name;
  double error = 0;
  double tolerance = 0;
  std::size_t samples = 0;

  bool passed() const { return error < tolerance; }
};

bool all_passed(const std::vector<CheckResult>& results);

/// CSV: suite,name,error,tolerance,samples,passed
void write_checks_csv(std::ostream& out, const std::vector<CheckResult>& results);

// Oracle suites. Each compares a fast path with a brute-force reference.

/// rfft2 against the direct DFT and irfft2(rfft2(x)) against x, per size.
std::vector<CheckResult> fft_checks(std::uint64_t seed);
/// Global filter against sqrt(HW)-scaled cyclic convolution, 7x7 and 8x8.
std::vector<CheckResult> convolution_checks(std::uint64_t seed, std::size_t trials = 20);
/// Dynamic filter against the coefficient-weighted sum of single-filter passes.
std::vector<CheckResult> linearity_checks(std::uint64_t seed, std::size_t seeds = 10);
/// HSIC against the scalar oracle, CKA self-similarity and invariances.
std::vector<CheckResult> cka_checks(std::uint64_t seed);
/// Filter-basis resampling against dense per-pixel bicubic evaluation.
std::vector<CheckResult> interpolation_checks(std::uint64_t seed);
std::vector<CheckResult> oracle_suite(std::uint64_t seed);

// Finite-difference gradient suites, 64-bit, relative error bound 1e-5.

/// Every differentiable primitive, layer and trainable mixer.
std::vector<CheckResult> layer_gradient_checks(std::uint64_t seed);
/// The whole network on a batch of two, `probes` elements per parameter.
CheckResult model_gradient_check(const ModelConfig& cfg, std::uint64_t seed, std::size_t probes = 8);
std::vector<CheckResult> gradient_suite(const ModelConfig& cfg, std::uint64_t seed, std::size_t probes = 8);

/// Closed-form filter with small dyadic entries, so its visualization is
/// exact on every platform: [14, 8, 2, 2].
Tensor<double> golden_filter();

}  // namespace dff
