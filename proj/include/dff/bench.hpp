#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dff/model.hpp"

namespace dff {

struct BenchOptions {
  std::size_t repeats = 5;
  std::size_t batch = 1;
  bool single_precision = false;
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::string model;
  std::size_t resolution = 0;
  double seconds_per_image = 0;
  double macs = 0;
  /// Parameter bytes plus bytes of every recorded forward value.
  std::size_t est_bytes = 0;
};

struct BenchFailure {
  std::string model;
  std::size_t resolution = 0;
  std::string message;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::vector<BenchFailure> failures;
};

/// Median wall time of `repeats` inference forwards of `cfg` on a random batch.
double time_forward(const ModelConfig& cfg, const BenchOptions& options);

/// Every (model, resolution) pair; a pair whose resolution does not fit the
/// stride pyramid is recorded as a failure and the run continues.
BenchReport run_bench(const std::vector<std::string>& models, const std::vector<std::size_t>& resolutions,
                      const BenchOptions& options);

/// CSV: model,resolution,seconds_per_image,macs,est_bytes
void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

}  // namespace dff
