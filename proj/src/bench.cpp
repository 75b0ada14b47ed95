#include "dff/bench.hpp"

#include <algorithm>
#include <chrono>
#include <ostream>

namespace dff {

namespace {

template <typename T>
std::pair<double, std::size_t> measure(const ModelConfig& cfg, const BenchOptions& opt) {
  Model<T> model(cfg, opt.seed);
  Rng rng = Rng(opt.seed).split("bench");
  Tensor<T> images({opt.batch, cfg.input_height, cfg.input_width, cfg.in_channels});
  for (auto& v : images.data()) v = static_cast<T>(rng.normal());

  std::size_t bytes = 0;
  {
    Tape<T> tape(GradMode::Disabled);
    model.forward(tape.constant(images));  // warm-up; also sizes the tape
    bytes = tape.value_bytes() + model.parameters().element_count() * sizeof(T);
  }
  std::vector<double> times;
  for (std::size_t i = 0; i < std::max<std::size_t>(1, opt.repeats); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Tape<T> tape(GradMode::Disabled);
    model.forward(tape.constant(images));
    times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::nth_element(times.begin(), times.begin() + times.size() / 2, times.end());
  return {times[times.size() / 2], bytes};
}

std::pair<double, std::size_t> measure(const ModelConfig& cfg, const BenchOptions& opt) {
  if (opt.batch == 0) throw ContractError("benchmark batch must be positive");
  return opt.single_precision ? measure<float>(cfg, opt) : measure<double>(cfg, opt);
}

}  // namespace

double time_forward(const ModelConfig& cfg, const BenchOptions& options) { return measure(cfg, options).first; }

BenchReport run_bench(const std::vector<std::string>& models, const std::vector<std::size_t>& resolutions,
                      const BenchOptions& options) {
  BenchReport report;
  for (const auto& name : models) {
    for (auto res : resolutions) {
      try {
        const auto cfg = with_input(model_preset(name), res, res);
        cfg.validate();
        const auto [seconds, bytes] = measure(cfg, options);
        report.rows.push_back({name, res, seconds / static_cast<double>(options.batch), count_flops(cfg).total, bytes});
      } catch (const Error& e) {
        report.failures.push_back({name, res, e.what()});
      }
    }
  }
  return report;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "model,resolution,seconds_per_image,macs,est_bytes\n";
  out.precision(10);
  for (const auto& r : rows)
    out << r.model << ',' << r.resolution << ',' << r.seconds_per_image << ',' << static_cast<std::uint64_t>(r.macs)
        << ',' << r.est_bytes << '\n';
}

}  // namespace dff
