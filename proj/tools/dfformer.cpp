// dfformer: command-line driver for training, checks, accounting and analysis.
//
// Exit codes: 0 success, 1 usage, 2 validation failure, 3 I/O.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dff/analysis.hpp"
#include "dff/bench.hpp"
#include "dff/checkpoint.hpp"
#include "dff/config.hpp"
#include "dff/data.hpp"
#include "dff/diagnostics.hpp"
#include "dff/model.hpp"
#include "dff/train.hpp"

namespace fs = std::filesystem;
using namespace dff;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string dtype = "f64";
  std::string model;
  std::size_t input = 0;
  std::string checkpoint;
  std::string images;
  std::string labels;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Config file, a preset name, or 'nano'");
  cmd->add_option("--seed", c.seed, "Master seed");
  cmd->add_option("--out", c.out, "Directory for CSV, PPM and checkpoint outputs")->capture_default_str();
  cmd->add_option("--dtype", c.dtype, "Numeric width")->check(CLI::IsMember({"f32", "f64"}))->capture_default_str();
  cmd->add_option("--model", c.model, "Model preset, overriding the config");
  cmd->add_option("--input", c.input, "Square input resolution, overriding the config");
}

void add_data(CLI::App* cmd, Common& c) {
  auto* images = cmd->add_option("--images", c.images, "IDX image file in place of the synthetic task");
  auto* labels = cmd->add_option("--labels", c.labels, "IDX label file");
  images->needs(labels);
  labels->needs(images);
}

bool is_preset(const std::string& name) {
  const auto names = preset_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

RunConfig resolve(const Common& c) {
  RunConfig cfg;
  if (!c.config.empty() && c.config != "nano") {
    if (fs::exists(c.config)) {
      cfg = load_config(c.config);
    } else if (is_preset(c.config)) {
      cfg.model = model_preset(c.config);
    } else {
      throw IoError("no config file or preset named '" + c.config + "'");
    }
  }
  if (!c.model.empty()) cfg.model = model_preset(c.model);
  if (c.input) cfg.model = with_input(cfg.model, c.input, c.input);
  if (c.seed) cfg.seed = *c.seed;
  cfg.data.seed = cfg.seed;
  cfg.data.grid = cfg.model.input_height;
  cfg.model.validate();
  return cfg;
}

void require_f64(const Common& c, const char* what) {
  if (c.dtype != "f64") throw ContractError(std::string(what) + " runs in 64-bit only; pass --dtype f64");
}

fs::path out_file(const Common& c, const std::string& name) {
  fs::create_directories(c.out);
  return fs::path(c.out) / name;
}

std::ofstream open_out(const Common& c, const std::string& name) {
  const auto path = out_file(c, name);
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  return f;
}

Model<double> model_for(const Common& c, const RunConfig& cfg, std::uint64_t seed) {
  if (!c.checkpoint.empty()) return load_checkpoint<double>(c.checkpoint, cfg.model);
  return Model<double>(cfg.model, seed);
}

Dataset idx_data(const Common& c, const RunConfig& cfg) {
  auto data = load_idx(c.images, c.labels, cfg.model.input_height, cfg.model.input_width);
  if (data.num_classes > cfg.model.num_classes) {
    throw ContractError("dataset has " + std::to_string(data.num_classes) + " classes, model has " +
                        std::to_string(cfg.model.num_classes));
  }
  return data;
}

// Analysis batch: the held-out synthetic set, capped at `count` samples.
Dataset analysis_data(const RunConfig& cfg, std::size_t count) {
  auto spec = heldout_spec(cfg);
  spec.samples_per_class = std::max<std::size_t>(1, (count + spec.classes - 1) / spec.classes);
  return gen_synthetic(spec);
}

std::vector<std::pair<std::string, Tensor<double>>> tapped(const Model<double>& model, const Tensor<double>& images) {
  std::vector<std::pair<std::string, Tensor<double>>> out;
  Tape<double> tape(GradMode::Disabled);
  ForwardOptions<double> opts;
  opts.tap = [&](std::size_t, const std::string& label, Var<double> v) { out.emplace_back(label, v.value()); };
  model.forward(tape.constant(images), opts);
  return out;
}

std::vector<std::size_t> range(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> idx;
  for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
  return idx;
}

void print_checks(const std::vector<CheckResult>& results) {
  for (const auto& r : results)
    std::printf("%s  %-12s %-44s error %.3e  bound %.0e  (%zu)\n", r.passed() ? "PASS" : "FAIL", r.suite.c_str(),
                r.name.c_str(), r.error, r.tolerance, r.samples);
}

// ---- subcommands

int cmd_train(const Common& c, std::size_t epochs) {
  require_f64(c, "training");
  auto cfg = resolve(c);
  if (epochs) cfg.train.epochs = epochs;
  auto log = open_out(c, "train_log.csv");
  log << "epoch,lr,loss,accuracy\n";
  log.precision(10);
  auto on_epoch = [&](const EpochStats& e) {
    log << e.epoch + 1 << ',' << e.lr << ',' << e.loss << ',' << e.accuracy << '\n';
    std::printf("epoch %3zu/%zu  lr %.3e  loss %.4f  running acc %.4f\n", e.epoch + 1, cfg.train.epochs, e.lr, e.loss,
                e.accuracy);
  };
  std::printf("model %s  input %zux%zu  seed %llu\n", cfg.model.name.c_str(), cfg.model.input_height,
              cfg.model.input_width, static_cast<unsigned long long>(cfg.seed));
  if (!c.images.empty()) {
    const auto data = idx_data(c, cfg);
    Model<double> model(cfg.model, cfg.seed);
    train(model, data, cfg.train, Rng(cfg.seed).split("train"), on_epoch);
    std::printf("final train accuracy: %.4f\n", evaluate(model, data).accuracy);
    save_checkpoint(model, out_file(c, "model.dfck"));
    return 0;
  }
  auto run = run_synthetic(cfg, on_epoch);
  std::printf("final train accuracy: %.4f\n", run.train.accuracy);
  std::printf("held-out accuracy: %.4f\n", run.heldout.accuracy);
  save_checkpoint(run.model, out_file(c, "model.dfck"));
  return 0;
}

int cmd_eval(const Common& c) {
  require_f64(c, "evaluation");
  const auto cfg = resolve(c);
  const auto model = model_for(c, cfg, cfg.seed);
  const auto data = c.images.empty() ? gen_synthetic(heldout_spec(cfg)) : idx_data(c, cfg);
  const auto stats = evaluate(model, data);
  auto f = open_out(c, "eval.csv");
  f.precision(10);
  f << "samples,loss,accuracy\n" << data.size() << ',' << stats.loss << ',' << stats.accuracy << '\n';
  std::printf("samples %zu  loss %.4f  accuracy %.4f\n", data.size(), stats.loss, stats.accuracy);
  return 0;
}

int cmd_gradcheck(const Common& c, std::size_t probes) {
  require_f64(c, "gradient checking");
  const auto cfg = resolve(c);
  const auto results = gradient_suite(cfg.model, cfg.seed, probes);
  auto f = open_out(c, "gradcheck.csv");
  write_checks_csv(f, results);
  print_checks(results);
  const bool ok = all_passed(results);
  std::printf("%s\n", ok ? "all gradient checks passed" : "gradient check FAILED");
  return ok ? 0 : kExitValidation;
}

int cmd_oracles(const Common& c) {
  const auto cfg = resolve(c);
  const auto results = oracle_suite(cfg.seed);
  auto f = open_out(c, "oracles.csv");
  write_checks_csv(f, results);
  print_checks(results);
  const bool ok = all_passed(results);
  std::printf("%s\n", ok ? "all oracle checks passed" : "oracle check FAILED");
  return ok ? 0 : kExitValidation;
}

int cmd_params(const Common& c) {
  const auto cfg = resolve(c);
  const auto layout = parameter_layout(cfg.model);
  auto f = open_out(c, "params.csv");
  f << "name,shape,complex,persistent,count\n";
  for (const auto& p : layout) {
    std::uint64_t n = 1;
    for (auto e : p.shape) n *= e;
    f << p.name << ',' << to_string(p.shape) << ',' << p.is_complex << ',' << p.persistent << ',' << n << '\n';
  }
  const auto total = count_params(cfg.model);
  std::printf("%s: %llu parameters (%.2fM) in %zu tensors\n", cfg.model.name.c_str(),
              static_cast<unsigned long long>(total), static_cast<double>(total) / 1e6, layout.size());
  return 0;
}

int cmd_flops(const Common& c) {
  const auto cfg = resolve(c);
  const auto r = count_flops(cfg.model);
  auto f = open_out(c, "flops.csv");
  f.precision(12);
  const std::pair<const char*, double> rows[] = {{"convolutions", r.convolutions},
                                                 {"fft", r.fft},
                                                 {"spectral_products", r.spectral_products},
                                                 {"routeing", r.routeing},
                                                 {"attention", r.attention},
                                                 {"head", r.head},
                                                 {"total", r.total}};
  f << "component,macs\n";
  for (const auto& [name, v] : rows) f << name << ',' << v << '\n';
  std::printf("%s @ %zux%zu: %.3f GMACs\n", cfg.model.name.c_str(), cfg.model.input_height, cfg.model.input_width,
              r.total / 1e9);
  for (const auto& [name, v] : rows) std::printf("  %-18s %.4f G\n", name, v / 1e9);
  return 0;
}

int cmd_bench(const Common& c, const std::vector<std::string>& models, const std::vector<std::size_t>& resolutions,
              std::size_t repeats, std::size_t batch) {
  const auto cfg = resolve(c);
  BenchOptions opt;
  opt.repeats = repeats;
  opt.batch = batch;
  opt.single_precision = c.dtype == "f32";
  opt.seed = cfg.seed;
  const auto report = run_bench(models, resolutions, opt);
  auto f = open_out(c, "bench.csv");
  write_bench_csv(f, report.rows);
  for (const auto& r : report.rows)
    std::printf("%-14s %5zu  %.4e s/img  %.3f GMACs  %.1f MB\n", r.model.c_str(), r.resolution, r.seconds_per_image,
                r.macs / 1e9, static_cast<double>(r.est_bytes) / 1e6);
  for (const auto& e : report.failures)
    std::fprintf(stderr, "skipped %s @ %zu: %s\n", e.model.c_str(), e.resolution, e.message.c_str());
  return 0;
}

int cmd_spectrum(const Common& c, std::size_t samples) {
  require_f64(c, "spectral analysis");
  const auto cfg = resolve(c);
  const auto model = model_for(c, cfg, cfg.seed);
  const auto data = analysis_data(cfg, samples);
  const auto idx = range(0, std::min(samples, data.size()));
  std::vector<SpectrumProfile> profiles;
  std::size_t layer = 0;
  for (const auto& [label, value] : tapped(model, data.gather_images(idx))) {
    if (value.rank() == 4 && value.extent(1) == value.extent(2)) profiles.push_back(log_amplitude_profile(value, layer));
    ++layer;
  }
  auto f = open_out(c, "spectrum.csv");
  write_profiles_csv(f, profiles);
  for (const auto& p : profiles) {
    std::printf("layer %2zu  high-frequency delta log amplitude %.4f\n", p.layer_index, p.delta_log_amplitude.back());
  }
  return 0;
}

int cmd_viz_filters(const Common& c, std::size_t max_filters) {
  require_f64(c, "filter visualization");
  const auto cfg = resolve(c);
  const auto model = model_for(c, cfg, cfg.seed);
  const auto& params = model.parameters();
  std::size_t written = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (!p.is_complex || p.value.rank() != 4) continue;
    const auto image = visualize_filter(p.value);
    const std::size_t n = std::min(max_filters, image.extent(2));
    for (std::size_t k = 0; k < n; ++k) {
      write_ppm(out_file(c, p.name + "." + std::to_string(k) + ".ppm"), colorize(image, k));
      ++written;
    }
  }
  std::printf("wrote %zu filter images to %s\n", written, c.out.c_str());
  return 0;
}

int cmd_cka(const Common& c, const std::string& model_b, const std::string& checkpoint_b, std::size_t samples,
            std::size_t batch) {
  require_f64(c, "CKA");
  const auto cfg = resolve(c);
  const auto a = model_for(c, cfg, cfg.seed);
  auto cfg_b = cfg;
  if (!model_b.empty()) cfg_b.model = with_input(model_preset(model_b), cfg.model.input_height, cfg.model.input_width);
  Common cb = c;
  cb.checkpoint = checkpoint_b;
  // Without a second checkpoint, B is a fresh initialization from another stream.
  const auto b = model_for(cb, cfg_b, Rng(cfg.seed).split("cka_model_b").next_u64());
  const auto data = analysis_data(cfg, samples);
  const std::size_t n = std::min(samples, data.size());
  if (batch < 4) throw ContractError("CKA needs at least 4 samples per batch");

  std::optional<CkaAccumulator> acc;
  for (std::size_t start = 0; start + batch <= n; start += batch) {
    const auto images = data.gather_images(range(start, start + batch));
    const auto ta = tapped(a, images), tb = tapped(b, images);
    if (!acc) {
      std::vector<std::string> la, lb;
      for (const auto& t : ta) la.push_back(t.first);
      for (const auto& t : tb) lb.push_back(t.first);
      acc.emplace(la, lb);
    }
    std::vector<Tensor<double>> xa, xb;
    for (const auto& t : ta) xa.push_back(t.second);
    for (const auto& t : tb) xb.push_back(t.second);
    acc->add(xa, xb);
  }
  if (!acc) throw ContractError("fewer samples than one batch");
  const auto result = acc->result();
  auto f = open_out(c, "cka.csv");
  write_cka_csv(f, result);
  const std::size_t d = std::min(result.labels_a.size(), result.labels_b.size());
  for (std::size_t i = 0; i < d; ++i)
    std::printf("%-28s %.4f\n", result.labels_a[i].c_str(), result.matrix(i, i));
  std::printf("%zu x %zu layers over %zu batches\n", result.labels_a.size(), result.labels_b.size(), acc->batches());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic-filter vision backbones: training, checks and analysis"};
  app.require_subcommand(1);
  Common c;

  std::size_t epochs = 0, probes = 8, repeats = 5, batch = 1, samples = 64, cka_batch = 32, max_filters = 8;
  std::vector<std::string> bench_models{"nano-df", "nano-cf", "nano-attn"};
  std::vector<std::size_t> resolutions{64, 128, 256};
  std::string model_b, checkpoint_b;

  auto* train_cmd = app.add_subcommand("train", "Train on the synthetic task or an IDX dataset");
  add_common(train_cmd, c);
  add_data(train_cmd, c);
  train_cmd->add_option("--epochs", epochs, "Override the configured epoch count");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(eval_cmd, c);
  add_data(eval_cmd, c);
  eval_cmd->add_option("--checkpoint", c.checkpoint, "DFCK checkpoint")->required();

  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  add_common(grad_cmd, c);
  grad_cmd->add_option("--probes", probes, "Elements probed per model parameter")->capture_default_str();

  auto* oracle_cmd = app.add_subcommand("oracles", "FFT, convolution, linearity, CKA and interpolation oracles");
  add_common(oracle_cmd, c);

  auto* params_cmd = app.add_subcommand("params", "Parameter accounting");
  add_common(params_cmd, c);

  auto* flops_cmd = app.add_subcommand("flops", "Analytic MAC accounting");
  add_common(flops_cmd, c);

  auto* bench_cmd = app.add_subcommand("bench", "Forward timing across resolutions");
  add_common(bench_cmd, c);
  bench_cmd->add_option("--models", bench_models, "Presets to time")->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--resolutions", resolutions, "Square input sizes")->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--repeats", repeats, "Timed forwards per row (median)")->capture_default_str();
  bench_cmd->add_option("--batch", batch, "Images per forward")->capture_default_str();

  auto* spectrum_cmd = app.add_subcommand("spectrum", "Relative log amplitude of every tapped layer");
  add_common(spectrum_cmd, c);
  spectrum_cmd->add_option("--checkpoint", c.checkpoint, "DFCK checkpoint (default: fresh initialization)");
  spectrum_cmd->add_option("--samples", samples, "Synthetic samples to average over")->capture_default_str();

  auto* viz_cmd = app.add_subcommand("viz-filters", "Render complex filter weights as PPM images");
  add_common(viz_cmd, c);
  viz_cmd->add_option("--checkpoint", c.checkpoint, "DFCK checkpoint (default: fresh initialization)");
  viz_cmd->add_option("--max-filters", max_filters, "Images per filter tensor")->capture_default_str();

  auto* cka_cmd = app.add_subcommand("cka", "Linear CKA between the tapped layers of two models");
  add_common(cka_cmd, c);
  cka_cmd->add_option("--checkpoint", c.checkpoint, "Checkpoint for model A");
  cka_cmd->add_option("--model-b", model_b, "Preset for model B (default: same as A)");
  cka_cmd->add_option("--checkpoint-b", checkpoint_b, "Checkpoint for model B");
  cka_cmd->add_option("--samples", samples, "Synthetic samples")->capture_default_str();
  cka_cmd->add_option("--batch", cka_batch, "Samples per CKA mini-batch")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(c, epochs);
    if (*eval_cmd) return cmd_eval(c);
    if (*grad_cmd) return cmd_gradcheck(c, probes);
    if (*oracle_cmd) return cmd_oracles(c);
    if (*params_cmd) return cmd_params(c);
    if (*flops_cmd) return cmd_flops(c);
    if (*bench_cmd) return cmd_bench(c, bench_models, resolutions, repeats, batch);
    if (*spectrum_cmd) return cmd_spectrum(c, samples);
    if (*viz_cmd) return cmd_viz_filters(c, max_filters);
    if (*cka_cmd) return cmd_cka(c, model_b, checkpoint_b, samples, cka_batch);
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const CheckpointError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  }
  return kExitUsage;
}
