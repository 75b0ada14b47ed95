#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "dff/bench.hpp"
#include "dff/config.hpp"
#include "dff/data.hpp"
#include "dff/spectral.hpp"
#include "dff/train.hpp"

namespace dff {
namespace {

// ---- synthetic data

TEST(Synthetic, SameSeedIsBitwiseIdentical) {
  SyntheticSpec spec;
  spec.seed = 9;
  spec.samples_per_class = 5;
  const auto a = gen_synthetic(spec), b = gen_synthetic(spec);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.labels, b.labels);
  spec.seed = 10;
  EXPECT_NE(gen_synthetic(spec).images, a.images);
}

TEST(Synthetic, ClassHistogramIsUniform) {
  SyntheticSpec spec;
  spec.samples_per_class = 7;
  const auto d = gen_synthetic(spec);
  ASSERT_EQ(d.size(), 28u);
  EXPECT_EQ(d.images.shape(), (Shape{28, 32, 32, 3}));
  std::vector<int> counts(4, 0);
  for (int l : d.labels) ++counts.at(l);
  for (int c : counts) EXPECT_EQ(c, 7);
}

TEST(Synthetic, NoiseFreeSignalHasUnitAmplitude) {
  SyntheticSpec spec;
  spec.noise_sigma = 0;
  spec.samples_per_class = 2;
  const auto d = gen_synthetic(spec);
  double peak = 0;
  for (double v : d.images.data()) peak = std::max(peak, std::abs(v));
  EXPECT_LE(peak, 1.0);
  EXPECT_GT(peak, 0.99);
  // Every channel carries the same carrier.
  EXPECT_EQ(d.images(0, 3, 5, 0), d.images(0, 3, 5, 2));
}

TEST(Synthetic, NoiseFreeSingleBandClassesAreLinearlySeparable) {
  SyntheticSpec spec;
  spec.seed = 3;
  spec.noise_sigma = 0;
  spec.samples_per_class = 40;
  spec.carrier_bands = {{{3, 0}}, {{3, 90}}, {{5, 45}}, {{5, 135}}};
  const auto d = gen_synthetic(spec);
  const std::size_t G = 32, Wh = G / 2 + 1, F = G * Wh;
  // Amplitude features of channel 0.
  Tensor<double> plane({d.size(), G, G});
  for (std::size_t n = 0; n < d.size(); ++n)
    for (std::size_t p = 0; p < G * G; ++p) plane[n * G * G + p] = d.images[(n * G * G + p) * 3];
  const auto spec2 = rfft2(plane, plan_for<double>(G, G));
  // Nearest class mean is a linear classifier in feature space.
  std::vector<std::vector<double>> mean(4, std::vector<double>(F, 0.0));
  for (std::size_t n = 0; n < d.size(); ++n)
    for (std::size_t f = 0; f < F; ++f) mean[d.labels[n]][f] += std::abs(spec2[n * F + f]) / 40.0;
  std::size_t hits = 0;
  for (std::size_t n = 0; n < d.size(); ++n) {
    int best = -1;
    double best_d = 1e300;
    for (int c = 0; c < 4; ++c) {
      double dist = 0;
      for (std::size_t f = 0; f < F; ++f) dist += std::pow(std::abs(spec2[n * F + f]) - mean[c][f], 2);
      if (dist < best_d) best_d = dist, best = c;
    }
    hits += best == d.labels[n];
  }
  EXPECT_EQ(hits, d.size());
}

TEST(Synthetic, InvalidSpecRejected) {
  SyntheticSpec spec;
  spec.classes = 5;
  EXPECT_THROW(gen_synthetic(spec), ContractError);
}

// ---- IDX

std::vector<std::uint8_t> be32(std::vector<std::uint32_t> words) {
  std::vector<std::uint8_t> out;
  for (auto w : words) {
    out.push_back(static_cast<std::uint8_t>(w >> 24));
    out.push_back(static_cast<std::uint8_t>(w >> 16));
    out.push_back(static_cast<std::uint8_t>(w >> 8));
    out.push_back(static_cast<std::uint8_t>(w));
  }
  return out;
}

std::vector<std::uint8_t> idx_images(std::uint32_t magic, std::uint32_t count) {
  auto b = be32({magic, count, 2, 2});
  for (std::uint32_t n = 0; n < count; ++n)
    for (std::uint8_t p : {0, 51, 102, 255}) b.push_back(p);
  return b;
}

std::vector<std::uint8_t> idx_labels(std::uint32_t magic, std::uint32_t count) {
  auto b = be32({magic, count});
  for (std::uint32_t n = 0; n < count; ++n) b.push_back(static_cast<std::uint8_t>(n % 3));
  return b;
}

TEST(Idx, AcceptsStandardMagics) {
  EXPECT_EQ(kIdxImageMagic, 2051u);
  EXPECT_EQ(kIdxLabelMagic, 2049u);
  const auto d = decode_idx(idx_images(2051, 3), idx_labels(2049, 3), 2, 2);
  ASSERT_EQ(d.images.shape(), (Shape{3, 2, 2, 3}));
  EXPECT_EQ(d.images(1, 1, 1, 0), 1.0);
  EXPECT_EQ(d.images(1, 1, 1, 2), 1.0);
  EXPECT_DOUBLE_EQ(d.images(0, 0, 1, 1), 0.2);
  EXPECT_EQ(d.labels, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(d.num_classes, 3u);
}

TEST(Idx, NearestResize) {
  const auto d = decode_idx(idx_images(2051, 1), idx_labels(2049, 1), 4, 4);
  EXPECT_EQ(d.images(0, 0, 0, 0), 0.0);
  EXPECT_EQ(d.images(0, 1, 1, 0), 0.0);
  EXPECT_DOUBLE_EQ(d.images(0, 0, 2, 0), 0.2);
  EXPECT_DOUBLE_EQ(d.images(0, 3, 0, 0), 0.4);
  EXPECT_EQ(d.images(0, 3, 3, 0), 1.0);
}

TEST(Idx, DistinctErrors) {
  EXPECT_THROW(decode_idx(idx_images(2049, 2), idx_labels(2049, 2), 2, 2), IdxMagicError);
  EXPECT_THROW(decode_idx(idx_images(2051, 2), idx_labels(2051, 2), 2, 2), IdxMagicError);
  EXPECT_THROW(decode_idx(idx_images(2051, 2), idx_labels(2049, 3), 2, 2), IdxCountMismatchError);
  auto cut = idx_images(2051, 2);
  cut.pop_back();
  EXPECT_THROW(decode_idx(cut, idx_labels(2049, 2), 2, 2), IdxTruncatedError);
  auto short_labels = idx_labels(2049, 2);
  short_labels.pop_back();
  EXPECT_THROW(decode_idx(idx_images(2051, 2), short_labels, 2, 2), IdxTruncatedError);
  EXPECT_THROW(decode_idx(std::vector<std::uint8_t>{0, 0}, idx_labels(2049, 2), 2, 2), IdxTruncatedError);
  EXPECT_THROW(load_idx("/nonexistent/images", "/nonexistent/labels", 2, 2), IoError);
}

// ---- optimizer and schedule

TEST(AdamW, ZeroGradientZeroDecayLeavesParameters) {
  ParameterStore<double> store;
  auto& p = store.add("w", Tensor<double>({2, 2}, {1, -2, 3, 4}));
  TrainConfig cfg;
  cfg.weight_decay = 0;
  AdamW opt(cfg);
  for (int i = 0; i < 3; ++i) opt.step(store, 0.1);
  EXPECT_EQ(p.value, Tensor<double>({2, 2}, {1, -2, 3, 4}));
}

TEST(AdamW, ZeroGradientIsPureDecay) {
  ParameterStore<double> store;
  auto& w = store.add("w", Tensor<double>({1, 2}, {1, -2}));
  auto& b = store.add("b", Tensor<double>({2}, {5, 6}));
  TrainConfig cfg;
  cfg.weight_decay = 0.05;
  AdamW opt(cfg);
  opt.step(store, 0.1);
  EXPECT_DOUBLE_EQ(w.value[0], 1 * (1 - 0.1 * 0.05));
  EXPECT_DOUBLE_EQ(w.value[1], -2 * (1 - 0.1 * 0.05));
  EXPECT_EQ(b.value, Tensor<double>({2}, {5, 6}));  // vectors are not decayed by default

  cfg.decay_vectors = true;
  AdamW all(cfg);
  all.step(store, 0.1);
  EXPECT_DOUBLE_EQ(b.value[0], 5 * (1 - 0.1 * 0.05));
}

TEST(AdamW, FirstStepScalarHandComputation) {
  ParameterStore<double> store;
  auto& p = store.add("p", Tensor<double>({1, 1}, {1.0}));
  p.grad[0] = 1.0;
  TrainConfig cfg;
  cfg.weight_decay = 0;
  AdamW opt(cfg);
  opt.step(store, 0.1);
  // m = 0.1, v = 0.001, both bias corrections give 1: p = 1 - 0.1 / (1 + 1e-8).
  EXPECT_NEAR(p.value[0], 0.9000000009999999900, 1e-15);
}

TEST(AdamW, SecondStepScalarHandComputation) {
  ParameterStore<double> store;
  auto& p = store.add("p", Tensor<double>({1, 1}, {0.0}));
  TrainConfig cfg;
  cfg.weight_decay = 0;
  cfg.eps = 0;
  AdamW opt(cfg);
  p.grad[0] = 2.0;
  opt.step(store, 0.01);
  p.grad[0] = -1.0;
  opt.step(store, 0.01);
  // Step 2: m = 0.9*0.2 - 0.1 = 0.08, v = 0.999*0.004 + 0.001 = 0.004996,
  // m_hat = 0.08 / 0.19, v_hat = 0.004996 / 0.001999.
  const double expected = -0.01 - 0.01 * (0.08 / 0.19) / std::sqrt(0.004996 / 0.001999);
  EXPECT_NEAR(p.value[0], expected, 1e-15);
}

TEST(Schedule, WarmupStartsAtFloorAndJoinsCosine) {
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.min_lr = 1e-6;
  cfg.warmup_epochs = 2;
  cfg.epochs = 30;
  EXPECT_EQ(learning_rate(cfg, 0.0), 1e-6);
  EXPECT_NEAR(learning_rate(cfg, 1.0), (1e-6 + 1e-3) / 2, 1e-18);
  EXPECT_NEAR(learning_rate(cfg, 2.0 - 1e-13), learning_rate(cfg, 2.0), 1e-12);
  EXPECT_EQ(learning_rate(cfg, 2.0), 1e-3);
  EXPECT_NEAR(learning_rate(cfg, 16.0), 1e-6 + (1e-3 - 1e-6) * 0.5, 1e-18);
  EXPECT_NEAR(learning_rate(cfg, 30.0), 1e-6, 1e-18);
  double prev = learning_rate(cfg, 2.0);
  for (double t = 2.25; t <= 30; t += 0.25) {
    const double lr = learning_rate(cfg, t);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
  cfg.schedule = Schedule::Constant;
  EXPECT_EQ(learning_rate(cfg, 0.0), 1e-3);
}

// ---- training loop

TEST(Training, IdenticalSeedsGiveIdenticalTrajectories) {
  SyntheticSpec spec;
  spec.samples_per_class = 6;
  const auto data = gen_synthetic(spec);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  auto run = [&](std::uint64_t seed) {
    auto model_cfg = model_preset("nano-df");
    model_cfg.drop_path_rate = 0.1;
    Model<double> m(model_cfg, seed);
    const auto hist = train(m, data, cfg, Rng(seed).split("train"));
    std::vector<double> out;
    for (const auto& e : hist) out.push_back(e.loss);
    for (std::size_t i = 0; i < m.parameters().size(); ++i)
      for (double v : m.parameters()[i].value.data()) out.push_back(v);
    return out;
  };
  const auto a = run(4), b = run(4), c = run(5);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(Training, LossDecreasesOnSmallTask) {
  SyntheticSpec spec;
  spec.samples_per_class = 8;
  const auto data = gen_synthetic(spec);
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.warmup_epochs = 1;
  cfg.batch_size = 16;
  cfg.lr = 3e-3;
  Model<double> m(model_preset("nano-df"), 1);
  const double before = evaluate(m, data).loss;
  std::vector<EpochStats> seen;
  train(m, data, cfg, Rng(1), [&](const EpochStats& e) { seen.push_back(e); });
  ASSERT_EQ(seen.size(), 6u);
  EXPECT_EQ(seen[0].lr, cfg.min_lr);
  EXPECT_LT(evaluate(m, data).loss, before);
}

// ---- config

TEST(Config, TemplateParsesToDefaults) {
  std::istringstream in(config_template());
  const auto cfg = parse_config(in);
  EXPECT_EQ(cfg.model.name, "nano-df");
  EXPECT_EQ(cfg.train.epochs, 30u);
  EXPECT_EQ(cfg.train.batch_size, 64u);
  EXPECT_EQ(cfg.train.lr, 1e-3);
  EXPECT_EQ(cfg.train.warmup_epochs, 2.0);
  EXPECT_EQ(cfg.train.weight_decay, 0.05);
  EXPECT_EQ(cfg.data.grid, 32u);
}

TEST(Config, OverridesApply) {
  std::istringstream in(
      "seed = 7\nmodel.family = gf\nmodel.size = nano\nmodel.input = 64\nstages[2].depth = 3  # deeper\n"
      "train.schedule = constant\ntrain.decay_vectors = true\ndata.noise = 0\n");
  const auto cfg = parse_config(in);
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_EQ(cfg.data.seed, 7u);
  EXPECT_EQ(cfg.model.family, "gfformer");
  EXPECT_EQ(cfg.model.input_height, 64u);
  EXPECT_EQ(cfg.data.grid, 64u);
  EXPECT_EQ(cfg.model.stages[2].depth, 3u);
  EXPECT_EQ(cfg.train.schedule, Schedule::Constant);
  EXPECT_TRUE(cfg.train.decay_vectors);
  EXPECT_EQ(cfg.data.noise_sigma, 0.0);
}

void expect_config_error(const std::string& text, std::size_t line, const std::string& key) {
  std::istringstream in(text);
  try {
    parse_config(in);
    ADD_FAILURE() << "accepted: " << text;
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), line) << e.what();
    EXPECT_EQ(e.key(), key) << e.what();
    if (line) {
      EXPECT_NE(std::string(e.what()).find("line " + std::to_string(line)), std::string::npos);
    }
  }
}

TEST(Config, DiagnosticsNameLineAndKey) {
  expect_config_error("seed = 1\ntrain.lr = fast\n", 2, "train.lr");
  expect_config_error("# comment\n\ntrain.epochs = -3\n", 3, "train.epochs");
  expect_config_error("train.bogus = 1\n", 1, "train.bogus");
  expect_config_error("seed = 1\nseed = 2\n", 2, "seed");
  expect_config_error("seed 1\n", 1, "");
  expect_config_error("model.preset = nano-zz\n", 1, "model.preset");
  expect_config_error("stages[0].mixer = pool\n", 1, "stages[0].mixer");
  expect_config_error("model.family = dfformer\n", 1, "model.family");
  expect_config_error("train.schedule = step\n", 1, "train.schedule");
  expect_config_error("train.batch_size = 0\n", 1, "train.batch_size");
  expect_config_error("model.input = 40\n", 0, "");
}

TEST(Config, HeldOutSetIsADisjointStream) {
  RunConfig cfg;
  cfg.seed = 3;
  cfg.data.samples_per_class = 2;
  cfg.eval_samples_per_class = 3;
  const auto tr = train_spec(cfg), ho = heldout_spec(cfg);
  EXPECT_EQ(tr.seed, 3u);
  EXPECT_NE(ho.seed, tr.seed);
  EXPECT_EQ(ho.samples_per_class, 3u);
  EXPECT_EQ(ho.grid, tr.grid);
  const auto a = gen_synthetic(tr), b = gen_synthetic(ho);
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_NE(a.images(i, 0, 0, 0), b.images(i, 0, 0, 0));
}

TEST(Config, MissingFileIsIoError) { EXPECT_THROW(load_config("/nonexistent/run.cfg"), IoError); }

// ---- bench

TEST(Bench, RowsMacsAndFailures) {
  BenchOptions opt;
  opt.repeats = 1;
  const auto report = run_bench({"nano-df", "nano-cf"}, {32, 40}, opt);
  ASSERT_EQ(report.rows.size(), 2u);
  ASSERT_EQ(report.failures.size(), 2u);
  EXPECT_EQ(report.failures[0].resolution, 40u);
  for (const auto& row : report.rows) {
    EXPECT_EQ(row.resolution, 32u);
    EXPECT_EQ(row.macs, count_flops(with_input(model_preset(row.model), 32, 32)).total);
    EXPECT_GT(row.seconds_per_image, 0.0);
    EXPECT_GT(row.est_bytes, count_params(model_preset(row.model)) * sizeof(double));
  }
  std::ostringstream out;
  write_bench_csv(out, report.rows);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "model,resolution,seconds_per_image,macs,est_bytes");
}

TEST(Bench, SinglePrecisionRuns) {
  BenchOptions opt;
  opt.repeats = 1;
  opt.single_precision = true;
  EXPECT_GT(time_forward(model_preset("nano-gf"), opt), 0.0);
}

}  // namespace
}  // namespace dff
