#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "dff/data.hpp"
#include "dff/model.hpp"
#include "dff/train.hpp"

namespace dff {

/// Malformed or invalid configuration; the message names the line and key.
class ConfigError : public Error {
 public:
  ConfigError(std::size_t line, const std::string& key, const std::string& message);
  std::size_t line() const { return line_; }
  const std::string& key() const { return key_; }

 private:
  std::size_t line_;
  std::string key_;
};

struct RunConfig {
  ModelConfig model = model_preset("nano-df");
  TrainConfig train;
  SyntheticSpec data;
  std::size_t eval_samples_per_class = 64;
  std::uint64_t seed = 0;
};

/// Line-oriented `key = value` text; `#` starts a comment. Keys:
///   seed
///   model.preset | model.family + model.size, model.input (N or HxW),
///   model.num_classes, model.num_filters, model.routeing_ratio,
///   model.activation, model.drop_path
///   stages[i].depth, stages[i].width, stages[i].mixer   (i in 0..3)
///   train.lr, train.weight_decay, train.beta1, train.beta2, train.eps,
///   train.epochs, train.warmup_epochs, train.batch_size, train.schedule,
///   train.min_lr, train.label_smoothing, train.decay_vectors
///   data.samples_per_class, data.eval_samples_per_class, data.noise,
///   data.jitter
/// The synthetic grid follows the model input.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);

/// Commented template holding the desk-scale defaults.
std::string config_template();

/// Synthetic training set of a run: the config's data spec.
SyntheticSpec train_spec(const RunConfig& cfg);
/// Held-out set: same task, a disjoint stream, eval_samples_per_class.
SyntheticSpec heldout_spec(const RunConfig& cfg);

struct SyntheticRun {
  Model<double> model;
  std::vector<EpochStats> history;
  EvalStats train;    // inference mode, after the last epoch
  EvalStats heldout;
};

/// Initializes from `seed`, trains on train_spec and evaluates on both sets.
/// Initialization, data and shuffling draw from separate streams of the seed.
SyntheticRun run_synthetic(const RunConfig& cfg, const EpochCallback& on_epoch = {});

}  // namespace dff
