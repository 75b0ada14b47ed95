#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dff/data.hpp"
#include "dff/model.hpp"

namespace dff {

enum class Schedule { Cosine, Constant };

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t epochs = 30;
  double warmup_epochs = 2;
  std::size_t batch_size = 64;
  Schedule schedule = Schedule::Cosine;
  /// Learning rate at the start of warmup and at the end of the cosine.
  double min_lr = 1e-6;
  double label_smoothing = 0.0;
  /// Rank-0/1 parameters (norm scales, biases, StarReLU, residual scales)
  /// are left out of weight decay unless this is set.
  bool decay_vectors = false;
};

/// Learning rate at fractional epoch t: linear from min_lr to lr over the
/// warmup, then cosine from lr down to min_lr at `epochs`.
double learning_rate(const TrainConfig& cfg, double epoch);

/// Decoupled-decay Adam over every parameter of a store, keyed by position.
class AdamW {
 public:
  explicit AdamW(const TrainConfig& cfg) : cfg_(cfg) {}

  /// p <- p - lr*wd*p - lr * m_hat / (sqrt(v_hat) + eps), using p.grad.
  void step(ParameterStore<double>& params, double lr);
  std::uint64_t steps() const { return t_; }

 private:
  TrainConfig cfg_;
  std::vector<Tensor<double>> m_, v_;
  std::uint64_t t_ = 0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double lr = 0;  // at the epoch's first step
  double loss = 0;
  double accuracy = 0;  // running, in training mode
};

struct EvalStats {
  double loss = 0;
  double accuracy = 0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mini-batch training. Shuffling and stochastic depth draw from `rng`
/// sub-streams, so a (model seed, rng) pair fixes the whole trajectory.
std::vector<EpochStats> train(Model<double>& model, const Dataset& data, const TrainConfig& cfg, const Rng& rng,
                              const EpochCallback& on_epoch = {});

/// Inference-mode loss and accuracy.
EvalStats evaluate(const Model<double>& model, const Dataset& data, std::size_t batch_size = 64);

}  // namespace dff
