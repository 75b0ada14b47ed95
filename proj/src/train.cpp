#include "dff/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace dff {

double learning_rate(const TrainConfig& cfg, double epoch) {
  if (cfg.schedule == Schedule::Constant) return cfg.lr;
  const double warm = std::max(0.0, cfg.warmup_epochs);
  if (epoch < warm) return cfg.min_lr + (cfg.lr - cfg.min_lr) * epoch / warm;
  const double span = static_cast<double>(cfg.epochs) - warm;
  if (span <= 0) return cfg.lr;
  const double progress = std::clamp((epoch - warm) / span, 0.0, 1.0);
  return cfg.min_lr + (cfg.lr - cfg.min_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void AdamW::step(ParameterStore<double>& params, double lr) {
  if (m_.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.emplace_back(params[i].value.shape());
      v_.emplace_back(params[i].value.shape());
    }
  }
  if (m_.size() != params.size()) throw ContractError("AdamW state was built for a different parameter set");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const bool decay = cfg_.decay_vectors || p.value.rank() > 1;
    const double wd = decay ? cfg_.weight_decay : 0.0;
    auto value = p.value.data();
    auto grad = p.grad.data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t k = 0; k < value.size(); ++k) {
      m[k] = cfg_.beta1 * m[k] + (1 - cfg_.beta1) * grad[k];
      v[k] = cfg_.beta2 * v[k] + (1 - cfg_.beta2) * grad[k] * grad[k];
      const double m_hat = m[k] / c1, v_hat = v[k] / c2;
      value[k] = value[k] - lr * wd * value[k] - lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }
}

namespace {

std::size_t correct(const Tensor<double>& logits, std::span<const int> labels) {
  const std::size_t B = logits.extent(0), K = logits.extent(1);
  std::size_t hits = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const double* row = logits.ptr() + b * K;
    if (static_cast<int>(std::max_element(row, row + K) - row) == labels[b]) ++hits;
  }
  return hits;
}

}  // namespace

std::vector<EpochStats> train(Model<double>& model, const Dataset& data, const TrainConfig& cfg, const Rng& rng,
                              const EpochCallback& on_epoch) {
  if (data.size() == 0) throw ContractError("training on an empty dataset");
  if (cfg.batch_size == 0) throw ContractError("batch size must be positive");
  AdamW opt(cfg);
  auto& params = model.parameters();
  const std::size_t N = data.size();
  const std::size_t batches = (N + cfg.batch_size - 1) / cfg.batch_size;
  std::vector<std::size_t> order(N);
  std::vector<EpochStats> history;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle = rng.split("shuffle").split(epoch);
    for (std::size_t i = N; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    Rng drop = rng.split("drop_path").split(epoch);
    ForwardOptions<double> opts;
    opts.training = true;
    opts.rng = &drop;

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = learning_rate(cfg, static_cast<double>(epoch));
    double loss_sum = 0;
    std::size_t hits = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * cfg.batch_size, hi = std::min(N, lo + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
      const auto labels = data.gather_labels(idx);
      params.zero_grad();
      Tape<double> tape;
      auto logits = model.forward(tape.constant(data.gather_images(idx)), opts);
      auto loss = cross_entropy(logits, std::span<const int>(labels), cfg.label_smoothing);
      tape.backward(loss);
      const double lr = learning_rate(cfg, static_cast<double>(epoch) + static_cast<double>(b) / batches);
      opt.step(params, lr);
      loss_sum += loss.value()[0] * static_cast<double>(hi - lo);
      hits += correct(logits.value(), labels);
    }
    stats.loss = loss_sum / static_cast<double>(N);
    stats.accuracy = static_cast<double>(hits) / static_cast<double>(N);
    history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return history;
}

EvalStats evaluate(const Model<double>& model, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) throw ContractError("evaluating on an empty dataset");
  if (batch_size == 0) throw ContractError("batch size must be positive");
  EvalStats out;
  std::size_t hits = 0;
  std::vector<std::size_t> idx;
  for (std::size_t lo = 0; lo < data.size(); lo += batch_size) {
    idx.clear();
    for (std::size_t i = lo; i < std::min(data.size(), lo + batch_size); ++i) idx.push_back(i);
    const auto labels = data.gather_labels(idx);
    Tape<double> tape(GradMode::Disabled);
    auto logits = model.forward(tape.constant(data.gather_images(idx)));
    out.loss += cross_entropy(logits, std::span<const int>(labels)).value()[0] * static_cast<double>(idx.size());
    hits += correct(logits.value(), labels);
  }
  out.loss /= static_cast<double>(data.size());
  out.accuracy = static_cast<double>(hits) / static_cast<double>(data.size());
  return out;
}

}  // namespace dff
