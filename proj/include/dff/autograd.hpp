#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dff/tensor.hpp"

namespace dff {

/// A trainable tensor. Complex parameters are stored as real pairs with a
/// trailing axis of extent 2 and report `is_complex`.
template <typename T>
struct Parameter {
  Parameter(std::string name, Tensor<T> value, bool is_complex = false, bool persistent = true);

  void zero_grad() { grad.fill(T(0)); }

  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool is_complex = false;
  /// Non-persistent parameters are skipped by checkpoint I/O.
  bool persistent = true;
};

/// Owns parameters at stable addresses.
template <typename T>
class ParameterStore {
 public:
  Parameter<T>& add(std::string name, Tensor<T> value, bool is_complex = false, bool persistent = true);
  Parameter<T>* find(std::string_view name);
  const Parameter<T>* find(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  /// Total real element count; complex entries count twice.
  std::size_t element_count() const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
class Tape;

using NodeId = std::size_t;

/// Handle to a value recorded on a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  NodeId id() const { return id_; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape<T>* tape_ = nullptr;
  NodeId id_ = 0;
};

/// View handed to a node's backward rule.
template <typename T>
class BackwardContext {
 public:
  BackwardContext(Tape<T>& tape, NodeId node) : tape_(tape), node_(node) {}

  const Tensor<T>& grad_output() const;
  const Tensor<T>& output() const;
  const Tensor<T>& input(std::size_t k) const;
  /// Whether input k leads to any parameter.
  bool wants(std::size_t k) const;
  /// Gradient slot of input k, zero-filled on first access.
  Tensor<T>& grad_input(std::size_t k);

 private:
  Tape<T>& tape_;
  NodeId node_;
};

template <typename T>
using BackwardRule = std::function<void(BackwardContext<T>&)>;

enum class GradMode { Enabled, Disabled };

/// Reverse-mode record. Nodes are appended in evaluation order, which is a
/// topological order; backward walks it once in reverse.
template <typename T>
class Tape {
 public:
  explicit Tape(GradMode mode = GradMode::Enabled) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  /// Leaf bound to a parameter. Repeated calls return the same node.
  Var<T> parameter(Parameter<T>& p);
  Var<T> record(std::string_view op, Tensor<T> value, std::initializer_list<Var<T>> inputs,
                BackwardRule<T> rule);
  Var<T> record(std::string_view op, Tensor<T> value, std::span<const Var<T>> inputs, BackwardRule<T> rule);

  /// Writes d(loss)/d(param) into every reachable Parameter::grad (additively).
  void backward(Var<T> loss);

  bool grad_enabled() const { return mode_ == GradMode::Enabled; }
  std::size_t size() const { return nodes_.size(); }
  std::string_view op(NodeId id) const { return nodes_[id].op; }
  const Tensor<T>& value(NodeId id) const;
  /// Node gradient from the last backward pass (empty if the node got none).
  const Tensor<T>& grad(NodeId id) const { return grads_.at(id); }
  bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }
  /// Bytes held by recorded values (parameters excluded).
  std::size_t value_bytes() const;

 private:
  friend class BackwardContext<T>;

  struct Node {
    std::string_view op;
    Tensor<T> value;
    Parameter<T>* param = nullptr;
    std::vector<NodeId> inputs;
    BackwardRule<T> rule;
    bool requires_grad = false;
  };

  GradMode mode_;
  std::deque<Node> nodes_;
  std::vector<Tensor<T>> grads_;
  std::unordered_map<const Parameter<T>*, NodeId> param_nodes_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

// Differentiable generic ops. Broadcasting: `b` may match the trailing dims
// of `a` or be a one-element scalar.

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> multiply(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, T factor);
template <typename T>
Var<T> reshape(Var<T> a, Shape shape);
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);
/// x [..., k] times w [k x n] over the last axis.
template <typename T>
Var<T> linear(Var<T> x, Var<T> w);
template <typename T>
Var<T> sum(Var<T> a);
template <typename T>
Var<T> mean(Var<T> a);
/// sum(a * weights) with constant weights of the same shape.
template <typename T>
Var<T> weighted_sum(Var<T> a, const Tensor<T>& weights);
/// Per-row multiply of a [B, ...] by constant factors [B].
template <typename T>
Var<T> scale_rows(Var<T> a, const std::vector<T>& factors);
/// Softmax over axis 1 of a [B, N, C] tensor, with max subtraction.
template <typename T>
Var<T> softmax_axis1(Var<T> a);
/// Mean softmax cross-entropy of logits [B, K] against integer labels.
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> labels, T label_smoothing = T(0));

/// Central finite-difference comparison of tape gradients.
struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-5;
  /// Elements probed per parameter; 0 probes every element.
  std::size_t max_probes_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string name;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double error = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> worst_per_param;
  double max_error = 0;
  std::size_t probes = 0;
  bool passed(double tol) const { return max_error < tol; }
};

/// `loss_fn` records a scalar loss on the tape it is given. Errors are
/// |analytic - numeric| / max(1, |numeric|).
GradCheckReport check_gradients(const std::function<Var<double>(Tape<double>&)>& loss_fn,
                                 std::span<Parameter<double>* const> params, const GradCheckOptions& options);

}  // namespace dff
