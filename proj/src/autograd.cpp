#include "dff/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dff/random.hpp"

namespace dff {

template <typename T>
Parameter<T>::Parameter(std::string name_, Tensor<T> value_, bool is_complex_, bool persistent_)
    : name(std::move(name_)),
      value(std::move(value_)),
      grad(Tensor<T>::zeros(value.shape())),
      is_complex(is_complex_),
      persistent(persistent_) {
  if (is_complex && value.shape().back() != 2) {
    throw ShapeError("complex parameter " + name + " needs a trailing pair axis, got " + to_string(value.shape()));
  }
}

template <typename T>
Parameter<T>& ParameterStore<T>::add(std::string name, Tensor<T> value, bool is_complex, bool persistent) {
  if (index_.contains(name)) throw ContractError("duplicate parameter name " + name);
  index_.emplace(name, params_.size());
  params_.push_back(std::make_unique<Parameter<T>>(std::move(name), std::move(value), is_complex, persistent));
  return *params_.back();
}

template <typename T>
Parameter<T>* ParameterStore<T>::find(std::string_view name) {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : params_[it->second].get();
}

template <typename T>
const Parameter<T>* ParameterStore<T>::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : params_[it->second].get();
}

template <typename T>
std::size_t ParameterStore<T>::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

template <typename T>
const Tensor<T>& BackwardContext<T>::grad_output() const {
  return tape_.grads_[node_];
}

template <typename T>
const Tensor<T>& BackwardContext<T>::output() const {
  return tape_.value(node_);
}

template <typename T>
const Tensor<T>& BackwardContext<T>::input(std::size_t k) const {
  return tape_.value(tape_.nodes_[node_].inputs.at(k));
}

template <typename T>
bool BackwardContext<T>::wants(std::size_t k) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs.at(k)].requires_grad;
}

template <typename T>
Tensor<T>& BackwardContext<T>::grad_input(std::size_t k) {
  const NodeId id = tape_.nodes_[node_].inputs.at(k);
  auto& g = tape_.grads_[id];
  if (g.empty()) g = Tensor<T>::zeros(tape_.value(id).shape());
  return g;
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::parameter(Parameter<T>& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var<T>(this, it->second);
  Node n;
  n.op = "parameter";
  n.param = &p;
  n.requires_grad = grad_enabled();
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(std::string_view op, Tensor<T> value, std::initializer_list<Var<T>> inputs,
                       BackwardRule<T> rule) {
  return record(op, std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()), std::move(rule));
}

template <typename T>
Var<T> Tape<T>::record(std::string_view op, Tensor<T> value, std::span<const Var<T>> inputs,
                       BackwardRule<T> rule) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const auto& v : inputs) {
    if (&v.tape() != this) throw ContractError(std::string(op) + ": input recorded on another tape");
    n.inputs.push_back(v.id());
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
  }
  if (n.requires_grad) n.rule = std::move(rule);
  nodes_.push_back(std::move(n));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
const Tensor<T>& Tape<T>::value(NodeId id) const {
  const Node& n = nodes_.at(id);
  return n.param ? n.param->value : n.value;
}

template <typename T>
std::size_t Tape<T>::value_bytes() const {
  std::size_t bytes = 0;
  for (const auto& n : nodes_) bytes += n.value.size() * sizeof(T);
  return bytes;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (&loss.tape() != this) throw ContractError("backward: loss recorded on another tape");
  if (!grad_enabled()) throw ContractError("backward: tape was recorded with gradients disabled");
  const Tensor<T>& lv = value(loss.id());
  if (lv.size() != 1) throw ContractError("backward: loss must be a scalar, got shape " + to_string(lv.shape()));

  grads_.assign(nodes_.size(), Tensor<T>{});
  grads_[loss.id()] = Tensor<T>::full(lv.shape(), T(1));
  for (NodeId id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (grads_[id].empty() || !n.requires_grad) continue;
    if (n.rule) {
      BackwardContext<T> ctx(*this, id);
      n.rule(ctx);
    }
    if (n.param) accumulate(n.param->grad, grads_[id]);
  }
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  auto& tape = a.tape();
  return tape.record("add", dff::add(a.value(), b.value()), {a, b}, [](BackwardContext<T>& ctx) {
    const auto& g = ctx.grad_output();
    if (ctx.wants(0)) accumulate(ctx.grad_input(0), g);
    if (ctx.wants(1)) {
      auto& gb = ctx.grad_input(1);
      const std::size_t n = gb.size();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
    }
  });
}

template <typename T>
Var<T> multiply(Var<T> a, Var<T> b) {
  auto& tape = a.tape();
  return tape.record("multiply", dff::multiply(a.value(), b.value()), {a, b}, [](BackwardContext<T>& ctx) {
    const auto& g = ctx.grad_output();
    const auto& av = ctx.input(0);
    const auto& bv = ctx.input(1);
    const std::size_t n = bv.size();
    if (ctx.wants(0)) {
      auto& ga = ctx.grad_input(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i % n];
    }
    if (ctx.wants(1)) {
      auto& gb = ctx.grad_input(1);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  return a.tape().record("scale", scaled(a.value(), factor), {a}, [factor](BackwardContext<T>& ctx) {
    const auto& g = ctx.grad_output();
    auto& ga = ctx.grad_input(0);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  return a.tape().record("reshape", a.value().reshaped(std::move(shape)), {a}, [](BackwardContext<T>& ctx) {
    const auto& g = ctx.grad_output();
    auto& ga = ctx.grad_input(0);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  return a.tape().record("matmul", dff::matmul(a.value(), b.value()), {a, b}, [](BackwardContext<T>& ctx) {
    const auto& g = ctx.grad_output();
    if (ctx.wants(0)) accumulate(ctx.grad_input(0), matmul_nt(g, ctx.input(1)));
    if (ctx.wants(1)) accumulate(ctx.grad_input(1), matmul_tn(ctx.input(0), g));
  });
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> w) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  if (wv.rank() != 2 || xv.shape().back() != wv.extent(0)) {
    throw ShapeError("linear: input " + to_string(xv.shape()) + " does not match weight " + to_string(wv.shape()));
  }
  const std::size_t k = wv.extent(0);
  const std::size_t n = wv.extent(1);
  const std::size_t rows = xv.size() / k;
  Shape out_shape = xv.shape();
  out_shape.back() = n;
  Tensor<T> flat(Shape{rows, k}, std::vector<T>(xv.data().begin(), xv.data().end()));
  Tensor<T> y = dff::matmul(flat, wv).reshaped(out_shape);
  return x.tape().record("linear", std::move(y), {x, w}, [rows, k, n](BackwardContext<T>& ctx) {
    const auto& gv = ctx.grad_output();
    Tensor<T> g(Shape{rows, n}, std::vector<T>(gv.data().begin(), gv.data().end()));
    if (ctx.wants(0)) {
      auto gx = matmul_nt(g, ctx.input(1));
      auto& gi = ctx.grad_input(0);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += gx[i];
    }
    if (ctx.wants(1)) {
      const auto& xin = ctx.input(0);
      Tensor<T> xf(Shape{rows, k}, std::vector<T>(xin.data().begin(), xin.data().end()));
      accumulate(ctx.grad_input(1), matmul_tn(xf, g));
    }
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  const auto& av = a.value();
  T s = std::accumulate(av.data().begin(), av.data().end(), T(0));
  return a.tape().record("sum", Tensor<T>::scalar(s), {a}, [](BackwardContext<T>& ctx) {
    const T g = ctx.grad_output()[0];
    for (auto& v : ctx.grad_input(0).data()) v += g;
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  const auto& av = a.value();
  const T n = static_cast<T>(av.size());
  T s = std::accumulate(av.data().begin(), av.data().end(), T(0)) / n;
  return a.tape().record("mean", Tensor<T>::scalar(s), {a}, [n](BackwardContext<T>& ctx) {
    const T g = ctx.grad_output()[0] / n;
    for (auto& v : ctx.grad_input(0).data()) v += g;
  });
}

template <typename T>
Var<T> weighted_sum(Var<T> a, const Tensor<T>& weights) {
  const auto& av = a.value();
  if (av.shape() != weights.shape()) {
    throw ShapeError("weighted_sum: weights " + to_string(weights.shape()) + " vs " + to_string(av.shape()));
  }
  T s = 0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * weights[i];
  return a.tape().record("weighted_sum", Tensor<T>::scalar(s), {a}, [weights](BackwardContext<T>& ctx) {
    const T g = ctx.grad_output()[0];
    auto& ga = ctx.grad_input(0);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * weights[i];
  });
}

template <typename T>
Var<T> scale_rows(Var<T> a, const std::vector<T>& factors) {
  const auto& av = a.value();
  if (av.extent(0) != factors.size()) throw ShapeError("scale_rows: factor count does not match batch");
  const std::size_t row = av.size() / factors.size();
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= factors[i / row];
  return a.tape().record("scale_rows", std::move(out), {a}, [factors, row](BackwardContext<T>& ctx) {
    const auto& g = ctx.grad_output();
    auto& ga = ctx.grad_input(0);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factors[i / row];
  });
}

template <typename T>
Var<T> softmax_axis1(Var<T> a) {
  const auto& av = a.value();
  if (av.rank() != 3) throw ShapeError("softmax_axis1 expects [B, N, C], got " + to_string(av.shape()));
  const std::size_t B = av.extent(0), N = av.extent(1), C = av.extent(2);
  Tensor<T> y(av.shape());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      T mx = av(b, 0, c);
      for (std::size_t i = 1; i < N; ++i) mx = std::max(mx, av[(b * N + i) * C + c]);
      T z = 0;
      for (std::size_t i = 0; i < N; ++i) {
        const T e = std::exp(av[(b * N + i) * C + c] - mx);
        y[(b * N + i) * C + c] = e;
        z += e;
      }
      for (std::size_t i = 0; i < N; ++i) y[(b * N + i) * C + c] /= z;
    }
  }
  return a.tape().record("softmax", std::move(y), {a}, [B, N, C](BackwardContext<T>& ctx) {
    const auto& g = ctx.grad_output();
    const auto& yv = ctx.output();
    auto& ga = ctx.grad_input(0);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t c = 0; c < C; ++c) {
        T dot = 0;
        for (std::size_t i = 0; i < N; ++i) dot += g[(b * N + i) * C + c] * yv[(b * N + i) * C + c];
        for (std::size_t i = 0; i < N; ++i) {
          const std::size_t k = (b * N + i) * C + c;
          ga[k] += yv[k] * (g[k] - dot);
        }
      }
    }
  });
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> labels, T label_smoothing) {
  const auto& lv = logits.value();
  if (lv.rank() != 2 || lv.extent(0) != labels.size()) {
    throw ShapeError("cross_entropy: logits " + to_string(lv.shape()) + " vs " + std::to_string(labels.size()) +
                     " labels");
  }
  const std::size_t B = lv.extent(0), K = lv.extent(1);
  Tensor<T> probs(lv.shape());
  T loss = 0;
  const T off = label_smoothing / static_cast<T>(K);
  for (std::size_t b = 0; b < B; ++b) {
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= K) throw ContractError("cross_entropy: label out of range");
    const T* row = lv.ptr() + b * K;
    const T mx = *std::max_element(row, row + K);
    T z = 0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(row[k] - mx);
    const T logz = std::log(z) + mx;
    for (std::size_t k = 0; k < K; ++k) {
      const T logp = row[k] - logz;
      probs[b * K + k] = std::exp(logp);
      const T q = off + (static_cast<std::size_t>(y) == k ? T(1) - label_smoothing : T(0));
      loss -= q * logp;
    }
  }
  loss /= static_cast<T>(B);
  std::vector<int> lab(labels.begin(), labels.end());
  return logits.tape().record(
      "cross_entropy", Tensor<T>::scalar(loss), {logits},
      [probs = std::move(probs), lab = std::move(lab), B, K, off, label_smoothing](BackwardContext<T>& ctx) {
        const T g = ctx.grad_output()[0] / static_cast<T>(B);
        auto& gl = ctx.grad_input(0);
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t k = 0; k < K; ++k) {
            const T q = off + (static_cast<std::size_t>(lab[b]) == k ? T(1) - label_smoothing : T(0));
            gl[b * K + k] += g * (probs[b * K + k] - q);
          }
        }
      });
}

GradCheckReport check_gradients(const std::function<Var<double>(Tape<double>&)>& loss_fn,
                                 std::span<Parameter<double>* const> params, const GradCheckOptions& options) {
  for (auto* p : params) p->zero_grad();
  {
    Tape<double> tape;
    auto loss = loss_fn(tape);
    tape.backward(loss);
  }
  auto evaluate = [&] {
    Tape<double> tape(GradMode::Disabled);
    return loss_fn(tape).value()[0];
  };

  GradCheckReport report;
  Rng rng(options.seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = *params[pi];
    std::vector<std::size_t> probes(p.value.size());
    std::iota(probes.begin(), probes.end(), 0);
    if (options.max_probes_per_param && probes.size() > options.max_probes_per_param) {
      Rng pick = rng.split(pi);
      for (std::size_t i = 0; i < options.max_probes_per_param; ++i) {
        std::swap(probes[i], probes[i + pick.below(probes.size() - i)]);
      }
      probes.resize(options.max_probes_per_param);
    }
    GradCheckEntry worst{p.name};
    worst.error = -1;
    for (auto idx : probes) {
      const double orig = p.value[idx];
      p.value[idx] = orig + options.step;
      const double up = evaluate();
      p.value[idx] = orig - options.step;
      const double down = evaluate();
      p.value[idx] = orig;
      const double numeric = (up - down) / (2 * options.step);
      const double analytic = p.grad[idx];
      const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
      ++report.probes;
      if (err > worst.error) worst = {p.name, idx, analytic, numeric, err};
    }
    report.max_error = std::max(report.max_error, worst.error);
    report.worst_per_param.push_back(worst);
  }
  return report;
}

#define DFF_INSTANTIATE(T)                                                        \
  template struct Parameter<T>;                                                   \
  template class ParameterStore<T>;                                               \
  template class BackwardContext<T>;                                              \
  template class Tape<T>;                                                         \
  template Var<T> add(Var<T>, Var<T>);                                            \
  template Var<T> multiply(Var<T>, Var<T>);                                       \
  template Var<T> scale(Var<T>, T);                                               \
  template Var<T> reshape(Var<T>, Shape);                                         \
  template Var<T> matmul(Var<T>, Var<T>);                                         \
  template Var<T> linear(Var<T>, Var<T>);                                         \
  template Var<T> sum(Var<T>);                                                    \
  template Var<T> mean(Var<T>);                                                   \
  template Var<T> weighted_sum(Var<T>, const Tensor<T>&);                         \
  template Var<T> scale_rows(Var<T>, const std::vector<T>&);                      \
  template Var<T> softmax_axis1(Var<T>);                                          \
  template Var<T> cross_entropy(Var<T>, std::span<const int>, T);

DFF_INSTANTIATE(float)
DFF_INSTANTIATE(double)

}  // namespace dff
