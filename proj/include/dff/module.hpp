#pragma once

#include <string>
#include <vector>

#include "dff/autograd.hpp"
#include "dff/random.hpp"

namespace dff {

enum class InitKind { Zeros, Constant, TruncatedNormal, Normal };

struct Init {
  InitKind kind = InitKind::Zeros;
  double value = 0;  // constant value, or standard deviation for the normal kinds

  static Init zeros() { return {InitKind::Zeros, 0}; }
  static Init constant(double v) { return {InitKind::Constant, v}; }
  static Init truncated_normal(double std) { return {InitKind::TruncatedNormal, std}; }
  static Init normal(double std) { return {InitKind::Normal, std}; }
};

struct ParamSpec {
  std::string name;
  Shape shape;
  bool is_complex = false;
  bool persistent = true;
};

/// Receives parameter declarations while a network is assembled. The same
/// assembly code either materializes weights or only records the layout.
template <typename T>
class Registrar {
 public:
  virtual ~Registrar() = default;
  /// Returns null when only the layout is being recorded.
  virtual Parameter<T>* declare(ParamSpec spec, Init init) = 0;
};

template <typename T>
class Materializer final : public Registrar<T> {
 public:
  Materializer(ParameterStore<T>& store, Rng rng) : store_(store), rng_(rng) {}

  Parameter<T>* declare(ParamSpec spec, Init init) override {
    Tensor<T> value(spec.shape);
    switch (init.kind) {
      case InitKind::Zeros:
        break;
      case InitKind::Constant:
        value.fill(static_cast<T>(init.value));
        break;
      case InitKind::TruncatedNormal:
        for (auto& v : value.data()) v = static_cast<T>(rng_.truncated_normal(init.value));
        break;
      case InitKind::Normal:
        for (auto& v : value.data()) v = static_cast<T>(rng_.normal() * init.value);
        break;
    }
    return &store_.add(std::move(spec.name), std::move(value), spec.is_complex, spec.persistent);
  }

 private:
  ParameterStore<T>& store_;
  Rng rng_;
};

template <typename T>
class LayoutRecorder final : public Registrar<T> {
 public:
  Parameter<T>* declare(ParamSpec spec, Init) override {
    specs_.push_back(std::move(spec));
    return nullptr;
  }
  const std::vector<ParamSpec>& specs() const { return specs_; }

 private:
  std::vector<ParamSpec> specs_;
};

}  // namespace dff
