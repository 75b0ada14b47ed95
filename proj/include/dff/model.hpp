#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dff/layers.hpp"
#include "dff/mixers.hpp"
#include "dff/module.hpp"
#include "dff/random.hpp"

namespace dff {

class BuildError : public Error {
 public:
  using Error::Error;
};

enum class MixerKind { DynamicFilter, SepConv, GlobalFilter, Attention };

std::string mixer_name(MixerKind kind);
/// Accepts "df", "cf", "gf", "attn" and the long names.
MixerKind parse_mixer(const std::string& name);

struct StageConfig {
  std::size_t depth = 1;
  std::size_t width = 64;
  MixerKind mixer = MixerKind::DynamicFilter;
  std::size_t down_kernel = 3;
  std::size_t down_stride = 2;
  std::size_t down_padding = 1;
  bool res_scale = false;
};

struct ModelConfig {
  std::string name = "custom";
  /// "dfformer", "cdfformer", "gfformer", "convformer", "attnformer" or "custom".
  std::string family = "custom";
  std::array<StageConfig, 4> stages{};
  std::size_t input_height = 224;
  std::size_t input_width = 224;
  std::size_t in_channels = 3;
  std::size_t num_classes = 1000;
  std::size_t mlp_ratio = 4;
  std::size_t mixer_expansion = 2;
  std::size_t num_filters = 4;
  double routeing_ratio = 0.25;
  std::size_t head_ratio = 4;
  std::size_t sepconv_kernel = 7;
  std::size_t attention_head_dim = 32;
  Activation activation = Activation::StarReLU;
  /// Largest stochastic-depth rate; blocks get linearly increasing rates.
  double drop_path_rate = 0.0;

  /// Feature extents after each stage's downsampling.
  std::array<std::pair<std::size_t, std::size_t>, 4> stage_extents() const;
  /// Throws BuildError on an invalid geometry or a family/mixer mismatch.
  void validate() const;
  std::size_t total_blocks() const;
};

/// Presets: "<family>-<size>" with family in {dfformer, cdfformer, gfformer,
/// convformer, attnformer} and size in {s18, s36, m36, b36}, plus the
/// desk-scale "nano-df", "nano-cdf", "nano-gf", "nano-cf", "nano-attn".
ModelConfig model_preset(const std::string& name);
std::vector<std::string> preset_names();
/// Family and size resolved separately, e.g. ("dfformer", "nano").
ModelConfig make_config(const std::string& family, const std::string& size);

/// Same config with a different input resolution.
ModelConfig with_input(ModelConfig cfg, std::size_t height, std::size_t width);

template <typename T>
using Mixer = std::variant<DynamicFilter<T>, SepConv<T>, GlobalFilter<T>, Attention<T>>;

template <typename T>
struct Block {
  LayerNorm<T> norm1;
  Mixer<T> mixer;
  std::optional<ResScale<T>> res_scale1;
  LayerNorm<T> norm2;
  Linear<T> fc1;
  ActivationLayer<T> act;
  Linear<T> fc2;
  std::optional<ResScale<T>> res_scale2;
  double drop_path = 0.0;
};

template <typename T>
struct Downsample {
  std::optional<LayerNorm<T>> pre_norm;
  Conv2d<T> conv;
  std::optional<LayerNorm<T>> post_norm;
};

template <typename T>
struct Head {
  LayerNorm<T> norm;
  Linear<T> fc1;
  ActivationLayer<T> act;
  LayerNorm<T> hidden_norm;
  Linear<T> fc2;
};

/// Called with the running index, a label and the value of each analyzed
/// activation: the 4 downsampling outputs and every residual sub-block output.
template <typename T>
using ActivationTap = std::function<void(std::size_t index, const std::string& label, Var<T> value)>;

template <typename T>
struct ForwardOptions {
  bool training = false;
  Rng* rng = nullptr;  // drop-path masks; required only when rates are nonzero
  ActivationTap<T> tap;
};

/// The four-stage network. Assembly goes through a Registrar so the same
/// code path yields either weights or a parameter layout.
template <typename T>
struct Network {
  static Network assemble(const ModelConfig& cfg, Registrar<T>& reg);

  /// images [B, H, W, in_channels] -> logits [B, num_classes]
  Var<T> forward(Var<T> images, const ForwardOptions<T>& opts = {}) const;

  ModelConfig config;
  std::array<Downsample<T>, 4> downsample;
  std::array<std::vector<Block<T>>, 4> stages;
  Head<T> head;
};

/// A network together with the parameters it points into.
template <typename T>
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  Var<T> forward(Var<T> images, const ForwardOptions<T>& opts = {}) const { return net_.forward(images, opts); }
  Tensor<T> predict(const Tensor<T>& images) const;

  const ModelConfig& config() const { return net_.config; }
  const Network<T>& network() const { return net_; }
  ParameterStore<T>& parameters() { return *store_; }
  const ParameterStore<T>& parameters() const { return *store_; }

 private:
  std::unique_ptr<ParameterStore<T>> store_;
  Network<T> net_;
};

template <typename T>
Model<T> build_model(const ModelConfig& cfg, std::uint64_t seed) {
  return Model<T>(cfg, seed);
}

std::vector<ParamSpec> parameter_layout(const ModelConfig& cfg);
/// Sum of element counts; complex entries count two reals per element.
std::uint64_t count_params(const ModelConfig& cfg);
template <typename T>
std::uint64_t count_params(const Model<T>& model) {
  return model.parameters().element_count();
}

/// Real multiply-accumulates of an orthonormal rfft2 or irfft2 over
/// `channels` planes of H x W: 2.5 * HW * log2(HW) each.
double fft_macs(std::size_t height, std::size_t width, std::size_t channels);

struct FlopReport {
  double total = 0;
  double convolutions = 0;  // stem, downsampling, pointwise and depthwise
  double fft = 0;
  double spectral_products = 0;
  double routeing = 0;
  double attention = 0;
  double head = 0;
  std::array<double, 4> stage_fft{};
};

/// Analytic MAC count of one forward pass at the config's input resolution.
FlopReport count_flops(const ModelConfig& cfg);

}  // namespace dff
