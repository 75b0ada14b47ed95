#include "dff/model.hpp"

#include <cmath>

#include "dff/spectral.hpp"

namespace dff {

std::string mixer_name(MixerKind kind) {
  switch (kind) {
    case MixerKind::DynamicFilter:
      return "df";
    case MixerKind::SepConv:
      return "cf";
    case MixerKind::GlobalFilter:
      return "gf";
    case MixerKind::Attention:
      return "attn";
  }
  return "?";
}

MixerKind parse_mixer(const std::string& name) {
  if (name == "df" || name == "dynamic_filter") return MixerKind::DynamicFilter;
  if (name == "cf" || name == "sepconv") return MixerKind::SepConv;
  if (name == "gf" || name == "global_filter") return MixerKind::GlobalFilter;
  if (name == "attn" || name == "attention") return MixerKind::Attention;
  throw BuildError("unknown mixer '" + name + "' (expected df, cf, gf or attn)");
}

std::array<std::pair<std::size_t, std::size_t>, 4> ModelConfig::stage_extents() const {
  std::array<std::pair<std::size_t, std::size_t>, 4> out{};
  std::size_t h = input_height, w = input_width;
  for (std::size_t s = 0; s < 4; ++s) {
    const auto& st = stages[s];
    h = conv_output_extent(h, st.down_kernel, st.down_stride, st.down_padding);
    w = conv_output_extent(w, st.down_kernel, st.down_stride, st.down_padding);
    out[s] = {h, w};
  }
  return out;
}

std::size_t ModelConfig::total_blocks() const {
  std::size_t n = 0;
  for (const auto& s : stages) n += s.depth;
  return n;
}

namespace {

std::array<MixerKind, 4> family_layout(const std::string& family) {
  using M = MixerKind;
  if (family == "dfformer") return {M::DynamicFilter, M::DynamicFilter, M::DynamicFilter, M::DynamicFilter};
  if (family == "cdfformer") return {M::SepConv, M::SepConv, M::DynamicFilter, M::DynamicFilter};
  if (family == "gfformer") return {M::GlobalFilter, M::GlobalFilter, M::GlobalFilter, M::GlobalFilter};
  if (family == "convformer") return {M::SepConv, M::SepConv, M::SepConv, M::SepConv};
  if (family == "attnformer") return {M::Attention, M::Attention, M::Attention, M::Attention};
  throw BuildError("unknown model family '" + family + "'");
}

std::string family_from_short(const std::string& s) {
  if (s == "df") return "dfformer";
  if (s == "cdf") return "cdfformer";
  if (s == "gf") return "gfformer";
  if (s == "cf") return "convformer";
  if (s == "attn") return "attnformer";
  return s;
}

}  // namespace

void ModelConfig::validate() const {
  if (input_height == 0 || input_width == 0 || in_channels == 0 || num_classes == 0) {
    throw BuildError("input extents, channels and class count must be positive");
  }
  if (mlp_ratio == 0 || mixer_expansion == 0 || num_filters == 0 || head_ratio == 0) {
    throw BuildError("mlp_ratio, mixer expansion, filter count and head ratio must be positive");
  }
  if (sepconv_kernel % 2 == 0) throw BuildError("separable-conv kernel must be odd");
  std::size_t h = input_height, w = input_width;
  for (std::size_t s = 0; s < 4; ++s) {
    const auto& st = stages[s];
    const std::string where = "stage " + std::to_string(s) + ": ";
    if (st.depth == 0 || st.width == 0) throw BuildError(where + "depth and width must be positive");
    if (st.down_kernel == 0 || st.down_stride == 0 || st.down_padding == 0) {
      throw BuildError(where + "downsampling kernel, stride and padding must be positive");
    }
    if (h % st.down_stride != 0 || w % st.down_stride != 0) {
      throw BuildError(where + "stride " + std::to_string(st.down_stride) + " does not divide feature extents " +
                       std::to_string(h) + "x" + std::to_string(w));
    }
    if (h + 2 * st.down_padding < st.down_kernel || w + 2 * st.down_padding < st.down_kernel) {
      throw BuildError(where + "feature map smaller than the downsampling kernel");
    }
    const std::size_t nh = conv_output_extent(h, st.down_kernel, st.down_stride, st.down_padding);
    const std::size_t nw = conv_output_extent(w, st.down_kernel, st.down_stride, st.down_padding);
    if (nh != h / st.down_stride || nw != w / st.down_stride) {
      throw BuildError(where + "downsampling geometry does not reduce extents by the stride");
    }
    h = nh;
    w = nw;
    if (st.mixer == MixerKind::DynamicFilter && static_cast<std::size_t>(routeing_ratio * static_cast<double>(st.width)) == 0) {
      throw BuildError(where + "routeing hidden width rounds to zero");
    }
    if (st.mixer == MixerKind::Attention) {
      const std::size_t heads = std::max<std::size_t>(1, st.width / attention_head_dim);
      if (st.width % heads != 0) throw BuildError(where + "width not divisible by attention heads");
    }
  }
  if (family != "custom") {
    const auto expected = family_layout(family);
    for (std::size_t s = 0; s < 4; ++s) {
      if (stages[s].mixer != expected[s]) {
        throw BuildError(family + " expects mixer " + mixer_name(expected[s]) + " in stage " + std::to_string(s) +
                         ", got " + mixer_name(stages[s].mixer));
      }
    }
  }
}

ModelConfig make_config(const std::string& family_name, const std::string& size) {
  ModelConfig cfg;
  cfg.family = family_from_short(family_name);
  const auto layout = family_layout(cfg.family);
  std::array<std::size_t, 4> depths{}, widths{};
  if (size == "s18") {
    depths = {3, 3, 9, 3};
    widths = {64, 128, 320, 512};
  } else if (size == "s36") {
    depths = {3, 12, 18, 3};
    widths = {64, 128, 320, 512};
  } else if (size == "m36") {
    depths = {3, 12, 18, 3};
    widths = {96, 192, 384, 576};
  } else if (size == "b36") {
    depths = {3, 12, 18, 3};
    widths = {128, 256, 512, 768};
  } else if (size == "nano") {
    depths = {1, 1, 2, 1};
    widths = {16, 32, 64, 128};
    cfg.input_height = cfg.input_width = 32;
    cfg.num_classes = 4;
  } else {
    throw BuildError("unknown model size '" + size + "' (expected s18, s36, m36, b36 or nano)");
  }
  for (std::size_t s = 0; s < 4; ++s) {
    auto& st = cfg.stages[s];
    st.depth = depths[s];
    st.width = widths[s];
    st.mixer = layout[s];
    st.down_kernel = s == 0 ? 7 : 3;
    st.down_stride = s == 0 ? 4 : 2;
    st.down_padding = s == 0 ? 2 : 1;
    st.res_scale = s >= 2;
  }
  cfg.name = size == "nano" ? "nano-" + family_name : cfg.family + "-" + size;
  return cfg;
}

ModelConfig model_preset(const std::string& name) {
  const auto dash = name.find('-');
  if (dash == std::string::npos) throw BuildError("unknown model preset '" + name + "'");
  const std::string head = name.substr(0, dash), tail = name.substr(dash + 1);
  if (head == "nano") {
    if (tail != "df" && tail != "cdf" && tail != "gf" && tail != "cf" && tail != "attn") {
      throw BuildError("unknown model preset '" + name + "'");
    }
    auto cfg = make_config(tail, "nano");
    cfg.name = name;
    return cfg;
  }
  return make_config(head, tail);
}

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const char* f : {"dfformer", "cdfformer", "gfformer", "convformer", "attnformer"})
    for (const char* s : {"s18", "s36", "m36", "b36"}) out.push_back(std::string(f) + "-" + s);
  for (const char* n : {"nano-df", "nano-cdf", "nano-gf", "nano-cf", "nano-attn"}) out.emplace_back(n);
  return out;
}

ModelConfig with_input(ModelConfig cfg, std::size_t height, std::size_t width) {
  cfg.input_height = height;
  cfg.input_width = width;
  return cfg;
}

template <typename T>
Network<T> Network<T>::assemble(const ModelConfig& cfg, Registrar<T>& reg) {
  cfg.validate();
  Network net;
  net.config = cfg;
  const auto extents = cfg.stage_extents();
  const std::size_t total = cfg.total_blocks();
  std::size_t block_index = 0;
  std::size_t in_ch = cfg.in_channels;
  for (std::size_t s = 0; s < 4; ++s) {
    const auto& st = cfg.stages[s];
    const std::string sp = "stages." + std::to_string(s);
    const std::string dp = "downsample." + std::to_string(s);
    auto& ds = net.downsample[s];
    if (s > 0) ds.pre_norm = LayerNorm<T>::create(reg, dp + ".pre_norm", in_ch);
    ds.conv = Conv2d<T>::create(reg, dp + ".conv", in_ch, st.width, st.down_kernel, st.down_stride, st.down_padding);
    if (s == 0) ds.post_norm = LayerNorm<T>::create(reg, dp + ".post_norm", st.width);

    MixerGeometry g;
    g.channels = st.width;
    g.height = extents[s].first;
    g.width = extents[s].second;
    g.expansion = cfg.mixer_expansion;
    g.num_filters = cfg.num_filters;
    g.routeing_ratio = cfg.routeing_ratio;
    g.activation = cfg.activation;
    for (std::size_t b = 0; b < st.depth; ++b, ++block_index) {
      const std::string bp = sp + ".blocks." + std::to_string(b);
      Block<T> blk;
      blk.norm1 = LayerNorm<T>::create(reg, bp + ".norm1", st.width);
      switch (st.mixer) {
        case MixerKind::DynamicFilter:
          blk.mixer = DynamicFilter<T>::create(reg, bp + ".mixer", g);
          break;
        case MixerKind::SepConv:
          blk.mixer = SepConv<T>::create(reg, bp + ".mixer", g, cfg.sepconv_kernel);
          break;
        case MixerKind::GlobalFilter:
          blk.mixer = GlobalFilter<T>::create(reg, bp + ".mixer", g);
          break;
        case MixerKind::Attention:
          blk.mixer = Attention<T>::create(reg, bp + ".mixer", st.width, cfg.attention_head_dim);
          break;
      }
      if (st.res_scale) blk.res_scale1 = ResScale<T>::create(reg, bp + ".res_scale1", st.width);
      blk.norm2 = LayerNorm<T>::create(reg, bp + ".norm2", st.width);
      blk.fc1 = Linear<T>::create(reg, bp + ".mlp.fc1", st.width, cfg.mlp_ratio * st.width);
      blk.act = ActivationLayer<T>::create(reg, bp + ".mlp.act", cfg.activation);
      blk.fc2 = Linear<T>::create(reg, bp + ".mlp.fc2", cfg.mlp_ratio * st.width, st.width);
      if (st.res_scale) blk.res_scale2 = ResScale<T>::create(reg, bp + ".res_scale2", st.width);
      blk.drop_path = total > 1 ? cfg.drop_path_rate * static_cast<double>(block_index) / static_cast<double>(total - 1)
                                : 0.0;
      net.stages[s].push_back(std::move(blk));
    }
    in_ch = st.width;
  }
  const std::size_t hidden = cfg.head_ratio * in_ch;
  net.head.norm = LayerNorm<T>::create(reg, "head.norm", in_ch);
  net.head.fc1 = Linear<T>::create(reg, "head.fc1", in_ch, hidden, true);
  net.head.act = ActivationLayer<T>::create(reg, "head.act", Activation::SquaredReLU);
  net.head.hidden_norm = LayerNorm<T>::create(reg, "head.hidden_norm", hidden);
  net.head.fc2 = Linear<T>::create(reg, "head.fc2", hidden, cfg.num_classes, true);
  return net;
}

namespace {

template <typename T>
Var<T> drop_path(Var<T> branch, double rate, const ForwardOptions<T>& opts) {
  if (!opts.training || rate <= 0.0) return branch;
  if (!opts.rng) throw ContractError("stochastic depth needs a random stream during training");
  const std::size_t B = branch.shape()[0];
  std::vector<T> factors(B);
  for (auto& f : factors) f = opts.rng->uniform() < rate ? T(0) : static_cast<T>(1.0 / (1.0 - rate));
  return scale_rows(branch, factors);
}

}  // namespace

template <typename T>
Var<T> Network<T>::forward(Var<T> images, const ForwardOptions<T>& opts) const {
  const auto& s = images.shape();
  if (s.size() != 4 || s[1] != config.input_height || s[2] != config.input_width || s[3] != config.in_channels) {
    throw ShapeError("model " + config.name + " expects [B, " + std::to_string(config.input_height) + ", " +
                     std::to_string(config.input_width) + ", " + std::to_string(config.in_channels) + "], got " +
                     to_string(s));
  }
  std::size_t tap_index = 0;
  auto tap = [&](const std::string& label, Var<T> v) {
    if (opts.tap) opts.tap(tap_index, label, v);
    ++tap_index;
  };
  Var<T> x = images;
  for (std::size_t st = 0; st < 4; ++st) {
    const auto& ds = downsample[st];
    if (ds.pre_norm) x = (*ds.pre_norm)(x);
    x = ds.conv(x);
    if (ds.post_norm) x = (*ds.post_norm)(x);
    tap("downsample." + std::to_string(st), x);
    for (std::size_t b = 0; b < stages[st].size(); ++b) {
      const auto& blk = stages[st][b];
      const std::string label = "stages." + std::to_string(st) + ".blocks." + std::to_string(b);
      auto normed = blk.norm1(x);
      auto mixed = std::visit([&](const auto& m) { return m(normed); }, blk.mixer);
      x = add(blk.res_scale1 ? (*blk.res_scale1)(x) : x, drop_path(mixed, blk.drop_path, opts));
      tap(label + ".mixer", x);
      auto mlp = blk.fc2(blk.act(blk.fc1(blk.norm2(x))));
      x = add(blk.res_scale2 ? (*blk.res_scale2)(x) : x, drop_path(mlp, blk.drop_path, opts));
      tap(label + ".mlp", x);
    }
  }
  auto h = head.norm(global_avg_pool(x));
  h = head.hidden_norm(head.act(head.fc1(h)));
  return head.fc2(h);
}

template <typename T>
Model<T>::Model(const ModelConfig& cfg, std::uint64_t seed) : store_(std::make_unique<ParameterStore<T>>()) {
  Materializer<T> mat(*store_, Rng(seed).split("init"));
  net_ = Network<T>::assemble(cfg, mat);
}

template <typename T>
Tensor<T> Model<T>::predict(const Tensor<T>& images) const {
  Tape<T> tape(GradMode::Disabled);
  return forward(tape.constant(images)).value();
}

std::vector<ParamSpec> parameter_layout(const ModelConfig& cfg) {
  LayoutRecorder<double> rec;
  Network<double>::assemble(cfg, rec);
  return rec.specs();
}

std::uint64_t count_params(const ModelConfig& cfg) {
  std::uint64_t n = 0;
  for (const auto& spec : parameter_layout(cfg)) n += numel(spec.shape);
  return n;
}

double fft_macs(std::size_t height, std::size_t width, std::size_t channels) {
  const double hw = static_cast<double>(height) * static_cast<double>(width);
  return 2.5 * hw * std::log2(hw) * static_cast<double>(channels);
}

FlopReport count_flops(const ModelConfig& cfg) {
  cfg.validate();
  FlopReport r;
  const auto extents = cfg.stage_extents();
  std::size_t in_ch = cfg.in_channels;
  for (std::size_t s = 0; s < 4; ++s) {
    const auto& st = cfg.stages[s];
    const double H = static_cast<double>(extents[s].first), W = static_cast<double>(extents[s].second);
    const double HW = H * W;
    const double C = static_cast<double>(st.width);
    const double K = static_cast<double>(st.down_kernel);
    r.convolutions += HW * K * K * static_cast<double>(in_ch) * C;

    const double med = static_cast<double>(cfg.mixer_expansion) * C;
    const double bins = H * static_cast<double>(extents[s].second / 2 + 1);
    const double blocks = static_cast<double>(st.depth);
    const double pointwise = 2.0 * HW * C * med;
    const double mlp = 2.0 * HW * C * static_cast<double>(cfg.mlp_ratio) * C;
    r.convolutions += blocks * mlp;
    switch (st.mixer) {
      case MixerKind::DynamicFilter: {
        const double N = static_cast<double>(cfg.num_filters);
        const double hidden = std::floor(cfg.routeing_ratio * C);
        const double fft = 2.0 * fft_macs(extents[s].first, extents[s].second, static_cast<std::size_t>(med));
        r.convolutions += blocks * pointwise;
        r.fft += blocks * fft;
        r.stage_fft[s] = blocks * fft;
        // Complex product plus forming each channel's filter from N basis entries.
        r.spectral_products += blocks * (4.0 * bins * med + 2.0 * N * bins * med);
        r.routeing += blocks * (C * hidden + hidden * N * med);
        break;
      }
      case MixerKind::GlobalFilter: {
        const double fft = 2.0 * fft_macs(extents[s].first, extents[s].second, static_cast<std::size_t>(med));
        r.convolutions += blocks * pointwise;
        r.fft += blocks * fft;
        r.stage_fft[s] = blocks * fft;
        r.spectral_products += blocks * 4.0 * bins * med;
        break;
      }
      case MixerKind::SepConv: {
        const double k = static_cast<double>(cfg.sepconv_kernel);
        r.convolutions += blocks * (pointwise + HW * med * k * k);
        break;
      }
      case MixerKind::Attention:
        r.attention += blocks * (4.0 * HW * C * C + 2.0 * HW * HW * C);
        break;
    }
    in_ch = st.width;
  }
  const double Cf = static_cast<double>(in_ch);
  const double hidden = static_cast<double>(cfg.head_ratio) * Cf;
  r.head = Cf * hidden + hidden * static_cast<double>(cfg.num_classes);
  r.total = r.convolutions + r.fft + r.spectral_products + r.routeing + r.attention + r.head;
  return r;
}

template struct Network<float>;
template struct Network<double>;
template class Model<float>;
template class Model<double>;

}  // namespace dff
