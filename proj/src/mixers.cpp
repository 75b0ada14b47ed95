#include "dff/mixers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dff/spectral.hpp"

namespace dff {

double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

namespace {

struct Taps {
  std::size_t index[4];
  double weight[4];
};

// Half-pixel source coordinate, four clamped taps.
std::vector<Taps> cubic_taps(std::size_t in, std::size_t out) {
  std::vector<Taps> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    const double base = std::floor(src);
    const double frac = src - base;
    for (int k = 0; k < 4; ++k) {
      const auto idx = static_cast<std::ptrdiff_t>(base) + k - 1;
      taps[o].index[k] = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(idx, 0, static_cast<std::ptrdiff_t>(in) - 1));
      taps[o].weight[k] = cubic_weight(frac - static_cast<double>(k - 1));
    }
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> bicubic_resample(const Tensor<T>& x, std::size_t new_h, std::size_t new_w) {
  if (x.rank() != 3) throw ShapeError("bicubic_resample expects [H, W, inner], got " + to_string(x.shape()));
  if (new_h == 0 || new_w == 0) throw ContractError("bicubic_resample: target extents must be positive");
  const std::size_t H = x.extent(0), W = x.extent(1), inner = x.extent(2);
  if (H == new_h && W == new_w) return x;
  const auto ty = cubic_taps(H, new_h);
  const auto tx = cubic_taps(W, new_w);
  // Rows first, then columns.
  std::vector<double> rows(new_h * W * inner, 0.0);
  for (std::size_t o = 0; o < new_h; ++o)
    for (int k = 0; k < 4; ++k) {
      const double wgt = ty[o].weight[k];
      const T* src = x.ptr() + ty[o].index[k] * W * inner;
      double* dst = rows.data() + o * W * inner;
      for (std::size_t i = 0; i < W * inner; ++i) dst[i] += wgt * static_cast<double>(src[i]);
    }
  Tensor<T> out({new_h, new_w, inner});
  for (std::size_t r = 0; r < new_h; ++r)
    for (std::size_t o = 0; o < new_w; ++o)
      for (std::size_t c = 0; c < inner; ++c) {
        double acc = 0;
        for (int k = 0; k < 4; ++k) acc += tx[o].weight[k] * rows[(r * W + tx[o].index[k]) * inner + c];
        out[(r * new_w + o) * inner + c] = static_cast<T>(acc);
      }
  return out;
}

template <typename T>
FilterBasis<T> interpolate_filter_basis(const FilterBasis<T>& basis, std::size_t new_height, std::size_t new_width) {
  const auto& s = basis.weights.shape();
  if (s.size() != 4 || s[3] != 2 || s[0] != basis.height || s[1] != basis.width / 2 + 1) {
    throw ShapeError("filter basis " + to_string(s) + " does not match extents " + std::to_string(basis.height) + "x" +
                     std::to_string(basis.width));
  }
  if (new_height == 0 || new_width == 0) throw ContractError("interpolate_filter_basis: extents must be positive");
  const std::size_t N = s[2];
  FilterBasis<T> out;
  out.height = new_height;
  out.width = new_width;
  // Each (filter, re/im) plane is an independent channel of the resampler.
  out.weights = bicubic_resample(basis.weights.reshaped({s[0], s[1], N * 2}), new_height, new_width / 2 + 1)
                    .reshaped({new_height, new_width / 2 + 1, N, 2});
  return out;
}

template <typename T>
Var<T> mix_filter_basis(Var<T> coeffs, Var<T> basis) {
  const auto& cv = coeffs.value();
  const auto& kv = basis.value();
  if (cv.rank() != 3 || kv.rank() != 4 || kv.extent(3) != 2 || kv.extent(2) != cv.extent(1)) {
    throw ShapeError("mix_filter_basis: coefficients " + to_string(cv.shape()) + " vs basis " + to_string(kv.shape()));
  }
  const std::size_t B = cv.extent(0), N = cv.extent(1), C = cv.extent(2);
  const std::size_t HW = kv.extent(0) * kv.extent(1);
  Tensor<T> out({B, kv.extent(0), kv.extent(1), C, 2});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t p = 0; p < HW; ++p) {
      T* o = out.ptr() + (b * HW + p) * C * 2;
      for (std::size_t i = 0; i < N; ++i) {
        const T kr = kv[(p * N + i) * 2], ki = kv[(p * N + i) * 2 + 1];
        const T* lam = cv.ptr() + (b * N + i) * C;
        for (std::size_t c = 0; c < C; ++c) {
          o[2 * c] += lam[c] * kr;
          o[2 * c + 1] += lam[c] * ki;
        }
      }
    }
  }
  return coeffs.tape().record("mix_filter_basis", std::move(out), {coeffs, basis}, [B, N, C, HW](BackwardContext<T>& ctx) {
    const auto& g = ctx.grad_output();
    const auto& cv = ctx.input(0);
    const auto& kv = ctx.input(1);
    const bool wc = ctx.wants(0), wk = ctx.wants(1);
    T* gc = wc ? ctx.grad_input(0).ptr() : nullptr;
    T* gk = wk ? ctx.grad_input(1).ptr() : nullptr;
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t p = 0; p < HW; ++p) {
        const T* go = g.ptr() + (b * HW + p) * C * 2;
        for (std::size_t i = 0; i < N; ++i) {
          const T kr = kv[(p * N + i) * 2], ki = kv[(p * N + i) * 2 + 1];
          const T* lam = cv.ptr() + (b * N + i) * C;
          T* gl = wc ? gc + (b * N + i) * C : nullptr;
          T sr = 0, si = 0;
          for (std::size_t c = 0; c < C; ++c) {
            if (wc) gl[c] += go[2 * c] * kr + go[2 * c + 1] * ki;
            sr += lam[c] * go[2 * c];
            si += lam[c] * go[2 * c + 1];
          }
          if (wk) {
            gk[(p * N + i) * 2] += sr;
            gk[(p * N + i) * 2 + 1] += si;
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> global_filter(Var<T> x, Var<T> filter) {
  const auto& xs = x.shape();
  const auto& ks = filter.shape();
  if (xs.size() != 4 || ks.size() < 3 || ks[0] != xs[1] || ks[1] != xs[2] / 2 + 1) {
    throw ShapeError("global_filter: filter " + to_string(ks) + " does not fit input " + to_string(xs));
  }
  return irfft2_channels_last(complex_multiply(rfft2_channels_last(x), filter), xs[2]);
}

template <typename T>
RouteingMLP<T> RouteingMLP<T>::create(Registrar<T>& reg, const std::string& prefix, std::size_t channels,
                                      std::size_t num_filters, std::size_t out_channels, double ratio) {
  if (num_filters == 0) throw ContractError("routeing MLP needs at least one filter");
  const auto hidden = static_cast<std::size_t>(ratio * static_cast<double>(channels));
  if (hidden == 0) throw ContractError("routeing hidden width int(ratio * C) is zero");
  RouteingMLP m;
  m.norm = LayerNorm<T>::create(reg, prefix + ".norm", channels);
  m.fc1 = Linear<T>::create(reg, prefix + ".fc1", channels, hidden);
  m.act = ActivationLayer<T>::create(reg, prefix + ".act", Activation::StarReLU);
  m.fc2 = Linear<T>::create(reg, prefix + ".fc2", hidden, num_filters * out_channels);
  m.num_filters = num_filters;
  m.out_channels = out_channels;
  return m;
}

template <typename T>
Var<T> RouteingMLP<T>::operator()(Var<T> x) const {
  if (x.shape().size() != 4) throw ShapeError("routeing expects [B, H, W, C], got " + to_string(x.shape()));
  const std::size_t B = x.shape()[0];
  auto s = fc2(act(fc1(norm(global_avg_pool(x)))));
  return softmax_axis1(reshape(s, {B, num_filters, out_channels}));
}

template <typename T>
DynamicFilter<T> DynamicFilter<T>::create(Registrar<T>& reg, const std::string& prefix, const MixerGeometry& g) {
  const std::size_t med = g.expansion * g.channels;
  DynamicFilter d;
  d.pw1 = Linear<T>::create(reg, prefix + ".pw1", g.channels, med);
  d.act = ActivationLayer<T>::create(reg, prefix + ".act", g.activation);
  d.route = RouteingMLP<T>::create(reg, prefix + ".route", g.channels, g.num_filters, med, g.routeing_ratio);
  d.basis = reg.declare({prefix + ".basis", {g.height, g.width / 2 + 1, g.num_filters, 2}, true},
                        Init::normal(kFilterInitStd));
  d.pw2 = Linear<T>::create(reg, prefix + ".pw2", med, g.channels);
  d.height = g.height;
  d.width = g.width;
  return d;
}

template <typename T>
Var<T> DynamicFilter<T>::premap(Var<T> x) const {
  return act(pw1(x));
}

template <typename T>
Var<T> DynamicFilter<T>::filter(Var<T> features, Var<T> coeffs) const {
  auto weight = mix_filter_basis(coeffs, features.tape().parameter(*basis));
  return irfft2_channels_last(complex_multiply(rfft2_channels_last(features), weight), width);
}

template <typename T>
Var<T> DynamicFilter<T>::operator()(Var<T> x) const {
  const auto& s = x.shape();
  if (s.size() != 4 || s[1] != height || s[2] != width) {
    throw ShapeError("dynamic filter bound to " + std::to_string(height) + "x" + std::to_string(width) +
                     " received " + to_string(s) + "; resample the basis with interpolate_filter_basis");
  }
  if (!all_finite(x.value())) throw ContractError("dynamic filter input contains non-finite values");
  auto coeffs = route(x);
  return pw2(filter(premap(x), coeffs));
}

template <typename T>
GlobalFilter<T> GlobalFilter<T>::create(Registrar<T>& reg, const std::string& prefix, const MixerGeometry& g) {
  const std::size_t med = g.expansion * g.channels;
  GlobalFilter f;
  f.pw1 = Linear<T>::create(reg, prefix + ".pw1", g.channels, med);
  f.act = ActivationLayer<T>::create(reg, prefix + ".act", g.activation);
  f.filter = reg.declare({prefix + ".filter", {g.height, g.width / 2 + 1, med, 2}, true}, Init::normal(kFilterInitStd));
  f.pw2 = Linear<T>::create(reg, prefix + ".pw2", med, g.channels);
  f.height = g.height;
  f.width = g.width;
  return f;
}

template <typename T>
Var<T> GlobalFilter<T>::operator()(Var<T> x) const {
  const auto& s = x.shape();
  if (s.size() != 4 || s[1] != height || s[2] != width) {
    throw ShapeError("global filter bound to " + std::to_string(height) + "x" + std::to_string(width) +
                     " received " + to_string(s));
  }
  return pw2(global_filter(act(pw1(x)), x.tape().parameter(*filter)));
}

template <typename T>
SepConv<T> SepConv<T>::create(Registrar<T>& reg, const std::string& prefix, const MixerGeometry& g,
                              std::size_t kernel) {
  const std::size_t med = g.expansion * g.channels;
  SepConv c;
  c.pw1 = Linear<T>::create(reg, prefix + ".pw1", g.channels, med);
  c.act = ActivationLayer<T>::create(reg, prefix + ".act", g.activation);
  c.dw = DepthwiseConv<T>::create(reg, prefix + ".dw", med, kernel);
  c.pw2 = Linear<T>::create(reg, prefix + ".pw2", med, g.channels);
  return c;
}

template <typename T>
Var<T> SepConv<T>::operator()(Var<T> x) const {
  return pw2(dw(act(pw1(x))));
}

template <typename T>
Tensor<T> attention_forward(const Tensor<T>& x, const Tensor<T>& wq, const Tensor<T>& wk, const Tensor<T>& wv,
                            const Tensor<T>& wo, const Tensor<T>& proj_bias, std::size_t heads) {
  if (x.rank() != 4) throw ShapeError("attention expects [B, H, W, C], got " + to_string(x.shape()));
  const std::size_t B = x.extent(0), L = x.extent(1) * x.extent(2), C = x.extent(3);
  if (heads == 0 || C % heads != 0) {
    throw ContractError("attention: " + std::to_string(C) + " channels not divisible by " + std::to_string(heads) +
                        " heads");
  }
  const std::size_t d = C / heads;
  const T inv_sqrt_d = T(1) / std::sqrt(static_cast<T>(d));
  auto tokens = x.reshaped({B * L, C});
  auto q = matmul(tokens, wq), k = matmul(tokens, wk), v = matmul(tokens, wv);
  Tensor<T> ctx({B * L, C});
  std::vector<T> scores(L);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < L; ++i) {
        const T* qi = q.ptr() + (b * L + i) * C + h * d;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < L; ++j) {
          const T* kj = k.ptr() + (b * L + j) * C + h * d;
          T acc = 0;
          for (std::size_t e = 0; e < d; ++e) acc += qi[e] * kj[e];
          scores[j] = acc * inv_sqrt_d;
          mx = std::max(mx, scores[j]);
        }
        T denom = 0;
        for (auto& sc : scores) {
          sc = std::exp(sc - mx);
          denom += sc;
        }
        T* out = ctx.ptr() + (b * L + i) * C + h * d;
        for (std::size_t j = 0; j < L; ++j) {
          const T p = scores[j] / denom;
          const T* vj = v.ptr() + (b * L + j) * C + h * d;
          for (std::size_t e = 0; e < d; ++e) out[e] += p * vj[e];
        }
      }
    }
  }
  return add(matmul(ctx, wo), proj_bias).reshaped(x.shape());
}

template <typename T>
Attention<T> Attention<T>::create(Registrar<T>& reg, const std::string& prefix, std::size_t channels,
                                  std::size_t head_dim) {
  Attention a;
  auto weight = [&](const char* name) {
    return reg.declare({prefix + "." + name, {channels, channels}, false, false}, Init::truncated_normal(kWeightInitStd));
  };
  a.wq = weight("q");
  a.wk = weight("k");
  a.wv = weight("v");
  a.wo = weight("proj");
  a.proj_bias = reg.declare({prefix + ".proj_bias", {channels}, false, false}, Init::zeros());
  a.heads = std::max<std::size_t>(1, channels / head_dim);
  return a;
}

template <typename T>
Var<T> Attention<T>::operator()(Var<T> x) const {
  auto& t = x.tape();
  auto out = attention_forward(x.value(), wq->value, wk->value, wv->value, wo->value, proj_bias->value, heads);
  return t.record("attention", std::move(out),
                  {x, t.parameter(*wq), t.parameter(*wk), t.parameter(*wv), t.parameter(*wo), t.parameter(*proj_bias)},
                  [](BackwardContext<T>&) { throw ContractError("attention mixer is forward-only"); });
}

#define DFF_INSTANTIATE(T)                                                                              \
  template Tensor<T> bicubic_resample(const Tensor<T>&, std::size_t, std::size_t);                      \
  template FilterBasis<T> interpolate_filter_basis(const FilterBasis<T>&, std::size_t, std::size_t);    \
  template Var<T> mix_filter_basis(Var<T>, Var<T>);                                                     \
  template Var<T> global_filter(Var<T>, Var<T>);                                                        \
  template Tensor<T> attention_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                       const Tensor<T>&, const Tensor<T>&, std::size_t);                \
  template struct RouteingMLP<T>;                                                                       \
  template struct DynamicFilter<T>;                                                                     \
  template struct GlobalFilter<T>;                                                                      \
  template struct SepConv<T>;                                                                           \
  template struct Attention<T>;

DFF_INSTANTIATE(float)
DFF_INSTANTIATE(double)

}  // namespace dff
