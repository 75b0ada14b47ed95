#include "dff/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dff {

namespace {

struct NormStats {
  std::vector<double> inv_std;
};

// Normalized values (pre-affine) plus per-row 1/sigma.
template <typename T>
Tensor<T> normalize_rows(const Tensor<T>& x, T eps, std::vector<T>& inv_std) {
  const std::size_t C = x.shape().back();
  const std::size_t rows = x.size() / C;
  Tensor<T> out(x.shape());
  inv_std.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.ptr() + r * C;
    T mu = 0;
    for (std::size_t c = 0; c < C; ++c) mu += xr[c];
    mu /= static_cast<T>(C);
    T var = 0;
    for (std::size_t c = 0; c < C; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<T>(C);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    T* o = out.ptr() + r * C;
    for (std::size_t c = 0; c < C; ++c) o[c] = (xr[c] - mu) * is;
  }
  return out;
}

template <typename T>
void check_channels(const Tensor<T>& x, const Tensor<T>& param, const char* what) {
  if (param.rank() != 1 || x.shape().back() != param.extent(0)) {
    throw ShapeError(std::string(what) + ": channel count of " + to_string(x.shape()) + " does not match " +
                     to_string(param.shape()));
  }
}

template <typename T>
void check_depthwise(const Tensor<T>& x, const Tensor<T>& k) {
  if (x.rank() != 4 || k.rank() != 3 || k.extent(0) != x.extent(3)) {
    throw ShapeError("depthwise_conv: input " + to_string(x.shape()) + " vs kernel " + to_string(k.shape()));
  }
  if (k.extent(1) % 2 == 0 || k.extent(2) % 2 == 0) {
    throw ContractError("depthwise_conv: kernel extents must be odd, got " + to_string(k.shape()));
  }
}

template <typename T>
Tensor<T> depthwise_forward(const Tensor<T>& x, const Tensor<T>& k) {
  check_depthwise(x, k);
  const std::size_t B = x.extent(0), H = x.extent(1), W = x.extent(2), C = x.extent(3);
  const std::size_t Kh = k.extent(1), Kw = k.extent(2);
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(Kh / 2), pw = static_cast<std::ptrdiff_t>(Kw / 2);
  // Kernel transposed to [Kh, Kw, C] so the inner loop runs over channels.
  std::vector<T> kt(Kh * Kw * C);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < Kh * Kw; ++i) kt[i * C + c] = k[c * Kh * Kw + i];
  Tensor<T> out(x.shape());
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t xx = 0; xx < W; ++xx) {
        T* o = out.ptr() + ((b * H + y) * W + xx) * C;
        for (std::size_t i = 0; i < Kh; ++i) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + i) - ph;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t j = 0; j < Kw; ++j) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + j) - pw;
            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W)) continue;
            const T* in = x.ptr() + ((b * H + sy) * W + sx) * C;
            const T* kk = kt.data() + (i * Kw + j) * C;
            for (std::size_t c = 0; c < C; ++c) o[c] += in[c] * kk[c];
          }
        }
      }
    }
  }
  return out;
}

struct ConvGeometry {
  std::size_t B, H, W, Cin, Cout, K, Ho, Wo, stride, padding;
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride, std::size_t padding) {
  if (x.rank() != 4 || w.rank() != 4 || w.extent(0) != w.extent(1) || w.extent(2) != x.extent(3)) {
    throw ShapeError("conv2d: input " + to_string(x.shape()) + " vs weight " + to_string(w.shape()));
  }
  if (stride == 0) throw ContractError("conv2d: stride must be positive");
  ConvGeometry g{x.extent(0), x.extent(1), x.extent(2), x.extent(3), w.extent(3), w.extent(0), 0, 0, stride, padding};
  g.Ho = conv_output_extent(g.H, g.K, stride, padding);
  g.Wo = conv_output_extent(g.W, g.K, stride, padding);
  return g;
}

template <typename T>
Tensor<T> conv_forward(const Tensor<T>& x, const Tensor<T>& w, const ConvGeometry& g) {
  Tensor<T> out({g.B, g.Ho, g.Wo, g.Cout});
  for (std::size_t b = 0; b < g.B; ++b) {
    for (std::size_t oy = 0; oy < g.Ho; ++oy) {
      for (std::size_t ox = 0; ox < g.Wo; ++ox) {
        T* o = out.ptr() + ((b * g.Ho + oy) * g.Wo + ox) * g.Cout;
        for (std::size_t ky = 0; ky < g.K; ++ky) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.padding);
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(g.H)) continue;
          for (std::size_t kx = 0; kx < g.K; ++kx) {
            const std::ptrdiff_t sx =
                static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.padding);
            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(g.W)) continue;
            const T* in = x.ptr() + ((b * g.H + sy) * g.W + sx) * g.Cin;
            const T* ws = w.ptr() + (ky * g.K + kx) * g.Cin * g.Cout;
            for (std::size_t ci = 0; ci < g.Cin; ++ci) {
              const T v = in[ci];
              const T* wr = ws + ci * g.Cout;
              for (std::size_t co = 0; co < g.Cout; ++co) o[co] += v * wr[co];
            }
          }
        }
      }
    }
  }
  return out;
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (in + 2 * padding < kernel) {
    throw ShapeError("conv: extent " + std::to_string(in) + " too small for kernel " + std::to_string(kernel));
  }
  return (in + 2 * padding - kernel) / stride + 1;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const LayerNormParams<T>& p) {
  check_channels(x, p.scale, "layer_norm");
  check_channels(x, p.shift, "layer_norm");
  std::vector<T> inv_std;
  Tensor<T> out = normalize_rows(x, p.epsilon, inv_std);
  const std::size_t C = p.scale.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] * p.scale[i % C] + p.shift[i % C];
  return out;
}

template <typename T>
Tensor<T> star_relu(const Tensor<T>& x, const StarReLUParams<T>& p) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T r = std::max(x[i], T(0));
    out[i] = p.s * r * r + p.b;
  }
  return out;
}

template <typename T>
Tensor<T> pointwise_conv(const Tensor<T>& x, const Tensor<T>& w) {
  if (x.rank() != 4 || w.rank() != 2 || x.extent(3) != w.extent(0)) {
    throw ShapeError("pointwise_conv: input " + to_string(x.shape()) + " vs weight " + to_string(w.shape()));
  }
  Shape out_shape = x.shape();
  out_shape.back() = w.extent(1);
  return matmul(x.reshaped({x.size() / w.extent(0), w.extent(0)}), w).reshaped(out_shape);
}

template <typename T>
Tensor<T> depthwise_conv(const Tensor<T>& x, const Tensor<T>& k) {
  return depthwise_forward(x, k);
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride, std::size_t padding) {
  return conv_forward(x, w, conv_geometry(x, w, stride, padding));
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("global_avg_pool expects [B, H, W, C], got " + to_string(x.shape()));
  const std::size_t B = x.extent(0), HW = x.extent(1) * x.extent(2), C = x.extent(3);
  Tensor<T> out({B, C});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t p = 0; p < HW; ++p) {
      const T* in = x.ptr() + (b * HW + p) * C;
      for (std::size_t c = 0; c < C; ++c) out[b * C + c] += in[c];
    }
  }
  const T inv = T(1) / static_cast<T>(HW);
  for (auto& v : out.data()) v *= inv;
  return out;
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> scale, Var<T> shift, T epsilon) {
  check_channels(x.value(), scale.value(), "layer_norm");
  check_channels(x.value(), shift.value(), "layer_norm");
  std::vector<T> inv_std;
  Tensor<T> xhat = normalize_rows(x.value(), epsilon, inv_std);
  const auto& sv = scale.value();
  const auto& bv = shift.value();
  const std::size_t C = sv.size();
  Tensor<T> out(xhat.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xhat[i] * sv[i % C] + bv[i % C];
  return x.tape().record(
      "layer_norm", std::move(out), {x, scale, shift},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), C](BackwardContext<T>& ctx) {
        const auto& g = ctx.grad_output();
        const auto& sv = ctx.input(1);
        const std::size_t rows = g.size() / C;
        if (ctx.wants(1) || ctx.wants(2)) {
          Tensor<T> gs({C}), gb({C});
          for (std::size_t i = 0; i < g.size(); ++i) {
            gs[i % C] += g[i] * xhat[i];
            gb[i % C] += g[i];
          }
          if (ctx.wants(1)) accumulate(ctx.grad_input(1), gs);
          if (ctx.wants(2)) accumulate(ctx.grad_input(2), gb);
        }
        if (ctx.wants(0)) {
          auto& gx = ctx.grad_input(0);
          std::vector<T> gh(C);
          for (std::size_t r = 0; r < rows; ++r) {
            T m1 = 0, m2 = 0;
            for (std::size_t c = 0; c < C; ++c) {
              gh[c] = g[r * C + c] * sv[c];
              m1 += gh[c];
              m2 += gh[c] * xhat[r * C + c];
            }
            m1 /= static_cast<T>(C);
            m2 /= static_cast<T>(C);
            for (std::size_t c = 0; c < C; ++c) {
              gx[r * C + c] += inv_std[r] * (gh[c] - m1 - xhat[r * C + c] * m2);
            }
          }
        }
      });
}

template <typename T>
Var<T> star_relu(Var<T> x, Var<T> s, Var<T> b) {
  if (s.value().size() != 1 || b.value().size() != 1) throw ShapeError("star_relu: s and b must be scalars");
  StarReLUParams<T> p{s.value()[0], b.value()[0]};
  return x.tape().record("star_relu", star_relu(x.value(), p), {x, s, b}, [](BackwardContext<T>& ctx) {
    const auto& g = ctx.grad_output();
    const auto& xv = ctx.input(0);
    const T sv = ctx.input(1)[0];
    T gs = 0, gb = 0;
    const bool wx = ctx.wants(0);
    Tensor<T>* gx = wx ? &ctx.grad_input(0) : nullptr;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T r = std::max(xv[i], T(0));
      gs += g[i] * r * r;
      gb += g[i];
      if (wx) (*gx)[i] += g[i] * sv * T(2) * r;
    }
    if (ctx.wants(1)) ctx.grad_input(1)[0] += gs;
    if (ctx.wants(2)) ctx.grad_input(2)[0] += gb;
  });
}

template <typename T>
Var<T> squared_relu(Var<T> x) {
  Tensor<T> out(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const T r = std::max(xv[i], T(0));
    out[i] = r * r;
  }
  return x.tape().record("squared_relu", std::move(out), {x}, [](BackwardContext<T>& ctx) {
    const auto& g = ctx.grad_output();
    const auto& xv = ctx.input(0);
    auto& gx = ctx.grad_input(0);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * T(2) * std::max(xv[i], T(0));
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  Tensor<T> out(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::max(xv[i], T(0));
  return x.tape().record("relu", std::move(out), {x}, [](BackwardContext<T>& ctx) {
    const auto& g = ctx.grad_output();
    const auto& xv = ctx.input(0);
    auto& gx = ctx.grad_input(0);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += xv[i] > T(0) ? g[i] : T(0);
  });
}

template <typename T>
Var<T> gelu(Var<T> x) {
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  Tensor<T> out(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = T(0.5) * xv[i] * (T(1) + std::erf(xv[i] * inv_sqrt2));
  return x.tape().record("gelu", std::move(out), {x}, [inv_sqrt2](BackwardContext<T>& ctx) {
    const auto& g = ctx.grad_output();
    const auto& xv = ctx.input(0);
    auto& gx = ctx.grad_input(0);
    const T inv_sqrt_2pi = inv_sqrt2 * std::numbers::inv_sqrtpi_v<T>;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T cdf = T(0.5) * (T(1) + std::erf(xv[i] * inv_sqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(-T(0.5) * xv[i] * xv[i]);
      gx[i] += g[i] * (cdf + xv[i] * pdf);
    }
  });
}

template <typename T>
Var<T> depthwise_conv(Var<T> x, Var<T> k) {
  return x.tape().record("depthwise_conv", depthwise_forward(x.value(), k.value()), {x, k},
                         [](BackwardContext<T>& ctx) {
    const auto& g = ctx.grad_output();
    const auto& xv = ctx.input(0);
    const auto& kv = ctx.input(1);
    const std::size_t B = xv.extent(0), H = xv.extent(1), W = xv.extent(2), C = xv.extent(3);
    const std::size_t Kh = kv.extent(1), Kw = kv.extent(2);
    const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(Kh / 2), pw = static_cast<std::ptrdiff_t>(Kw / 2);
    std::vector<T> kt(Kh * Kw * C), gkt(Kh * Kw * C, T(0));
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < Kh * Kw; ++i) kt[i * C + c] = kv[c * Kh * Kw + i];
    const bool wx = ctx.wants(0);
    T* gx = wx ? ctx.grad_input(0).ptr() : nullptr;
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t xx = 0; xx < W; ++xx) {
          const T* go = g.ptr() + ((b * H + y) * W + xx) * C;
          for (std::size_t i = 0; i < Kh; ++i) {
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + i) - ph;
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t j = 0; j < Kw; ++j) {
              const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + j) - pw;
              if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W)) continue;
              const std::size_t off = ((b * H + sy) * W + sx) * C;
              const T* in = xv.ptr() + off;
              const T* kk = kt.data() + (i * Kw + j) * C;
              T* gk = gkt.data() + (i * Kw + j) * C;
              for (std::size_t c = 0; c < C; ++c) gk[c] += go[c] * in[c];
              if (wx) {
                for (std::size_t c = 0; c < C; ++c) gx[off + c] += go[c] * kk[c];
              }
            }
          }
        }
      }
    }
    if (ctx.wants(1)) {
      auto& gk = ctx.grad_input(1);
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < Kh * Kw; ++i) gk[c * Kh * Kw + i] += gkt[i * C + c];
    }
  });
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, std::size_t stride, std::size_t padding) {
  const ConvGeometry geo = conv_geometry(x.value(), w.value(), stride, padding);
  return x.tape().record("conv2d", conv_forward(x.value(), w.value(), geo), {x, w}, [geo](BackwardContext<T>& ctx) {
    const auto& g = ctx.grad_output();
    const auto& xv = ctx.input(0);
    const auto& wv = ctx.input(1);
    const bool wx = ctx.wants(0), ww = ctx.wants(1);
    T* gx = wx ? ctx.grad_input(0).ptr() : nullptr;
    T* gw = ww ? ctx.grad_input(1).ptr() : nullptr;
    for (std::size_t b = 0; b < geo.B; ++b) {
      for (std::size_t oy = 0; oy < geo.Ho; ++oy) {
        for (std::size_t ox = 0; ox < geo.Wo; ++ox) {
          const T* go = g.ptr() + ((b * geo.Ho + oy) * geo.Wo + ox) * geo.Cout;
          for (std::size_t ky = 0; ky < geo.K; ++ky) {
            const std::ptrdiff_t sy =
                static_cast<std::ptrdiff_t>(oy * geo.stride + ky) - static_cast<std::ptrdiff_t>(geo.padding);
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(geo.H)) continue;
            for (std::size_t kx = 0; kx < geo.K; ++kx) {
              const std::ptrdiff_t sx =
                  static_cast<std::ptrdiff_t>(ox * geo.stride + kx) - static_cast<std::ptrdiff_t>(geo.padding);
              if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(geo.W)) continue;
              const std::size_t in_off = ((b * geo.H + sy) * geo.W + sx) * geo.Cin;
              const std::size_t w_off = (ky * geo.K + kx) * geo.Cin * geo.Cout;
              for (std::size_t ci = 0; ci < geo.Cin; ++ci) {
                const T* wr = wv.ptr() + w_off + ci * geo.Cout;
                if (wx) {
                  T acc = 0;
                  for (std::size_t co = 0; co < geo.Cout; ++co) acc += wr[co] * go[co];
                  gx[in_off + ci] += acc;
                }
                if (ww) {
                  const T v = xv[in_off + ci];
                  T* gwr = gw + w_off + ci * geo.Cout;
                  for (std::size_t co = 0; co < geo.Cout; ++co) gwr[co] += v * go[co];
                }
              }
            }
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> global_avg_pool(Var<T> x) {
  return x.tape().record("global_avg_pool", global_avg_pool(x.value()), {x}, [](BackwardContext<T>& ctx) {
    const auto& g = ctx.grad_output();
    auto& gx = ctx.grad_input(0);
    const std::size_t B = gx.extent(0), HW = gx.extent(1) * gx.extent(2), C = gx.extent(3);
    const T inv = T(1) / static_cast<T>(HW);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t p = 0; p < HW; ++p)
        for (std::size_t c = 0; c < C; ++c) gx[(b * HW + p) * C + c] += g[b * C + c] * inv;
  });
}

Activation parse_activation(const std::string& name) {
  if (name == "starrelu" || name == "star_relu") return Activation::StarReLU;
  if (name == "relu") return Activation::ReLU;
  if (name == "gelu") return Activation::GELU;
  if (name == "squared_relu") return Activation::SquaredReLU;
  throw ContractError("unknown activation '" + name + "'");
}

template <typename T>
LayerNorm<T> LayerNorm<T>::create(Registrar<T>& reg, const std::string& prefix, std::size_t channels) {
  LayerNorm n;
  n.scale = reg.declare({prefix + ".scale", {channels}}, Init::constant(1.0));
  n.shift = reg.declare({prefix + ".shift", {channels}}, Init::zeros());
  return n;
}

template <typename T>
Var<T> LayerNorm<T>::operator()(Var<T> x) const {
  auto& tape = x.tape();
  return layer_norm(x, tape.parameter(*scale), tape.parameter(*shift), epsilon);
}

template <typename T>
ActivationLayer<T> ActivationLayer<T>::create(Registrar<T>& reg, const std::string& prefix, Activation kind) {
  ActivationLayer a;
  a.kind = kind;
  if (kind == Activation::StarReLU) {
    a.s = reg.declare({prefix + ".scale", {1}}, Init::constant(kStarReluScale));
    a.b = reg.declare({prefix + ".bias", {1}}, Init::constant(kStarReluBias));
  }
  return a;
}

template <typename T>
Var<T> ActivationLayer<T>::operator()(Var<T> x) const {
  switch (kind) {
    case Activation::StarReLU:
      return star_relu(x, x.tape().parameter(*s), x.tape().parameter(*b));
    case Activation::ReLU:
      return relu(x);
    case Activation::GELU:
      return gelu(x);
    case Activation::SquaredReLU:
      return squared_relu(x);
  }
  throw ContractError("unhandled activation");
}

template <typename T>
Linear<T> Linear<T>::create(Registrar<T>& reg, const std::string& prefix, std::size_t in, std::size_t out,
                            bool with_bias) {
  Linear l;
  l.weight = reg.declare({prefix + ".weight", {in, out}}, Init::truncated_normal(kWeightInitStd));
  if (with_bias) l.bias = reg.declare({prefix + ".bias", {out}}, Init::zeros());
  return l;
}

template <typename T>
Var<T> Linear<T>::operator()(Var<T> x) const {
  auto y = linear(x, x.tape().parameter(*weight));
  return bias ? add(y, x.tape().parameter(*bias)) : y;
}

template <typename T>
DepthwiseConv<T> DepthwiseConv<T>::create(Registrar<T>& reg, const std::string& prefix, std::size_t channels,
                                          std::size_t kernel) {
  DepthwiseConv d;
  d.kernel = reg.declare({prefix + ".kernel", {channels, kernel, kernel}}, Init::truncated_normal(kWeightInitStd));
  return d;
}

template <typename T>
Var<T> DepthwiseConv<T>::operator()(Var<T> x) const {
  return depthwise_conv(x, x.tape().parameter(*kernel));
}

template <typename T>
Conv2d<T> Conv2d<T>::create(Registrar<T>& reg, const std::string& prefix, std::size_t in, std::size_t out,
                            std::size_t kernel, std::size_t stride, std::size_t padding) {
  Conv2d c;
  c.weight = reg.declare({prefix + ".weight", {kernel, kernel, in, out}}, Init::truncated_normal(kWeightInitStd));
  c.bias = reg.declare({prefix + ".bias", {out}}, Init::zeros());
  c.stride = stride;
  c.padding = padding;
  return c;
}

template <typename T>
Var<T> Conv2d<T>::operator()(Var<T> x) const {
  auto& tape = x.tape();
  return add(conv2d(x, tape.parameter(*weight), stride, padding), tape.parameter(*bias));
}

template <typename T>
ResScale<T> ResScale<T>::create(Registrar<T>& reg, const std::string& prefix, std::size_t channels) {
  ResScale r;
  r.scale = reg.declare({prefix + ".scale", {channels}}, Init::constant(1.0));
  return r;
}

template <typename T>
Var<T> ResScale<T>::operator()(Var<T> x) const {
  return multiply(x, x.tape().parameter(*scale));
}

#define DFF_INSTANTIATE(T)                                                               \
  template Tensor<T> layer_norm(const Tensor<T>&, const LayerNormParams<T>&);            \
  template Tensor<T> star_relu(const Tensor<T>&, const StarReLUParams<T>&);              \
  template Tensor<T> pointwise_conv(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> depthwise_conv(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t); \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                  \
  template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, T);                                 \
  template Var<T> star_relu(Var<T>, Var<T>, Var<T>);                                     \
  template Var<T> squared_relu(Var<T>);                                                  \
  template Var<T> relu(Var<T>);                                                          \
  template Var<T> gelu(Var<T>);                                                          \
  template Var<T> depthwise_conv(Var<T>, Var<T>);                                        \
  template Var<T> conv2d(Var<T>, Var<T>, std::size_t, std::size_t);                      \
  template Var<T> global_avg_pool(Var<T>);                                               \
  template struct LayerNorm<T>;                                                          \
  template struct ActivationLayer<T>;                                                    \
  template struct Linear<T>;                                                             \
  template struct DepthwiseConv<T>;                                                      \
  template struct Conv2d<T>;                                                             \
  template struct ResScale<T>;

DFF_INSTANTIATE(float)
DFF_INSTANTIATE(double)

}  // namespace dff
