#include "dff/spectral.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace dff {

namespace {

thread_local std::uint64_t g_butterflies = 0;

bool is_pow2(std::size_t n) { return n && !(n & (n - 1)); }

std::size_t log2_exact(std::size_t n) {
  std::size_t l = 0;
  while ((std::size_t{1} << l) < n) ++l;
  return l;
}

// e^{sign * 2 pi i num / den}, reduced in long double.
template <typename T>
std::complex<T> unit_root(std::size_t num, std::size_t den, int sign) {
  const long double angle = 2.0L * std::numbers::pi_v<long double> * static_cast<long double>(num % den) /
                            static_cast<long double>(den);
  return {static_cast<T>(std::cos(angle)), static_cast<T>(sign * std::sin(angle))};
}

// Stored half-spectrum columns that stand for a mirrored partner too.
bool doubled_column(std::size_t k, std::size_t width) { return k >= 1 && 2 * k < width; }

}  // namespace

std::uint64_t fft_butterfly_count() { return g_butterflies; }
void reset_fft_butterfly_count() { g_butterflies = 0; }

template <typename T>
Fft1d<T>::Fft1d(std::size_t n) : n_(n), pow2_(is_pow2(n)) {
  if (n == 0) throw PlanError("FFT length must be positive");
  if (pow2_) {
    const std::size_t bits = log2_exact(n);
    bitrev_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
      bitrev_[i] = r;
    }
    twiddles_.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) twiddles_[k] = unit_root<T>(k, n, -1);
    return;
  }
  std::size_t m = 1;
  while (m < 2 * n - 1) m <<= 1;
  inner_ = std::make_unique<Fft1d>(m);
  chirp_.resize(n);
  // k^2 is reduced modulo 2n so the phase stays exact for large k.
  for (std::size_t k = 0; k < n; ++k) chirp_[k] = unit_root<T>((k * k) % (2 * n), 2 * n, -1);
  chirp_fft_.assign(m, {});
  chirp_fft_[0] = std::conj(chirp_[0]);
  for (std::size_t k = 1; k < n; ++k) chirp_fft_[k] = chirp_fft_[m - k] = std::conj(chirp_[k]);
  inner_->transform(chirp_fft_, false);
}

template <typename T>
void Fft1d<T>::transform(std::span<std::complex<T>> data, bool inverse) const {
  if (data.size() != n_) {
    throw PlanError("FFT of length " + std::to_string(n_) + " applied to " + std::to_string(data.size()) + " points");
  }
  if (n_ == 1) return;
  if (pow2_) {
    radix2(data.data(), inverse);
  } else {
    bluestein(data.data(), inverse);
  }
}

template <typename T>
void Fft1d<T>::radix2(std::complex<T>* d, bool inverse) const {
  for (std::size_t i = 0; i < n_; ++i) {
    if (i < bitrev_[i]) std::swap(d[i], d[bitrev_[i]]);
  }
  for (std::size_t len = 2; len <= n_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n_ / len;
    for (std::size_t i = 0; i < n_; i += len) {
      for (std::size_t j = 0; j < half; ++j) {
        const std::complex<T> w = inverse ? std::conj(twiddles_[j * step]) : twiddles_[j * step];
        const std::complex<T> u = d[i + j];
        const std::complex<T> v = d[i + j + half] * w;
        d[i + j] = u + v;
        d[i + j + half] = u - v;
      }
    }
  }
  g_butterflies += (n_ / 2) * log2_exact(n_);
}

template <typename T>
void Fft1d<T>::bluestein(std::complex<T>* d, bool inverse) const {
  const std::size_t m = inner_->size();
  std::vector<std::complex<T>> a(m);
  // The inverse is conj(forward(conj(x))).
  for (std::size_t k = 0; k < n_; ++k) a[k] = (inverse ? std::conj(d[k]) : d[k]) * chirp_[k];
  inner_->transform(a, false);
  for (std::size_t k = 0; k < m; ++k) a[k] *= chirp_fft_[k];
  inner_->transform(a, true);
  const T inv_m = T(1) / static_cast<T>(m);
  for (std::size_t k = 0; k < n_; ++k) {
    const std::complex<T> v = a[k] * chirp_[k] * inv_m;
    d[k] = inverse ? std::conj(v) : v;
  }
}

template <typename T>
SpectralPlan<T>::SpectralPlan(std::size_t height, std::size_t width)
    : height_(height), width_(width), rows_(width), cols_(height) {}

template <typename T>
void SpectralPlan<T>::forward(std::span<const T> x, std::span<std::complex<T>> out, std::size_t batch,
                              std::size_t inner) const {
  const std::size_t H = height_, W = width_, Wh = half_width();
  if (x.size() != batch * H * W * inner || out.size() != batch * H * Wh * inner) {
    throw PlanError("rfft2: buffer sizes do not match plan " + std::to_string(H) + "x" + std::to_string(W));
  }
  const T norm = static_cast<T>(1.0L / std::sqrt(static_cast<long double>(H * W)));
  std::vector<std::complex<T>> row(W), col(H);
  for (std::size_t b = 0; b < batch; ++b) {
    const T* xb = x.data() + b * H * W * inner;
    std::complex<T>* ob = out.data() + b * H * Wh * inner;
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t c = 0; c < inner; ++c) {
        for (std::size_t w = 0; w < W; ++w) row[w] = {xb[(h * W + w) * inner + c], T(0)};
        rows_.transform(row, false);
        for (std::size_t k = 0; k < Wh; ++k) ob[(h * Wh + k) * inner + c] = row[k];
      }
    }
    for (std::size_t k = 0; k < Wh; ++k) {
      for (std::size_t c = 0; c < inner; ++c) {
        for (std::size_t h = 0; h < H; ++h) col[h] = ob[(h * Wh + k) * inner + c];
        cols_.transform(col, false);
        for (std::size_t h = 0; h < H; ++h) ob[(h * Wh + k) * inner + c] = col[h] * norm;
      }
    }
  }
}

template <typename T>
void SpectralPlan<T>::inverse(std::span<const std::complex<T>> in, std::span<T> out, std::size_t batch,
                              std::size_t inner) const {
  const std::size_t H = height_, W = width_, Wh = half_width();
  if (out.size() != batch * H * W * inner || in.size() != batch * H * Wh * inner) {
    throw PlanError("irfft2: buffer sizes do not match plan " + std::to_string(H) + "x" + std::to_string(W));
  }
  const T norm = static_cast<T>(1.0L / std::sqrt(static_cast<long double>(H * W)));
  std::vector<std::complex<T>> tmp(H * Wh), row(W), col(H);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::complex<T>* ib = in.data() + b * H * Wh * inner;
    T* ob = out.data() + b * H * W * inner;
    for (std::size_t c = 0; c < inner; ++c) {
      for (std::size_t k = 0; k < Wh; ++k) {
        for (std::size_t h = 0; h < H; ++h) col[h] = ib[(h * Wh + k) * inner + c];
        cols_.transform(col, true);
        for (std::size_t h = 0; h < H; ++h) tmp[h * Wh + k] = col[h];
      }
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t k = 0; k < Wh; ++k) row[k] = tmp[h * Wh + k];
        for (std::size_t k = Wh; k < W; ++k) row[k] = std::conj(tmp[h * Wh + (W - k)]);
        rows_.transform(row, true);
        for (std::size_t w = 0; w < W; ++w) ob[(h * W + w) * inner + c] = row[w].real() * norm;
      }
    }
  }
}

template <typename T>
const SpectralPlan<T>& plan_for(std::size_t height, std::size_t width) {
  static std::mutex mutex;
  static std::map<std::pair<std::size_t, std::size_t>, std::unique_ptr<SpectralPlan<T>>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[{height, width}];
  if (!slot) slot = std::make_unique<SpectralPlan<T>>(height, width);
  return *slot;
}

template <typename T>
ComplexTensor<T> rfft2(const Tensor<T>& x, const SpectralPlan<T>& plan) {
  const auto& s = x.shape();
  if (s.size() < 2 || s[s.size() - 2] != plan.height() || s.back() != plan.width()) {
    throw PlanError("rfft2: input " + to_string(s) + " does not match plan " + std::to_string(plan.height()) + "x" +
                    std::to_string(plan.width()));
  }
  Shape out_shape = s;
  out_shape.back() = plan.half_width();
  ComplexTensor<T> out(out_shape);
  plan.forward(x.data(), out.data(), x.size() / (plan.height() * plan.width()), 1);
  return out;
}

template <typename T>
Tensor<T> irfft2(const ComplexTensor<T>& x, const SpectralPlan<T>& plan) {
  const auto& s = x.shape();
  if (s.size() < 2 || s[s.size() - 2] != plan.height() || s.back() != plan.half_width()) {
    throw PlanError("irfft2: input " + to_string(s) + " does not match plan " + std::to_string(plan.height()) + "x" +
                    std::to_string(plan.width()));
  }
  Shape out_shape = s;
  out_shape.back() = plan.width();
  Tensor<T> out(out_shape);
  plan.inverse(x.data(), out.data(), x.size() / (plan.height() * plan.half_width()), 1);
  return out;
}

namespace {

template <typename T>
std::span<std::complex<T>> as_complex(Tensor<T>& pairs) {
  return {reinterpret_cast<std::complex<T>*>(pairs.ptr()), pairs.size() / 2};
}

template <typename T>
std::span<const std::complex<T>> as_complex(const Tensor<T>& pairs) {
  return {reinterpret_cast<const std::complex<T>*>(pairs.ptr()), pairs.size() / 2};
}

}  // namespace

template <typename T>
Var<T> rfft2_channels_last(Var<T> x) {
  const auto& s = x.shape();
  if (s.size() != 4) throw ShapeError("rfft2_channels_last expects [B, H, W, C], got " + to_string(s));
  const std::size_t B = s[0], H = s[1], W = s[2], C = s[3];
  const auto& plan = plan_for<T>(H, W);
  const std::size_t Wh = plan.half_width();
  Tensor<T> out({B, H, Wh, C, 2});
  plan.forward(x.value().data(), as_complex(out), B, C);
  return x.tape().record("rfft2", std::move(out), {x}, [&plan, B, C, Wh, W](BackwardContext<T>& ctx) {
    // Adjoint: the inverse transform with mirrored columns counted once.
    Tensor<T> g = ctx.grad_output();
    auto gc = as_complex(g);
    for (std::size_t i = 0; i < gc.size(); ++i) {
      const std::size_t k = (i / C) % Wh;
      if (doubled_column(k, W)) gc[i] *= T(0.5);
    }
    auto& gx = ctx.grad_input(0);
    Tensor<T> tmp(gx.shape());
    plan.inverse(gc, tmp.data(), B, C);
    accumulate(gx, tmp);
  });
}

template <typename T>
Var<T> irfft2_channels_last(Var<T> spectrum, std::size_t width) {
  const auto& s = spectrum.shape();
  if (s.size() != 5 || s[4] != 2) {
    throw ShapeError("irfft2_channels_last expects [B, H, W/2+1, C, 2], got " + to_string(s));
  }
  const std::size_t B = s[0], H = s[1], Wh = s[2], C = s[3];
  const auto& plan = plan_for<T>(H, width);
  if (plan.half_width() != Wh) {
    throw PlanError("irfft2: half width " + std::to_string(Wh) + " does not match width " + std::to_string(width));
  }
  Tensor<T> out({B, H, width, C});
  plan.inverse(as_complex(spectrum.value()), out.data(), B, C);
  return spectrum.tape().record("irfft2", std::move(out), {spectrum}, [&plan, B, C, Wh, width](BackwardContext<T>& ctx) {
    // Adjoint: the forward transform with mirrored columns counted twice.
    Tensor<T> tmp({B, plan.height(), Wh, C, 2});
    auto tc = as_complex(tmp);
    plan.forward(ctx.grad_output().data(), tc, B, C);
    for (std::size_t i = 0; i < tc.size(); ++i) {
      const std::size_t k = (i / C) % Wh;
      if (doubled_column(k, width)) tc[i] *= T(2);
    }
    accumulate(ctx.grad_input(0), tmp);
  });
}

template <typename T>
Var<T> complex_multiply(Var<T> a, Var<T> b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.back() != 2 || bs.back() != 2 || bs.size() > as.size() ||
      !std::equal(bs.rbegin(), bs.rend(), as.rbegin())) {
    throw ShapeError("complex_multiply: cannot broadcast " + to_string(bs) + " onto " + to_string(as));
  }
  Tensor<T> out(as);
  auto ac = as_complex(a.value());
  auto bc = as_complex(b.value());
  auto oc = as_complex(out);
  const std::size_t nb = bc.size();
  for (std::size_t i = 0; i < oc.size(); ++i) oc[i] = ac[i] * bc[i % nb];
  return a.tape().record("complex_multiply", std::move(out), {a, b}, [nb](BackwardContext<T>& ctx) {
    auto g = as_complex(ctx.grad_output());
    auto av = as_complex(ctx.input(0));
    auto bv = as_complex(ctx.input(1));
    if (ctx.wants(0)) {
      auto ga = as_complex(ctx.grad_input(0));
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * std::conj(bv[i % nb]);
    }
    if (ctx.wants(1)) {
      auto gb = as_complex(ctx.grad_input(1));
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % nb] += g[i] * std::conj(av[i]);
    }
  });
}

namespace {

// cos/sin of 2 pi m / n for m < n.
struct PhaseTable {
  explicit PhaseTable(std::size_t n) : n(n), cs(n), sn(n) {
    for (std::size_t m = 0; m < n; ++m) {
      const long double a = 2.0L * std::numbers::pi_v<long double> * m / n;
      cs[m] = static_cast<double>(std::cos(a));
      sn[m] = static_cast<double>(std::sin(a));
    }
  }
  std::size_t n;
  std::vector<double> cs, sn;
};

}  // namespace

ComplexTensor<double> naive_rfft2(const Tensor<double>& x) {
  const auto& s = x.shape();
  if (s.size() < 2) throw ShapeError("naive_rfft2 needs at least two axes");
  const std::size_t H = s[s.size() - 2], W = s.back(), Wh = W / 2 + 1, N = H * W;
  const std::size_t batch = x.size() / N;
  Shape out_shape = s;
  out_shape.back() = Wh;
  ComplexTensor<double> out(out_shape);
  const PhaseTable table(N);
  const double norm = 1.0 / std::sqrt(static_cast<double>(N));
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t kh = 0; kh < H; ++kh) {
      for (std::size_t kw = 0; kw < Wh; ++kw) {
        long double re = 0, im = 0;
        for (std::size_t h = 0; h < H; ++h) {
          for (std::size_t w = 0; w < W; ++w) {
            // Phase 2 pi (h kh / H + w kw / W) as an exact residue mod HW.
            const std::size_t m = ((h * kh) % H * W + (w * kw) % W * H) % N;
            const double v = x[b * N + h * W + w];
            re += v * table.cs[m];
            im -= v * table.sn[m];
          }
        }
        out[(b * H + kh) * Wh + kw] = {static_cast<double>(re) * norm, static_cast<double>(im) * norm};
      }
    }
  }
  return out;
}

Tensor<double> naive_irfft2(const ComplexTensor<double>& x, std::size_t width) {
  const auto& s = x.shape();
  if (s.size() < 2 || s.back() != width / 2 + 1) throw ShapeError("naive_irfft2: half width does not match width");
  const std::size_t H = s[s.size() - 2], W = width, Wh = W / 2 + 1, N = H * W;
  const std::size_t batch = x.size() / (H * Wh);
  Shape out_shape = s;
  out_shape.back() = W;
  Tensor<double> out(out_shape);
  const PhaseTable table(N);
  const double norm = 1.0 / std::sqrt(static_cast<double>(N));
  std::vector<std::complex<double>> full(N);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::complex<double>* xb = x.data().data() + b * H * Wh;
    for (std::size_t kh = 0; kh < H; ++kh) {
      for (std::size_t kw = 0; kw < W; ++kw) {
        full[kh * W + kw] = kw < Wh ? xb[kh * Wh + kw] : std::conj(xb[((H - kh) % H) * Wh + (W - kw)]);
      }
    }
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t w = 0; w < W; ++w) {
        long double acc = 0;
        for (std::size_t kh = 0; kh < H; ++kh) {
          for (std::size_t kw = 0; kw < W; ++kw) {
            const std::size_t m = ((h * kh) % H * W + (w * kw) % W * H) % N;
            const auto& f = full[kh * W + kw];
            acc += f.real() * table.cs[m] - f.imag() * table.sn[m];
          }
        }
        out[b * N + h * W + w] = static_cast<double>(acc) * norm;
      }
    }
  }
  return out;
}

#define DFF_INSTANTIATE(T)                                                         \
  template class Fft1d<T>;                                                         \
  template class SpectralPlan<T>;                                                  \
  template const SpectralPlan<T>& plan_for<T>(std::size_t, std::size_t);           \
  template ComplexTensor<T> rfft2(const Tensor<T>&, const SpectralPlan<T>&);       \
  template Tensor<T> irfft2(const ComplexTensor<T>&, const SpectralPlan<T>&);      \
  template Var<T> rfft2_channels_last(Var<T>);                                     \
  template Var<T> irfft2_channels_last(Var<T>, std::size_t);                       \
  template Var<T> complex_multiply(Var<T>, Var<T>);

DFF_INSTANTIATE(float)
DFF_INSTANTIATE(double)

}  // namespace dff
