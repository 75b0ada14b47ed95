#include "dff/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include "dff/autograd.hpp"
#include "dff/spectral.hpp"

namespace dff {

SpectrumProfile log_amplitude_profile(const Tensor<double>& features, std::size_t layer_index) {
  if (features.rank() != 4) throw ShapeError("log_amplitude_profile expects [B, H, W, C], got " + to_string(features.shape()));
  const std::size_t B = features.extent(0), H = features.extent(1), W = features.extent(2), C = features.extent(3);
  if (H != W) throw ContractError("log_amplitude_profile needs square feature maps, got " + to_string(features.shape()));
  if (B == 0 || H == 0 || C == 0) throw ContractError("log_amplitude_profile on an empty tensor");

  Tape<double> tape(GradMode::Disabled);
  const auto spec = rfft2_channels_last(tape.constant(features)).value();  // [B, H, Wh, C, 2]
  const std::size_t Wh = W / 2 + 1;
  const std::size_t K = H / 2 + 1;

  std::vector<double> amp(K, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t k = 0; k < K; ++k) {
      const double* bin = spec.ptr() + (((b * H + k) * Wh + k) * C) * 2;
      for (std::size_t c = 0; c < C; ++c) amp[k] += std::hypot(bin[2 * c], bin[2 * c + 1]);
    }
  }
  SpectrumProfile out;
  out.layer_index = layer_index;
  const double ref = std::log(std::max(amp[0] / static_cast<double>(B * C), kAmplitudeFloor));
  for (std::size_t k = 0; k < K; ++k) {
    out.frequency.push_back(2.0 * static_cast<double>(k) / static_cast<double>(H));
    const double a = std::max(amp[k] / static_cast<double>(B * C), kAmplitudeFloor);
    out.delta_log_amplitude.push_back(k == 0 ? 0.0 : std::log(a) - ref);
  }
  return out;
}

void write_profiles_csv(std::ostream& out, const std::vector<SpectrumProfile>& profiles) {
  out << "freq,delta_log_amp,layer\n";
  out.precision(17);
  for (const auto& p : profiles)
    for (std::size_t i = 0; i < p.frequency.size(); ++i)
      out << p.frequency[i] << ',' << p.delta_log_amplitude[i] << ',' << p.layer_index << '\n';
}

Tensor<double> visualize_filter(const Tensor<double>& weight, std::size_t width) {
  if (weight.rank() != 4 || weight.extent(3) != 2) {
    throw ShapeError("visualize_filter expects [H, W/2+1, N, 2], got " + to_string(weight.shape()));
  }
  const std::size_t H = weight.extent(0), Wh = weight.extent(1), N = weight.extent(2);
  const std::size_t W = width ? width : H;
  if (W / 2 + 1 != Wh) {
    throw ShapeError("visualize_filter: half width " + std::to_string(Wh) + " does not match full width " +
                     std::to_string(W));
  }
  // sigmoid(log a) == a / (1 + a); the rational form avoids libm rounding
  // differences so images stay byte-identical across platforms.
  auto level = [&](std::size_t r, std::size_t c, std::size_t n) {
    const double a = std::sqrt(weight(r, c, n, 0) * weight(r, c, n, 0) + weight(r, c, n, 1) * weight(r, c, n, 1)) + 1e-6;
    return a / (1.0 + a);
  };
  Tensor<double> out({H, W, N});
  for (std::size_t r = 0; r < H; ++r) {
    for (std::size_t c = 0; c < W; ++c) {
      const std::size_t sr = c < Wh ? r : (H - r) % H;
      const std::size_t sc = c < Wh ? c : W - c;
      const std::size_t dr = (r + H / 2) % H, dc = (c + W / 2) % W;
      for (std::size_t n = 0; n < N; ++n) out(dr, dc, n) = level(sr, sc, n);
    }
  }
  return out;
}

const std::array<Rgb, 256>& viridis() {
  static const std::array<Rgb, 256> table = {{
#include "data/viridis.inc"
  }};
  return table;
}

std::size_t colormap_index(double value) {
  if (!(value > 0.0)) return 0;
  return static_cast<std::size_t>(std::min(255.0, std::floor(value * 256.0)));
}

RgbImage colorize(const Tensor<double>& image, std::size_t index) {
  if (image.rank() != 3 || index >= image.extent(2)) {
    throw ShapeError("colorize: plane " + std::to_string(index) + " of " + to_string(image.shape()));
  }
  RgbImage out{image.extent(0), image.extent(1), {}};
  out.pixels.reserve(out.height * out.width * 3);
  for (std::size_t r = 0; r < out.height; ++r) {
    for (std::size_t c = 0; c < out.width; ++c) {
      const auto& rgb = viridis()[colormap_index(image(r, c, index))];
      out.pixels.insert(out.pixels.end(), rgb.begin(), rgb.end());
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& image) {
  if (image.pixels.size() != image.height * image.width * 3) throw ContractError("encode_ppm: pixel buffer size mismatch");
  const std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  const auto bytes = encode_ppm(image);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("failed writing " + path.string());
}

double hsic_unbiased(const Tensor<double>& K, const Tensor<double>& L) {
  if (K.rank() != 2 || K.extent(0) != K.extent(1) || K.shape() != L.shape()) {
    throw ShapeError("hsic_unbiased: Gram matrices " + to_string(K.shape()) + " and " + to_string(L.shape()));
  }
  const std::size_t n = K.extent(0);
  if (n < 4) throw ContractError("unbiased HSIC needs at least 4 samples, got " + std::to_string(n));
  double trace = 0, sum_k = 0, sum_l = 0, cross = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double row_k = 0, row_l = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      trace += K(i, j) * L(j, i);
      row_k += K(i, j);
      row_l += L(i, j);
    }
    sum_k += row_k;
    sum_l += row_l;
    cross += row_k * row_l;
  }
  const double nd = static_cast<double>(n);
  return (trace + sum_k * sum_l / ((nd - 1) * (nd - 2)) - 2.0 / (nd - 2) * cross) / (nd * (nd - 3));
}

Tensor<double> linear_gram(const Tensor<double>& X) {
  if (X.rank() < 1 || X.extent(0) == 0) throw ShapeError("linear_gram on " + to_string(X.shape()));
  const std::size_t n = X.extent(0);
  const auto rows = X.reshaped({n, X.size() / n});
  return matmul_nt(rows, rows);
}

CkaAccumulator::CkaAccumulator(std::vector<std::string> labels_a, std::vector<std::string> labels_b)
    : labels_a_(std::move(labels_a)),
      labels_b_(std::move(labels_b)),
      cross_({labels_a_.size(), labels_b_.size()}),
      self_a_(labels_a_.size(), 0.0),
      self_b_(labels_b_.size(), 0.0) {}

namespace {

std::vector<Tensor<double>> grams(const std::vector<Tensor<double>>& batch, std::size_t& n, const char* side) {
  std::vector<Tensor<double>> out;
  for (const auto& x : batch) {
    if (x.rank() < 1) throw ShapeError(std::string("CKA activation of model ") + side + " has no batch axis");
    if (n == 0) n = x.extent(0);
    if (x.extent(0) != n) {
      throw ContractError(std::string("CKA batch mismatch in model ") + side + ": " + std::to_string(x.extent(0)) +
                          " vs " + std::to_string(n) + " samples");
    }
    out.push_back(linear_gram(x));
  }
  return out;
}

}  // namespace

void CkaAccumulator::add(const std::vector<Tensor<double>>& batch_a, const std::vector<Tensor<double>>& batch_b) {
  if (batch_a.size() != labels_a_.size() || batch_b.size() != labels_b_.size()) {
    throw ContractError("CKA batch has " + std::to_string(batch_a.size()) + "/" + std::to_string(batch_b.size()) +
                        " layers, expected " + std::to_string(labels_a_.size()) + "/" +
                        std::to_string(labels_b_.size()));
  }
  std::size_t na = 0, nb = 0;
  const auto ka = grams(batch_a, na, "A");
  const auto kb = grams(batch_b, nb, "B");
  if (na != nb) {
    throw ContractError("CKA batch mismatch between models: " + std::to_string(na) + " vs " + std::to_string(nb) +
                        " samples");
  }
  if (na < 4) throw ContractError("CKA mini-batches need at least 4 samples, got " + std::to_string(na));
  for (std::size_t i = 0; i < ka.size(); ++i) self_a_[i] += hsic_unbiased(ka[i], ka[i]);
  for (std::size_t j = 0; j < kb.size(); ++j) self_b_[j] += hsic_unbiased(kb[j], kb[j]);
  for (std::size_t i = 0; i < ka.size(); ++i)
    for (std::size_t j = 0; j < kb.size(); ++j) cross_(i, j) += hsic_unbiased(ka[i], kb[j]);
  ++batches_;
}

CkaResult CkaAccumulator::result() const {
  if (batches_ == 0) throw ContractError("CKA result requested before any batch was added");
  CkaResult out{Tensor<double>(cross_.shape()), labels_a_, labels_b_};
  for (std::size_t i = 0; i < labels_a_.size(); ++i)
    for (std::size_t j = 0; j < labels_b_.size(); ++j)
      out.matrix(i, j) = cross_(i, j) / std::sqrt(self_a_[i] * self_b_[j]);
  return out;
}

CkaResult linear_cka(const std::vector<std::vector<Tensor<double>>>& acts_a,
                     const std::vector<std::vector<Tensor<double>>>& acts_b) {
  if (acts_a.size() != acts_b.size()) {
    throw ContractError("CKA batch mismatch: " + std::to_string(acts_a.size()) + " vs " +
                        std::to_string(acts_b.size()) + " mini-batches");
  }
  if (acts_a.empty()) throw ContractError("CKA needs at least one mini-batch");
  auto labels = [](std::size_t count) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back("layer" + std::to_string(i));
    return out;
  };
  CkaAccumulator acc(labels(acts_a.front().size()), labels(acts_b.front().size()));
  for (std::size_t b = 0; b < acts_a.size(); ++b) acc.add(acts_a[b], acts_b[b]);
  return acc.result();
}

void write_cka_csv(std::ostream& out, const CkaResult& result) {
  out << "layer_a,layer_b,cka\n";
  out.precision(17);
  for (std::size_t i = 0; i < result.labels_a.size(); ++i)
    for (std::size_t j = 0; j < result.labels_b.size(); ++j)
      out << result.labels_a[i] << ',' << result.labels_b[j] << ',' << result.matrix(i, j) << '\n';
}

}  // namespace dff
