#include "dff/diagnostics.hpp"

#include <cmath>
#include <functional>
#include <ostream>

#include "dff/analysis.hpp"
#include "dff/oracle.hpp"
#include "dff/spectral.hpp"

namespace dff {

namespace {

constexpr double kGradTolerance = 1e-5;

Tensor<double> normal_tensor(Shape shape, Rng& rng, double std = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal() * std;
  return t;
}

Var<double> probe(Var<double> out, std::uint64_t seed) {
  Rng rng = Rng(seed).split("probe");
  return weighted_sum(out, normal_tensor(out.shape(), rng));
}

void randomize(ParameterStore<double>& store, Rng& rng, double std) {
  for (std::size_t i = 0; i < store.size(); ++i)
    for (auto& v : store[i].value.data()) v = rng.normal() * std;
}

std::vector<Parameter<double>*> all_of(ParameterStore<double>& store) {
  std::vector<Parameter<double>*> out;
  for (std::size_t i = 0; i < store.size(); ++i) out.push_back(&store[i]);
  return out;
}

CheckResult grad_result(const std::string& name, const std::function<Var<double>(Tape<double>&)>& loss,
                        std::vector<Parameter<double>*> params, std::size_t probes = 0, std::uint64_t seed = 0) {
  GradCheckOptions opts;
  opts.max_probes_per_param = probes;
  opts.seed = seed;
  const auto report = check_gradients(loss, params, opts);
  return {"gradient", name, report.max_error, kGradTolerance, report.probes};
}

double max_abs(const std::vector<double>& a, std::span<const double> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

MixerGeometry geometry(std::size_t C, std::size_t H, std::size_t W, std::size_t N = 4) {
  MixerGeometry g;
  g.channels = C;
  g.height = H;
  g.width = W;
  g.num_filters = N;
  return g;
}

std::string extent_name(std::size_t H, std::size_t W) { return std::to_string(H) + "x" + std::to_string(W); }

}  // namespace

bool all_passed(const std::vector<CheckResult>& results) {
  for (const auto& r : results)
    if (!r.passed()) return false;
  return true;
}

void write_checks_csv(std::ostream& out, const std::vector<CheckResult>& results) {
  out << "suite,name,error,tolerance,samples,passed\n";
  out.precision(6);
  for (const auto& r : results)
    out << r.suite << ',' << r.name << ',' << r.error << ',' << r.tolerance << ',' << r.samples << ','
        << (r.passed() ? 1 : 0) << '\n';
}

// ---- oracle suites

std::vector<CheckResult> fft_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  const std::pair<std::size_t, std::size_t> sizes[] = {{2, 2}, {4, 4}, {7, 7}, {7, 5}, {14, 14}, {56, 56}};
  for (auto [H, W] : sizes) {
    Rng rng = Rng(seed).split("fft").split(H * 1000 + W);
    const auto x = normal_tensor({H, W}, rng);
    const auto& plan = plan_for<double>(H, W);
    const auto X = rfft2(x, plan);
    const auto ref = oracle::direct_dft(x, H, W);
    const std::size_t Wh = W / 2 + 1;
    double dft_err = 0;
    for (std::size_t u = 0; u < H; ++u)
      for (std::size_t v = 0; v < Wh; ++v) dft_err = std::max(dft_err, std::abs(X[u * Wh + v] - ref[u * W + v]));
    out.push_back({"fft", "rfft2_vs_direct_" + extent_name(H, W), dft_err, 1e-10, H * Wh});

    const auto back = irfft2(X, plan);
    double trip = 0;
    for (std::size_t i = 0; i < x.size(); ++i) trip = std::max(trip, std::abs(back[i] - x[i]));
    out.push_back({"fft", "round_trip_" + extent_name(H, W), trip, 1e-12, H * W});
  }
  return out;
}

std::vector<CheckResult> convolution_checks(std::uint64_t seed, std::size_t trials) {
  std::vector<CheckResult> out;
  for (std::size_t n : {7u, 8u}) {
    double worst = 0;
    for (std::size_t t = 0; t < trials; ++t) {
      Rng rng = Rng(seed).split("convolution").split(n * 1000 + t);
      const auto x = normal_tensor({1, n, n, 1}, rng);
      const auto k = normal_tensor({n, n / 2 + 1, 1, 2}, rng);
      Tape<double> tape(GradMode::Disabled);
      const auto y = global_filter(tape.constant(x), tape.constant(k)).value();
      // A half-spectrum filter is only Hermitian-consistent after a round
      // trip, so the spatial kernel is whatever irfft2 makes of it.
      const auto kernel = irfft2(ComplexTensor<double>::from_pairs(k.reshaped({n, n / 2 + 1, 2})), plan_for<double>(n, n));
      auto ref = oracle::cyclic_convolution(x.reshaped({n, n}), kernel, n, n);
      const double root = std::sqrt(static_cast<double>(n * n));
      for (auto& v : ref) v /= root;
      worst = std::max(worst, max_abs(ref, y.data()));
    }
    out.push_back({"convolution", "global_filter_vs_cyclic_" + extent_name(n, n), worst, 1e-10, trials});
  }
  return out;
}

std::vector<CheckResult> linearity_checks(std::uint64_t seed, std::size_t seeds) {
  std::vector<CheckResult> out;
  for (std::size_t N : {1u, 2u, 4u}) {
    double worst = 0;
    for (std::size_t s = 0; s < seeds; ++s) {
      const Rng root = Rng(seed).split("linearity").split(N * 1000 + s);
      ParameterStore<double> store;
      Materializer<double> mat(store, root.split("init"));
      auto df = DynamicFilter<double>::create(mat, "df", geometry(6, 7, 6, N));
      Rng rng = root.split("values");
      randomize(store, rng, 0.5);
      const auto x = normal_tensor({3, 7, 6, 6}, rng);
      Tape<double> tape(GradMode::Disabled);
      const auto y = df(tape.constant(x)).value();
      const auto ref = oracle::decomposed_dynamic_filter(df, x);
      for (std::size_t i = 0; i < y.size(); ++i) worst = std::max(worst, std::abs(y[i] - ref[i]));
    }
    out.push_back({"linearity", "dynamic_filter_N" + std::to_string(N), worst, 1e-10, seeds});
  }
  return out;
}

std::vector<CheckResult> cka_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng = Rng(seed).split("cka");
  const std::size_t n = 8, d = 3;
  const auto X = normal_tensor({n, d}, rng), Y = normal_tensor({n, d}, rng);
  const std::vector<double> xs(X.data().begin(), X.data().end()), ys(Y.data().begin(), Y.data().end());

  const double h = hsic_unbiased(linear_gram(X), linear_gram(Y));
  out.push_back({"cka", "hsic_vs_scalar_oracle", std::abs(h - static_cast<double>(oracle::scalar_hsic(xs, d, ys, d, n))),
                 1e-10, n});
  const long double expected = oracle::scalar_hsic(xs, d, ys, d, n) /
                               std::sqrt(oracle::scalar_hsic(xs, d, xs, d, n) * oracle::scalar_hsic(ys, d, ys, d, n));
  const auto single = linear_cka({{X}}, {{Y}});
  out.push_back({"cka", "cka_vs_scalar_oracle", std::abs(single.matrix(0, 0) - static_cast<double>(expected)), 1e-10, n});

  // Three batches of three layers with different widths.
  std::vector<std::vector<Tensor<double>>> acts(3);
  for (auto& b : acts) {
    b.push_back(normal_tensor({10, 5}, rng));
    b.push_back(normal_tensor({10, 2, 2, 3}, rng));
    b.push_back(normal_tensor({10, 7}, rng));
  }
  const auto self = linear_cka(acts, acts);
  double self_err = 0;
  for (std::size_t i = 0; i < 3; ++i) self_err = std::max(self_err, std::abs(self.matrix(i, i) - 1.0));
  out.push_back({"cka", "self_similarity", self_err, 1e-6, 3});

  // Householder reflection on one layer, isotropic scaling on another.
  const auto v = normal_tensor({5}, rng);
  double vv = 0;
  for (double e : v.data()) vv += e * e;
  Tensor<double> Q({5, 5});
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) Q(i, j) = (i == j ? 1.0 : 0.0) - 2 * v[i] * v[j] / vv;
  auto moved = acts;
  for (auto& b : moved) {
    b[0] = matmul(b[0], Q);
    b[2] = scaled(b[2], 3.7);
  }
  const auto base = linear_cka(acts, acts), after = linear_cka(acts, moved);
  double inv_err = 0;
  for (std::size_t i = 0; i < base.matrix.size(); ++i)
    inv_err = std::max(inv_err, std::abs(after.matrix[i] - base.matrix[i]));
  out.push_back({"cka", "orthogonal_and_scale_invariance", inv_err, 1e-6, base.matrix.size()});
  return out;
}

std::vector<CheckResult> interpolation_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  const std::size_t cases[][4] = {{7, 7, 14, 14}, {14, 14, 28, 28}, {8, 8, 5, 5}};
  for (const auto& c : cases) {
    const std::size_t H = c[0], W = c[1], nH = c[2], nW = c[3], Wh = W / 2 + 1, nWh = nW / 2 + 1, N = 3;
    Rng rng = Rng(seed).split("interpolation").split(H * 100 + nH);
    FilterBasis<double> b{normal_tensor({H, Wh, N, 2}, rng), H, W};
    const auto r = interpolate_filter_basis(b, nH, nW);
    double worst = 0;
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t part = 0; part < 2; ++part) {
        std::vector<double> plane(H * Wh);
        for (std::size_t p = 0; p < H * Wh; ++p) plane[p] = b.weights[(p * N + i) * 2 + part];
        const auto ref = oracle::bicubic_dense(plane, H, Wh, nH, nWh);
        for (std::size_t p = 0; p < nH * nWh; ++p)
          worst = std::max(worst, std::abs(r.weights[(p * N + i) * 2 + part] - ref[p]));
      }
    out.push_back({"interpolation", "basis_" + extent_name(H, W) + "_to_" + extent_name(nH, nW), worst, 1e-10,
                   nH * nWh * N * 2});
  }
  return out;
}

std::vector<CheckResult> oracle_suite(std::uint64_t seed) {
  std::vector<CheckResult> out;
  for (auto part : {fft_checks(seed), convolution_checks(seed), linearity_checks(seed), cka_checks(seed),
                    interpolation_checks(seed)})
    out.insert(out.end(), part.begin(), part.end());
  return out;
}

// ---- gradient suites

std::vector<CheckResult> layer_gradient_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng = Rng(seed).split("layers");
  ParameterStore<double> store;
  auto& x = store.add("x", normal_tensor({2, 5, 5, 4}, rng));
  // Keep central differences away from the ReLU kinks.
  for (auto& v : x.value.data())
    if (std::abs(v) < 1e-3) v = 0.1;
  auto& scale = store.add("ln.scale", normal_tensor({4}, rng));
  auto& shift = store.add("ln.shift", normal_tensor({4}, rng));
  auto& s = store.add("act.s", Tensor<double>::scalar(0.9));
  auto& b = store.add("act.b", Tensor<double>::scalar(-0.4));
  auto& dk = store.add("dw.kernel", normal_tensor({4, 3, 3}, rng));
  auto& cw = store.add("conv.weight", normal_tensor({3, 3, 4, 3}, rng));
  auto& pw = store.add("pw.weight", normal_tensor({4, 4}, rng));
  auto& logits = store.add("logits", normal_tensor({5, 4}, rng));
  const std::vector<int> labels{0, 3, 1, 2, 3};

  auto px = [&](Tape<double>& t) { return t.parameter(x); };
  out.push_back(grad_result(
      "layer_norm",
      [&](Tape<double>& t) { return probe(layer_norm(px(t), t.parameter(scale), t.parameter(shift), 1e-6), seed); },
      {&x, &scale, &shift}));
  out.push_back(grad_result(
      "star_relu", [&](Tape<double>& t) { return probe(star_relu(px(t), t.parameter(s), t.parameter(b)), seed); },
      {&x, &s, &b}));
  out.push_back(grad_result("squared_relu", [&](Tape<double>& t) { return probe(squared_relu(px(t)), seed); }, {&x}));
  out.push_back(grad_result("relu", [&](Tape<double>& t) { return probe(relu(px(t)), seed); }, {&x}));
  out.push_back(grad_result("gelu", [&](Tape<double>& t) { return probe(gelu(px(t)), seed); }, {&x}));
  out.push_back(grad_result(
      "depthwise_conv", [&](Tape<double>& t) { return probe(depthwise_conv(px(t), t.parameter(dk)), seed); },
      {&x, &dk}));
  out.push_back(grad_result(
      "conv2d_stride2", [&](Tape<double>& t) { return probe(conv2d(px(t), t.parameter(cw), 2, 1), seed); },
      {&x, &cw}));
  out.push_back(grad_result(
      "pointwise", [&](Tape<double>& t) { return probe(linear(px(t), t.parameter(pw)), seed); }, {&x, &pw}));
  out.push_back(grad_result("global_avg_pool", [&](Tape<double>& t) { return probe(global_avg_pool(px(t)), seed); },
                            {&x}));
  out.push_back(grad_result(
      "softmax", [&](Tape<double>& t) { return probe(softmax_axis1(reshape(t.parameter(logits), {1, 5, 4})), seed); },
      {&logits}));
  out.push_back(grad_result(
      "cross_entropy", [&](Tape<double>& t) { return cross_entropy(t.parameter(logits), labels); }, {&logits}));

  {
    ParameterStore<double> spec;
    auto& sx = spec.add("x", normal_tensor({2, 5, 6, 3}, rng));
    auto& sk = spec.add("k", normal_tensor({5, 4, 3, 2}, rng), true);
    out.push_back(grad_result(
        "rfft2_multiply_irfft2",
        [&](Tape<double>& t) {
          return probe(irfft2_channels_last(complex_multiply(rfft2_channels_last(t.parameter(sx)), t.parameter(sk)), 6),
                       seed);
        },
        {&sx, &sk}));
  }
  {
    ParameterStore<double> ms;
    auto& c = ms.add("coeffs", normal_tensor({2, 3, 4}, rng));
    auto& k = ms.add("basis", normal_tensor({3, 2, 3, 2}, rng), true);
    out.push_back(grad_result(
        "basis_mixing", [&](Tape<double>& t) { return probe(mix_filter_basis(t.parameter(c), t.parameter(k)), seed); },
        {&c, &k}));
  }
  {
    ParameterStore<double> ds;
    Materializer<double> mat(ds, Rng(seed).split("df"));
    auto df = DynamicFilter<double>::create(mat, "df", geometry(4, 4, 5, 3));
    randomize(ds, rng, 0.5);
    auto& in = ds.add("x", normal_tensor({2, 4, 5, 4}, rng));
    out.push_back(grad_result("dynamic_filter_with_complex_basis",
                              [&](Tape<double>& t) { return probe(df(t.parameter(in)), seed); }, all_of(ds)));
  }
  {
    ParameterStore<double> gs;
    Materializer<double> mat(gs, Rng(seed).split("gf"));
    auto gf = GlobalFilter<double>::create(mat, "gf", geometry(3, 5, 4));
    auto sc = SepConv<double>::create(mat, "sc", geometry(3, 5, 4), 3);
    auto ln = LayerNorm<double>::create(mat, "ln", 3);
    auto rs = ResScale<double>::create(mat, "rs", 3);
    randomize(gs, rng, 0.5);
    auto& in = gs.add("x", normal_tensor({2, 5, 4, 3}, rng));
    out.push_back(grad_result("global_filter_sepconv_layernorm_resscale",
                              [&](Tape<double>& t) { return probe(rs(ln(sc(gf(t.parameter(in))))), seed); },
                              all_of(gs)));
  }
  return out;
}

CheckResult model_gradient_check(const ModelConfig& cfg, std::uint64_t seed, std::size_t probes) {
  Model<double> m(cfg, seed);
  Rng rng = Rng(seed).split("model_gradcheck");
  randomize(m.parameters(), rng, 0.2);
  // LayerNorm scales near one keep activations well conditioned.
  for (std::size_t i = 0; i < m.parameters().size(); ++i) {
    auto& p = m.parameters()[i];
    if (p.name.ends_with("norm.scale") || p.name.ends_with("norm1.scale") || p.name.ends_with("norm2.scale"))
      for (auto& v : p.value.data()) v += 1.0;
  }
  ParameterStore<double> inputs;
  auto& x = inputs.add("x", normal_tensor({2, cfg.input_height, cfg.input_width, cfg.in_channels}, rng));
  auto params = all_of(m.parameters());
  params.push_back(&x);
  return grad_result(
      "model_" + cfg.name, [&](Tape<double>& t) { return probe(m.forward(t.parameter(x)), seed); }, params, probes,
      seed);
}

std::vector<CheckResult> gradient_suite(const ModelConfig& cfg, std::uint64_t seed, std::size_t probes) {
  auto out = layer_gradient_checks(seed);
  out.push_back(model_gradient_check(cfg, seed, probes));
  return out;
}

Tensor<double> golden_filter() {
  Tensor<double> w({14, 8, 2, 2});
  for (std::size_t r = 0; r < 14; ++r)
    for (std::size_t c = 0; c < 8; ++c)
      for (std::size_t n = 0; n < 2; ++n) {
        w(r, c, n, 0) = static_cast<double>(static_cast<int>((3 * r + 5 * c + 7 * n) % 11) - 5) / 4.0;
        w(r, c, n, 1) = static_cast<double>(static_cast<int>((2 * r + 7 * c + n) % 13) - 6) / 8.0;
      }
  return w;
}

}  // namespace dff
