#include "dff/config.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>

namespace dff {

ConfigError::ConfigError(std::size_t line, const std::string& key, const std::string& message)
    : Error(line ? "line " + std::to_string(line) + ": " + (key.empty() ? "" : "key '" + key + "': ") + message
                 : (key.empty() ? "" : "key '" + key + "': ") + message),
      line_(line),
      key_(key) {}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Entry {
  std::string value;
  std::size_t line;
};

class Reader {
 public:
  explicit Reader(std::map<std::string, Entry> entries) : entries_(std::move(entries)) {}

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  const Entry& at(const std::string& key) {
    used_.insert(key);
    return entries_.at(key);
  }

  template <typename F>
  void with(const std::string& key, F&& apply) {
    if (!has(key)) return;
    const auto& e = at(key);
    try {
      apply(e.value);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& err) {
      throw ConfigError(e.line, key, err.what());
    }
  }

  double number(const std::string& key, const std::string& v) const {
    double out = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) fail(key, "expected a number, got '" + v + "'");
    return out;
  }
  std::uint64_t integer(const std::string& key, const std::string& v) const {
    std::uint64_t out = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
      fail(key, "expected a non-negative integer, got '" + v + "'");
    }
    return out;
  }
  bool boolean(const std::string& key, const std::string& v) const {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(key, "expected true or false, got '" + v + "'");
    return false;
  }
  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw ConfigError(entries_.at(key).line, key, msg);
  }

  void reject_unused() const {
    for (const auto& [key, e] : entries_)
      if (!used_.count(key)) throw ConfigError(e.line, key, "unknown key");
  }

 private:
  std::map<std::string, Entry> entries_;
  std::set<std::string> used_;
};

std::pair<std::size_t, std::size_t> parse_extent(Reader& r, const std::string& key, const std::string& v) {
  const auto x = v.find('x');
  if (x == std::string::npos) {
    const auto n = r.integer(key, v);
    return {n, n};
  }
  return {r.integer(key, trim(v.substr(0, x))), r.integer(key, trim(v.substr(x + 1)))};
}

}  // namespace

RunConfig parse_config(std::istream& in) {
  std::map<std::string, Entry> entries;
  std::string raw;
  for (std::size_t line = 1; std::getline(in, raw); ++line) {
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError(line, "", "expected 'key = value', got '" + text + "'");
    const std::string key = trim(text.substr(0, eq)), value = trim(text.substr(eq + 1));
    if (key.empty()) throw ConfigError(line, "", "missing key before '='");
    if (value.empty()) throw ConfigError(line, key, "missing value");
    if (entries.count(key)) {
      throw ConfigError(line, key, "duplicate key (first set on line " + std::to_string(entries[key].line) + ")");
    }
    entries[key] = {value, line};
  }

  Reader r(std::move(entries));
  RunConfig cfg;
  r.with("seed", [&](const std::string& v) { cfg.seed = r.integer("seed", v); });

  // Model: base preset first, then field overrides.
  if (r.has("model.preset") && (r.has("model.family") || r.has("model.size"))) {
    r.fail("model.preset", "give either model.preset or model.family/model.size, not both");
  }
  r.with("model.preset", [&](const std::string& v) { cfg.model = model_preset(v); });
  if (r.has("model.family") != r.has("model.size")) {
    const std::string key = r.has("model.family") ? "model.family" : "model.size";
    r.fail(key, "model.family and model.size must be given together");
  }
  if (r.has("model.family")) {
    const auto& family = r.at("model.family").value;
    r.with("model.size", [&](const std::string& size) { cfg.model = make_config(family, size); });
  }
  r.with("model.input", [&](const std::string& v) {
    const auto [h, w] = parse_extent(r, "model.input", v);
    cfg.model = with_input(cfg.model, h, w);
  });
  r.with("model.num_classes", [&](const std::string& v) { cfg.model.num_classes = r.integer("model.num_classes", v); });
  r.with("model.num_filters", [&](const std::string& v) { cfg.model.num_filters = r.integer("model.num_filters", v); });
  r.with("model.routeing_ratio",
         [&](const std::string& v) { cfg.model.routeing_ratio = r.number("model.routeing_ratio", v); });
  r.with("model.activation", [&](const std::string& v) { cfg.model.activation = parse_activation(v); });
  r.with("model.drop_path", [&](const std::string& v) { cfg.model.drop_path_rate = r.number("model.drop_path", v); });
  for (std::size_t s = 0; s < 4; ++s) {
    const std::string p = "stages[" + std::to_string(s) + "].";
    r.with(p + "depth", [&](const std::string& v) { cfg.model.stages[s].depth = r.integer(p + "depth", v); });
    r.with(p + "width", [&](const std::string& v) { cfg.model.stages[s].width = r.integer(p + "width", v); });
    r.with(p + "mixer", [&](const std::string& v) {
      cfg.model.stages[s].mixer = parse_mixer(v);
      cfg.model.family = "custom";
    });
  }

  auto& t = cfg.train;
  r.with("train.lr", [&](const std::string& v) { t.lr = r.number("train.lr", v); });
  r.with("train.weight_decay", [&](const std::string& v) { t.weight_decay = r.number("train.weight_decay", v); });
  r.with("train.beta1", [&](const std::string& v) { t.beta1 = r.number("train.beta1", v); });
  r.with("train.beta2", [&](const std::string& v) { t.beta2 = r.number("train.beta2", v); });
  r.with("train.eps", [&](const std::string& v) { t.eps = r.number("train.eps", v); });
  r.with("train.epochs", [&](const std::string& v) { t.epochs = r.integer("train.epochs", v); });
  r.with("train.warmup_epochs", [&](const std::string& v) { t.warmup_epochs = r.number("train.warmup_epochs", v); });
  r.with("train.batch_size", [&](const std::string& v) {
    t.batch_size = r.integer("train.batch_size", v);
    if (t.batch_size == 0) r.fail("train.batch_size", "must be positive");
  });
  r.with("train.schedule", [&](const std::string& v) {
    if (v == "cosine") t.schedule = Schedule::Cosine;
    else if (v == "constant") t.schedule = Schedule::Constant;
    else r.fail("train.schedule", "expected cosine or constant, got '" + v + "'");
  });
  r.with("train.min_lr", [&](const std::string& v) { t.min_lr = r.number("train.min_lr", v); });
  r.with("train.label_smoothing",
         [&](const std::string& v) { t.label_smoothing = r.number("train.label_smoothing", v); });
  r.with("train.decay_vectors", [&](const std::string& v) { t.decay_vectors = r.boolean("train.decay_vectors", v); });

  r.with("data.samples_per_class",
         [&](const std::string& v) { cfg.data.samples_per_class = r.integer("data.samples_per_class", v); });
  r.with("data.eval_samples_per_class",
         [&](const std::string& v) { cfg.eval_samples_per_class = r.integer("data.eval_samples_per_class", v); });
  r.with("data.noise", [&](const std::string& v) { cfg.data.noise_sigma = r.number("data.noise", v); });
  r.with("data.jitter", [&](const std::string& v) { cfg.data.frequency_jitter = r.number("data.jitter", v); });
  r.reject_unused();

  cfg.data.seed = cfg.seed;
  cfg.data.grid = cfg.model.input_height;
  try {
    cfg.model.validate();
  } catch (const Error& e) {
    throw ConfigError(0, "", std::string("invalid model: ") + e.what());
  }
  if (cfg.model.input_height != cfg.model.input_width) {
    throw ConfigError(0, "model.input", "synthetic data needs a square input");
  }
  if (cfg.model.num_classes < cfg.data.classes) {
    throw ConfigError(0, "model.num_classes", "fewer classes than the synthetic task's " + std::to_string(cfg.data.classes));
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path.string());
  return parse_config(f);
}

std::string config_template() {
  return R"(# Desk-scale run on the synthetic frequency task.
seed = 0

model.preset = nano-df          # or model.family = dfformer + model.size = s18
# model.input = 32
# stages[2].mixer = df          # overriding a mixer makes the family custom
# model.drop_path = 0.0

train.lr = 0.001
train.weight_decay = 0.05
train.beta1 = 0.9
train.beta2 = 0.999
train.eps = 1e-8
train.epochs = 30
train.warmup_epochs = 2
train.batch_size = 64
train.schedule = cosine
train.min_lr = 1e-6
train.label_smoothing = 0.0

data.samples_per_class = 64
data.eval_samples_per_class = 64
data.noise = 0.3
data.jitter = 0.5
)";
}

SyntheticSpec train_spec(const RunConfig& cfg) {
  auto spec = cfg.data;
  spec.seed = cfg.seed;
  spec.grid = cfg.model.input_height;
  return spec;
}

SyntheticSpec heldout_spec(const RunConfig& cfg) {
  auto spec = train_spec(cfg);
  spec.seed = Rng(cfg.seed).split("heldout").next_u64();
  spec.samples_per_class = cfg.eval_samples_per_class;
  return spec;
}

SyntheticRun run_synthetic(const RunConfig& cfg, const EpochCallback& on_epoch) {
  if (cfg.model.input_height != cfg.model.input_width) throw ContractError("synthetic data needs a square input");
  const auto train_set = gen_synthetic(train_spec(cfg));
  const auto heldout_set = gen_synthetic(heldout_spec(cfg));
  SyntheticRun run{Model<double>(cfg.model, cfg.seed), {}, {}, {}};
  run.history = train(run.model, train_set, cfg.train, Rng(cfg.seed).split("train"), on_epoch);
  run.train = evaluate(run.model, train_set);
  run.heldout = evaluate(run.model, heldout_set);
  return run;
}

}  // namespace dff
