#include "dff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_map>
#include <unordered_set>

namespace dff {

namespace {

static_assert(std::endian::native == std::endian::little, "DFCK I/O assumes a little-endian host");

constexpr char kMagic[4] = {'D', 'F', 'C', 'K'};

class Writer {
 public:
  template <typename U>
  void put(U v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(U));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes.insert(bytes.end(), p, p + n);
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  template <typename U>
  U get(const char* what) {
    U v;
    take(&v, sizeof(U), what);
    return v;
  }
  void take(void* out, std::size_t n, const std::string& what) {
    if (bytes_.size() - pos_ < n) {
      throw TruncatedPayloadError("checkpoint truncated while reading " + what + " at byte " + std::to_string(pos_));
    }
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::size_t payload_count(const DfckEntry& e) {
  return numel(e.shape) * (e.dtype == DType::ComplexPair ? 2 : 1);
}

}  // namespace

std::vector<std::uint8_t> encode_dfck(const std::vector<DfckEntry>& entries) {
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint32_t>(kDfckVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.name.size() > 0xffff) throw CheckpointError("entry name too long: " + e.name.substr(0, 32) + "...");
    if (e.shape.size() > 0xff) throw CheckpointError("entry rank too large: " + e.name);
    if (e.values.size() != payload_count(e)) {
      throw EntryShapeError("entry " + e.name + " has " + std::to_string(e.values.size()) + " values for shape " +
                            to_string(e.shape));
    }
    w.put<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
    w.put_bytes(e.name.data(), e.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.dtype));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.shape.size()));
    for (auto d : e.shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    if (e.dtype == DType::Real32) {
      for (double v : e.values) w.put<float>(static_cast<float>(v));
    } else {
      w.put_bytes(e.values.data(), e.values.size() * sizeof(double));
    }
  }
  return std::move(w.bytes);
}

std::vector<DfckEntry> decode_dfck(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[4];
  if (bytes.size() < 4) throw MagicMismatchError("file too short to hold the DFCK magic");
  r.take(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw MagicMismatchError("not a DFCK container (bad magic bytes)");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kDfckVersion) {
    throw VersionMismatchError("unsupported DFCK version " + std::to_string(version) + ", expected " +
                               std::to_string(kDfckVersion));
  }
  const auto count = r.get<std::uint32_t>("entry count");
  std::vector<DfckEntry> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    DfckEntry e;
    const auto len = r.get<std::uint16_t>("name length");
    e.name.resize(len);
    r.take(e.name.data(), len, "entry name");
    const auto code = r.get<std::uint8_t>("dtype");
    if (code > 2) throw CheckpointError("entry " + e.name + " has unknown dtype code " + std::to_string(code));
    e.dtype = static_cast<DType>(code);
    const auto rank = r.get<std::uint8_t>("rank");
    for (std::uint8_t k = 0; k < rank; ++k) e.shape.push_back(r.get<std::uint32_t>("extent"));
    const std::size_t n = payload_count(e);
    const std::size_t width = e.dtype == DType::Real32 ? sizeof(float) : sizeof(double);
    if (r.remaining() / width < n) {
      throw TruncatedPayloadError("payload of " + e.name + " truncated: needs " + std::to_string(n * width) +
                                  " bytes, " + std::to_string(r.remaining()) + " left");
    }
    e.values.resize(n);
    if (e.dtype == DType::Real32) {
      for (auto& v : e.values) v = r.get<float>("payload");
    } else {
      r.take(e.values.data(), n * sizeof(double), "payload");
    }
    out.push_back(std::move(e));
  }
  return out;
}

void write_dfck(const std::filesystem::path& path, const std::vector<DfckEntry>& entries) {
  const auto bytes = encode_dfck(entries);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing " + path.string());
}

std::vector<DfckEntry> read_dfck(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_dfck(bytes);
}

template <typename T>
std::vector<DfckEntry> checkpoint_entries(const ParameterStore<T>& params) {
  std::vector<DfckEntry> out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (!p.persistent) continue;
    DfckEntry e;
    e.name = p.name;
    e.shape = p.value.shape();
    if (p.is_complex) {
      e.dtype = DType::ComplexPair;
      e.shape.pop_back();
    } else {
      e.dtype = std::is_same_v<T, float> ? DType::Real32 : DType::Real64;
    }
    e.values.assign(p.value.data().begin(), p.value.data().end());
    out.push_back(std::move(e));
  }
  return out;
}

template <typename T>
void load_parameters(Model<T>& model, const std::vector<DfckEntry>& entries) {
  auto& store = model.parameters();
  std::unordered_set<std::string> seen;
  for (const auto& e : entries) {
    auto* p = store.find(e.name);
    if (!p) throw UnknownParameterError("checkpoint entry " + e.name + " does not exist in model " + model.config().name);
    if (p->is_complex != (e.dtype == DType::ComplexPair)) {
      throw EntryShapeError("entry " + e.name + " differs from the model in complex/real kind");
    }
    Shape stored = e.shape;
    if (e.dtype == DType::ComplexPair) stored.push_back(2);
    Tensor<T> value(stored);
    for (std::size_t i = 0; i < e.values.size(); ++i) value[i] = static_cast<T>(e.values[i]);
    if (stored != p->value.shape()) {
      const auto& target = p->value.shape();
      const bool resamplable = p->is_complex && stored.size() == 4 && target.size() == 4 && stored[2] == target[2];
      if (!resamplable) {
        throw EntryShapeError("entry " + e.name + " has shape " + to_string(stored) + ", model expects " +
                              to_string(target));
      }
      // Spatial transfer of a filter: the source width is only needed for the
      // parity of its half spectrum, so any width with the same half works.
      FilterBasis<T> src{std::move(value), stored[0], 2 * (stored[1] - 1)};
      const std::size_t new_width = 2 * (target[1] - 1);
      value = interpolate_filter_basis(src, target[0], new_width).weights;
    }
    p->value = std::move(value);
    seen.insert(e.name);
  }
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (store[i].persistent && !seen.contains(store[i].name)) {
      throw MissingParameterError("checkpoint lacks parameter " + store[i].name);
    }
  }
}

std::vector<DfckEntry> activation_entries(const std::vector<Tensor<double>>& activations) {
  std::vector<DfckEntry> out;
  for (std::size_t i = 0; i < activations.size(); ++i) {
    out.push_back({"act." + std::to_string(i), DType::Real64, activations[i].shape(),
                   std::vector<double>(activations[i].data().begin(), activations[i].data().end())});
  }
  return out;
}

template std::vector<DfckEntry> checkpoint_entries(const ParameterStore<float>&);
template std::vector<DfckEntry> checkpoint_entries(const ParameterStore<double>&);
template void load_parameters(Model<float>&, const std::vector<DfckEntry>&);
template void load_parameters(Model<double>&, const std::vector<DfckEntry>&);

}  // namespace dff
