#include "dff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dff {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

namespace {

void check_extents(const Shape& shape) {
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
  }
}

// True when `small` equals the trailing dims of `big` (scalar [1] always qualifies).
bool trailing_broadcastable(const Shape& big, const Shape& small) {
  if (small.size() == 1 && small[0] == 1) return true;
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(numel(shape_), T(0));
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (numel(shape_) != data_.size()) {
    throw ShapeError("shape " + to_string(shape_) + " needs " + std::to_string(numel(shape_)) +
                     " elements, got " + std::to_string(data_.size()));
  }
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const& {
  return Tensor(*this).reshaped(std::move(shape));
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) && {
  if (numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  return Tensor(std::move(shape), std::move(data_));
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
std::size_t Tensor<T>::offset(std::initializer_list<std::size_t> idx) const {
  if (idx.size() != shape_.size()) throw ShapeError("index rank does not match tensor rank");
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : idx) {
    if (i >= shape_[axis]) throw ShapeError("index out of range for " + to_string(shape_));
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

template <typename T>
ComplexTensor<T>::ComplexTensor(Shape shape) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(numel(shape_), std::complex<T>(0, 0));
}

template <typename T>
ComplexTensor<T>::ComplexTensor(Shape shape, std::vector<std::complex<T>> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (numel(shape_) != data_.size()) {
    throw ShapeError("complex shape " + to_string(shape_) + " does not match element count");
  }
}

template <typename T>
ComplexTensor<T> ComplexTensor<T>::from_pairs(const Tensor<T>& pairs) {
  const auto& s = pairs.shape();
  if (s.size() < 2 || s.back() != 2) {
    throw ShapeError("complex pair tensor needs a trailing axis of extent 2, got " + to_string(s));
  }
  Shape shape(s.begin(), s.end() - 1);
  std::vector<std::complex<T>> data(pairs.size() / 2);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = {pairs[2 * i], pairs[2 * i + 1]};
  return ComplexTensor(std::move(shape), std::move(data));
}

template <typename T>
Tensor<T> ComplexTensor<T>::to_pairs() const {
  Shape shape = shape_;
  shape.push_back(2);
  std::vector<T> data(2 * data_.size());
  for (std::size_t i = 0; i < data_.size(); ++i) {
    data[2 * i] = data_[i].real();
    data[2 * i + 1] = data_[i].imag();
  }
  return Tensor<T>(std::move(shape), std::move(data));
}

template <typename T>
std::size_t ComplexTensor<T>::offset(std::initializer_list<std::size_t> idx) const {
  if (idx.size() != shape_.size()) throw ShapeError("index rank does not match tensor rank");
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : idx) {
    if (i >= shape_[axis]) throw ShapeError("index out of range for " + to_string(shape_));
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
    throw ShapeError("matmul: cannot multiply " + to_string(a.shape()) + " by " + to_string(b.shape()));
  }
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Tensor<T> c({m, n});
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* pc = c.ptr();
  for (std::size_t i = 0; i < m; ++i) {
    T* row = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = pa[i * k + p];
      if (av == T(0)) continue;
      const T* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return c;
}

template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(0) != b.extent(0)) {
    throw ShapeError("matmul_tn: cannot multiply transpose of " + to_string(a.shape()) + " by " +
                     to_string(b.shape()));
  }
  const std::size_t k = a.extent(0), m = a.extent(1), n = b.extent(1);
  Tensor<T> c({m, n});
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* pc = c.ptr();
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = pa + p * m;
    const T* brow = pb + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = arow[i];
      if (av == T(0)) continue;
      T* row = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return c;
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(1)) {
    throw ShapeError("matmul_nt: cannot multiply " + to_string(a.shape()) + " by transpose of " +
                     to_string(b.shape()));
  }
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(0);
  Tensor<T> c({m, n});
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* pc = c.ptr();
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = pb + j * k;
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      pc[i * n + j] = acc;
    }
  }
  return c;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!trailing_broadcastable(a.shape(), b.shape())) {
    throw ShapeError("add: cannot broadcast " + to_string(b.shape()) + " onto " + to_string(a.shape()));
  }
  Tensor<T> out = a;
  const std::size_t n = b.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % n];
  return out;
}

template <typename T>
Tensor<T> multiply(const Tensor<T>& a, const Tensor<T>& b) {
  if (!trailing_broadcastable(a.shape(), b.shape())) {
    throw ShapeError("multiply: cannot broadcast " + to_string(b.shape()) + " onto " + to_string(a.shape()));
  }
  Tensor<T> out = a;
  const std::size_t n = b.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i % n];
  return out;
}

template <typename T>
Tensor<T> scaled(const Tensor<T>& a, T factor) {
  Tensor<T> out = a;
  for (auto& v : out.data()) v *= factor;
  return out;
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  if (dst.shape() != src.shape()) {
    throw ShapeError("accumulate: " + to_string(src.shape()) + " into " + to_string(dst.shape()));
  }
  T* d = dst.ptr();
  const T* s = src.ptr();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

#define DFF_INSTANTIATE(T)                                                 \
  template class Tensor<T>;                                                \
  template class ComplexTensor<T>;                                         \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> matmul_tn(const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> multiply(const Tensor<T>&, const Tensor<T>&);         \
  template Tensor<T> scaled(const Tensor<T>&, T);                          \
  template void accumulate(Tensor<T>&, const Tensor<T>&);                  \
  template bool all_finite(const Tensor<T>&);                              \
  template T max_abs_diff(const Tensor<T>&, const Tensor<T>&);

DFF_INSTANTIATE(float)
DFF_INSTANTIATE(double)

}  // namespace dff
