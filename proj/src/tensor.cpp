#include "tact/tensor.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tact {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

void fail(const std::string& msg) { throw std::invalid_argument(msg); }

Tensor::Tensor(Shape shape, DType dt) : shape_(std::move(shape)), dtype_(dt) {
  check(!shape_.empty(), "tensor rank must be >= 1");
  for (int64_t e : shape_) check(e >= 1, "tensor extents must be >= 1, got " + shape_str(shape_));
  const auto n = static_cast<size_t>(shape_numel(shape_));
  if (dt == DType::F32)
    store_ = std::vector<float>(n, 0.0f);
  else
    store_ = std::vector<double>(n, 0.0);
}

Tensor Tensor::full(Shape shape, DType dt, double v) {
  Tensor t(std::move(shape), dt);
  t.fill(v);
  return t;
}

Tensor Tensor::scalar(double v, DType dt) { return full({1}, dt, v); }

Tensor Tensor::from(Shape shape, DType dt, std::span<const double> values) {
  Tensor t(std::move(shape), dt);
  check(static_cast<int64_t>(values.size()) == t.numel(),
        "value count " + std::to_string(values.size()) + " does not match shape " + shape_str(t.shape()));
  for (int64_t i = 0; i < t.numel(); ++i) t.set(i, values[i]);
  return t;
}

int64_t Tensor::dim(int i) const {
  check(i >= 0 && i < rank(), "dim index out of range");
  return shape_[static_cast<size_t>(i)];
}

int64_t Tensor::numel() const { return shape_.empty() ? 0 : shape_numel(shape_); }

double Tensor::at(int64_t i) const {
  if (dtype_ == DType::F32) return static_cast<double>(data<float>()[i]);
  return data<double>()[i];
}

void Tensor::set(int64_t i, double v) {
  if (dtype_ == DType::F32)
    data<float>()[i] = static_cast<float>(v);
  else
    data<double>()[i] = v;
}

void Tensor::fill(double v) {
  const int64_t n = numel();
  if (dtype_ == DType::F32) {
    float* p = data<float>();
    std::fill(p, p + n, static_cast<float>(v));
  } else {
    double* p = data<double>();
    std::fill(p, p + n, v);
  }
}

bool Tensor::all_finite() const {
  const int64_t n = numel();
  if (dtype_ == DType::F32) {
    const float* p = data<float>();
    for (int64_t i = 0; i < n; ++i)
      if (!std::isfinite(p[i])) return false;
  } else {
    const double* p = data<double>();
    for (int64_t i = 0; i < n; ++i)
      if (!std::isfinite(p[i])) return false;
  }
  return true;
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (int64_t i = 0; i < numel(); ++i) m = std::max(m, std::abs(at(i)));
  return m;
}

Tensor Tensor::astype(DType dt) const {
  if (dt == dtype_) return *this;
  Tensor t(shape_, dt);
  for (int64_t i = 0; i < numel(); ++i) t.set(i, at(i));
  return t;
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

namespace {

constexpr char kMagic[4] = {'T', 'A', 'C', 'T'};
constexpr uint16_t kVersion = 1;

template <class T>
void write_le(std::ostream& os, T v) {
  // Little-endian host assumed (x86/arm64); raw write.
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_le(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  check(static_cast<bool>(is), "truncated tensor stream");
  return v;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  check(t.defined(), "cannot write undefined tensor");
  os.write(kMagic, 4);
  write_le<uint16_t>(os, kVersion);
  write_le<uint8_t>(os, static_cast<uint8_t>(t.dtype()));
  write_le<uint8_t>(os, static_cast<uint8_t>(t.rank()));
  for (int64_t e : t.shape()) write_le<uint64_t>(os, static_cast<uint64_t>(e));
  if (t.dtype() == DType::F32)
    os.write(reinterpret_cast<const char*>(t.data<float>()), t.numel() * 4);
  else
    os.write(reinterpret_cast<const char*>(t.data<double>()), t.numel() * 8);
}

Tensor read_tensor(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  check(static_cast<bool>(is) && std::memcmp(magic, kMagic, 4) == 0, "bad tensor magic");
  const auto version = read_le<uint16_t>(is);
  check(version == kVersion, "unsupported tensor version " + std::to_string(version));
  const auto dtag = read_le<uint8_t>(is);
  check(dtag <= 1, "bad dtype tag");
  const auto rank = read_le<uint8_t>(is);
  check(rank >= 1 && rank <= 8, "bad tensor rank");
  Shape shape(rank);
  for (auto& e : shape) e = static_cast<int64_t>(read_le<uint64_t>(is));
  Tensor t(shape, static_cast<DType>(dtag));
  if (t.dtype() == DType::F32)
    is.read(reinterpret_cast<char*>(t.data<float>()), t.numel() * 4);
  else
    is.read(reinterpret_cast<char*>(t.data<double>()), t.numel() * 8);
  check(static_cast<bool>(is), "truncated tensor payload");
  return t;
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream f(path, std::ios::binary);
  check(f.is_open(), "cannot open " + path + " for writing");
  write_tensor(f, t);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.is_open(), "cannot open " + path);
  return read_tensor(f);
}

}  // namespace tact
