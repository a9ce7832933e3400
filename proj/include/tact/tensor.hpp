#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace tact {

enum class DType : uint8_t { F32 = 0, F64 = 1 };

// Extents, outermost first. 4-D data is (batch, channel, height, width).
using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Throws std::invalid_argument. All "rejected" contract violations go
// through here so callers get a uniform exception type.
[[noreturn]] void fail(const std::string& msg);
inline void check(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

// Dense row-major tensor. Value-semantic: copies copy the data.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, DType dt);  // zero-filled

  static Tensor zeros(Shape shape, DType dt) { return Tensor(std::move(shape), dt); }
  static Tensor full(Shape shape, DType dt, double v);
  static Tensor scalar(double v, DType dt);
  static Tensor from(Shape shape, DType dt, std::span<const double> values);

  // A default-constructed Tensor is a sentinel with no storage.
  bool defined() const { return !shape_.empty(); }

  const Shape& shape() const { return shape_; }
  DType dtype() const { return dtype_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const;
  int64_t numel() const;

  template <class T>
  T* data() {
    return std::get<std::vector<T>>(store_).data();
  }
  template <class T>
  const T* data() const {
    return std::get<std::vector<T>>(store_).data();
  }

  // dtype-erased element access; fine off the hot path.
  double at(int64_t i) const;
  void set(int64_t i, double v);
  void fill(double v);

  bool all_finite() const;
  double max_abs() const;
  Tensor astype(DType dt) const;

 private:
  Shape shape_;
  DType dtype_ = DType::F32;
  std::variant<std::vector<float>, std::vector<double>> store_;
};

bool same_shape(const Tensor& a, const Tensor& b);

// Dump format: magic "TACT", version u16, dtype tag u8, rank u8,
// extents as u64 little-endian, then raw little-endian values.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace tact
