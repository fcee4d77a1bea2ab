#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace zsm {

/// Dense NCHW shape. Every tensor in the library is four-dimensional;
/// weights use (out, in, kh, kw) and biases (1, out, 1, 1).
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  [[nodiscard]] std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  [[nodiscard]] std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  [[nodiscard]] std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

/// 64-byte aligned storage. Vectorised kernels peel differently depending on
/// the start address, so alignment is fixed to keep float results bit-stable.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <typename U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) {
    return true;
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.numel(), fill) {
    if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0)
      throw std::invalid_argument("negative tensor dimension " + shape.str());
  }
  Tensor(int n, int c, int h, int w, T fill = T(0)) : Tensor(Shape{n, c, h, w}, fill) {}

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] int n() const { return shape_.n; }
  [[nodiscard]] int c() const { return shape_.c; }
  [[nodiscard]] int h() const { return shape_.h; }
  [[nodiscard]] int w() const { return shape_.w; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  [[nodiscard]] T* data() { return data_.data(); }
  [[nodiscard]] const T* data() const { return data_.data(); }
  [[nodiscard]] std::span<T> span() & { return data_; }
  [[nodiscard]] std::span<const T> span() const& { return data_; }
  std::span<const T> span() const&& = delete;  // would dangle

  [[nodiscard]] std::size_t index(int b, int ch, int y, int x) const {
    return ((static_cast<std::size_t>(b) * shape_.c + ch) * shape_.h + y) * shape_.w + x;
  }
  T& at(int b, int ch, int y, int x) { return data_[index(b, ch, y, x)]; }
  const T& at(int b, int ch, int y, int x) const { return data_[index(b, ch, y, x)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Pointer to the (b, ch) spatial plane.
  T* plane(int b, int ch) { return data_.data() + index(b, ch, 0, 0); }
  const T* plane(int b, int ch) const { return data_.data() + index(b, ch, 0, 0); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor& operator+=(const Tensor& o) {
    check_same(o, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  template <typename U>
  [[nodiscard]] Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  void check_same(const Tensor& o, const char* what) const {
    if (shape_ != o.shape_)
      throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_.str() +
                                  " vs " + o.shape_.str());
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_{};
  std::vector<T, AlignedAllocator<T>> data_;
};

inline std::string Shape::str() const {
  return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + "]";
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  a.check_same(b, "max_abs_diff");
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, static_cast<T>(std::abs(a[i] - b[i])));
  return m;
}

}  // namespace zsm
