#pragma once

#include <array>
#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace ocpi::nn {

// Fixed 64-byte alignment keeps vectorized kernels on the same code path
// for every allocation, so results do not vary with heap addresses.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <class U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept {
    return true;
  }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

/// NCHW extents.
struct Shape {
  int n = 0, c = 0, h = 0, w = 0;

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  std::size_t item_size() const noexcept {
    return static_cast<std::size_t>(c) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(const Shape& s, double fill = 0.0) : shape_(s), data_(s.size(), fill) {}
  Tensor(const Shape& s, std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double* item(int n) noexcept { return data_.data() + static_cast<std::size_t>(n) * shape_.item_size(); }
  const double* item(int n) const noexcept { return data_.data() + static_cast<std::size_t>(n) * shape_.item_size(); }

  double& at(int n, int c, int h, int w) noexcept { return data_[offset(n, c, h, w)]; }
  double at(int n, int c, int h, int w) const noexcept { return data_[offset(n, c, h, w)]; }
  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  void fill(double v);
  void add(const Tensor& other);  // elementwise +=, shapes must match
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t offset(int n, int c, int h, int w) const noexcept {
    return ((static_cast<std::size_t>(n) * static_cast<std::size_t>(shape_.c) + static_cast<std::size_t>(c)) *
                static_cast<std::size_t>(shape_.h) +
            static_cast<std::size_t>(h)) *
               static_cast<std::size_t>(shape_.w) +
           static_cast<std::size_t>(w);
  }

  Shape shape_;
  Buffer data_;
};

void require_shape(const Tensor& t, const Shape& s, const char* what);

}  // namespace ocpi::nn
