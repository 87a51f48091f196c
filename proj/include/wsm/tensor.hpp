#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace wsm {

// Per-thread accounting of tensor storage. Every Tensor buffer goes through
// CountingAllocator, so `peak` is the allocator high-water mark for this thread.
namespace memory {

struct Stats {
  std::size_t live = 0;
  std::size_t peak = 0;
};

Stats& stats();

// Resets the high-water mark to the current live size for the lifetime of the
// scope; peak_bytes() reports growth above the live size at construction.
class PeakScope {
 public:
  PeakScope();
  ~PeakScope();
  PeakScope(const PeakScope&) = delete;
  PeakScope& operator=(const PeakScope&) = delete;

  std::size_t peak_bytes() const;

 private:
  std::size_t baseline_;
  std::size_t outer_peak_;
};

}  // namespace memory

// Per-thread multiply-accumulate counter fed by the dense kernels.
namespace counters {
std::uint64_t& macs();
}

template <class T>
struct CountingAllocator {
  using value_type = T;

  CountingAllocator() noexcept = default;
  template <class U>
  CountingAllocator(const CountingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    T* p = std::allocator<T>{}.allocate(n);
    auto& s = memory::stats();
    s.live += n * sizeof(T);
    if (s.live > s.peak) s.peak = s.live;
    return p;
  }
  void deallocate(T* p, std::size_t n) noexcept {
    memory::stats().live -= n * sizeof(T);
    std::allocator<T>{}.deallocate(p, n);
  }

  template <class U>
  bool operator==(const CountingAllocator<U>&) const noexcept {
    return true;
  }
};

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t shape_product(const Shape& shape);

// Dense row-major double tensor. product(shape) == size() always holds.
class Tensor {
 public:
  using Storage = std::vector<double, CountingAllocator<double>>;

  Tensor() : shape_{0} {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::span<const double> values);

  static Tensor scalar(double v) { return Tensor({1}, v); }
  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  std::size_t bytes() const { return data_.size() * sizeof(double); }
  bool empty() const { return data_.empty(); }

  // 2-D accessors; rank-1 tensors are treated as a single row.
  std::size_t rows() const { return rank() == 1 ? 1 : shape_[0]; }
  std::size_t cols() const { return shape_.back(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* row(std::size_t r) { return data_.data() + r * cols(); }
  const double* row(std::size_t r) const { return data_.data() + r * cols(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  double item() const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double s);

  void fill(double v);
  bool all_finite() const;
  Tensor reshaped(Shape shape) const;

 private:
  Shape shape_;
  Storage data_;
};

// Raw kernels (no autograd). All count multiply-accumulates.
Tensor matmul(const Tensor& a, const Tensor& b);     // a[m×n] · b[n×p]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a[m×n] · b[p×n]ᵀ
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a[n×m]ᵀ · b[n×p]

double max_abs_diff(const Tensor& a, const Tensor& b);
bool bit_equal(const Tensor& a, const Tensor& b);

}  // namespace wsm
