#include "wsm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "wsm/errors.hpp"

namespace wsm {

namespace memory {

Stats& stats() {
  thread_local Stats s;
  return s;
}

PeakScope::PeakScope() : baseline_(stats().live), outer_peak_(stats().peak) {
  stats().peak = stats().live;
}

PeakScope::~PeakScope() { stats().peak = std::max(outer_peak_, stats().peak); }

std::size_t PeakScope::peak_bytes() const {
  const std::size_t peak = stats().peak;
  return peak > baseline_ ? peak - baseline_ : 0;
}

}  // namespace memory

namespace counters {
std::uint64_t& macs() {
  thread_local std::uint64_t n = 0;
  return n;
}
}  // namespace counters

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

std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  if (shape_.empty()) throw DimensionError("tensor shape must have at least one dimension");
  data_.assign(shape_product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::span<const double> values) : shape_(std::move(shape)) {
  if (shape_.empty()) throw DimensionError("tensor shape must have at least one dimension");
  if (shape_product(shape_) != values.size()) {
    throw DimensionError("shape " + to_string(shape_) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  data_.assign(values.begin(), values.end());
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::span<const double>(values.begin(), values.size()));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  Tensor t({r, c});
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    for (double v : row) t.data_[i++] = v;
  }
  return t;
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + to_string(shape_));
  return data_[0];
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.size() != size()) {
    throw DimensionError("cannot add " + to_string(other.shape_) + " into " + to_string(shape_));
  }
  double* dst = data_.data();
  const double* src = other.data_.data();
  for (std::size_t i = 0, n = size(); i < n; ++i) dst[i] += src[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_product(shape) != size()) {
    throw DimensionError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

namespace {

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(what) + " expects a matrix, got " + to_string(t.shape()));
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), n = a.dim(1), p = b.dim(1);
  if (b.dim(0) != n) {
    throw DimensionError("matmul inner dimensions differ: " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
  }
  Tensor c({m, p});
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = a.row(i);
    double* cr = c.row(i);
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = ar[k];
      const double* br = b.row(k);
      for (std::size_t j = 0; j < p; ++j) cr[j] += aik * br[j];
    }
  }
  counters::macs() += static_cast<std::uint64_t>(m) * n * p;
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.dim(0), n = a.dim(1), p = b.dim(0);
  if (b.dim(1) != n) {
    throw DimensionError("matmul_nt inner dimensions differ: " + to_string(a.shape()) + " x " +
                         to_string(b.shape()) + "^T");
  }
  Tensor c({m, p});
  for (std::size_t i = 0; i < m; ++i) {
    const double* ar = a.row(i);
    double* cr = c.row(i);
    for (std::size_t j = 0; j < p; ++j) {
      const double* br = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += ar[k] * br[k];
      cr[j] = acc;
    }
  }
  counters::macs() += static_cast<std::uint64_t>(m) * n * p;
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  const std::size_t n = a.dim(0), m = a.dim(1), p = b.dim(1);
  if (b.dim(0) != n) {
    throw DimensionError("matmul_tn inner dimensions differ: " + to_string(a.shape()) + "^T x " +
                         to_string(b.shape()));
  }
  Tensor c({m, p});
  for (std::size_t k = 0; k < n; ++k) {
    const double* ar = a.row(k);
    const double* br = b.row(k);
    for (std::size_t i = 0; i < m; ++i) {
      const double aki = ar[i];
      double* cr = c.row(i);
      for (std::size_t j = 0; j < p; ++j) cr[j] += aki * br[j];
    }
  }
  counters::macs() += static_cast<std::uint64_t>(m) * n * p;
  return c;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff on " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.bytes()) == 0;
}

}  // namespace wsm
