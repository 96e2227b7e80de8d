// Dense row-major tensors and the exact tensor operations the sketching
// pipelines are built from: the unnormalized fast Walsh-Hadamard transform,
// tensor (Kronecker) products of vectors, and direct sums (concatenation).

#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "tsk/errors.hpp"

namespace tsk {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Smallest power of two >= n (n >= 1).
inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Dense tensor of doubles in row-major order. Construction validates that the
// payload matches the shape and contains no NaN/Inf; downstream numeric code
// relies on that invariant instead of re-checking.
class DenseTensor {
 public:
  DenseTensor() = default;

  explicit DenseTensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0) {}

  DenseTensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != checked_numel(shape_)) {
      throw ShapeError("DenseTensor: payload size " + std::to_string(data_.size()) +
                       " does not match shape (numel " +
                       std::to_string(checked_numel(shape_)) + ")");
    }
    for (double v : data_) {
      if (!std::isfinite(v)) throw DomainError("DenseTensor: non-finite entry");
    }
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  double operator[](std::size_t flat) const { return data_[flat]; }
  double& operator[](std::size_t flat) { return data_[flat]; }

  // Row-major flat offset of a multi-index.
  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape_.size()) {
      throw ShapeError("DenseTensor: index rank " + std::to_string(idx.size()) +
                       " does not match tensor rank " + std::to_string(shape_.size()));
    }
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (std::size_t i : idx) {
      if (i >= shape_[axis]) throw ShapeError("DenseTensor: index out of range");
      flat = flat * shape_[axis] + i;
      ++axis;
    }
    return flat;
  }

  double at(std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }
  double& at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }

 private:
  static std::size_t checked_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) {
      if (s == 0) throw ShapeError("DenseTensor: zero-length axis");
      n *= s;
    }
    return n;
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// In-place unnormalized fast Walsh-Hadamard transform of a length-2^k buffer.
// Applying it twice multiplies the input by 2^k (H*H = n*I); callers that
// need an isometry fold the 1/sqrt(n) into their own scaling.
inline void fwht(double* v, std::size_t n) {
  if (!is_pow2(n)) {
    throw ShapeError("fwht: length " + std::to_string(n) + " is not a power of two");
  }
  for (std::size_t h = 1; h < n; h <<= 1) {
    for (std::size_t i = 0; i < n; i += h << 1) {
      for (std::size_t j = i; j < i + h; ++j) {
        const double a = v[j];
        const double b = v[j + h];
        v[j] = a + b;
        v[j + h] = a - b;
      }
    }
  }
}

inline void fwht(std::vector<double>& v) { fwht(v.data(), v.size()); }

// Tensor (Kronecker) product of vectors: out[i*len(b)+j] = a[i]*b[j].
inline std::vector<double> tensor_product(const std::vector<double>& a,
                                          const std::vector<double>& b) {
  std::vector<double> out(a.size() * b.size());
  std::size_t k = 0;
  for (double ai : a) {
    for (double bj : b) out[k++] = ai * bj;
  }
  return out;
}

// Tensor product of dense tensors; the result carries the concatenated shape,
// consistent with row-major flattening of either factor.
inline DenseTensor tensor_product(const DenseTensor& a, const DenseTensor& b) {
  std::vector<std::size_t> shape = a.shape();
  shape.insert(shape.end(), b.shape().begin(), b.shape().end());
  return DenseTensor(std::move(shape), tensor_product(a.data(), b.data()));
}

// Direct sum (concatenation) of vectors.
inline std::vector<double> direct_sum(const std::vector<double>& a,
                                      const std::vector<double>& b) {
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

inline std::vector<double> direct_sum(const std::vector<std::vector<double>>& parts) {
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  std::vector<double> out;
  out.reserve(total);
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

// Euclidean norm and inner product on plain buffers; the library passes
// feature vectors around as std::vector<double>.
inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw ShapeError("dot: length mismatch " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace tsk
