// Exact kernels for infinitely wide ReLU networks: the order-0/1 arc-cosine
// profiles, the depth-L tangent-kernel recursion on normalized inner
// products, and Gram assembly over a dataset.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "tsk/errors.hpp"
#include "tsk/tensor.hpp"

namespace tsk {

namespace detail {
constexpr double kPi = 3.14159265358979323846;

inline double checked_cosine(double a, const char* who) {
  if (std::isnan(a)) throw DomainError(std::string(who) + ": NaN argument");
  // Normalized inner products drift past +-1 by a few ulps; clamp.
  return std::clamp(a, -1.0, 1.0);
}
}  // namespace detail

// Order-0 arc-cosine profile: probability that a random hyperplane puts two
// unit vectors at angle acos(a) on the same side. kappa0(1)=1, kappa0(0)=1/2,
// kappa0(-1)=0.
inline double kappa0(double a) {
  a = detail::checked_cosine(a, "kappa0");
  return (detail::kPi - std::acos(a)) / detail::kPi;
}

// Order-1 arc-cosine profile, the normalized ReLU covariance. kappa1(1)=1,
// kappa1(0)=1/pi, kappa1(-1)=0, and kappa0 = d(kappa1)/da.
inline double kappa1(double a) {
  a = detail::checked_cosine(a, "kappa1");
  return (std::sqrt(1.0 - a * a) + a * (detail::kPi - std::acos(a))) / detail::kPi;
}

// Layerwise covariance and tangent-kernel values at a normalized inner
// product: sigma[h] is the h-fold kappa1 composition, sigma_dot[h] its
// derivative factor, kernel[h] the depth-h tangent kernel on unit inputs.
struct ReluNtkTable {
  std::vector<double> sigma;      // sigma[h], h = 0..depth; sigma[0] = alpha
  std::vector<double> sigma_dot;  // sigma_dot[h], h = 1..depth; index 0 unused (0)
  std::vector<double> kernel;     // kernel[h], h = 0..depth; kernel[0] = alpha
};

// Runs the recursion sigma_h = kappa1(sigma_{h-1}),
// sigma_dot_h = kappa0(sigma_{h-1}), K_h = K_{h-1} * sigma_dot_h + sigma_h.
inline ReluNtkTable relu_ntk_function(double alpha, int depth) {
  if (depth < 0) throw ConfigError("relu_ntk_function: negative depth");
  alpha = detail::checked_cosine(alpha, "relu_ntk_function");
  ReluNtkTable t;
  t.sigma.resize(depth + 1);
  t.sigma_dot.assign(depth + 1, 0.0);
  t.kernel.resize(depth + 1);
  t.sigma[0] = alpha;
  t.kernel[0] = alpha;
  for (int h = 1; h <= depth; ++h) {
    t.sigma[h] = kappa1(t.sigma[h - 1]);
    t.sigma_dot[h] = kappa0(t.sigma[h - 1]);
    t.kernel[h] = t.kernel[h - 1] * t.sigma_dot[h] + t.sigma[h];
  }
  return t;
}

// Depth-L tangent kernel of two vectors: |y||z| * K_L(<y,z>/(|y||z|)).
// Positive-homogeneous of degree 1 in each argument.
inline double ntk_exact(const std::vector<double>& y, const std::vector<double>& z,
                        int depth) {
  if (y.size() != z.size()) {
    throw ShapeError("ntk_exact: dimension mismatch " + std::to_string(y.size()) +
                     " vs " + std::to_string(z.size()));
  }
  const double ny = norm2(y);
  const double nz = norm2(z);
  if (!(ny > 0.0) || !(nz > 0.0)) {
    throw DomainError("ntk_exact: zero-norm input has no direction");
  }
  // Identical inputs have cosine exactly 1. Recomputing it as dot/(ny*nz)
  // lands at 1 - O(ulp), and acos has unbounded slope there, so the kernel
  // would pick up an O(sqrt(eps)) error on every self-similarity.
  const double alpha = (y == z) ? 1.0 : dot(y, z) / (ny * nz);
  return ny * nz * relu_ntk_function(alpha, depth).kernel[depth];
}

// Gram matrix of the depth-L tangent kernel over the rows of X.
inline Eigen::MatrixXd ntk_gram(const Eigen::MatrixXd& X, int depth) {
  const Eigen::Index n = X.rows();
  Eigen::VectorXd norms(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    norms(i) = X.row(i).norm();
    if (!(norms(i) > 0.0)) {
      throw DomainError("ntk_gram: row " + std::to_string(i) + " has zero norm");
    }
  }
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      // Identical rows (the diagonal included) have cosine exactly 1; see
      // ntk_exact for why the recomputed ratio must not be used there.
      const bool same = i == j || X.row(i) == X.row(j);
      const double alpha = same ? 1.0 : X.row(i).dot(X.row(j)) / (norms(i) * norms(j));
      const double v =
          norms(i) * norms(j) * relu_ntk_function(alpha, depth).kernel[depth];
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  return K;
}

}  // namespace tsk
