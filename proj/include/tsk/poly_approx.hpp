// Truncated power-series approximants of the order-0 and order-1 arc-cosine
// kernel profiles. The ReLU profile kappa1 and its derivative kappa0 have
// Taylor expansions with nonnegative coefficients:
//
//   P(a)    = 1/pi + a/2 + sum_i (2i)! / (pi 4^i (i!)^2 (2i+1)(2i+2)) a^(2i+2)
//   Pdot(a) = 1/2        + sum_i (2i)! / (pi 4^i (i!)^2 (2i+1))       a^(2i+1)
//
// truncated at i <= p and i <= p_dot respectively. Nonnegativity is what lets
// the sketching pipelines split each polynomial into a direct sum of
// sqrt-weighted tensor-power blocks. Coefficients are computed through
// log-gamma so large degrees stay finite.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tsk/errors.hpp"

namespace tsk {

// Truncated series with nonnegative monomial coefficients; coefficients()[j]
// multiplies alpha^j.
class PolynomialApprox {
 public:
  enum class Kind {
    kRelu,             // approximates kappa1
    kReluDerivative,   // approximates kappa0
  };

  // P^(p): 2p+3 coefficients, even powers past the linear term.
  static PolynomialApprox relu(int p) {
    check_degree(p);
    std::vector<double> c(2 * static_cast<std::size_t>(p) + 3, 0.0);
    c[0] = 1.0 / kPi;
    c[1] = 0.5;
    for (int i = 0; i <= p; ++i) {
      c[2 * static_cast<std::size_t>(i) + 2] =
          std::exp(series_log_term(i) - std::log(2.0 * i + 2.0)) / kPi;
    }
    return PolynomialApprox(Kind::kRelu, p, std::move(c));
  }

  // Pdot^(p_dot): 2*p_dot+2 coefficients, odd powers past the constant term.
  static PolynomialApprox relu_derivative(int p_dot) {
    check_degree(p_dot);
    std::vector<double> c(2 * static_cast<std::size_t>(p_dot) + 2, 0.0);
    c[0] = 0.5;
    for (int i = 0; i <= p_dot; ++i) {
      c[2 * static_cast<std::size_t>(i) + 1] = std::exp(series_log_term(i)) / kPi;
    }
    return PolynomialApprox(Kind::kReluDerivative, p_dot, std::move(c));
  }

  Kind kind() const { return kind_; }
  int degree_parameter() const { return degree_parameter_; }
  const std::vector<double>& coefficients() const { return coeff_; }

  // Horner evaluation.
  double operator()(double alpha) const {
    double acc = 0.0;
    for (std::size_t j = coeff_.size(); j-- > 0;) acc = acc * alpha + coeff_[j];
    return acc;
  }

 private:
  PolynomialApprox(Kind kind, int degree_parameter, std::vector<double> coeff)
      : kind_(kind), degree_parameter_(degree_parameter), coeff_(std::move(coeff)) {}

  static void check_degree(int p) {
    if (p < 0) throw ConfigError("PolynomialApprox: negative degree parameter");
  }

  // log[(2i)! / (4^i (i!)^2 (2i+1))], the shared part of both series.
  static double series_log_term(int i) {
    return std::lgamma(2.0 * i + 1.0) - 2.0 * i * std::log(2.0) -
           2.0 * std::lgamma(i + 1.0) - std::log(2.0 * i + 1.0);
  }

  static constexpr double kPi = 3.14159265358979323846;

  Kind kind_;
  int degree_parameter_;
  std::vector<double> coeff_;
};

// Degree parameters for a target accuracy, with the pipeline-level depth
// amplification folded in. `capped` reports that a formula exceeded the cap
// and was clamped; callers surface that as a warning.
struct DegreeSelection {
  int p;
  int p_dot;
  bool capped;
};

// Degrees that drive the layered sketches: p = ceil(2 L^2 / eps^(4/3)),
// p_dot = ceil(9 L^2 / eps^2).
inline DegreeSelection select_degrees(double eps, int depth, int cap = 2000) {
  if (!(eps > 0.0) || !std::isfinite(eps)) {
    throw ConfigError("select_degrees: eps must be positive, got " + std::to_string(eps));
  }
  if (depth < 1) throw ConfigError("select_degrees: depth must be >= 1");
  if (cap < 1) throw ConfigError("select_degrees: cap must be >= 1");
  const double l2 = static_cast<double>(depth) * static_cast<double>(depth);
  const double p_raw = std::ceil(2.0 * l2 / std::pow(eps, 4.0 / 3.0));
  const double pd_raw = std::ceil(9.0 * l2 / (eps * eps));
  DegreeSelection out;
  out.capped = p_raw > cap || pd_raw > cap;
  out.p = static_cast<int>(std::min<double>(p_raw, cap));
  out.p_dot = static_cast<int>(std::min<double>(pd_raw, cap));
  return out;
}

// Degree making sup |P - kappa1| <= eps on [-1, 1]: ceil(1 / (9 eps^(2/3))).
inline int degree_for_relu_error(double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) {
    throw ConfigError("degree_for_relu_error: eps must be positive");
  }
  return static_cast<int>(std::ceil(1.0 / (9.0 * std::pow(eps, 2.0 / 3.0))));
}

// Degree making sup |Pdot - kappa0| <= eps on [-1, 1]: ceil(1 / (26 eps^2)).
inline int degree_for_derivative_error(double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) {
    throw ConfigError("degree_for_derivative_error: eps must be positive");
  }
  return static_cast<int>(std::ceil(1.0 / (26.0 * eps * eps)));
}

}  // namespace tsk
