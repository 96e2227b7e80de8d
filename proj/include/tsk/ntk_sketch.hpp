// Sketched feature map for the depth-L ReLU tangent kernel. The map composes
// one normalized input sketch with, per layer, truncated-series images of the
// covariance (kappa1) and derivative (kappa0) profiles built from tensor-power
// sketches, and finishes with a Gaussian JL compression, so that
// <features(y), features(z)> concentrates around ntk_exact(y, z).

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tsk/errors.hpp"
#include "tsk/kernels.hpp"
#include "tsk/poly_approx.hpp"
#include "tsk/rng.hpp"
#include "tsk/sketches.hpp"

namespace tsk {

// Dimension/degree plan for one feature map. from_accuracy derives every
// field from (depth, eps, delta) with all asymptotic constants set to 1;
// callers tune any field afterwards (the derived defaults are far beyond
// what desk-scale experiments need).
struct NtkSketchConfig {
  int depth = 1;
  double eps = 0.5;
  double delta = 0.1;

  std::size_t s = 1;       // psi width per layer
  std::size_t n1 = 1;      // derivative tensor-sketch width
  std::size_t r = 1;       // phi width per layer
  std::size_t m = 1;       // covariance tensor-sketch width
  std::size_t s_star = 1;  // final feature dim
  int p = 1;               // covariance series degree parameter
  int p_dot = 1;           // derivative series degree parameter
  bool degrees_capped = false;

  // Guard on any single transform's input width (the concatenated series
  // blocks can explode for tiny eps).
  std::size_t max_stage_dim = std::size_t{1} << 26;

  static NtkSketchConfig from_accuracy(int depth, double eps, double delta,
                                       int degree_cap = 2000) {
    if (depth < 1) throw ConfigError("NtkSketchConfig: depth must be >= 1");
    if (!(eps > 0.0) || !std::isfinite(eps)) {
      throw ConfigError("NtkSketchConfig: eps must be positive");
    }
    if (!(delta > 0.0) || !(delta < 1.0)) {
      throw ConfigError("NtkSketchConfig: delta must be in (0, 1)");
    }
    NtkSketchConfig cfg;
    cfg.depth = depth;
    cfg.eps = eps;
    cfg.delta = delta;
    const double l2 = static_cast<double>(depth) * depth;
    cfg.s = checked_dim(std::ceil(l2 / (eps * eps)), "s");
    cfg.n1 = checked_dim(std::ceil(l2 * l2 / std::pow(eps, 4.0)), "n1");
    cfg.r = checked_dim(std::ceil(l2 * l2 * l2 / std::pow(eps, 4.0)), "r");
    cfg.m = checked_dim(std::ceil(l2 * l2 * l2 * l2 / std::pow(eps, 16.0 / 3.0)), "m");
    cfg.s_star = checked_dim(std::ceil(std::log(1.0 / delta) / (eps * eps)), "s_star");
    const DegreeSelection deg = select_degrees(eps, depth, degree_cap);
    cfg.p = deg.p;
    cfg.p_dot = deg.p_dot;
    cfg.degrees_capped = deg.capped;
    return cfg;
  }

  void validate() const {
    if (depth < 1) throw ConfigError("NtkSketchConfig: depth must be >= 1");
    if (s == 0 || n1 == 0 || r == 0 || m == 0 || s_star == 0) {
      throw ConfigError("NtkSketchConfig: all dims must be positive");
    }
    if (p < 0 || p_dot < 0) throw ConfigError("NtkSketchConfig: negative degree");
    const std::size_t cov_width = (2 * static_cast<std::size_t>(p) + 3) * m;
    const std::size_t der_width = (2 * static_cast<std::size_t>(p_dot) + 2) * n1;
    if (cov_width > max_stage_dim || der_width > max_stage_dim ||
        s + r > max_stage_dim) {
      throw ConfigError(
          "NtkSketchConfig: stage width exceeds max_stage_dim; shrink dims or "
          "degrees (cov " +
          std::to_string(cov_width) + ", der " + std::to_string(der_width) + ")");
    }
  }

 private:
  static std::size_t checked_dim(double v, const char* name) {
    if (!(v >= 1.0) || v > 9.007199254740992e15) {  // 2^53
      throw ConfigError(std::string("NtkSketchConfig: derived dim '") + name +
                        "' is out of range; choose dims explicitly");
    }
    return static_cast<std::size_t>(v);
  }
};

// The transform stack. Built once from a seed, then reused for every input,
// so features of different inputs share all randomness and their inner
// products estimate the kernel.
class NtkSketchStack {
 public:
  NtkSketchStack(const NtkSketchConfig& cfg, std::size_t input_dim, std::uint64_t seed)
      : cfg_(validated(cfg)),
        d_(checked_input(input_dim)),
        input_sketch_(make_root(seed).child(1), 1, cfg_.r, input_dim),
        cov_power_(make_root(seed).child(2), 2 * cfg_.p + 2, cfg_.m, cfg_.r),
        der_power_(make_root(seed).child(3), 2 * cfg_.p_dot + 1, cfg_.n1, cfg_.r),
        pair_sketch_(make_root(seed).child(4), 2, cfg_.s, cfg_.s),
        cov_concat_(make_root(seed).child(5),
                    (2 * static_cast<std::size_t>(cfg_.p) + 3) * cfg_.m, cfg_.r),
        der_concat_(make_root(seed).child(6),
                    (2 * static_cast<std::size_t>(cfg_.p_dot) + 2) * cfg_.n1, cfg_.s),
        lift_(make_root(seed).child(7), cfg_.r, cfg_.s),
        fold_(make_root(seed).child(8), cfg_.s + cfg_.r, cfg_.s),
        out_(make_root(seed).child(9), cfg_.s, cfg_.s_star) {
    // Keep the series objects alive while we read their coefficients; a
    // reference into a temporary would dangle once this statement ends.
    const PolynomialApprox cov_series = PolynomialApprox::relu(cfg_.p);
    const PolynomialApprox der_series =
        PolynomialApprox::relu_derivative(cfg_.p_dot);
    sqrt_cov_.reserve(cov_series.coefficients().size());
    for (double v : cov_series.coefficients()) sqrt_cov_.push_back(std::sqrt(v));
    sqrt_der_.reserve(der_series.coefficients().size());
    for (double v : der_series.coefficients()) sqrt_der_.push_back(std::sqrt(v));
  }

  const NtkSketchConfig& config() const { return cfg_; }
  std::size_t input_dim() const { return d_; }
  std::size_t feature_dim() const { return cfg_.s_star; }

  // Sketch of the direction x/|x|; layer 0 of the pipeline, exposed for
  // diagnostics (its pairwise inner products estimate cosines).
  std::vector<double> input_sketch(const std::vector<double>& x) const {
    return input_sketch_.apply_distinct({normalized(x)});
  }

  // The feature vector: length s_star, <features(y), features(z)> estimates
  // ntk_exact(y, z, depth). Homogeneous of degree 1 in x by construction
  // (only the initial normalization and the final scale see |x|).
  std::vector<double> featurize(const std::vector<double>& x) const {
    const double nx = norm2(x);
    std::vector<double> phi = input_sketch_.apply_distinct({normalized(x, nx)});
    std::vector<double> psi = lift_.apply(phi);

    for (int layer = 1; layer <= cfg_.depth; ++layer) {
      // Covariance block: phi <- T(sum_l sqrt(c_l) Z_l), Z_l the sketch of
      // the l-th tensor power of the previous phi.
      std::vector<double> next_phi;
      {
        const std::vector<std::vector<double>> z = cov_power_.apply_power(phi);
        std::vector<double> cat(sqrt_cov_.size() * cfg_.m, 0.0);
        for (std::size_t l = 0; l < sqrt_cov_.size(); ++l) {
          if (sqrt_cov_[l] == 0.0) continue;  // zero coefficient: block stays 0
          for (std::size_t i = 0; i < cfg_.m; ++i) {
            cat[l * cfg_.m + i] = sqrt_cov_[l] * z[l][i];
          }
        }
        next_phi = cov_concat_.apply(cat);
      }

      // Derivative block: phi_dot <- W(sum_l sqrt(b_l) Y_l).
      std::vector<double> phi_dot;
      {
        const std::vector<std::vector<double>> y = der_power_.apply_power(phi);
        std::vector<double> cat(sqrt_der_.size() * cfg_.n1, 0.0);
        for (std::size_t l = 0; l < sqrt_der_.size(); ++l) {
          if (sqrt_der_[l] == 0.0) continue;
          for (std::size_t i = 0; i < cfg_.n1; ++i) {
            cat[l * cfg_.n1 + i] = sqrt_der_[l] * y[l][i];
          }
        }
        phi_dot = der_concat_.apply(cat);
      }

      // Tangent accumulator: psi <- R(Q2(psi (x) phi_dot) ++ phi).
      std::vector<double> folded = pair_sketch_.apply_distinct({psi, phi_dot});
      folded.insert(folded.end(), next_phi.begin(), next_phi.end());
      psi = fold_.apply(folded);
      phi = std::move(next_phi);
    }

    std::vector<double> out = out_.apply(psi);
    for (double& v : out) v *= nx;
    return out;
  }

 private:
  static RngStream make_root(std::uint64_t seed) { return RngStream(seed, 0x4e544b); }

  static NtkSketchConfig validated(NtkSketchConfig cfg) {
    cfg.validate();
    return cfg;
  }

  static std::size_t checked_input(std::size_t d) {
    if (d == 0) throw ConfigError("NtkSketchStack: input dim must be >= 1");
    return d;
  }

  std::vector<double> normalized(const std::vector<double>& x) const {
    return normalized(x, norm2(x));
  }

  std::vector<double> normalized(const std::vector<double>& x, double nx) const {
    if (x.size() != d_) {
      throw ShapeError("NtkSketchStack: input length " + std::to_string(x.size()) +
                       " != " + std::to_string(d_));
    }
    if (!(nx > 0.0)) {
      throw DomainError("NtkSketchStack: zero-norm input has no direction");
    }
    std::vector<double> u(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) u[i] = x[i] / nx;
    return u;
  }

  NtkSketchConfig cfg_;
  std::size_t d_;
  PolySketch input_sketch_;   // degree 1: d -> r
  PolySketch cov_power_;      // degree 2p+2 over r-dim leaves -> m
  PolySketch der_power_;      // degree 2p'+1 over r-dim leaves -> n1
  PolySketch pair_sketch_;    // degree 2 over s-dim leaves -> s
  Srht cov_concat_;           // (2p+3) m -> r
  Srht der_concat_;           // (2p'+2) n1 -> s
  Srht lift_;                 // r -> s
  Srht fold_;                 // (s + r) -> s
  GaussianJl out_;            // s -> s*
  std::vector<double> sqrt_cov_, sqrt_der_;
};

}  // namespace tsk
