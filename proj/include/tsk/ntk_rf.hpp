// Arc-cosine random features for the ReLU tangent kernel: Gaussian step and
// ReLU feature layers, a norm-reweighted variant whose directions come from
// an inverse-CDF Gibbs sampler (the variance-reduced form used for spectral
// ridge guarantees), the composed depth-L feature recursion, and audit
// helpers (statistical dimension, whitened-spectrum range).

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tsk/errors.hpp"
#include "tsk/rng.hpp"
#include "tsk/sketches.hpp"
#include "tsk/tensor.hpp"

namespace tsk {

enum class RandomFeatureMode { kPlain, kLeverageModified };

// Feature-count plan for one random-feature stack. from_accuracy derives the
// counts from (depth, eps, delta) with all asymptotic constants set to 1;
// callers tune any field afterwards.
struct RandomFeatureConfig {
  int depth = 1;
  double eps = 0.5;
  double delta = 0.1;

  std::size_t m0 = 1;  // step-feature count per layer
  std::size_t m1 = 1;  // ReLU-feature count per layer
  std::size_t ms = 1;  // sketched tensor-block width
  RandomFeatureMode mode = RandomFeatureMode::kPlain;
  int gibbs_sweeps = 1;

  static RandomFeatureConfig from_accuracy(int depth, double eps, double delta) {
    if (depth < 1) throw ConfigError("RandomFeatureConfig: depth must be >= 1");
    if (!(eps > 0.0) || !std::isfinite(eps)) {
      throw ConfigError("RandomFeatureConfig: eps must be positive");
    }
    if (!(delta > 0.0) || !(delta < 1.0)) {
      throw ConfigError("RandomFeatureConfig: delta must be in (0, 1)");
    }
    RandomFeatureConfig cfg;
    cfg.depth = depth;
    cfg.eps = eps;
    cfg.delta = delta;
    const double l = static_cast<double>(depth);
    const double log_ld = std::log(l / delta);
    const double log_led = std::log(l / (eps * delta));
    cfg.m0 = checked_count(std::ceil(l * l / (eps * eps) * log_ld), "m0");
    cfg.m1 = checked_count(
        std::ceil(l * l * l * l * l * l / std::pow(eps, 4.0) * log_ld), "m1");
    cfg.ms = checked_count(
        std::ceil(l * l / (eps * eps) * log_led * log_led * log_led), "ms");
    return cfg;
  }

  void validate() const {
    if (depth < 1) throw ConfigError("RandomFeatureConfig: depth must be >= 1");
    if (m0 == 0 || m1 == 0 || ms == 0) {
      throw ConfigError("RandomFeatureConfig: feature counts must be positive");
    }
    if (gibbs_sweeps < 1) {
      throw ConfigError("RandomFeatureConfig: gibbs_sweeps must be >= 1");
    }
  }

 private:
  static std::size_t checked_count(double v, const char* name) {
    if (!(v >= 1.0) || v > 9.007199254740992e15) {  // 2^53
      throw ConfigError(std::string("RandomFeatureConfig: derived count '") +
                        name + "' is out of range; choose counts explicitly");
    }
    return static_cast<std::size_t>(v);
  }
};

// ============================================================================
// Norm-reweighted direction sampling
// ============================================================================

// CDF of one coordinate of w conditioned on the others under the
// norm-reweighted density q(w) ~ |w|^2 exp(-|w|^2/2): with z the squared norm
// of the remaining coordinates,
//   F(x | z) = Phi(x) - x phi(x) / (z + 1),
// where Phi/phi are the standard normal CDF/density. (The conditional density
// is phi(x) (z + x^2) / (z + 1); integrating t^2 phi(t) by parts gives the
// closed form.)
inline double gibbs_conditional_cdf(double x, double z) {
  if (!(z >= 0.0) || !std::isfinite(z)) {
    throw DomainError("gibbs_conditional_cdf: z must be finite and >= 0");
  }
  const double normal_cdf = 0.5 * (std::erf(x / 1.4142135623730951) + 1.0);
  const double normal_pdf =
      std::exp(-0.5 * x * x) / 2.5066282746310005024157652848110;  // sqrt(2 pi)
  return normal_cdf - x * normal_pdf / (z + 1.0);
}

// Inverse of gibbs_conditional_cdf in x by bisection on [-12, 12] to 1e-10.
// F is strictly increasing (dF/dx = phi(x)(z + x^2)/(z + 1) >= 0), so
// bisection cannot stall; u outside the bracket's CDF range (|x| beyond 12
// carries ~1e-32 of mass) is reported rather than extrapolated.
inline double gibbs_inverse_cdf(double u, double z) {
  if (!(u >= 0.0 && u <= 1.0)) {
    throw DomainError("gibbs_inverse_cdf: u must lie in [0, 1]");
  }
  double lo = -12.0;
  double hi = 12.0;
  const double flo = gibbs_conditional_cdf(lo, z);
  const double fhi = gibbs_conditional_cdf(hi, z);
  if (u < flo || u > fhi) {
    throw NumericError("gibbs_inverse_cdf: u=" + std::to_string(u) +
                       " outside the invertible range at z=" + std::to_string(z));
  }
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    if (gibbs_conditional_cdf(mid, z) < u) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// One approximate draw from q(w) ~ |w|^2 exp(-|w|^2/2): Gaussian start, then
// `sweeps` passes of coordinate-wise inverse-CDF resampling in index order.
// Returned unnormalized (the caller decides whether it wants the direction,
// the norm, or both).
inline std::vector<double> gibbs_sample_direction(std::size_t dim, int sweeps,
                                                  RngStream& rng) {
  if (dim == 0) throw ConfigError("gibbs_sample_direction: dim must be >= 1");
  if (sweeps < 1) throw ConfigError("gibbs_sample_direction: sweeps must be >= 1");
  std::vector<double> w(dim);
  double norm_sq = 0.0;
  for (double& v : w) {
    v = rng.normal();
    norm_sq += v * v;
  }
  for (int t = 0; t < sweeps; ++t) {
    for (std::size_t j = 0; j < dim; ++j) {
      const double rest = norm_sq - w[j] * w[j];
      const double fresh = gibbs_inverse_cdf(rng.uniform_pos(), rest);
      norm_sq = rest + fresh * fresh;
      w[j] = fresh;
    }
  }
  return w;
}

// ============================================================================
// Per-layer feature maps
// ============================================================================

// One layer's random weights: W0 (m0 x dim) behind the step features, W1
// (m1 x dim) behind the ReLU features. Plain mode draws both i.i.d. standard
// normal; leverage mode replaces the W1 rows with unit directions from the
// Gibbs chain and compensates the scale (sqrt(2/m1) -> sqrt(2 dim/m1)), which
// keeps <phi1(y), phi1(z)> unbiased for |y||z| kappa1(cos) while taming the
// heavy tails that plain ReLU features have on worst-case directions.
class LayerWeights {
 public:
  LayerWeights(RngStream rng, std::size_t dim, std::size_t m0, std::size_t m1,
               RandomFeatureMode mode, int gibbs_sweeps = 1)
      : dim_(dim),
        w0_(static_cast<Eigen::Index>(m0), static_cast<Eigen::Index>(dim)),
        w1_(static_cast<Eigen::Index>(m1), static_cast<Eigen::Index>(dim)),
        scale0_(std::sqrt(2.0 / static_cast<double>(m0))),
        scale1_(mode == RandomFeatureMode::kPlain
                    ? std::sqrt(2.0 / static_cast<double>(m1))
                    : std::sqrt(2.0 * static_cast<double>(dim) /
                                static_cast<double>(m1))) {
    if (dim == 0) throw ConfigError("LayerWeights: dim must be >= 1");
    if (m0 == 0 || m1 == 0) throw ConfigError("LayerWeights: feature counts must be >= 1");
    RngStream step_rng = rng.child(1);
    for (Eigen::Index i = 0; i < w0_.rows(); ++i) {
      for (Eigen::Index j = 0; j < w0_.cols(); ++j) w0_(i, j) = step_rng.normal();
    }
    RngStream relu_rng = rng.child(2);
    if (mode == RandomFeatureMode::kPlain) {
      for (Eigen::Index i = 0; i < w1_.rows(); ++i) {
        for (Eigen::Index j = 0; j < w1_.cols(); ++j) w1_(i, j) = relu_rng.normal();
      }
    } else {
      for (Eigen::Index i = 0; i < w1_.rows(); ++i) {
        const std::vector<double> w = gibbs_sample_direction(dim, gibbs_sweeps, relu_rng);
        const double n = norm2(w);
        for (Eigen::Index j = 0; j < w1_.cols(); ++j) {
          w1_(i, j) = w[static_cast<std::size_t>(j)] / n;
        }
      }
    }
  }

  std::size_t input_dim() const { return dim_; }
  std::size_t step_count() const { return static_cast<std::size_t>(w0_.rows()); }
  std::size_t relu_count() const { return static_cast<std::size_t>(w1_.rows()); }

  // sqrt(2/m0) * Step(W0 x);  Step(t) = 1 for t > 0, else 0 (ties at exactly
  // zero go to 0; a fixed convention keeps runs reproducible).
  std::vector<double> phi0(const std::vector<double>& x) const {
    const Eigen::VectorXd v = w0_ * checked(x, "phi0");
    std::vector<double> out(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      out[static_cast<std::size_t>(i)] = v(i) > 0.0 ? scale0_ : 0.0;
    }
    return out;
  }

  // scale * ReLU(W1 x); the scale and the law of W1 depend on the mode.
  std::vector<double> phi1(const std::vector<double>& x) const {
    const Eigen::VectorXd v = w1_ * checked(x, "phi1");
    std::vector<double> out(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      out[static_cast<std::size_t>(i)] = v(i) > 0.0 ? scale1_ * v(i) : 0.0;
    }
    return out;
  }

 private:
  Eigen::Map<const Eigen::VectorXd> checked(const std::vector<double>& x,
                                            const char* who) const {
    if (x.size() != dim_) {
      throw ShapeError(std::string("LayerWeights::") + who + ": input length " +
                       std::to_string(x.size()) + " != " + std::to_string(dim_));
    }
    return Eigen::Map<const Eigen::VectorXd>(x.data(),
                                             static_cast<Eigen::Index>(x.size()));
  }

  std::size_t dim_;
  Eigen::MatrixXd w0_;
  Eigen::MatrixXd w1_;
  double scale0_;
  double scale1_;
};

// ============================================================================
// Depth-L composed features
// ============================================================================

// The random-feature analog of the tangent-kernel recursion. Layer by layer,
// step features estimate the derivative profile and ReLU features the
// covariance profile; a degree-2 tensor-product sketch folds the running
// tangent block with the derivative features so the feature length stays
// m1 + ms instead of growing by a factor m0 per layer:
//   psi^(0) = phi^(0) = x/|x|
//   phi^(l) = Phi1(phi^(l-1)),  phidot^(l) = Phi0(phi^(l-1))
//   psi^(l) = phi^(l) (+) Q2(phidot^(l) (x) psi^(l-1))
//   features = |x| psi^(L).
class NtkRfStack {
 public:
  NtkRfStack(RandomFeatureConfig cfg, std::size_t input_dim, std::uint64_t seed)
      : cfg_(validated(cfg)), d_(checked_input(input_dim)) {
    layers_.reserve(static_cast<std::size_t>(cfg_.depth));
    pair_.reserve(static_cast<std::size_t>(cfg_.depth));
    for (int layer = 1; layer <= cfg_.depth; ++layer) {
      const std::size_t phi_dim = layer == 1 ? d_ : cfg_.m1;
      const std::size_t psi_dim = layer == 1 ? d_ : cfg_.m1 + cfg_.ms;
      layers_.emplace_back(make_root(seed).child(0x100 + layer), phi_dim, cfg_.m0,
                           cfg_.m1, cfg_.mode, cfg_.gibbs_sweeps);
      pair_.emplace_back(make_root(seed).child(0x200 + layer), 2, cfg_.ms,
                         std::vector<std::size_t>{cfg_.m0, psi_dim});
    }
  }

  const RandomFeatureConfig& config() const { return cfg_; }
  std::size_t input_dim() const { return d_; }
  std::size_t feature_dim() const { return cfg_.m1 + cfg_.ms; }

  // The feature vector: length m1+ms, <features(y), features(z)> estimates
  // ntk_exact(y, z, depth). Homogeneous of degree 1 in x.
  std::vector<double> featurize(const std::vector<double>& x) const {
    if (x.size() != d_) {
      throw ShapeError("NtkRfStack: input length " + std::to_string(x.size()) +
                       " != " + std::to_string(d_));
    }
    const double nx = norm2(x);
    if (!(nx > 0.0) || !std::isfinite(nx)) {
      throw DomainError("NtkRfStack: input must be nonzero and finite");
    }
    std::vector<double> phi(x);
    for (double& v : phi) v /= nx;
    std::vector<double> psi = phi;

    for (int layer = 1; layer <= cfg_.depth; ++layer) {
      const LayerWeights& w = layers_[static_cast<std::size_t>(layer - 1)];
      const std::vector<double> phi_dot = w.phi0(phi);
      std::vector<double> next_phi = w.phi1(phi);
      const std::vector<double> folded =
          pair_[static_cast<std::size_t>(layer - 1)].apply_distinct({phi_dot, psi});
      psi = next_phi;
      psi.insert(psi.end(), folded.begin(), folded.end());
      phi = std::move(next_phi);
    }

    for (double& v : psi) v *= nx;
    return psi;
  }

 private:
  static RngStream make_root(std::uint64_t seed) { return RngStream(seed, 0x5246); }

  static RandomFeatureConfig validated(RandomFeatureConfig cfg) {
    cfg.validate();
    return cfg;
  }

  static std::size_t checked_input(std::size_t d) {
    if (d == 0) throw ConfigError("NtkRfStack: input dim must be >= 1");
    return d;
  }

  RandomFeatureConfig cfg_;
  std::size_t d_;
  std::vector<LayerWeights> layers_;
  std::vector<PolySketch> pair_;
};

// ============================================================================
// Ridge-regression audits
// ============================================================================

// tr(K (K + lambda I)^{-1}) = sum_i lambda_i / (lambda_i + lambda) via a
// symmetric eigensolve. Eigenvalues that dip below zero by roundoff are
// treated as zero (the input is only required to be PSD up to tolerance).
inline double statistical_dimension(const Eigen::MatrixXd& K, double lambda) {
  if (K.rows() != K.cols()) {
    throw ShapeError("statistical_dimension: matrix must be square");
  }
  const double scale = 1.0 + K.cwiseAbs().maxCoeff();
  if ((K - K.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    throw ShapeError("statistical_dimension: matrix must be symmetric");
  }
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw DomainError("statistical_dimension: lambda must be positive");
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
    const double ev = std::max(0.0, eig.eigenvalues()(i));
    sum += ev / (ev + lambda);
  }
  return sum;
}

struct SpectralRange {
  double min_eig = 0.0;
  double max_eig = 0.0;
  double width() const { return max_eig - min_eig; }
};

// Eigenvalue range of (K + lambda I)^{-1/2} (Phi^T Phi + lambda I)
// (K + lambda I)^{-1/2} for a feature matrix Phi whose columns are data
// points. Range within [1-eps, 1+eps] certifies that ridge regression on the
// features is spectrally within eps of the exact kernel solve.
inline SpectralRange spectral_audit(const Eigen::MatrixXd& phi,
                                    const Eigen::MatrixXd& K, double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw DomainError("spectral_audit: lambda must be positive");
  }
  if (K.rows() != K.cols()) throw ShapeError("spectral_audit: kernel must be square");
  const double scale = 1.0 + K.cwiseAbs().maxCoeff();
  if ((K - K.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    throw ShapeError("spectral_audit: kernel must be symmetric");
  }
  if (phi.cols() != K.rows()) {
    throw ShapeError("spectral_audit: feature columns " + std::to_string(phi.cols()) +
                     " != kernel size " + std::to_string(K.rows()));
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> keig(K);
  Eigen::VectorXd inv_root = keig.eigenvalues();
  for (Eigen::Index i = 0; i < inv_root.size(); ++i) {
    inv_root(i) = 1.0 / std::sqrt(std::max(0.0, inv_root(i)) + lambda);
  }
  const Eigen::MatrixXd whitener =
      keig.eigenvectors() * inv_root.asDiagonal() * keig.eigenvectors().transpose();
  Eigen::MatrixXd gram = phi.transpose() * phi;
  gram.diagonal().array() += lambda;
  Eigen::MatrixXd whitened = whitener * gram * whitener;
  whitened = 0.5 * (whitened + whitened.transpose());  // scrub roundoff asymmetry
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> weig(whitened);
  SpectralRange range;
  range.min_eig = weig.eigenvalues().minCoeff();
  range.max_eig = weig.eigenvalues().maxCoeff();
  return range;
}

// Advisory feature counts for the depth-1 spectral guarantee, constants 1:
// how many step features, reweighted ReLU features, and sketch rows the
// theory asks for at a given (n, d, lambda, statistical dimension, eps,
// delta). Desk-scale runs usually use far less; these are printed as guides.
inline std::size_t spectral_m0_bound(std::size_t n, double lambda, double s_lambda,
                                     double eps, double delta) {
  if (n == 0) throw ConfigError("spectral_m0_bound: n must be >= 1");
  if (!(lambda > 0.0) || !(eps > 0.0) || !(delta > 0.0) || !(s_lambda > 0.0)) {
    throw DomainError("spectral_m0_bound: lambda, s_lambda, eps, delta must be positive");
  }
  const double v =
      static_cast<double>(n) / (eps * eps * lambda) * std::log(s_lambda / delta);
  return v >= 1.0 ? static_cast<std::size_t>(std::ceil(v)) : 1;
}

inline std::size_t spectral_m1_bound(std::size_t d, std::size_t rank,
                                     double x_norm_sq, double lambda,
                                     double s_lambda, double eps, double delta) {
  if (d == 0 || rank == 0) throw ConfigError("spectral_m1_bound: d, rank must be >= 1");
  if (!(lambda > 0.0) || !(eps > 0.0) || !(delta > 0.0) || !(s_lambda > 0.0) ||
      !(x_norm_sq > 0.0)) {
    throw DomainError(
        "spectral_m1_bound: lambda, s_lambda, eps, delta, x_norm_sq must be positive");
  }
  const double r = static_cast<double>(rank);
  const double v = static_cast<double>(d) / (eps * eps) *
                   std::min(r * r, x_norm_sq / lambda) * std::log(s_lambda / delta);
  return v >= 1.0 ? static_cast<std::size_t>(std::ceil(v)) : 1;
}

inline std::size_t spectral_ms_bound(std::size_t n, double lambda, double eps,
                                     double delta) {
  if (n == 0) throw ConfigError("spectral_ms_bound: n must be >= 1");
  if (!(lambda > 0.0) || !(eps > 0.0) || !(delta > 0.0)) {
    throw DomainError("spectral_ms_bound: lambda, eps, delta must be positive");
  }
  const double lg = std::log(static_cast<double>(n) / (eps * delta));
  const double v = static_cast<double>(n) / ((1.0 + lambda) * eps * eps) * lg * lg * lg;
  return v >= 1.0 ? static_cast<std::size_t>(std::ceil(v)) : 1;
}

}  // namespace tsk
