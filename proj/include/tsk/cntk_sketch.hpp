// Sketched feature map for the convolutional ReLU tangent kernel with q x q
// filters and global average pooling. Each pixel carries its own covariance
// and derivative sketches; patch direct-sums replace the exact recursion's
// patch sums, so one image costs time linear in the pixel count while
// <features(y), features(z)> concentrates around cntk_exact(y, z). The patch
// norms N^(h) are computed exactly by the same code path as the exact kernel
// (cntk_norms), so both sides agree on normalization and zero-patch handling.

#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tsk/cntk.hpp"
#include "tsk/errors.hpp"
#include "tsk/poly_approx.hpp"
#include "tsk/rng.hpp"
#include "tsk/sketches.hpp"
#include "tsk/tensor.hpp"

namespace tsk {

// Dimension/degree plan for one convolutional feature map. from_accuracy
// derives every field from (depth, filter, eps, delta) with all asymptotic
// constants set to 1; callers tune any field afterwards (the derived defaults
// are far beyond what desk-scale experiments need).
struct CntkSketchConfig {
  int depth = 1;
  int filter = 3;  // q: filter side length, odd
  double eps = 0.5;
  double delta = 0.1;

  std::size_t s = 1;       // psi width per pixel
  std::size_t n1 = 1;      // derivative tensor-sketch width
  std::size_t r = 1;       // phi width per pixel
  std::size_t m = 1;       // covariance tensor-sketch width
  std::size_t s_star = 1;  // final feature dim
  int p = 1;               // covariance series degree parameter
  int p_dot = 1;           // derivative series degree parameter
  bool degrees_capped = false;

  // Guard on any single transform's input width (the concatenated series
  // blocks and the patch direct-sums can explode for tiny eps or large q).
  std::size_t max_stage_dim = std::size_t{1} << 26;

  static CntkSketchConfig from_accuracy(int depth, int filter, double eps,
                                        double delta, int degree_cap = 2000) {
    if (depth < 1) throw ConfigError("CntkSketchConfig: depth must be >= 1");
    if (filter < 1 || filter % 2 == 0) {
      throw ConfigError("CntkSketchConfig: filter size must be odd and positive");
    }
    if (!(eps > 0.0) || !std::isfinite(eps)) {
      throw ConfigError("CntkSketchConfig: eps must be positive");
    }
    if (!(delta > 0.0) || !(delta < 1.0)) {
      throw ConfigError("CntkSketchConfig: delta must be in (0, 1)");
    }
    CntkSketchConfig cfg;
    cfg.depth = depth;
    cfg.filter = filter;
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
    if (depth < 1) throw ConfigError("CntkSketchConfig: depth must be >= 1");
    if (filter < 1 || filter % 2 == 0) {
      throw ConfigError("CntkSketchConfig: filter size must be odd and positive, got " +
                        std::to_string(filter));
    }
    if (s == 0 || n1 == 0 || r == 0 || m == 0 || s_star == 0) {
      throw ConfigError("CntkSketchConfig: all dims must be positive");
    }
    if (p < 0 || p_dot < 0) throw ConfigError("CntkSketchConfig: negative degree");
    const std::size_t q2 = static_cast<std::size_t>(filter) * filter;
    const std::size_t cov_width = (2 * static_cast<std::size_t>(p) + 3) * m;
    const std::size_t der_width = (2 * static_cast<std::size_t>(p_dot) + 2) * n1;
    if (cov_width > max_stage_dim || der_width > max_stage_dim ||
        q2 * r > max_stage_dim || q2 * (s + r) > max_stage_dim) {
      throw ConfigError(
          "CntkSketchConfig: stage width exceeds max_stage_dim; shrink dims or "
          "degrees (cov " +
          std::to_string(cov_width) + ", der " + std::to_string(der_width) +
          ", patch " + std::to_string(q2 * (s + r)) + ")");
    }
  }

 private:
  static std::size_t checked_dim(double v, const char* name) {
    if (!(v >= 1.0) || v > 9.007199254740992e15) {  // 2^53
      throw ConfigError(std::string("CntkSketchConfig: derived dim '") + name +
                        "' is out of range; choose dims explicitly");
    }
    return static_cast<std::size_t>(v);
  }
};

// The transform stack for one image shape. Built once from a seed and shared
// across all images of that shape, so features of different images share all
// randomness and their inner products estimate the kernel. Per the recursion,
// each pixel's patch direct-sum of neighboring covariance sketches is
// normalized by the exact patch norm, pushed through truncated-series tensor
// sketches, and folded into a per-pixel tangent accumulator; global average
// pooling becomes a plain sum over pixels before the final Gaussian
// compression.
class CntkSketchStack {
 public:
  CntkSketchStack(const CntkSketchConfig& cfg, std::size_t height, std::size_t width,
                  std::size_t channels, std::uint64_t seed)
      : cfg_(validated(cfg)),
        d1_(checked_extent(height, "height")),
        d2_(checked_extent(width, "width")),
        c_(checked_extent(channels, "channels")),
        window_((cfg_.filter - 1) / 2),
        input_sketch_(make_root(seed).child(1), c_, cfg_.r),
        cov_power_(make_root(seed).child(2), 2 * cfg_.p + 2, cfg_.m, patch_dim()),
        der_power_(make_root(seed).child(3), 2 * cfg_.p_dot + 1, cfg_.n1, patch_dim()),
        pair_sketch_(make_root(seed).child(4), 2, cfg_.s, cfg_.s),
        cov_concat_(make_root(seed).child(5),
                    (2 * static_cast<std::size_t>(cfg_.p) + 3) * cfg_.m, cfg_.r),
        der_concat_(make_root(seed).child(6),
                    (2 * static_cast<std::size_t>(cfg_.p_dot) + 2) * cfg_.n1, cfg_.s),
        fold_(make_root(seed).child(7),
              static_cast<std::size_t>(cfg_.filter) * cfg_.filter * (cfg_.s + cfg_.r),
              cfg_.s),
        out_(make_root(seed).child(8), cfg_.s, cfg_.s_star) {
    // Keep the series objects alive while we read their coefficients; a
    // reference into a temporary would dangle once this statement ends.
    const PolynomialApprox cov_series = PolynomialApprox::relu(cfg_.p);
    const PolynomialApprox der_series = PolynomialApprox::relu_derivative(cfg_.p_dot);
    sqrt_cov_.reserve(cov_series.coefficients().size());
    for (double v : cov_series.coefficients()) sqrt_cov_.push_back(std::sqrt(v));
    sqrt_der_.reserve(der_series.coefficients().size());
    for (double v : der_series.coefficients()) sqrt_der_.push_back(std::sqrt(v));
  }

  const CntkSketchConfig& config() const { return cfg_; }
  std::size_t height() const { return d1_; }
  std::size_t width() const { return d2_; }
  std::size_t channels() const { return c_; }
  std::size_t feature_dim() const { return cfg_.s_star; }

  // Per-pixel covariance sketches at one layer: d1*d2 vectors of length r
  // (flattened row-major) whose pairwise inner products track the covariance
  // profile of that layer. Exposed for diagnostics and tests.
  std::vector<std::vector<double>> covariance_sketch(const DenseTensor& x,
                                                     int layer) const {
    if (layer < 0 || layer > cfg_.depth) {
      throw ConfigError("CntkSketchStack: layer " + std::to_string(layer) +
                        " outside [0, " + std::to_string(cfg_.depth) + "]");
    }
    return run_layers(x, layer).phi;
  }

  // The feature vector: length s_star, <features(y), features(z)> estimates
  // cntk_exact(y, z, depth, filter). Homogeneous of degree 1 in x (all patch
  // norms scale by |c|^2, all prefactors by |c|, normalized arguments are
  // invariant).
  std::vector<double> featurize(const DenseTensor& x) const {
    const LayerState state = run_layers(x, cfg_.depth);
    std::vector<double> pooled(cfg_.s, 0.0);
    for (const std::vector<double>& psi : state.psi) {
      for (std::size_t i = 0; i < cfg_.s; ++i) pooled[i] += psi[i];
    }
    std::vector<double> out = out_.apply(pooled);
    const double scale = 1.0 / (static_cast<double>(d1_) * static_cast<double>(d2_));
    for (double& v : out) v *= scale;
    return out;
  }

 private:
  struct LayerState {
    std::vector<std::vector<double>> phi;  // per pixel, length r
    std::vector<std::vector<double>> psi;  // per pixel, length s
  };

  static RngStream make_root(std::uint64_t seed) {
    return RngStream(seed, 0x434e544b);
  }

  static CntkSketchConfig validated(CntkSketchConfig cfg) {
    cfg.validate();
    return cfg;
  }

  static std::size_t checked_extent(std::size_t v, const char* name) {
    if (v == 0) {
      throw ConfigError(std::string("CntkSketchStack: ") + name + " must be >= 1");
    }
    return v;
  }

  std::size_t patch_dim() const {
    return static_cast<std::size_t>(cfg_.filter) * cfg_.filter * cfg_.r;
  }

  void check_image(const DenseTensor& x) const {
    if (x.rank() != 3 || x.shape()[0] != d1_ || x.shape()[1] != d2_ ||
        x.shape()[2] != c_) {
      throw ShapeError("CntkSketchStack: image shape does not match the stack (" +
                       std::to_string(d1_) + "x" + std::to_string(d2_) + "x" +
                       std::to_string(c_) + ")");
    }
    for (double v : x.data()) {
      if (v != 0.0) return;
    }
    throw DomainError("CntkSketchStack: image must not be identically zero");
  }

  // Patch direct-sum of the previous layer's per-pixel sketches around pixel
  // (i, j), scaled by the inverse square root of the exact patch norm.
  // Out-of-grid neighbors contribute zero blocks (zero padding); a zero patch
  // norm means every in-window sketch is zero, so the whole vector is zero.
  std::vector<double> patch_mu(const std::vector<std::vector<double>>& phi,
                               Eigen::Index i, Eigen::Index j, double norm) const {
    std::vector<double> mu(patch_dim(), 0.0);
    if (norm <= 0.0) return mu;
    const double inv_root = 1.0 / std::sqrt(norm);
    std::size_t block = 0;
    for (int a = -window_; a <= window_; ++a) {
      for (int b = -window_; b <= window_; ++b, ++block) {
        const Eigen::Index ii = i + a, jj = j + b;
        if (ii < 0 || ii >= static_cast<Eigen::Index>(d1_) || jj < 0 ||
            jj >= static_cast<Eigen::Index>(d2_)) {
          continue;
        }
        const std::vector<double>& src = phi[ii * d2_ + jj];
        double* dst = mu.data() + block * cfg_.r;
        for (std::size_t l = 0; l < cfg_.r; ++l) dst[l] = inv_root * src[l];
      }
    }
    return mu;
  }

  // Weighted concatenation of tensor-power blocks followed by an SRHT: the
  // shared shape of both series stages.
  std::vector<double> series_stage(const std::vector<std::vector<double>>& blocks,
                                   const std::vector<double>& weights,
                                   std::size_t block_dim, const Srht& mix) const {
    std::vector<double> cat(weights.size() * block_dim, 0.0);
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l] == 0.0) continue;  // zero coefficient: block stays 0
      for (std::size_t i = 0; i < block_dim; ++i) {
        cat[l * block_dim + i] = weights[l] * blocks[l][i];
      }
    }
    return mix.apply(cat);
  }

  // The per-pixel recursion through `upto` layers. Layer h consumes the
  // previous layer's phi grid (and psi grid when h reaches the top).
  LayerState run_layers(const DenseTensor& x, int upto) const {
    check_image(x);
    const std::vector<Eigen::MatrixXd> norms = cntk_norms(x, cfg_.depth, cfg_.filter);
    const std::size_t n = d1_ * d2_;

    LayerState state;
    state.phi.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
      std::vector<double> channel(c_);
      for (std::size_t l = 0; l < c_; ++l) channel[l] = x.data()[t * c_ + l];
      state.phi.push_back(input_sketch_.apply(channel));
    }
    state.psi.assign(n, std::vector<double>(cfg_.s, 0.0));

    for (int h = 1; h <= upto; ++h) {
      std::vector<std::vector<double>> next_phi(n);
      std::vector<std::vector<double>> eta(n);
      const bool top = h == cfg_.depth;

      for (std::size_t t = 0; t < n; ++t) {
        const Eigen::Index i = static_cast<Eigen::Index>(t / d2_);
        const Eigen::Index j = static_cast<Eigen::Index>(t % d2_);
        const double norm = norms[h](i, j);
        const std::vector<double> mu = patch_mu(state.phi, i, j, norm);

        // Covariance sketch: phi <- (sqrt(N)/q) T(sum_l sqrt(c_l) Z_l). A
        // zero patch norm zeroes the prefactor, so skip the tensor work.
        if (norm > 0.0) {
          next_phi[t] = series_stage(cov_power_.apply_power(mu), sqrt_cov_, cfg_.m,
                                     cov_concat_);
          const double prefactor = std::sqrt(norm) / cfg_.filter;
          for (double& v : next_phi[t]) v *= prefactor;
        } else {
          next_phi[t].assign(cfg_.r, 0.0);
        }

        // Derivative sketch: phi_dot <- (1/q) W(sum_l sqrt(b_l) Y_l). For a
        // zero patch, mu = 0 leaves only the constant block Y_0, matching the
        // exact recursion's choice of kappa0(0)/q^2 there.
        std::vector<double> phi_dot = series_stage(der_power_.apply_power(mu),
                                                   sqrt_der_, cfg_.n1, der_concat_);
        for (double& v : phi_dot) v /= cfg_.filter;

        // Tangent accumulator: the top layer keeps Q2(psi (x) phi_dot)
        // per pixel; interior layers append phi and fold over the patch.
        std::vector<double> paired = pair_sketch_.apply_distinct({state.psi[t], phi_dot});
        if (top) {
          eta[t] = std::move(paired);
        } else {
          paired.insert(paired.end(), next_phi[t].begin(), next_phi[t].end());
          eta[t] = std::move(paired);
        }
      }

      if (top) {
        state.psi = std::move(eta);
      } else {
        const std::size_t eta_dim = cfg_.s + cfg_.r;
        std::vector<std::vector<double>> next_psi(n);
        for (std::size_t t = 0; t < n; ++t) {
          const Eigen::Index i = static_cast<Eigen::Index>(t / d2_);
          const Eigen::Index j = static_cast<Eigen::Index>(t % d2_);
          std::vector<double> cat(
              static_cast<std::size_t>(cfg_.filter) * cfg_.filter * eta_dim, 0.0);
          std::size_t block = 0;
          for (int a = -window_; a <= window_; ++a) {
            for (int b = -window_; b <= window_; ++b, ++block) {
              const Eigen::Index ii = i + a, jj = j + b;
              if (ii < 0 || ii >= static_cast<Eigen::Index>(d1_) || jj < 0 ||
                  jj >= static_cast<Eigen::Index>(d2_)) {
                continue;
              }
              const std::vector<double>& src = eta[ii * d2_ + jj];
              double* dst = cat.data() + block * eta_dim;
              for (std::size_t l = 0; l < eta_dim; ++l) dst[l] = src[l];
            }
          }
          next_psi[t] = fold_.apply(cat);
        }
        state.psi = std::move(next_psi);
      }
      state.phi = std::move(next_phi);
    }
    return state;
  }

  CntkSketchConfig cfg_;
  std::size_t d1_;
  std::size_t d2_;
  std::size_t c_;
  int window_;
  Srht input_sketch_;
  PolySketch cov_power_;
  PolySketch der_power_;
  PolySketch pair_sketch_;
  Srht cov_concat_;
  Srht der_concat_;
  Srht fold_;
  GaussianJl out_;
  std::vector<double> sqrt_cov_;
  std::vector<double> sqrt_der_;
};

// One row of the runtime probe: an image shape and its median featurize time.
struct RuntimeProbeRow {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t pixels = 0;
  double seconds = 0.0;
};

// Wall-clock scaling probe: featurize each image with a stack built for its
// shape (the stack is shape-bound, so one is constructed per distinct shape)
// and report the median of three timed runs. Used to check that the cost
// grows linearly in the pixel count.
inline std::vector<RuntimeProbeRow> cntksketch_runtime_probe(
    const CntkSketchConfig& cfg, const std::vector<DenseTensor>& images,
    std::uint64_t seed) {
  if (images.size() < 3) {
    throw ConfigError("cntksketch_runtime_probe: need at least 3 image sizes");
  }
  std::vector<RuntimeProbeRow> rows;
  rows.reserve(images.size());
  for (const DenseTensor& image : images) {
    detail::check_image(image, "cntksketch_runtime_probe");
    const CntkSketchStack stack(cfg, image.shape()[0], image.shape()[1],
                                image.shape()[2], seed);
    stack.featurize(image);  // warm-up: touch transforms and scratch once
    double times[3];
    for (double& t : times) {
      const auto start = std::chrono::steady_clock::now();
      const std::vector<double> features = stack.featurize(image);
      const auto stop = std::chrono::steady_clock::now();
      t = std::chrono::duration<double>(stop - start).count();
      if (features.size() != stack.feature_dim()) {
        throw NumericError("cntksketch_runtime_probe: malformed feature vector");
      }
    }
    if (times[0] > times[1]) std::swap(times[0], times[1]);
    if (times[1] > times[2]) std::swap(times[1], times[2]);
    if (times[0] > times[1]) std::swap(times[0], times[1]);
    RuntimeProbeRow row;
    row.height = image.shape()[0];
    row.width = image.shape()[1];
    row.pixels = row.height * row.width;
    row.seconds = times[1];
    rows.push_back(row);
  }
  return rows;
}

}  // namespace tsk
