// Exact convolutional tangent kernel for infinitely wide ReLU networks with
// q x q filters, stride 1, zero padding, and global average pooling at the
// output. Images are rank-3 dense tensors (height, width, channels); the
// cross-pixel covariances live on (d1*d2) x (d1*d2) matrices indexed by the
// flattened pixel t = i*d2 + j, so memory is O((d1*d2)^2) and this path is
// meant for small images and for validating the sketched featurizer.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "tsk/errors.hpp"
#include "tsk/kernels.hpp"
#include "tsk/tensor.hpp"

namespace tsk {

namespace detail {

inline void check_cntk_config(int depth, int filter) {
  if (depth < 1) throw ConfigError("cntk: depth must be >= 1");
  if (filter < 1 || filter % 2 == 0) {
    throw ConfigError("cntk: filter size must be odd and positive, got " +
                      std::to_string(filter));
  }
}

inline void check_image(const DenseTensor& x, const char* who) {
  if (x.rank() != 3) {
    throw ShapeError(std::string(who) + ": image must be rank-3 (h, w, c), got rank " +
                     std::to_string(x.rank()));
  }
}

// Sum of M over the q x q window centered at each pixel, zero outside the
// grid. M and the result are d1 x d2.
inline Eigen::MatrixXd box_sum(const Eigen::MatrixXd& m, int w) {
  const Eigen::Index d1 = m.rows(), d2 = m.cols();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d1, d2);
  for (Eigen::Index i = 0; i < d1; ++i) {
    for (Eigen::Index j = 0; j < d2; ++j) {
      double s = 0.0;
      for (int a = -w; a <= w; ++a) {
        for (int b = -w; b <= w; ++b) {
          const Eigen::Index ii = i + a, jj = j + b;
          if (ii >= 0 && ii < d1 && jj >= 0 && jj < d2) s += m(ii, jj);
        }
      }
      out(i, j) = s;
    }
  }
  return out;
}

// Pairwise patch sum: out(t, t') = sum over window offsets (a, b) of
// M(t shifted by (a,b), t' shifted by (a,b)); terms where either shifted
// pixel leaves the grid contribute zero (padding activations are zero, so
// their covariances vanish).
inline Eigen::MatrixXd pair_patch_sum(const Eigen::MatrixXd& m, Eigen::Index d1,
                                      Eigen::Index d2, int w) {
  const Eigen::Index n = d1 * d2;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const Eigen::Index i = t / d2, j = t % d2;
    for (Eigen::Index u = 0; u < n; ++u) {
      const Eigen::Index ip = u / d2, jp = u % d2;
      double s = 0.0;
      for (int a = -w; a <= w; ++a) {
        const Eigen::Index ia = i + a, ipa = ip + a;
        if (ia < 0 || ia >= d1 || ipa < 0 || ipa >= d1) continue;
        for (int b = -w; b <= w; ++b) {
          const Eigen::Index jb = j + b, jpb = jp + b;
          if (jb < 0 || jb >= d2 || jpb < 0 || jpb >= d2) continue;
          s += m(ia * d2 + jb, ipa * d2 + jpb);
        }
      }
      out(t, u) = s;
    }
  }
  return out;
}

}  // namespace detail

// Per-layer patch norms N^(h) of one image, h = 0..depth, each d1 x d2:
// N^(0)(i,j) = q^2 * sum_c x(i,j,c)^2, and each subsequent layer averages the
// previous one over the q x q window, N^(h) = box_sum(N^(h-1)) / q^2.
inline std::vector<Eigen::MatrixXd> cntk_norms(const DenseTensor& x, int depth,
                                               int filter) {
  detail::check_cntk_config(depth, filter);
  detail::check_image(x, "cntk_norms");
  const Eigen::Index d1 = x.shape()[0], d2 = x.shape()[1], c = x.shape()[2];
  const int w = (filter - 1) / 2;
  const double q2 = static_cast<double>(filter) * filter;
  std::vector<Eigen::MatrixXd> norms;
  norms.reserve(depth + 1);
  Eigen::MatrixXd n0(d1, d2);
  for (Eigen::Index i = 0; i < d1; ++i) {
    for (Eigen::Index j = 0; j < d2; ++j) {
      double s = 0.0;
      for (Eigen::Index l = 0; l < c; ++l) {
        const double v = x.data()[(i * d2 + j) * c + l];
        s += v * v;
      }
      n0(i, j) = q2 * s;
    }
  }
  norms.push_back(std::move(n0));
  for (int h = 1; h <= depth; ++h) {
    norms.push_back(detail::box_sum(norms.back(), w) / q2);
  }
  return norms;
}

// All intermediate quantities of the exact recursion for one image pair:
// patch norms of both images, cross covariances gamma, their derivative
// factors gamma_dot, the tangent accumulators pi, and the pooled kernel
// value. Exposed for tests and diagnostics; cntk_exact is the lean path.
struct CntkState {
  std::vector<Eigen::MatrixXd> norms_y;    // h = 0..depth, d1 x d2
  std::vector<Eigen::MatrixXd> norms_z;    // h = 0..depth, d1 x d2
  std::vector<Eigen::MatrixXd> gamma;      // h = 0..depth, (d1 d2) x (d1 d2)
  std::vector<Eigen::MatrixXd> gamma_dot;  // h = 1..depth; [0] is empty
  std::vector<Eigen::MatrixXd> pi;         // h = 0..depth
  double theta = 0.0;
};

inline CntkState cntk_state(const DenseTensor& y, const DenseTensor& z, int depth,
                            int filter) {
  detail::check_cntk_config(depth, filter);
  detail::check_image(y, "cntk_state");
  detail::check_image(z, "cntk_state");
  if (y.shape() != z.shape()) throw ShapeError("cntk_state: image shapes differ");

  const Eigen::Index d1 = y.shape()[0], d2 = y.shape()[1], c = y.shape()[2];
  const Eigen::Index n = d1 * d2;
  const int w = (filter - 1) / 2;
  const double q2 = static_cast<double>(filter) * filter;

  // For a self pair the diagonal's normalized argument is identically 1
  // (the patch sum of the diagonal covariances IS the patch norm). Pinning
  // it avoids the O(sqrt(eps)) loss of acos near 1; see ntk_exact.
  const bool self = y.data() == z.data();

  CntkState st;
  st.norms_y = cntk_norms(y, depth, filter);
  st.norms_z = cntk_norms(z, depth, filter);

  // Layer 0 covariance: raw channel inner products per pixel pair.
  Eigen::MatrixXd g0(n, n);
  for (Eigen::Index t = 0; t < n; ++t) {
    for (Eigen::Index u = 0; u < n; ++u) {
      double s = 0.0;
      for (Eigen::Index l = 0; l < c; ++l) {
        s += y.data()[t * c + l] * z.data()[u * c + l];
      }
      g0(t, u) = s;
    }
  }
  st.gamma.push_back(std::move(g0));
  st.gamma_dot.emplace_back();  // no derivative factor at layer 0
  st.pi.push_back(Eigen::MatrixXd::Zero(n, n));

  for (int h = 1; h <= depth; ++h) {
    const Eigen::MatrixXd patch = detail::pair_patch_sum(st.gamma[h - 1], d1, d2, w);
    Eigen::MatrixXd g(n, n), gd(n, n);
    for (Eigen::Index t = 0; t < n; ++t) {
      const Eigen::Index i = t / d2, j = t % d2;
      for (Eigen::Index u = 0; u < n; ++u) {
        const Eigen::Index ip = u / d2, jp = u % d2;
        const double prod = st.norms_y[h](i, j) * st.norms_z[h](ip, jp);
        if (prod > 0.0) {
          const double denom = std::sqrt(prod);
          const double arg = (self && t == u) ? 1.0 : patch(t, u) / denom;
          g(t, u) = denom / q2 * kappa1(arg);
          gd(t, u) = kappa0(arg) / q2;
        } else {
          // A zero patch norm means the centered pixel sees only zeros: the
          // covariance vanishes with its prefactor, and the derivative factor
          // takes the normalized argument to be 0.
          g(t, u) = 0.0;
          gd(t, u) = kappa0(0.0) / q2;
        }
      }
    }
    st.gamma.push_back(std::move(g));
    st.gamma_dot.push_back(std::move(gd));
    if (h < depth) {
      const Eigen::MatrixXd acc =
          st.pi[h - 1].cwiseProduct(st.gamma_dot[h]) + st.gamma[h];
      st.pi.push_back(detail::pair_patch_sum(acc, d1, d2, w));
    } else {
      st.pi.push_back(st.pi[h - 1].cwiseProduct(st.gamma_dot[h]));
    }
  }

  const double scale = static_cast<double>(d1) * d1 * d2 * d2;
  st.theta = st.pi[depth].sum() / scale;
  return st;
}

// Pooled convolutional tangent kernel value for one image pair. Same
// recursion as cntk_state but holds only a two-layer rolling window of the
// (d1 d2)^2 matrices, so the footprint stays at a handful of covariance
// matrices regardless of depth.
inline double cntk_exact(const DenseTensor& y, const DenseTensor& z, int depth,
                         int filter) {
  detail::check_cntk_config(depth, filter);
  detail::check_image(y, "cntk_exact");
  detail::check_image(z, "cntk_exact");
  if (y.shape() != z.shape()) throw ShapeError("cntk_exact: image shapes differ");

  const Eigen::Index d1 = y.shape()[0], d2 = y.shape()[1], c = y.shape()[2];
  const Eigen::Index n = d1 * d2;
  const int w = (filter - 1) / 2;
  const double q2 = static_cast<double>(filter) * filter;

  // Diagonal of a self pair gets its cosine pinned to 1; see cntk_state.
  const bool self = y.data() == z.data();

  const std::vector<Eigen::MatrixXd> norms_y = cntk_norms(y, depth, filter);
  const std::vector<Eigen::MatrixXd> norms_z = cntk_norms(z, depth, filter);

  Eigen::MatrixXd gamma(n, n);
  for (Eigen::Index t = 0; t < n; ++t) {
    for (Eigen::Index u = 0; u < n; ++u) {
      double s = 0.0;
      for (Eigen::Index l = 0; l < c; ++l) {
        s += y.data()[t * c + l] * z.data()[u * c + l];
      }
      gamma(t, u) = s;
    }
  }
  Eigen::MatrixXd pi = Eigen::MatrixXd::Zero(n, n);

  for (int h = 1; h <= depth; ++h) {
    Eigen::MatrixXd g(n, n), gd(n, n);
    {
      const Eigen::MatrixXd patch = detail::pair_patch_sum(gamma, d1, d2, w);
      for (Eigen::Index t = 0; t < n; ++t) {
        const Eigen::Index i = t / d2, j = t % d2;
        for (Eigen::Index u = 0; u < n; ++u) {
          const Eigen::Index ip = u / d2, jp = u % d2;
          const double prod = norms_y[h](i, j) * norms_z[h](ip, jp);
          if (prod > 0.0) {
            const double denom = std::sqrt(prod);
            const double arg = (self && t == u) ? 1.0 : patch(t, u) / denom;
            g(t, u) = denom / q2 * kappa1(arg);
            gd(t, u) = kappa0(arg) / q2;
          } else {
            g(t, u) = 0.0;
            gd(t, u) = kappa0(0.0) / q2;
          }
        }
      }
    }
    if (h < depth) {
      gd = pi.cwiseProduct(gd) + g;  // reuse gd as the accumulator
      pi = detail::pair_patch_sum(gd, d1, d2, w);
    } else {
      pi = pi.cwiseProduct(gd);
    }
    gamma = std::move(g);
  }

  const double scale = static_cast<double>(d1) * d1 * d2 * d2;
  return pi.sum() / scale;
}

// Gram matrix over a set of equally shaped images.
inline Eigen::MatrixXd cntk_gram(const std::vector<DenseTensor>& images, int depth,
                                 int filter) {
  const std::size_t n = images.size();
  Eigen::MatrixXd K(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = cntk_exact(images[i], images[j], depth, filter);
      K(i, j) = v;
      K(j, i) = v;
    }
  }
  return K;
}

}  // namespace tsk
