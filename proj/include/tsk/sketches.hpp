// Oblivious dimension-reduction transforms: subsampled randomized Hadamard
// transform (SRHT), its implicit tensor-product variant, a sparse one-nonzero-
// per-column leaf embedding, the recursive binary-tree sketch for tensor
// powers, and a dense Gaussian JL map. All transforms are immutable after
// construction, draw every random choice from the owning RngStream (so equal
// streams give bit-identical behavior), and are unbiased inner-product
// estimators: E<Sx, Sy> = <x, y> on their respective input spaces.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "tsk/errors.hpp"
#include "tsk/rng.hpp"
#include "tsk/tensor.hpp"

namespace tsk {

namespace detail {

// Copies x into a zero-padded power-of-two buffer, flips signs, and runs the
// in-place Walsh-Hadamard butterfly. Shared by Srht and TensorSrht.
inline std::vector<double> signed_hadamard(const std::vector<double>& x,
                                           std::size_t input_dim,
                                           const std::vector<double>& signs,
                                           const char* who) {
  if (x.size() > input_dim) {
    throw ShapeError(std::string(who) + ": input length " + std::to_string(x.size()) +
                     " exceeds configured dim " + std::to_string(input_dim));
  }
  std::vector<double> buf(signs.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) buf[i] = signs[i] * x[i];
  fwht(buf.data(), buf.size());
  return buf;
}

// m row indices out of [0, dpad): a partial Fisher-Yates draw without
// replacement while m <= dpad (at m == dpad the transform is a scaled
// orthogonal map, hence an exact isometry), i.i.d. with replacement beyond.
inline std::vector<std::size_t> sample_rows(RngStream& rng, std::size_t dpad,
                                            std::size_t m) {
  std::vector<std::size_t> rows(m);
  if (m <= dpad) {
    std::vector<std::size_t> pool(dpad);
    for (std::size_t i = 0; i < dpad; ++i) pool[i] = i;
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.index(dpad - i));
      std::swap(pool[i], pool[j]);
      rows[i] = pool[i];
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      rows[i] = static_cast<std::size_t>(rng.index(dpad));
    }
  }
  return rows;
}

inline std::vector<double> rademacher(RngStream& rng, std::size_t n) {
  std::vector<double> s(n);
  for (double& v : s) v = rng.sign();
  return s;
}

}  // namespace detail

// Subsampled randomized Hadamard transform R^d -> R^m:
// Sx = (1/sqrt(m)) * (rows of H * diag(signs) * pad(x)). Inputs shorter than
// d are zero-padded, so one instance serves a family of dims up to d.
class Srht {
 public:
  Srht(RngStream rng, std::size_t input_dim, std::size_t output_dim)
      : d_(input_dim), m_(output_dim) {
    if (d_ == 0 || m_ == 0) throw ConfigError("Srht: zero dimension");
    const std::size_t dpad = next_pow2(d_);
    signs_ = detail::rademacher(rng, dpad);
    rows_ = detail::sample_rows(rng, dpad, m_);
    scale_ = 1.0 / std::sqrt(static_cast<double>(m_));
  }

  std::size_t input_dim() const { return d_; }
  std::size_t output_dim() const { return m_; }

  std::vector<double> apply(const std::vector<double>& x) const {
    const std::vector<double> h = detail::signed_hadamard(x, d_, signs_, "Srht");
    std::vector<double> out(m_);
    for (std::size_t r = 0; r < m_; ++r) out[r] = scale_ * h[rows_[r]];
    return out;
  }

 private:
  std::size_t d_, m_;
  std::vector<double> signs_;
  std::vector<std::size_t> rows_;
  double scale_;
};

// Sketch of a tensor product without materializing it, R^{da} x R^{db} -> R^m:
// entry r = (1/sqrt(m)) * (H D1 a)[i_r] * (H D2 b)[j_r] for index pairs
// (i_r, j_r) drawn i.i.d. uniform with replacement. Bilinear in (a, b) and
// unbiased: E<T(a,b), T(c,d)> = <a,c><b,d>.
class TensorSrht {
 public:
  TensorSrht(RngStream rng, std::size_t dim_a, std::size_t dim_b,
             std::size_t output_dim)
      : da_(dim_a), db_(dim_b), m_(output_dim) {
    if (da_ == 0 || db_ == 0 || m_ == 0) throw ConfigError("TensorSrht: zero dimension");
    const std::size_t pa = next_pow2(da_), pb = next_pow2(db_);
    signs_a_ = detail::rademacher(rng, pa);
    signs_b_ = detail::rademacher(rng, pb);
    rows_a_.resize(m_);
    rows_b_.resize(m_);
    for (std::size_t r = 0; r < m_; ++r) {
      rows_a_[r] = static_cast<std::size_t>(rng.index(pa));
      rows_b_[r] = static_cast<std::size_t>(rng.index(pb));
    }
    scale_ = 1.0 / std::sqrt(static_cast<double>(m_));
  }

  std::size_t dim_a() const { return da_; }
  std::size_t dim_b() const { return db_; }
  std::size_t output_dim() const { return m_; }

  std::vector<double> apply(const std::vector<double>& a,
                            const std::vector<double>& b) const {
    const std::vector<double> ha = detail::signed_hadamard(a, da_, signs_a_, "TensorSrht");
    const std::vector<double> hb = detail::signed_hadamard(b, db_, signs_b_, "TensorSrht");
    std::vector<double> out(m_);
    for (std::size_t r = 0; r < m_; ++r) {
      out[r] = scale_ * ha[rows_a_[r]] * hb[rows_b_[r]];
    }
    return out;
  }

 private:
  std::size_t da_, db_, m_;
  std::vector<double> signs_a_, signs_b_;
  std::vector<std::size_t> rows_a_, rows_b_;
  double scale_;
};

// Sparse embedding with one signed nonzero per input column: out[h_j] += s_j
// x_j. Unbiased with unit scale; apply costs O(nnz(x)). Stands in for the
// usual sparse leaf when inputs are sparse or the Hadamard pass is overkill.
class CountSketchLeaf {
 public:
  CountSketchLeaf(RngStream rng, std::size_t input_dim, std::size_t output_dim)
      : d_(input_dim), m_(output_dim) {
    if (d_ == 0 || m_ == 0) throw ConfigError("CountSketchLeaf: zero dimension");
    buckets_.resize(d_);
    signs_.resize(d_);
    for (std::size_t j = 0; j < d_; ++j) {
      buckets_[j] = static_cast<std::size_t>(rng.index(m_));
      signs_[j] = rng.sign();
    }
  }

  std::size_t input_dim() const { return d_; }
  std::size_t output_dim() const { return m_; }

  std::vector<double> apply(const std::vector<double>& x) const {
    if (x.size() > d_) {
      throw ShapeError("CountSketchLeaf: input length " + std::to_string(x.size()) +
                       " exceeds configured dim " + std::to_string(d_));
    }
    std::vector<double> out(m_, 0.0);
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (x[j] != 0.0) out[buckets_[j]] += signs_[j] * x[j];
    }
    return out;
  }

 private:
  std::size_t d_, m_;
  std::vector<std::size_t> buckets_;
  std::vector<double> signs_;
};

enum class LeafKind {
  kSrht,    // dense inputs: O(m + d log d) per apply
  kSparse,  // sparse inputs: O(nnz) per apply
};

// Recursive sketch for degree-p tensor powers and products. The transform is
// a perfect binary tree over P = next_pow2(p) leaves; each leaf embeds one
// tensor factor into R^m, each internal node fuses its children with an
// independent TensorSrht R^m x R^m -> R^m. Degrees below the leaf count are
// padded with e1 factors, which leave inner products unchanged.
class PolySketch {
 public:
  PolySketch(RngStream rng, int degree, std::size_t output_dim, std::size_t leaf_dim,
             LeafKind leaf_kind = LeafKind::kSrht)
      : PolySketch(std::move(rng), degree, output_dim,
                   std::vector<std::size_t>(leaf_count(degree), leaf_dim), leaf_kind) {}

  // Per-leaf input dims, for sketching products of vectors from different
  // spaces. Must list either one dim per tensor factor or one per leaf.
  PolySketch(RngStream rng, int degree, std::size_t output_dim,
             std::vector<std::size_t> leaf_dims, LeafKind leaf_kind = LeafKind::kSrht)
      : degree_(degree), m_(output_dim) {
    if (degree_ < 1) throw ConfigError("PolySketch: degree must be >= 1");
    if (m_ == 0) throw ConfigError("PolySketch: zero output dim");
    const std::size_t p = leaf_count(degree_);
    if (leaf_dims.size() == static_cast<std::size_t>(degree_)) {
      // Padding slots always hold e1; give them the last factor's space.
      leaf_dims.resize(p, leaf_dims.back());
    }
    if (leaf_dims.size() != p) {
      throw ConfigError("PolySketch: expected " + std::to_string(degree_) + " or " +
                        std::to_string(p) + " leaf dims, got " +
                        std::to_string(leaf_dims.size()));
    }

    uniform_leaf_dim_ = leaf_dims[0];
    for (std::size_t i = 0; i < p; ++i) {
      if (leaf_dims[i] == 0) throw ConfigError("PolySketch: zero leaf dim");
      if (leaf_dims[i] != uniform_leaf_dim_) uniform_leaf_dim_ = 0;  // mixed
      RngStream leaf_rng = rng.child(0x1000 + i);
      if (leaf_kind == LeafKind::kSrht) {
        leaves_.emplace_back(std::in_place_type<Srht>, std::move(leaf_rng),
                             leaf_dims[i], m_);
      } else {
        leaves_.emplace_back(std::in_place_type<CountSketchLeaf>, std::move(leaf_rng),
                             leaf_dims[i], m_);
      }
    }
    internal_.reserve(p - 1);
    for (std::size_t k = 1; k < p; ++k) {
      internal_.emplace_back(rng.child(0x2000 + k), m_, m_, m_);
    }

    // Cache the all-e1 value of every subtree: e1 leaves are constant, so the
    // padded slots and the tensor-power fast path reuse them for free.
    e1_val_.resize(2 * p);
    for (std::size_t k = 2 * p; k-- > 1;) {
      if (k >= p) {
        std::vector<double> e1(leaf_dims[k - p], 0.0);
        e1[0] = 1.0;
        e1_val_[k] = leaf_apply(k - p, e1);
      } else {
        e1_val_[k] = internal_[k - 1].apply(e1_val_[2 * k], e1_val_[2 * k + 1]);
      }
    }
  }

  int degree() const { return degree_; }
  std::size_t output_dim() const { return m_; }

  // Sketches of x^{(x) l} (x) e1^{(x) (p-l)} for l = 0..p, all from one pass:
  // every leaf sketches x once, then leaves flip to e1 one at a time and only
  // the root path is recombined.
  std::vector<std::vector<double>> apply_power(const std::vector<double>& x) const {
    if (uniform_leaf_dim_ == 0) {
      throw ConfigError("PolySketch: apply_power needs uniform leaf dims");
    }
    const std::size_t p = leaves_.size();
    std::vector<std::vector<double>> val(2 * p);
    for (std::size_t i = 0; i < p; ++i) {
      val[p + i] = (i < static_cast<std::size_t>(degree_)) ? leaf_apply(i, x)
                                                           : e1_val_[p + i];
    }
    for (std::size_t k = p; k-- > 1;) {
      val[k] = internal_[k - 1].apply(val[2 * k], val[2 * k + 1]);
    }

    std::vector<std::vector<double>> out(degree_ + 1);
    out[degree_] = val[1];
    for (int l = degree_ - 1; l >= 0; --l) {
      std::size_t k = p + static_cast<std::size_t>(l);  // leaf holding factor l+1
      val[k] = e1_val_[k];
      for (k /= 2; k >= 1; k /= 2) {
        val[k] = internal_[k - 1].apply(val[2 * k], val[2 * k + 1]);
      }
      out[l] = val[1];
    }
    return out;
  }

  // Sketch of v[0] (x) v[1] (x) ... (x) v[p-1].
  std::vector<double> apply_distinct(const std::vector<std::vector<double>>& v) const {
    if (v.size() != static_cast<std::size_t>(degree_)) {
      throw ArityError("PolySketch: expected " + std::to_string(degree_) +
                       " factors, got " + std::to_string(v.size()));
    }
    const std::size_t p = leaves_.size();
    std::vector<std::vector<double>> val(2 * p);
    for (std::size_t i = 0; i < p; ++i) {
      val[p + i] = (i < v.size()) ? leaf_apply(i, v[i]) : e1_val_[p + i];
    }
    for (std::size_t k = p; k-- > 1;) {
      val[k] = internal_[k - 1].apply(val[2 * k], val[2 * k + 1]);
    }
    return val[1];
  }

 private:
  static std::size_t leaf_count(int degree) {
    return degree < 1 ? 1 : next_pow2(static_cast<std::size_t>(degree));
  }

  std::vector<double> leaf_apply(std::size_t i, const std::vector<double>& x) const {
    return std::visit([&x](const auto& leaf) { return leaf.apply(x); }, leaves_[i]);
  }

  int degree_;
  std::size_t m_;
  std::size_t uniform_leaf_dim_;  // 0 when leaves have mixed input dims
  std::vector<std::variant<Srht, CountSketchLeaf>> leaves_;
  std::vector<TensorSrht> internal_;  // heap order: internal_[k-1] is node k
  std::vector<std::vector<double>> e1_val_;
};

// Dense JL map R^s -> R^{s*} with i.i.d. Normal(0, 1/s*) entries, or an exact
// identity when constructed through identity() (test hook for isolating the
// stages that feed it).
class GaussianJl {
 public:
  GaussianJl(RngStream rng, std::size_t input_dim, std::size_t output_dim)
      : g_(output_dim, input_dim) {
    if (input_dim == 0 || output_dim == 0) throw ConfigError("GaussianJl: zero dimension");
    const double root = 1.0 / std::sqrt(static_cast<double>(output_dim));
    for (std::size_t i = 0; i < output_dim; ++i) {
      for (std::size_t j = 0; j < input_dim; ++j) {
        g_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            root * rng.normal();
      }
    }
  }

  static GaussianJl identity(std::size_t dim) { return GaussianJl(dim); }

  bool is_identity() const { return identity_; }
  std::size_t input_dim() const { return identity_ ? dim_ : static_cast<std::size_t>(g_.cols()); }
  std::size_t output_dim() const { return identity_ ? dim_ : static_cast<std::size_t>(g_.rows()); }

  std::vector<double> apply(const std::vector<double>& x) const {
    if (identity_) {
      if (x.size() != dim_) {
        throw ShapeError("GaussianJl: identity expects length " + std::to_string(dim_));
      }
      return x;
    }
    if (x.size() != static_cast<std::size_t>(g_.cols())) {
      throw ShapeError("GaussianJl: input length " + std::to_string(x.size()) +
                       " != " + std::to_string(g_.cols()));
    }
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(),
                                               static_cast<Eigen::Index>(x.size()));
    const Eigen::VectorXd y = g_ * xv;
    return std::vector<double>(y.data(), y.data() + y.size());
  }

 private:
  explicit GaussianJl(std::size_t dim) : identity_(true), dim_(dim) {
    if (dim == 0) throw ConfigError("GaussianJl: zero dimension");
  }

  bool identity_ = false;
  std::size_t dim_ = 0;
  Eigen::MatrixXd g_;
};

}  // namespace tsk
