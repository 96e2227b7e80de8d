#pragma once
// Regression harness: SPD ridge solves with a residual audit, exact-kernel
// and feature-map regression paths, disk-backed feature caching, and the
// benchmark runner that turns a JSON config into a JSON report.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "tsk/cntk.hpp"
#include "tsk/cntk_sketch.hpp"
#include "tsk/dataset.hpp"
#include "tsk/errors.hpp"
#include "tsk/kernels.hpp"
#include "tsk/ntk_rf.hpp"
#include "tsk/ntk_sketch.hpp"
#include "tsk/tensor.hpp"

namespace tsk {

using BenchJson = nlohmann::ordered_json;

// ============================================================================
// Metrics
// ============================================================================

// Squared error summed over output columns, averaged over rows.
inline double mean_squared_error(const Eigen::MatrixXd& pred,
                                 const Eigen::MatrixXd& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw ShapeError("mean_squared_error: prediction shape " +
                     std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) +
                     " != truth shape " + std::to_string(truth.rows()) + "x" +
                     std::to_string(truth.cols()));
  }
  if (pred.rows() == 0) throw DomainError("mean_squared_error: no rows");
  return (pred - truth).squaredNorm() / static_cast<double>(pred.rows());
}

// Fraction of rows whose predicted argmax matches the one-hot argmax.
inline double argmax_accuracy(const Eigen::MatrixXd& pred,
                              const Eigen::MatrixXd& onehot) {
  if (pred.rows() != onehot.rows() || pred.cols() != onehot.cols()) {
    throw ShapeError("argmax_accuracy: shape mismatch");
  }
  if (pred.rows() == 0) throw DomainError("argmax_accuracy: no rows");
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    Eigen::Index a = 0, b = 0;
    pred.row(i).maxCoeff(&a);
    onehot.row(i).maxCoeff(&b);
    hits += a == b;
  }
  return static_cast<double>(hits) / static_cast<double>(pred.rows());
}

// ============================================================================
// Hashing (cache keys and report fingerprints)
// ============================================================================

class Fnv64 {
 public:
  void update(const void* bytes, std::size_t count) {
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < count; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view s) { update(s.data(), s.size()); }
  void update(double v) { update(&v, sizeof v); }
  void update(std::uint64_t v) { update(&v, sizeof v); }
  std::uint64_t digest() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a64(std::string_view s) {
  Fnv64 h;
  h.update(s);
  return h.digest();
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf, 16);
}

inline std::uint64_t dataset_fingerprint(const Dataset& ds) {
  Fnv64 h;
  h.update(ds.kind == DatasetKind::kVectors ? "vectors" : "images");
  if (ds.kind == DatasetKind::kVectors) {
    h.update(static_cast<std::uint64_t>(ds.x.rows()));
    h.update(static_cast<std::uint64_t>(ds.x.cols()));
    for (Eigen::Index j = 0; j < ds.x.cols(); ++j) {
      for (Eigen::Index i = 0; i < ds.x.rows(); ++i) h.update(ds.x(i, j));
    }
  } else {
    h.update(static_cast<std::uint64_t>(ds.images.size()));
    for (const DenseTensor& img : ds.images) {
      for (std::size_t dim : img.shape()) h.update(static_cast<std::uint64_t>(dim));
      for (double v : img.data()) h.update(v);
    }
  }
  h.update(static_cast<std::uint64_t>(ds.targets.cols()));
  for (Eigen::Index j = 0; j < ds.targets.cols(); ++j) {
    for (Eigen::Index i = 0; i < ds.targets.rows(); ++i) h.update(ds.targets(i, j));
  }
  for (std::size_t i : ds.train) h.update(static_cast<std::uint64_t>(i));
  h.update(std::uint64_t{0xffffffffffffffffULL});  // train/test separator
  for (std::size_t i : ds.test) h.update(static_cast<std::uint64_t>(i));
  return h.digest();
}

// ============================================================================
// Ridge solves
// ============================================================================

namespace detail {

inline double median3(double a, double b, double c) {
  return a + b + c - std::min({a, b, c}) - std::max({a, b, c});
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline void check_ridge_inputs(Eigen::Index rows_a, Eigen::Index rows_b,
                               double lambda, const char* who) {
  if (rows_a != rows_b) {
    throw ShapeError(std::string(who) + ": " + std::to_string(rows_a) +
                     " rows vs " + std::to_string(rows_b) + " target rows");
  }
  if (rows_a == 0) throw DomainError(std::string(who) + ": no rows");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw ConfigError(std::string(who) + ": ridge must be positive and finite");
  }
}

[[noreturn]] inline void ridge_failure(const char* who, const char* what,
                                       double lambda) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", 10.0 * lambda);
  throw NumericError(std::string(who) + ": " + what +
                     "; try a larger ridge, e.g. " + buf);
}

}  // namespace detail

struct RidgeSolution {
  double lambda = 0.0;
  Eigen::MatrixXd weights;  // feature_dim x output_dim
  double residual = 0.0;    // relative normal-equations residual
  double solve_seconds = 0.0;
};

// Solves (Phi^T Phi + lambda n I) w = Phi^T y through a Cholesky
// factorization, in the dual when features outnumber rows. The relative
// normal-equations residual must come back below 1e-8 or the solve is
// rejected as numerically unsound.
inline RidgeSolution ridge_solve(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& y,
                                 double lambda) {
  detail::check_ridge_inputs(phi.rows(), y.rows(), lambda, "ridge_solve");
  if (!phi.allFinite() || !y.allFinite()) {
    throw DomainError("ridge_solve: non-finite input");
  }
  const double n = static_cast<double>(phi.rows());
  RidgeSolution sol;
  sol.lambda = lambda;

  const auto t0 = std::chrono::steady_clock::now();
  if (phi.cols() <= phi.rows()) {
    Eigen::MatrixXd gram = phi.transpose() * phi;
    gram.diagonal().array() += lambda * n;
    const Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) {
      detail::ridge_failure("ridge_solve", "factorization failed", lambda);
    }
    sol.weights = llt.solve(phi.transpose() * y);
  } else {
    // w = Phi^T (Phi Phi^T + lambda n I)^{-1} y solves the same normal
    // equations at the row count's cost.
    Eigen::MatrixXd gram = phi * phi.transpose();
    gram.diagonal().array() += lambda * n;
    const Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) {
      detail::ridge_failure("ridge_solve", "factorization failed", lambda);
    }
    sol.weights = phi.transpose() * llt.solve(y);
  }
  sol.solve_seconds = detail::seconds_since(t0);

  const Eigen::MatrixXd rhs = phi.transpose() * y;
  const double rhs_norm = rhs.norm();
  if (rhs_norm > 0.0) {
    const Eigen::MatrixXd gap =
        phi.transpose() * (phi * sol.weights) + lambda * n * sol.weights - rhs;
    sol.residual = gap.norm() / rhs_norm;
  }
  if (!sol.weights.allFinite() || sol.residual > 1e-8) {
    detail::ridge_failure("ridge_solve", "normal-equations residual above 1e-8",
                          lambda);
  }
  return sol;
}

struct KernelRidgeSolution {
  double lambda = 0.0;
  Eigen::MatrixXd alpha;  // train_rows x output_dim
  double residual = 0.0;
  double solve_seconds = 0.0;
};

// Solves (K + lambda n I) alpha = y on the training block; predictions are
// K_cross * alpha. Same residual policy as ridge_solve.
inline KernelRidgeSolution kernel_ridge(const Eigen::MatrixXd& k_train,
                                        const Eigen::MatrixXd& y, double lambda) {
  if (k_train.rows() != k_train.cols()) {
    throw ShapeError("kernel_ridge: kernel block must be square");
  }
  detail::check_ridge_inputs(k_train.rows(), y.rows(), lambda, "kernel_ridge");
  if (!k_train.allFinite() || !y.allFinite()) {
    throw DomainError("kernel_ridge: non-finite input");
  }
  const double n = static_cast<double>(k_train.rows());
  KernelRidgeSolution sol;
  sol.lambda = lambda;

  const auto t0 = std::chrono::steady_clock::now();
  Eigen::MatrixXd sys = k_train;
  sys.diagonal().array() += lambda * n;
  const Eigen::LLT<Eigen::MatrixXd> llt(sys);
  if (llt.info() != Eigen::Success) {
    detail::ridge_failure("kernel_ridge", "factorization failed", lambda);
  }
  sol.alpha = llt.solve(y);
  sol.solve_seconds = detail::seconds_since(t0);

  const double y_norm = y.norm();
  if (y_norm > 0.0) {
    sol.residual = (sys * sol.alpha - y).norm() / y_norm;
  }
  if (!sol.alpha.allFinite() || sol.residual > 1e-8) {
    detail::ridge_failure("kernel_ridge", "normal-equations residual above 1e-8",
                          lambda);
  }
  return sol;
}

// ============================================================================
// Row-parallel featurization
// ============================================================================

// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware count).
// The first exception wins and is rethrown on the calling thread.
inline void parallel_rows(std::size_t n, unsigned threads,
                          const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(
      std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex gate;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(gate);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// Feature matrix for the rows of x under any vector featurizer exposing
// feature_dim() and featurize(vector<double>).
template <class Stack>
Eigen::MatrixXd featurize_rows(const Stack& stack, const Eigen::MatrixXd& x,
                               unsigned threads) {
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(stack.feature_dim()));
  parallel_rows(static_cast<std::size_t>(x.rows()), threads, [&](std::size_t i) {
    std::vector<double> row(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      row[static_cast<std::size_t>(j)] = x(static_cast<Eigen::Index>(i), j);
    }
    const std::vector<double> f = stack.featurize(row);
    out.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXd>(f.data(),
                                             static_cast<Eigen::Index>(f.size()));
  });
  return out;
}

inline Eigen::MatrixXd featurize_images(const CntkSketchStack& stack,
                                        const std::vector<DenseTensor>& images,
                                        unsigned threads) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(images.size()),
                      static_cast<Eigen::Index>(stack.feature_dim()));
  parallel_rows(images.size(), threads, [&](std::size_t i) {
    const std::vector<double> f = stack.featurize(images[i]);
    out.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXd>(f.data(),
                                             static_cast<Eigen::Index>(f.size()));
  });
  return out;
}

// ============================================================================
// Disk cache for feature matrices
// ============================================================================

// Matrices keyed by (seed, config hash); an empty directory disables the
// cache. Unreadable or mismatched entries are recomputed, never trusted.
class FeatureCache {
 public:
  explicit FeatureCache(std::string dir) : dir_(std::move(dir)) {}

  bool enabled() const { return !dir_.empty(); }

  std::string path_for(std::uint64_t seed, std::uint64_t config_hash) const {
    return dir_ + "/feat_" + hex64(seed) + "_" + hex64(config_hash) + ".ntkf";
  }

  std::optional<Eigen::MatrixXd> load(std::uint64_t seed,
                                      std::uint64_t config_hash) const {
    if (!enabled()) return std::nullopt;
    const std::string path = path_for(seed, config_hash);
    if (!std::filesystem::exists(path)) return std::nullopt;
    NtkfData t;
    try {
      t = read_ntkf(path);
    } catch (const Error&) {
      return std::nullopt;  // corrupt cache entry: recompute
    }
    if (t.dims.size() != 2) return std::nullopt;
    Eigen::MatrixXd m(static_cast<Eigen::Index>(t.dims[0]),
                      static_cast<Eigen::Index>(t.dims[1]));
    for (std::size_t i = 0; i < t.dims[0]; ++i) {
      for (std::size_t j = 0; j < t.dims[1]; ++j) {
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            t.values[i * t.dims[1] + j];
      }
    }
    return m;
  }

  void store(std::uint64_t seed, std::uint64_t config_hash,
             const Eigen::MatrixXd& m) const {
    if (!enabled()) return;
    std::filesystem::create_directories(dir_);
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) values.push_back(m(i, j));
    }
    write_ntkf(path_for(seed, config_hash),
               {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
               values, 1);
  }

 private:
  std::string dir_;
};

// ============================================================================
// Benchmark configuration
// ============================================================================

struct BenchMethodSpec {
  std::string name;
  // Sketch dims; all-zero means derive from (depth, eps, delta).
  std::size_t s = 0, n1 = 0, r = 0, m = 0, s_star = 0;
  int p = 0, p_dot = 0;
  // Random-feature counts; all-zero means derive.
  std::size_t m0 = 0, m1 = 0, ms = 0;
  int gibbs_sweeps = 1;
  int filter = 3;
};

struct BenchConfig {
  Dataset dataset;
  BenchJson dataset_echo;
  int depth = 2;
  double eps = 0.25;
  double delta = 0.1;
  std::vector<double> ridge_grid;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string cache_dir;
  std::vector<BenchMethodSpec> methods;
};

namespace detail {

inline const BenchJson& require_field(const BenchJson& obj, const char* key,
                                      const std::string& ctx) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw ConfigError(ctx + ": missing field '" + key + "'");
  }
  return obj.at(key);
}

inline void check_keys(const BenchJson& obj,
                       std::initializer_list<const char*> allowed,
                       const std::string& ctx) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* a : allowed) {
      if (it.key() == a) {
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError(ctx + ": unknown field '" + it.key() + "'");
  }
}

inline double json_number(const BenchJson& obj, const char* key, double fallback,
                          const std::string& ctx) {
  if (!obj.contains(key)) return fallback;
  const BenchJson& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(ctx + ": field '" + key + "' must be a number");
  return v.get<double>();
}

inline std::uint64_t json_u64(const BenchJson& obj, const char* key,
                              std::uint64_t fallback, const std::string& ctx) {
  if (!obj.contains(key)) return fallback;
  const BenchJson& v = obj.at(key);
  // In-memory configs built from int literals carry signed values; accept
  // them when nonnegative.
  if (!v.is_number_unsigned() &&
      !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw ConfigError(ctx + ": field '" + key + "' must be a nonnegative integer");
  }
  return v.get<std::uint64_t>();
}

inline bool json_bool(const BenchJson& obj, const char* key, bool fallback,
                      const std::string& ctx) {
  if (!obj.contains(key)) return fallback;
  const BenchJson& v = obj.at(key);
  if (!v.is_boolean()) throw ConfigError(ctx + ": field '" + key + "' must be a bool");
  return v.get<bool>();
}

inline std::string json_string(const BenchJson& obj, const char* key,
                               const std::string& ctx) {
  const BenchJson& v = require_field(obj, key, ctx);
  if (!v.is_string()) throw ConfigError(ctx + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

inline Dataset parse_bench_dataset(const BenchJson& spec) {
  const std::string ctx = "bench config dataset";
  const std::string kind = json_string(spec, "kind", ctx);
  if (kind == "synthetic-relu") {
    check_keys(spec,
               {"kind", "n", "dim", "teacher_width", "noise", "test_fraction", "seed"},
               ctx);
    SyntheticSpec s;
    s.n = json_u64(spec, "n", s.n, ctx);
    s.dim = json_u64(spec, "dim", s.dim, ctx);
    s.teacher_width = json_u64(spec, "teacher_width", s.teacher_width, ctx);
    s.noise = json_number(spec, "noise", s.noise, ctx);
    s.test_fraction = json_number(spec, "test_fraction", s.test_fraction, ctx);
    s.seed = json_u64(spec, "seed", s.seed, ctx);
    return synthetic_planted_relu(s);
  }
  if (kind == "synthetic-relu-images") {
    check_keys(spec,
               {"kind", "n", "height", "width", "channels", "teacher_width", "noise",
                "test_fraction", "seed"},
               ctx);
    SyntheticImageSpec s;
    s.n = json_u64(spec, "n", s.n, ctx);
    s.height = json_u64(spec, "height", s.height, ctx);
    s.width = json_u64(spec, "width", s.width, ctx);
    s.channels = json_u64(spec, "channels", s.channels, ctx);
    s.teacher_width = json_u64(spec, "teacher_width", s.teacher_width, ctx);
    s.noise = json_number(spec, "noise", s.noise, ctx);
    s.test_fraction = json_number(spec, "test_fraction", s.test_fraction, ctx);
    s.seed = json_u64(spec, "seed", s.seed, ctx);
    return synthetic_planted_relu_images(s);
  }
  if (kind == "csv") {
    check_keys(spec,
               {"kind", "path", "header", "target_column", "classification",
                "test_fraction", "split_seed"},
               ctx);
    CsvOptions opt;
    opt.header = json_bool(spec, "header", false, ctx);
    opt.target_column =
        static_cast<int>(json_number(spec, "target_column", -1.0, ctx));
    opt.classification = json_bool(spec, "classification", false, ctx);
    Dataset ds = load_csv(json_string(spec, "path", ctx), opt);
    assign_split(ds, json_number(spec, "test_fraction", 0.25, ctx),
                 RngStream(json_u64(spec, "split_seed", 1, ctx), 0x53504c49));
    return ds;
  }
  if (kind == "images") {
    check_keys(spec, {"kind", "path", "targets_path", "test_fraction", "split_seed"},
               ctx);
    Dataset ds = load_image_tensor(json_string(spec, "path", ctx));
    if (ds.images.empty()) throw ConfigError(ctx + ": image file has no rows");
    const NtkfData targets = read_ntkf(json_string(spec, "targets_path", ctx));
    if (targets.dims.size() != 1 || targets.dims[0] != ds.images.size()) {
      throw ConfigError(ctx + ": targets file must be a rank-1 tensor with one "
                        "value per image");
    }
    for (std::size_t i = 0; i < targets.values.size(); ++i) {
      ds.targets(static_cast<Eigen::Index>(i), 0) = targets.values[i];
    }
    assign_split(ds, json_number(spec, "test_fraction", 0.25, ctx),
                 RngStream(json_u64(spec, "split_seed", 1, ctx), 0x53504c49));
    ds.validate();
    return ds;
  }
  throw ConfigError(ctx + ": unknown kind '" + kind + "'");
}

inline BenchMethodSpec parse_bench_method(const BenchJson& spec, std::size_t index) {
  const std::string ctx = "bench config methods[" + std::to_string(index) + "]";
  BenchMethodSpec m;
  m.name = json_string(spec, "name", ctx);
  if (m.name == "exact-ntk") {
    check_keys(spec, {"name"}, ctx);
  } else if (m.name == "exact-cntk") {
    check_keys(spec, {"name", "filter"}, ctx);
    m.filter = static_cast<int>(json_u64(spec, "filter", 3, ctx));
  } else if (m.name == "ntk-sketch" || m.name == "cntk-sketch") {
    if (m.name == "ntk-sketch") {
      check_keys(spec, {"name", "s", "n1", "r", "m", "s_star", "p", "p_dot"}, ctx);
    } else {
      check_keys(spec, {"name", "filter", "s", "n1", "r", "m", "s_star", "p", "p_dot"},
                 ctx);
      m.filter = static_cast<int>(json_u64(spec, "filter", 3, ctx));
    }
    m.s = json_u64(spec, "s", 0, ctx);
    m.n1 = json_u64(spec, "n1", 0, ctx);
    m.r = json_u64(spec, "r", 0, ctx);
    m.m = json_u64(spec, "m", 0, ctx);
    m.s_star = json_u64(spec, "s_star", 0, ctx);
    m.p = static_cast<int>(json_u64(spec, "p", 0, ctx));
    m.p_dot = static_cast<int>(json_u64(spec, "p_dot", 0, ctx));
    const bool any = m.s || m.n1 || m.r || m.m || m.s_star || m.p || m.p_dot;
    const bool all = m.s && m.n1 && m.r && m.m && m.s_star && m.p && m.p_dot;
    if (any && !all) {
      throw ConfigError(ctx + ": give all of s, n1, r, m, s_star, p, p_dot or none");
    }
  } else if (m.name == "ntk-rf" || m.name == "ntk-rf-leverage") {
    if (m.name == "ntk-rf") {
      check_keys(spec, {"name", "m0", "m1", "ms"}, ctx);
    } else {
      check_keys(spec, {"name", "m0", "m1", "ms", "gibbs_sweeps"}, ctx);
      m.gibbs_sweeps = static_cast<int>(json_u64(spec, "gibbs_sweeps", 1, ctx));
    }
    m.m0 = json_u64(spec, "m0", 0, ctx);
    m.m1 = json_u64(spec, "m1", 0, ctx);
    m.ms = json_u64(spec, "ms", 0, ctx);
    const bool any = m.m0 || m.m1 || m.ms;
    const bool all = m.m0 && m.m1 && m.ms;
    if (any && !all) {
      throw ConfigError(ctx + ": give all of m0, m1, ms or none");
    }
  } else {
    throw ConfigError(ctx + ": unknown method '" + m.name + "'");
  }
  return m;
}

}  // namespace detail

inline BenchConfig parse_bench_config(const BenchJson& j) {
  const std::string ctx = "bench config";
  if (!j.is_object()) throw ConfigError(ctx + ": top level must be an object");
  detail::check_keys(j,
                     {"dataset", "depth", "eps", "delta", "ridge", "ridge_grid",
                      "seed", "threads", "cache_dir", "methods"},
                     ctx);
  BenchConfig cfg;
  cfg.dataset_echo = detail::require_field(j, "dataset", ctx);
  cfg.dataset = detail::parse_bench_dataset(cfg.dataset_echo);
  cfg.depth = static_cast<int>(detail::json_u64(j, "depth", 2, ctx));
  if (cfg.depth < 1) throw ConfigError(ctx + ": depth must be >= 1");
  cfg.eps = detail::json_number(j, "eps", 0.25, ctx);
  cfg.delta = detail::json_number(j, "delta", 0.1, ctx);
  cfg.seed = detail::json_u64(j, "seed", 1, ctx);
  cfg.threads = static_cast<unsigned>(detail::json_u64(j, "threads", 1, ctx));
  if (j.contains("cache_dir")) cfg.cache_dir = detail::json_string(j, "cache_dir", ctx);

  if (j.contains("ridge") && j.contains("ridge_grid")) {
    throw ConfigError(ctx + ": give ridge or ridge_grid, not both");
  }
  if (j.contains("ridge")) {
    cfg.ridge_grid = {detail::json_number(j, "ridge", 0.0, ctx)};
  } else if (j.contains("ridge_grid")) {
    const BenchJson& grid = j.at("ridge_grid");
    if (!grid.is_array() || grid.empty()) {
      throw ConfigError(ctx + ": ridge_grid must be a nonempty array");
    }
    for (const BenchJson& v : grid) {
      if (!v.is_number()) throw ConfigError(ctx + ": ridge_grid entries must be numbers");
      cfg.ridge_grid.push_back(v.get<double>());
    }
  } else {
    throw ConfigError(ctx + ": provide ridge or ridge_grid");
  }
  for (double lam : cfg.ridge_grid) {
    if (!(lam > 0.0) || !std::isfinite(lam)) {
      throw ConfigError(ctx + ": ridge values must be positive and finite");
    }
  }

  const BenchJson& methods = detail::require_field(j, "methods", ctx);
  if (!methods.is_array() || methods.empty()) {
    throw ConfigError(ctx + ": methods must be a nonempty array");
  }
  for (std::size_t i = 0; i < methods.size(); ++i) {
    cfg.methods.push_back(detail::parse_bench_method(methods.at(i), i));
  }
  return cfg;
}

// ============================================================================
// Benchmark runner
// ============================================================================

namespace detail {

inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m,
                                 const std::vector<std::size_t>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

inline Eigen::MatrixXd take_block(const Eigen::MatrixXd& m,
                                  const std::vector<std::size_t>& rows,
                                  const std::vector<std::size_t>& cols) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          m(static_cast<Eigen::Index>(rows[i]), static_cast<Eigen::Index>(cols[j]));
    }
  }
  return out;
}

// Median-of-3 timing around a deterministic producer; the first run's value
// is kept (all runs produce identical output).
template <class Fn>
std::pair<Eigen::MatrixXd, double> timed_matrix(Fn&& fn) {
  double t[3];
  Eigen::MatrixXd value;
  for (int k = 0; k < 3; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    Eigen::MatrixXd out = fn();
    t[k] = seconds_since(t0);
    if (k == 0) value = std::move(out);
  }
  return {std::move(value), median3(t[0], t[1], t[2])};
}

// Validation split carved from the train tail (the split order is already
// shuffled, so the tail is a random subset).
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> carve_validation(
    const std::vector<std::size_t>& train) {
  if (train.size() < 2) {
    throw ConfigError("bench: ridge_grid needs at least two training rows");
  }
  const std::size_t n_val = std::max<std::size_t>(1, train.size() / 4);
  std::vector<std::size_t> fit(train.begin(),
                               train.end() - static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> val(train.end() - static_cast<std::ptrdiff_t>(n_val),
                               train.end());
  return {std::move(fit), std::move(val)};
}

inline double choose_ridge(const std::vector<double>& grid,
                           const std::function<double(double)>& val_mse) {
  if (grid.size() == 1) return grid[0];
  double best = grid[0];
  double best_mse = val_mse(grid[0]);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double mse = val_mse(grid[i]);
    if (mse < best_mse) {
      best_mse = mse;
      best = grid[i];
    }
  }
  return best;
}

struct MethodRun {
  std::size_t feature_dim = 0;
  double mse = 0.0;
  double train_mse = 0.0;
  double accuracy = -1.0;  // negative = not classification
  double featurize_seconds = 0.0;
  double solve_seconds = 0.0;
  double ridge = 0.0;
  std::uint64_t config_hash = 0;
};

// Regression through an explicit feature matrix over all rows.
inline MethodRun run_feature_method(const Eigen::MatrixXd& features,
                                    const Dataset& ds,
                                    const std::vector<double>& grid) {
  const Eigen::MatrixXd phi_train = take_rows(features, ds.train);
  const Eigen::MatrixXd y_train = take_rows(ds.targets, ds.train);
  const Eigen::MatrixXd phi_test = take_rows(features, ds.test);
  const Eigen::MatrixXd y_test = take_rows(ds.targets, ds.test);

  MethodRun run;
  run.feature_dim = static_cast<std::size_t>(features.cols());
  run.ridge = choose_ridge(grid, [&](double lam) {
    const auto [fit, val] = carve_validation(ds.train);
    const RidgeSolution sol =
        ridge_solve(take_rows(features, fit), take_rows(ds.targets, fit), lam);
    return mean_squared_error(take_rows(features, val) * sol.weights,
                              take_rows(ds.targets, val));
  });

  double t[3];
  RidgeSolution sol;
  for (int k = 0; k < 3; ++k) {
    sol = ridge_solve(phi_train, y_train, run.ridge);
    t[k] = sol.solve_seconds;
  }
  run.solve_seconds = median3(t[0], t[1], t[2]);
  run.train_mse = mean_squared_error(phi_train * sol.weights, y_train);
  run.mse = mean_squared_error(phi_test * sol.weights, y_test);
  if (ds.classification()) {
    run.accuracy = argmax_accuracy(phi_test * sol.weights, y_test);
  }
  return run;
}

// Regression through an exact kernel matrix over all row pairs.
inline MethodRun run_kernel_method(const Eigen::MatrixXd& kernel, const Dataset& ds,
                                   const std::vector<double>& grid) {
  const Eigen::MatrixXd k_train = take_block(kernel, ds.train, ds.train);
  const Eigen::MatrixXd y_train = take_rows(ds.targets, ds.train);
  const Eigen::MatrixXd k_cross = take_block(kernel, ds.test, ds.train);
  const Eigen::MatrixXd y_test = take_rows(ds.targets, ds.test);

  MethodRun run;
  run.feature_dim = 0;
  run.ridge = choose_ridge(grid, [&](double lam) {
    const auto [fit, val] = carve_validation(ds.train);
    const KernelRidgeSolution sol =
        kernel_ridge(take_block(kernel, fit, fit), take_rows(ds.targets, fit), lam);
    return mean_squared_error(take_block(kernel, val, fit) * sol.alpha,
                              take_rows(ds.targets, val));
  });

  double t[3];
  KernelRidgeSolution sol;
  for (int k = 0; k < 3; ++k) {
    sol = kernel_ridge(k_train, y_train, run.ridge);
    t[k] = sol.solve_seconds;
  }
  run.solve_seconds = median3(t[0], t[1], t[2]);
  run.train_mse = mean_squared_error(k_train * sol.alpha, y_train);
  run.mse = mean_squared_error(k_cross * sol.alpha, y_test);
  if (ds.classification()) {
    run.accuracy = argmax_accuracy(k_cross * sol.alpha, y_test);
  }
  return run;
}

inline std::string method_hash_string(const BenchMethodSpec& m, int depth,
                                      std::uint64_t data_hash) {
  std::string s = m.name + "|depth=" + std::to_string(depth);
  if (m.name == "ntk-sketch" || m.name == "cntk-sketch") {
    s += "|s=" + std::to_string(m.s) + "|n1=" + std::to_string(m.n1) +
         "|r=" + std::to_string(m.r) + "|m=" + std::to_string(m.m) +
         "|s*=" + std::to_string(m.s_star) + "|p=" + std::to_string(m.p) +
         "|p'=" + std::to_string(m.p_dot);
  }
  if (m.name == "ntk-rf" || m.name == "ntk-rf-leverage") {
    s += "|m0=" + std::to_string(m.m0) + "|m1=" + std::to_string(m.m1) +
         "|ms=" + std::to_string(m.ms);
  }
  if (m.name == "ntk-rf-leverage") {
    s += "|sweeps=" + std::to_string(m.gibbs_sweeps);
  }
  if (m.name == "exact-cntk" || m.name == "cntk-sketch") {
    s += "|q=" + std::to_string(m.filter);
  }
  return s + "|data=" + hex64(data_hash);
}

}  // namespace detail

// Runs every configured method against the dataset and returns the report.
// Reports are deterministic for a fixed (config, seed) apart from the two
// timing fields per method.
// One method's matrix: an n x n Gram for the exact kernels, an n x feature_dim
// feature matrix otherwise. `seconds` is the median build time, or the load
// time on a cache hit.
struct MethodMatrix {
  Eigen::MatrixXd values;
  double seconds = 0.0;
  std::uint64_t config_hash = 0;
  bool is_kernel = false;
};

// Resolves a method's dimensions (filling unset dims from the accuracy
// targets), checks it against the dataset kind, and produces its matrix.
// `resolved` is updated in place so callers can see the dims actually used.
inline MethodMatrix build_method_matrix(BenchMethodSpec& resolved,
                                        const Dataset& ds, int depth, double eps,
                                        double delta, std::uint64_t seed,
                                        int threads, const FeatureCache& cache,
                                        std::uint64_t data_hash) {
  const bool image_method =
      resolved.name == "exact-cntk" || resolved.name == "cntk-sketch";
  if (image_method && ds.kind != DatasetKind::kImages) {
    throw ConfigError("method '" + resolved.name + "' needs an image dataset");
  }
  if (!image_method && ds.kind != DatasetKind::kVectors) {
    throw ConfigError("method '" + resolved.name + "' needs a vector dataset");
  }

  MethodMatrix out;
  const auto fetch = [&](auto build) {
    out.config_hash =
        fnv1a64(detail::method_hash_string(resolved, depth, data_hash));
    if (auto cached = cache.load(seed, out.config_hash)) {
      const auto t0 = std::chrono::steady_clock::now();
      out.values = std::move(*cached);
      out.seconds = detail::seconds_since(t0);
      return;
    }
    auto [built, seconds] = detail::timed_matrix(build);
    out.values = std::move(built);
    out.seconds = seconds;
    cache.store(seed, out.config_hash, out.values);
  };

  if (resolved.name == "exact-ntk" || resolved.name == "exact-cntk") {
    out.is_kernel = true;
    fetch([&] {
      return resolved.name == "exact-ntk"
                 ? ntk_gram(ds.x, depth)
                 : cntk_gram(ds.images, depth, resolved.filter);
    });
  } else if (resolved.name == "ntk-sketch") {
    NtkSketchConfig sk;
    if (resolved.s == 0) {
      sk = NtkSketchConfig::from_accuracy(depth, eps, delta);
      resolved.s = sk.s;
      resolved.n1 = sk.n1;
      resolved.r = sk.r;
      resolved.m = sk.m;
      resolved.s_star = sk.s_star;
      resolved.p = sk.p;
      resolved.p_dot = sk.p_dot;
    } else {
      sk.eps = eps;
      sk.delta = delta;
      sk.s = resolved.s;
      sk.n1 = resolved.n1;
      sk.r = resolved.r;
      sk.m = resolved.m;
      sk.s_star = resolved.s_star;
      sk.p = resolved.p;
      sk.p_dot = resolved.p_dot;
    }
    sk.depth = depth;
    fetch([&] {
      const NtkSketchStack stack(sk, static_cast<std::size_t>(ds.x.cols()), seed);
      return featurize_rows(stack, ds.x, threads);
    });
  } else if (resolved.name == "ntk-rf" || resolved.name == "ntk-rf-leverage") {
    RandomFeatureConfig rf;
    if (resolved.m0 == 0) {
      rf = RandomFeatureConfig::from_accuracy(depth, eps, delta);
      resolved.m0 = rf.m0;
      resolved.m1 = rf.m1;
      resolved.ms = rf.ms;
    } else {
      rf.m0 = resolved.m0;
      rf.m1 = resolved.m1;
      rf.ms = resolved.ms;
    }
    rf.depth = depth;
    rf.eps = eps;
    rf.delta = delta;
    rf.mode = resolved.name == "ntk-rf" ? RandomFeatureMode::kPlain
                                        : RandomFeatureMode::kLeverageModified;
    rf.gibbs_sweeps = resolved.gibbs_sweeps;
    fetch([&] {
      const NtkRfStack stack(rf, static_cast<std::size_t>(ds.x.cols()), seed);
      return featurize_rows(stack, ds.x, threads);
    });
  } else if (resolved.name == "cntk-sketch") {
    CntkSketchConfig sk;
    if (resolved.s == 0) {
      sk = CntkSketchConfig::from_accuracy(depth, resolved.filter, eps, delta);
      resolved.s = sk.s;
      resolved.n1 = sk.n1;
      resolved.r = sk.r;
      resolved.m = sk.m;
      resolved.s_star = sk.s_star;
      resolved.p = sk.p;
      resolved.p_dot = sk.p_dot;
    } else {
      sk.eps = eps;
      sk.delta = delta;
      sk.s = resolved.s;
      sk.n1 = resolved.n1;
      sk.r = resolved.r;
      sk.m = resolved.m;
      sk.s_star = resolved.s_star;
      sk.p = resolved.p;
      sk.p_dot = resolved.p_dot;
    }
    sk.depth = depth;
    sk.filter = resolved.filter;
    fetch([&] {
      const std::vector<std::size_t>& shape = ds.images[0].shape();
      const CntkSketchStack stack(sk, shape[0], shape[1], shape[2], seed);
      return featurize_images(stack, ds.images, threads);
    });
  } else {
    throw ConfigError("unknown method '" + resolved.name + "'");
  }
  return out;
}

inline BenchJson run_benchmark(const BenchConfig& cfg) {
  const Dataset& ds = cfg.dataset;
  ds.validate();
  if (ds.train.empty()) throw ConfigError("bench: dataset has no training rows");
  if (ds.test.empty()) {
    throw ConfigError("bench: dataset has no test rows; set test_fraction > 0");
  }
  const std::uint64_t data_hash = dataset_fingerprint(ds);
  const FeatureCache cache(cfg.cache_dir);

  BenchJson report;
  report["schema"] = "tangentsketch-bench-report/1";
  report["seed"] = cfg.seed;
  report["depth"] = cfg.depth;
  report["dataset"] = cfg.dataset_echo;
  report["methods"] = BenchJson::array();

  for (const BenchMethodSpec& method : cfg.methods) {
    BenchMethodSpec resolved = method;
    const MethodMatrix built =
        build_method_matrix(resolved, ds, cfg.depth, cfg.eps, cfg.delta,
                            cfg.seed, cfg.threads, cache, data_hash);
    detail::MethodRun run =
        built.is_kernel
            ? detail::run_kernel_method(built.values, ds, cfg.ridge_grid)
            : detail::run_feature_method(built.values, ds, cfg.ridge_grid);
    run.config_hash = built.config_hash;
    const double featurize_seconds = built.seconds;

    BenchJson row;
    row["name"] = method.name;
    row["feature_dim"] = run.feature_dim;
    row["mse"] = run.mse;
    if (run.accuracy >= 0.0) {
      row["accuracy"] = run.accuracy;
    } else {
      row["accuracy"] = nullptr;
    }
    row["featurize_seconds"] = featurize_seconds;
    row["solve_seconds"] = run.solve_seconds;
    row["seed"] = cfg.seed;
    row["config_hash"] = hex64(run.config_hash);
    row["ridge"] = run.ridge;
    row["train_mse"] = run.train_mse;
    report["methods"].push_back(std::move(row));
  }
  return report;
}

inline BenchJson run_benchmark_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("bench: cannot open config " + path);
  BenchJson j;
  try {
    j = BenchJson::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bench: config " + path + " is not valid JSON: " + e.what());
  }
  return run_benchmark(parse_bench_config(j));
}

// ============================================================================
// Report checks and rendering
// ============================================================================

// Structural check of the documented report shape; throws ConfigError naming
// the first offending field.
inline void validate_report_schema(const BenchJson& report) {
  if (!report.is_object() || !report.contains("methods")) {
    throw ConfigError("report: missing 'methods' array");
  }
  const BenchJson& methods = report.at("methods");
  if (!methods.is_array() || methods.empty()) {
    throw ConfigError("report: 'methods' must be a nonempty array");
  }
  for (std::size_t i = 0; i < methods.size(); ++i) {
    const BenchJson& row = methods.at(i);
    const std::string ctx = "report methods[" + std::to_string(i) + "]";
    if (!row.is_object()) throw ConfigError(ctx + ": not an object");
    auto need = [&](const char* key) -> const BenchJson& {
      if (!row.contains(key)) throw ConfigError(ctx + ": missing '" + key + "'");
      return row.at(key);
    };
    if (!need("name").is_string()) throw ConfigError(ctx + ": 'name' must be a string");
    if (!need("feature_dim").is_number_unsigned()) {
      throw ConfigError(ctx + ": 'feature_dim' must be a nonnegative integer");
    }
    const BenchJson& mse = need("mse");
    if (!mse.is_number() || mse.get<double>() < 0.0) {
      throw ConfigError(ctx + ": 'mse' must be a nonnegative number");
    }
    const BenchJson& acc = need("accuracy");
    if (!acc.is_null()) {
      if (!acc.is_number() || acc.get<double>() < 0.0 || acc.get<double>() > 1.0) {
        throw ConfigError(ctx + ": 'accuracy' must be null or in [0, 1]");
      }
    }
    for (const char* key : {"featurize_seconds", "solve_seconds"}) {
      const BenchJson& v = need(key);
      if (!v.is_number() || v.get<double>() < 0.0) {
        throw ConfigError(ctx + ": '" + key + "' must be a nonnegative number");
      }
    }
    if (!need("seed").is_number_unsigned()) {
      throw ConfigError(ctx + ": 'seed' must be a nonnegative integer");
    }
    const BenchJson& hash = need("config_hash");
    if (!hash.is_string() || hash.get<std::string>().size() != 16) {
      throw ConfigError(ctx + ": 'config_hash' must be a 16-char hex string");
    }
  }
}

// Copy of the report with timing fields zeroed; two runs of the same seeded
// config must serialize identically after this.
inline BenchJson strip_timings(BenchJson report) {
  if (report.contains("methods") && report.at("methods").is_array()) {
    for (BenchJson& row : report.at("methods")) {
      if (row.contains("featurize_seconds")) row["featurize_seconds"] = 0.0;
      if (row.contains("solve_seconds")) row["solve_seconds"] = 0.0;
    }
  }
  return report;
}

// Fixed-width text table of the methods block.
inline std::string render_report_table(const BenchJson& report) {
  validate_report_schema(report);
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %11s %12s %9s %10s %10s\n", "method",
                "feature_dim", "mse", "accuracy", "t_feat(s)", "t_solve(s)");
  out += line;
  for (const BenchJson& row : report.at("methods")) {
    const BenchJson& acc = row.at("accuracy");
    char acc_text[16];
    if (acc.is_null()) {
      std::snprintf(acc_text, sizeof acc_text, "%s", "-");
    } else {
      std::snprintf(acc_text, sizeof acc_text, "%.4f", acc.get<double>());
    }
    std::snprintf(line, sizeof line, "%-16s %11llu %12.6g %9s %10.3f %10.3f\n",
                  row.at("name").get<std::string>().c_str(),
                  static_cast<unsigned long long>(row.at("feature_dim").get<std::uint64_t>()),
                  row.at("mse").get<double>(), acc_text,
                  row.at("featurize_seconds").get<double>(),
                  row.at("solve_seconds").get<double>());
    out += line;
  }
  return out;
}

}  // namespace tsk
