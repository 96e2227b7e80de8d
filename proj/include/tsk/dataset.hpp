#pragma once
// Dataset plumbing for the regression harness: CSV tables with a target
// column, a small self-describing binary tensor format, deterministic
// train/test splits, and synthetic planted-ReLU generators for benchmarks.

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tsk/errors.hpp"
#include "tsk/rng.hpp"
#include "tsk/tensor.hpp"

namespace tsk {

enum class DatasetKind { kVectors, kImages };

// A labeled collection of inputs: flat vectors (rows of `x`) or image tensors
// (`images`, all one shape). Targets are one column for regression or a
// one-hot block for classification. Split indices are row positions.
struct Dataset {
  DatasetKind kind = DatasetKind::kVectors;
  Eigen::MatrixXd x;                // vectors: n rows, one per input
  std::vector<DenseTensor> images;  // images: n tensors, height x width x channels
  Eigen::MatrixXd targets;          // n x 1 (regression) or n x k (one-hot)
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;

  std::size_t size() const {
    return kind == DatasetKind::kVectors ? static_cast<std::size_t>(x.rows())
                                         : images.size();
  }

  bool classification() const { return targets.cols() > 1; }

  void validate() const {
    const std::size_t n = size();
    if (n == 0) throw DomainError("Dataset: no rows");
    if (static_cast<std::size_t>(targets.rows()) != n) {
      throw ShapeError("Dataset: " + std::to_string(targets.rows()) +
                       " target rows for " + std::to_string(n) + " inputs");
    }
    if (kind == DatasetKind::kVectors) {
      if (!x.allFinite()) throw DomainError("Dataset: non-finite feature entry");
    } else {
      for (std::size_t i = 1; i < images.size(); ++i) {
        if (images[i].shape() != images[0].shape()) {
          throw ShapeError("Dataset: image " + std::to_string(i) +
                           " shape differs from image 0");
        }
      }
    }
    if (!targets.allFinite()) throw DomainError("Dataset: non-finite target entry");
    if (classification()) {
      for (Eigen::Index i = 0; i < targets.rows(); ++i) {
        if (std::abs(targets.row(i).sum() - 1.0) > 1e-12 ||
            targets.row(i).minCoeff() < 0.0) {
          throw DomainError("Dataset: row " + std::to_string(i) +
                            " is not one-hot");
        }
      }
    }
    for (std::size_t i : train) {
      if (i >= n) throw ShapeError("Dataset: train index out of range");
    }
    for (std::size_t i : test) {
      if (i >= n) throw ShapeError("Dataset: test index out of range");
    }
  }
};

// ============================================================================
// CSV tables
// ============================================================================

struct CsvOptions {
  bool header = false;
  int target_column = -1;       // -1 selects the last column
  bool classification = false;  // integer labels in the target column -> one-hot
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell += ch;
    }
  }
  cells.push_back(cell);
  return cells;
}

inline double parse_cell(const std::string& cell, const std::string& path,
                         std::size_t line_no, std::size_t col) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  while (end != nullptr && (*end == ' ' || *end == '\t')) ++end;
  if (end == begin || end == nullptr || *end != '\0') {
    throw ParseError(path + ":" + std::to_string(line_no) + ": column " +
                     std::to_string(col + 1) + ": not a number: '" + cell + "'");
  }
  if (!std::isfinite(v)) {
    throw ParseError(path + ":" + std::to_string(line_no) + ": column " +
                     std::to_string(col + 1) + ": non-finite value");
  }
  return v;
}

}  // namespace detail

// Rectangular numeric CSV with one target column; remaining columns become
// the feature row. Errors carry the 1-based line number.
inline Dataset load_csv(const std::string& path, const CsvOptions& opt = {}) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_csv: cannot open " + path);

  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  bool expect_header = opt.header;
  while (std::getline(in, line)) {
    ++line_no;
    if (expect_header) {
      expect_header = false;
      continue;
    }
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = detail::split_csv_line(line);
    if (width == 0) {
      width = cells.size();
      if (width < 2) {
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": need at least one feature column plus the target");
      }
    } else if (cells.size() != width) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(width) + " columns, found " +
                       std::to_string(cells.size()));
    }
    std::vector<double> row(width);
    for (std::size_t c = 0; c < width; ++c) {
      row[c] = detail::parse_cell(cells[c], path, line_no, c);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("load_csv: " + path + " has no data rows");

  std::size_t target;
  if (opt.target_column < 0) {
    target = width - 1;
  } else if (static_cast<std::size_t>(opt.target_column) < width) {
    target = static_cast<std::size_t>(opt.target_column);
  } else {
    throw ParseError("load_csv: target column " +
                     std::to_string(opt.target_column) + " out of range (" +
                     std::to_string(width) + " columns)");
  }

  const std::size_t n = rows.size();
  const std::size_t d = width - 1;
  Dataset ds;
  ds.kind = DatasetKind::kVectors;
  ds.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::vector<double> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t k = 0;
    for (std::size_t c = 0; c < width; ++c) {
      if (c == target) continue;
      ds.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k++)) = rows[i][c];
    }
    labels[i] = rows[i][target];
  }

  if (opt.classification) {
    std::size_t classes = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = labels[i];
      if (v != std::floor(v) || v < 0.0 || v > 1e6) {
        throw ParseError("load_csv: row " + std::to_string(i + 1) +
                         ": class label must be a small nonnegative integer");
      }
      classes = std::max(classes, static_cast<std::size_t>(v) + 1);
    }
    if (classes < 2) {
      throw ParseError("load_csv: classification needs at least two classes");
    }
    ds.targets = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                       static_cast<Eigen::Index>(classes));
    for (std::size_t i = 0; i < n; ++i) {
      ds.targets(static_cast<Eigen::Index>(i),
                 static_cast<Eigen::Index>(labels[i])) = 1.0;
    }
  } else {
    ds.targets.resize(static_cast<Eigen::Index>(n), 1);
    for (std::size_t i = 0; i < n; ++i) ds.targets(static_cast<Eigen::Index>(i), 0) = labels[i];
  }
  ds.validate();
  return ds;
}

// Features plus a final target column (argmax label when one-hot). %.17g
// keeps doubles bit-exact through a write/read cycle.
inline void save_csv(const std::string& path, const Dataset& ds) {
  if (ds.kind != DatasetKind::kVectors) {
    throw ConfigError("save_csv: only vector datasets have a CSV form");
  }
  ds.validate();
  std::ofstream out(path);
  if (!out) throw ParseError("save_csv: cannot open " + path + " for writing");
  char buf[40];
  for (Eigen::Index i = 0; i < ds.x.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.x.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.x(i, j));
      out << buf << ',';
    }
    double label;
    if (ds.classification()) {
      Eigen::Index arg = 0;
      ds.targets.row(i).maxCoeff(&arg);
      label = static_cast<double>(arg);
    } else {
      label = ds.targets(i, 0);
    }
    std::snprintf(buf, sizeof buf, "%.17g", label);
    out << buf << '\n';
  }
  if (!out.flush()) throw ParseError("save_csv: write to " + path + " failed");
}

// ============================================================================
// Binary tensor format
// ============================================================================
// Layout: magic "NTKF", then little-endian u32 version (1), u32 dtype
// (1 = f64, 2 = f32), u32 rank, rank u64 dims, row-major payload.

struct NtkfData {
  std::vector<std::size_t> dims;
  std::vector<double> values;
};

namespace detail {

inline void put_bytes(std::ofstream& out, std::uint64_t v, int bytes) {
  char buf[8];
  for (int i = 0; i < bytes; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, bytes);
}

inline std::uint64_t get_bytes(std::ifstream& in, int bytes, const std::string& path,
                               const char* what) {
  char buf[8];
  if (!in.read(buf, bytes)) {
    throw ParseError(path + ": truncated while reading " + what);
  }
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  }
  return v;
}

}  // namespace detail

inline void write_ntkf(const std::string& path, const std::vector<std::size_t>& dims,
                       const std::vector<double>& values, int dtype = 1) {
  if (dtype != 1 && dtype != 2) {
    throw ConfigError("write_ntkf: dtype must be 1 (f64) or 2 (f32)");
  }
  std::size_t numel = 1;
  for (std::size_t d : dims) {
    if (d != 0 && numel > std::size_t(-1) / d) {
      throw ConfigError("write_ntkf: dims overflow");
    }
    numel *= d;
  }
  if (values.size() != numel) {
    throw ShapeError("write_ntkf: payload size " + std::to_string(values.size()) +
                     " does not match dims (numel " + std::to_string(numel) + ")");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("write_ntkf: cannot open " + path + " for writing");
  out.write("NTKF", 4);
  detail::put_bytes(out, 1, 4);  // version
  detail::put_bytes(out, static_cast<std::uint64_t>(dtype), 4);
  detail::put_bytes(out, dims.size(), 4);
  for (std::size_t d : dims) detail::put_bytes(out, d, 8);
  for (double v : values) {
    if (dtype == 1) {
      detail::put_bytes(out, std::bit_cast<std::uint64_t>(v), 8);
    } else {
      detail::put_bytes(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
    }
  }
  if (!out.flush()) throw ParseError("write_ntkf: write to " + path + " failed");
}

inline NtkfData read_ntkf(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("read_ntkf: cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "NTKF") {
    throw ParseError(path + ": bad magic (not an NTKF file)");
  }
  const std::uint64_t version = detail::get_bytes(in, 4, path, "version");
  if (version != 1) {
    throw ParseError(path + ": unsupported version " + std::to_string(version));
  }
  const std::uint64_t dtype = detail::get_bytes(in, 4, path, "dtype");
  if (dtype != 1 && dtype != 2) {
    throw ParseError(path + ": unknown dtype code " + std::to_string(dtype));
  }
  const std::uint64_t rank = detail::get_bytes(in, 4, path, "rank");
  if (rank > 8) throw ParseError(path + ": implausible rank " + std::to_string(rank));

  NtkfData t;
  t.dims.resize(rank);
  std::size_t numel = 1;
  for (std::uint64_t a = 0; a < rank; ++a) {
    t.dims[a] = detail::get_bytes(in, 8, path, "dims");
    if (t.dims[a] != 0 && numel > (std::size_t(1) << 40) / std::max<std::size_t>(t.dims[a], 1)) {
      throw ParseError(path + ": dims overflow");
    }
    numel *= t.dims[a];
  }
  t.values.resize(numel);
  for (std::size_t i = 0; i < numel; ++i) {
    if (dtype == 1) {
      t.values[i] = std::bit_cast<double>(detail::get_bytes(in, 8, path, "payload"));
    } else {
      t.values[i] = static_cast<double>(std::bit_cast<float>(
          static_cast<std::uint32_t>(detail::get_bytes(in, 4, path, "payload"))));
    }
  }
  char extra;
  if (in.read(&extra, 1)) throw ParseError(path + ": trailing bytes after payload");
  return t;
}

// A rank-4 NTKF file (count, height, width, channels) as an image dataset.
// Targets are not part of the tensor format; attach them separately. A
// zero-count file yields an empty dataset.
inline Dataset load_image_tensor(const std::string& path) {
  const NtkfData t = read_ntkf(path);
  if (t.dims.size() != 4) {
    throw ShapeError(path + ": expected rank-4 image tensor, found rank " +
                     std::to_string(t.dims.size()));
  }
  Dataset ds;
  ds.kind = DatasetKind::kImages;
  const std::size_t n = t.dims[0];
  const std::vector<std::size_t> shape{t.dims[1], t.dims[2], t.dims[3]};
  const std::size_t stride = shape[0] * shape[1] * shape[2];
  ds.images.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.images.emplace_back(shape,
                           std::vector<double>(t.values.begin() + static_cast<std::ptrdiff_t>(i * stride),
                                               t.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * stride)));
  }
  ds.targets.resize(static_cast<Eigen::Index>(n), 1);
  ds.targets.setZero();
  return ds;
}

inline void save_image_tensor(const std::string& path,
                              const std::vector<DenseTensor>& images, int dtype = 1) {
  std::vector<std::size_t> dims{images.size(), 0, 0, 0};
  std::vector<double> values;
  if (!images.empty()) {
    if (images[0].rank() != 3) {
      throw ShapeError("save_image_tensor: images must be rank 3");
    }
    dims[1] = images[0].shape()[0];
    dims[2] = images[0].shape()[1];
    dims[3] = images[0].shape()[2];
    values.reserve(images.size() * images[0].numel());
    for (const DenseTensor& img : images) {
      if (img.shape() != images[0].shape()) {
        throw ShapeError("save_image_tensor: images must share one shape");
      }
      values.insert(values.end(), img.data().begin(), img.data().end());
    }
  }
  write_ntkf(path, dims, values, dtype);
}

// ============================================================================
// Splits and synthetic data
// ============================================================================

// Deterministic shuffled split; test gets round(n * test_fraction) rows.
// Order within each side is the shuffle order (callers that carve a
// validation block from the train tail get a random subset for free).
inline void assign_split(Dataset& ds, double test_fraction, RngStream rng) {
  if (!(test_fraction >= 0.0) || !(test_fraction < 1.0)) {
    throw ConfigError("assign_split: test fraction must be in [0, 1)");
  }
  const std::size_t n = ds.size();
  if (n == 0) throw DomainError("assign_split: empty dataset");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[rng.index(i)]);
  }
  const std::size_t n_test =
      static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  ds.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  ds.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  if (ds.train.empty()) throw ConfigError("assign_split: train side is empty");
}

struct SyntheticSpec {
  std::size_t n = 300;
  std::size_t dim = 16;
  std::size_t teacher_width = 64;
  double noise = 0.0;
  double test_fraction = 0.25;
  std::uint64_t seed = 1;
};

namespace detail {

inline void check_synthetic(std::size_t n, std::size_t dim, std::size_t width,
                            double noise) {
  if (n == 0 || dim == 0 || width == 0) {
    throw ConfigError("synthetic dataset: n, dim, teacher_width must be >= 1");
  }
  if (!(noise >= 0.0) || !std::isfinite(noise)) {
    throw ConfigError("synthetic dataset: noise must be finite and >= 0");
  }
}

// Width-w one-hidden-layer ReLU teacher with Rademacher head, evaluated on a
// raw input vector.
inline double planted_relu_target(const Eigen::MatrixXd& w,
                                  const std::vector<double>& head,
                                  const Eigen::VectorXd& x) {
  double y = 0.0;
  for (Eigen::Index j = 0; j < w.rows(); ++j) {
    y += head[static_cast<std::size_t>(j)] * std::max(0.0, w.row(j).dot(x));
  }
  return y * std::sqrt(2.0 / static_cast<double>(w.rows()));
}

}  // namespace detail

// Unit-norm Gaussian inputs with targets from a planted one-hidden-layer
// ReLU network plus optional Gaussian label noise.
inline Dataset synthetic_planted_relu(const SyntheticSpec& spec) {
  detail::check_synthetic(spec.n, spec.dim, spec.teacher_width, spec.noise);
  RngStream root(spec.seed, 0x44415441);
  RngStream data = root.child(1);
  RngStream teacher = root.child(2);
  RngStream label_noise = root.child(3);

  Eigen::MatrixXd w(static_cast<Eigen::Index>(spec.teacher_width),
                    static_cast<Eigen::Index>(spec.dim));
  for (Eigen::Index j = 0; j < w.rows(); ++j) {
    for (Eigen::Index k = 0; k < w.cols(); ++k) w(j, k) = teacher.normal();
  }
  std::vector<double> head(spec.teacher_width);
  for (double& h : head) h = teacher.sign();

  Dataset ds;
  ds.kind = DatasetKind::kVectors;
  ds.x.resize(static_cast<Eigen::Index>(spec.n), static_cast<Eigen::Index>(spec.dim));
  ds.targets.resize(static_cast<Eigen::Index>(spec.n), 1);
  for (Eigen::Index i = 0; i < ds.x.rows(); ++i) {
    double norm = 0.0;
    while (norm == 0.0) {  // zero draw is measure-zero but cheap to guard
      for (Eigen::Index k = 0; k < ds.x.cols(); ++k) ds.x(i, k) = data.normal();
      norm = ds.x.row(i).norm();
    }
    ds.x.row(i) /= norm;
    ds.targets(i, 0) = detail::planted_relu_target(w, head, ds.x.row(i)) +
                       spec.noise * label_noise.normal();
  }
  assign_split(ds, spec.test_fraction, root.child(4));
  ds.validate();
  return ds;
}

struct SyntheticImageSpec {
  std::size_t n = 60;
  std::size_t height = 4;
  std::size_t width = 4;
  std::size_t channels = 1;
  std::size_t teacher_width = 32;
  double noise = 0.0;
  double test_fraction = 0.25;
  std::uint64_t seed = 1;
};

// Gaussian images with targets from a planted ReLU network on the flattened
// pixels.
inline Dataset synthetic_planted_relu_images(const SyntheticImageSpec& spec) {
  detail::check_synthetic(spec.n, spec.height * spec.width * spec.channels,
                          spec.teacher_width, spec.noise);
  RngStream root(spec.seed, 0x44415441);
  RngStream data = root.child(1);
  RngStream teacher = root.child(2);
  RngStream label_noise = root.child(3);

  const std::size_t d = spec.height * spec.width * spec.channels;
  Eigen::MatrixXd w(static_cast<Eigen::Index>(spec.teacher_width),
                    static_cast<Eigen::Index>(d));
  for (Eigen::Index j = 0; j < w.rows(); ++j) {
    for (Eigen::Index k = 0; k < w.cols(); ++k) w(j, k) = teacher.normal();
  }
  std::vector<double> head(spec.teacher_width);
  for (double& h : head) h = teacher.sign();

  Dataset ds;
  ds.kind = DatasetKind::kImages;
  ds.images.reserve(spec.n);
  ds.targets.resize(static_cast<Eigen::Index>(spec.n), 1);
  Eigen::VectorXd flat(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < spec.n; ++i) {
    DenseTensor img({spec.height, spec.width, spec.channels});
    for (double& v : img.data()) v = data.normal();
    for (std::size_t k = 0; k < d; ++k) flat(static_cast<Eigen::Index>(k)) = img.data()[k];
    ds.targets(static_cast<Eigen::Index>(i), 0) =
        detail::planted_relu_target(w, head, flat) + spec.noise * label_noise.normal();
    ds.images.push_back(std::move(img));
  }
  assign_split(ds, spec.test_fraction, root.child(4));
  ds.validate();
  return ds;
}

}  // namespace tsk
