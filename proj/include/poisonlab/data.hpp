#pragma once

// Datasets: synthetic generators, the IDX (MNIST) reader and split helpers.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "poisonlab/errors.hpp"
#include "poisonlab/mathcore.hpp"

namespace poisonlab {

enum class Task { classification, regression };

/// A weighted-uniform empirical distribution: n feature rows and labels.
///
/// Classification labels are class indices 0..classes-1 stored as doubles.
/// `soft_labels`, when present, is an n x classes matrix of label
/// distributions that takes precedence over `y` (used by label-optimizing
/// attacks). `box_lo`/`box_hi` bound the admissible feature domain; synthetic
/// generators leave features unbounded.
struct Dataset {
  Matrix x;
  Vector y;
  Task task = Task::classification;
  int classes = 2;
  Vector box_lo;
  Vector box_hi;
  std::optional<Matrix> soft_labels;

  std::size_t size() const noexcept { return x.rows(); }
  std::size_t dim() const noexcept { return x.cols(); }
  bool is_classification() const noexcept { return task == Task::classification; }

  void validate() const {
    if (x.rows() == 0) throw DataError("Dataset: empty");
    if (y.size() != x.rows()) throw ShapeError("Dataset: label count does not match rows");
    if (box_lo.size() != x.cols() || box_hi.size() != x.cols())
      throw ShapeError("Dataset: domain box width mismatch");
    for (std::size_t j = 0; j < box_lo.size(); ++j)
      if (!(box_lo[j] <= box_hi[j])) throw DataError("Dataset: domain box lo > hi");
    if (!all_finite(x.data())) throw DataError("Dataset: non-finite feature");
    if (is_classification()) {
      if (classes < 2) throw DataError("Dataset: classification needs at least 2 classes");
      for (double v : y)
        if (v < 0 || v >= classes || v != std::floor(v))
          throw DataError("Dataset: class label out of range");
      if (soft_labels && (soft_labels->rows() != x.rows() ||
                          soft_labels->cols() != static_cast<std::size_t>(classes)))
        throw ShapeError("Dataset: soft label shape mismatch");
    }
  }
};

inline Vector unbounded_lo(std::size_t d) { return Vector(d, -std::numeric_limits<double>::infinity()); }
inline Vector unbounded_hi(std::size_t d) { return Vector(d, std::numeric_limits<double>::infinity()); }

/// Rows of `ds` selected by `idx`, in that order.
inline Dataset subset(const Dataset& ds, std::span<const std::size_t> idx) {
  Dataset out;
  out.task = ds.task;
  out.classes = ds.classes;
  out.box_lo = ds.box_lo;
  out.box_hi = ds.box_hi;
  out.x = Matrix(idx.size(), ds.dim());
  out.y.resize(idx.size());
  if (ds.soft_labels) out.soft_labels = Matrix(idx.size(), ds.soft_labels->cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const std::size_t i = idx[k];
    if (i >= ds.size()) throw ShapeError("subset: index out of range");
    std::copy(ds.x.row(i).begin(), ds.x.row(i).end(), out.x.row(k).begin());
    out.y[k] = ds.y[i];
    if (ds.soft_labels)
      std::copy(ds.soft_labels->row(i).begin(), ds.soft_labels->row(i).end(),
                out.soft_labels->row(k).begin());
  }
  return out;
}

/// Stacks `b` under `a`. The result keeps `a`'s domain box.
inline Dataset concat(const Dataset& a, const Dataset& b) {
  if (b.size() == 0) return a;
  if (a.dim() != b.dim() || a.task != b.task || a.classes != b.classes)
    throw ShapeError("concat: incompatible datasets");
  Dataset out = a;
  out.x = Matrix(a.size() + b.size(), a.dim());
  std::copy(a.x.data().begin(), a.x.data().end(), out.x.data().begin());
  std::copy(b.x.data().begin(), b.x.data().end(), out.x.data().begin() + a.x.data().size());
  out.y.insert(out.y.end(), b.y.begin(), b.y.end());
  if (a.soft_labels || b.soft_labels) {
    const std::size_t c = static_cast<std::size_t>(a.classes);
    Matrix soft(out.size(), c);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const Dataset& src = i < a.size() ? a : b;
      const std::size_t k = i < a.size() ? i : i - a.size();
      if (src.soft_labels) {
        std::copy(src.soft_labels->row(k).begin(), src.soft_labels->row(k).end(), soft.row(i).begin());
      } else {
        soft(i, static_cast<std::size_t>(src.y[k])) = 1.0;
      }
    }
    out.soft_labels = std::move(soft);
  }
  return out;
}

/// Appends a constant-1 feature (unbounded in the domain box).
inline Dataset with_bias(const Dataset& ds) {
  Dataset out = ds;
  const std::size_t d = ds.dim() + 1;
  out.x = Matrix(ds.size(), d);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto r = ds.x.row(i);
    std::copy(r.begin(), r.end(), out.x.row(i).begin());
    out.x(i, d - 1) = 1.0;
  }
  out.box_lo.push_back(-std::numeric_limits<double>::infinity());
  out.box_hi.push_back(std::numeric_limits<double>::infinity());
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generators. All are pure functions of their arguments.

/// Noisy 2-D OR truth table, each corner repeated `reps` times, bias appended.
inline Dataset gen_or(std::uint64_t seed, int reps, double noise_sigma) {
  if (reps < 1) throw DomainError("gen_or: reps must be >= 1");
  if (noise_sigma < 0) throw DomainError("gen_or: noise_sigma must be >= 0");
  static constexpr std::array<std::array<double, 3>, 4> corners{{
      {0, 0, 0}, {0, 1, 1}, {1, 0, 1}, {1, 1, 1}}};
  Rng rng(seed, 0x0f);
  Dataset ds;
  ds.task = Task::classification;
  ds.classes = 2;
  ds.x = Matrix(4 * static_cast<std::size_t>(reps), 2);
  ds.y.resize(ds.x.rows());
  std::size_t i = 0;
  for (int r = 0; r < reps; ++r) {
    for (const auto& c : corners) {
      ds.x(i, 0) = c[0] + noise_sigma * rng.normal();
      ds.x(i, 1) = c[1] + noise_sigma * rng.normal();
      ds.y[i] = c[2];
      ++i;
    }
  }
  ds.box_lo = unbounded_lo(2);
  ds.box_hi = unbounded_hi(2);
  return with_bias(ds);
}

/// Two balanced unit-covariance Gaussian classes at +-(sep/2) u, bias appended.
inline Dataset gen_gauss_classification(std::uint64_t seed, int n, int d, double sep) {
  if (n < 2 || d < 1) throw DomainError("gen_gauss_classification: need n >= 2, d >= 1");
  if (sep < 0) throw DomainError("gen_gauss_classification: sep must be >= 0");
  Rng rng(seed, 0x9a);
  const Vector u = rng.unit_vector(static_cast<std::size_t>(d));
  Dataset ds;
  ds.task = Task::classification;
  ds.classes = 2;
  ds.x = Matrix(static_cast<std::size_t>(n), static_cast<std::size_t>(d));
  ds.y.resize(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
    const int label = static_cast<int>(i % 2);
    const double shift = (label == 1 ? 0.5 : -0.5) * sep;
    for (std::size_t j = 0; j < static_cast<std::size_t>(d); ++j)
      ds.x(i, j) = rng.normal() + shift * u[j];
    ds.y[i] = label;
  }
  ds.box_lo = unbounded_lo(static_cast<std::size_t>(d));
  ds.box_hi = unbounded_hi(static_cast<std::size_t>(d));
  return with_bias(ds);
}

/// x ~ N(0, I), y = w_true^T x + noise * xi. No bias feature.
inline Dataset gen_gauss_regression(std::uint64_t seed, int n, int d, std::span<const double> w_true,
                                    double noise) {
  if (d < 1 || n < d) throw DomainError("gen_gauss_regression: need n >= d >= 1");
  if (w_true.size() != static_cast<std::size_t>(d)) throw ShapeError("gen_gauss_regression: w_true length");
  Rng rng(seed, 0x7e);
  Dataset ds;
  ds.task = Task::regression;
  ds.classes = 0;
  ds.x = Matrix(static_cast<std::size_t>(n), static_cast<std::size_t>(d));
  ds.y.resize(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
    for (std::size_t j = 0; j < static_cast<std::size_t>(d); ++j) ds.x(i, j) = rng.normal();
    ds.y[i] = dot(ds.x.row(i), w_true) + noise * rng.normal();
  }
  ds.box_lo = unbounded_lo(static_cast<std::size_t>(d));
  ds.box_hi = unbounded_hi(static_cast<std::size_t>(d));
  return ds;
}

/// The three-point logistic toy set: (1,1)+, (-1,1)+, (0,1)-, with the
/// constant feature already in the last coordinate. Its logistic-regression
/// optimum is w* = (0, ln 2).
inline Dataset gen_toy3() {
  Dataset ds;
  ds.task = Task::classification;
  ds.classes = 2;
  ds.x = Matrix(3, 2, {1, 1, -1, 1, 0, 1});
  ds.y = {1, 1, 0};
  ds.box_lo = unbounded_lo(2);
  ds.box_hi = unbounded_hi(2);
  return ds;
}

// ---------------------------------------------------------------------------
// Splitting.

/// Shuffled disjoint partition with sizes ceil(n * train_frac) and the rest.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double train_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw DomainError("split: train_frac must be in (0, 1)");
  const std::size_t n = ds.size();
  // The guard keeps products like 200 * 0.7 = 140.00000000000003 at 140.
  const auto n_train = std::min(
      n, static_cast<std::size_t>(std::ceil(static_cast<double>(n) * train_frac - 1e-9)));
  Rng rng(seed, 0x5b);
  const auto perm = rng.permutation(n);
  const std::span<const std::size_t> all(perm);
  return {subset(ds, all.first(n_train)), subset(ds, all.subspan(n_train))};
}

// ---------------------------------------------------------------------------
// IDX binary format (big-endian header, unsigned-byte payload).

class IdxError : public DataError {
 public:
  enum class Kind { io, bad_magic, truncated, dimension_overflow };
  IdxError(Kind kind, const std::string& msg) : DataError(msg), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;

/// Parses an in-memory IDX blob into a matrix: labels become n x 1, images
/// n x (rows*cols). Raw byte values are kept (no scaling).
inline Matrix parse_idx(std::span<const unsigned char> bytes) {
  auto read_be32 = [&](std::size_t off) -> std::uint32_t {
    if (off + 4 > bytes.size()) throw IdxError(IdxError::Kind::truncated, "IDX: truncated header");
    return (std::uint32_t{bytes[off]} << 24) | (std::uint32_t{bytes[off + 1]} << 16) |
           (std::uint32_t{bytes[off + 2]} << 8) | std::uint32_t{bytes[off + 3]};
  };
  const std::uint32_t magic = read_be32(0);
  if (magic != kIdxLabelMagic && magic != kIdxImageMagic) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "IDX: unsupported magic number 0x%08x", magic);
    throw IdxError(IdxError::Kind::bad_magic, buf);
  }
  const std::size_t ndim = magic & 0xff;
  std::vector<std::uint64_t> dims(ndim);
  for (std::size_t k = 0; k < ndim; ++k) dims[k] = read_be32(4 + 4 * k);

  constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 40;
  std::uint64_t total = 1;
  for (auto dsz : dims) {
    if (dsz != 0 && total > kMaxElements / dsz)
      throw IdxError(IdxError::Kind::dimension_overflow, "IDX: dimension product overflows");
    total *= dsz;
  }
  const std::size_t header = 4 + 4 * ndim;
  if (bytes.size() < header + total)
    throw IdxError(IdxError::Kind::truncated, "IDX: payload shorter than declared dimensions");

  const std::size_t rows = static_cast<std::size_t>(dims[0]);
  const std::size_t cols = ndim == 1 ? 1 : static_cast<std::size_t>(dims[1] * dims[2]);
  std::vector<double> data(static_cast<std::size_t>(total));
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = bytes[header + i];
  return Matrix(rows, cols, std::move(data));
}

inline Matrix load_idx(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxError::Kind::io, "IDX: cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_idx(bytes);
}

/// Serializes images (n x rows*cols, values 0..255) or labels (cols == 0).
inline std::vector<unsigned char> encode_idx(const Matrix& m, std::uint32_t img_rows = 0,
                                             std::uint32_t img_cols = 0) {
  std::vector<unsigned char> out;
  auto put_be32 = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<unsigned char>((v >> s) & 0xff));
  };
  const bool images = img_rows > 0;
  put_be32(images ? kIdxImageMagic : kIdxLabelMagic);
  put_be32(static_cast<std::uint32_t>(m.rows()));
  if (images) {
    put_be32(img_rows);
    put_be32(img_cols);
  }
  for (double v : m.data()) out.push_back(static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L)));
  return out;
}

struct TrainTest {
  Dataset train;
  Dataset test;
};

namespace detail {

inline Dataset mnist_part(const std::filesystem::path& images, const std::filesystem::path& labels,
                          const std::vector<int>& keep) {
  const Matrix img = load_idx(images);
  const Matrix lab = load_idx(labels);
  if (lab.cols() != 1) throw DataError("MNIST: label file has image layout");
  if (img.rows() != lab.rows()) throw DataError("MNIST: image/label count mismatch");

  Dataset ds;
  ds.task = Task::classification;
  ds.classes = keep.empty() ? 10 : static_cast<int>(keep.size());
  std::vector<double> data;
  for (std::size_t i = 0; i < img.rows(); ++i) {
    const int orig = static_cast<int>(lab(i, 0));
    int label = orig;
    if (!keep.empty()) {
      auto it = std::find(keep.begin(), keep.end(), orig);
      if (it == keep.end()) continue;
      label = static_cast<int>(it - keep.begin());
    } else if (orig > 9) {
      throw DataError("MNIST: label out of range");
    }
    for (double v : img.row(i)) data.push_back(v / 255.0);
    ds.y.push_back(label);
  }
  ds.x = Matrix(ds.y.size(), img.cols(), std::move(data));
  ds.box_lo = Vector(img.cols(), 0.0);
  ds.box_hi = Vector(img.cols(), 1.0);
  return ds;
}

}  // namespace detail

/// Loads the four standard MNIST IDX files from `dir`. Pixels are scaled to
/// [0, 1]; `keep_classes` filters and relabels to 0..c-1 in sorted order.
inline TrainTest load_mnist(const std::filesystem::path& dir, const std::set<int>& keep_classes = {}) {
  const std::vector<int> keep(keep_classes.begin(), keep_classes.end());
  return {detail::mnist_part(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", keep),
          detail::mnist_part(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", keep)};
}

}  // namespace poisonlab
