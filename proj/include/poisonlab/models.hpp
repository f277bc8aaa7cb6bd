#pragma once

// Model families: least squares, binary logistic, softmax-linear and a
// one-hidden-layer leaky-ReLU network. For each: loss, parameter gradient,
// the mixed product grad_x <grad_w loss, v>, and prediction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "poisonlab/data.hpp"
#include "poisonlab/errors.hpp"
#include "poisonlab/mathcore.hpp"

namespace poisonlab {

enum class Family { least_squares, logistic_binary, softmax_linear, mlp1 };

inline std::string_view to_string(Family f) {
  switch (f) {
    case Family::least_squares: return "least_squares";
    case Family::logistic_binary: return "logistic_binary";
    case Family::softmax_linear: return "softmax_linear";
    case Family::mlp1: return "mlp1";
  }
  return "?";
}

inline Family family_from_string(std::string_view s) {
  if (s == "least_squares" || s == "ls") return Family::least_squares;
  if (s == "logistic_binary" || s == "logistic" || s == "lr") return Family::logistic_binary;
  if (s == "softmax_linear" || s == "softmax") return Family::softmax_linear;
  if (s == "mlp1" || s == "nn" || s == "mlp") return Family::mlp1;
  throw ConfigError("unknown model family '" + std::string(s) +
                    "' (expected least_squares, logistic_binary, softmax_linear or mlp1)");
}

/// Model family plus the shape information needed to interpret Params.
///
/// Parameter layouts (all row-major, flat):
///   least_squares, logistic_binary: w[d]
///   softmax_linear: W[d x c], h = W^T x
///   mlp1: U[hidden x d] followed by W[hidden x c], h = W^T leaky(U x)
struct ModelSpec {
  Family family = Family::logistic_binary;
  std::size_t input_dim = 0;
  int classes = 2;
  int hidden = 0;
  double leaky_slope = 0.2;

  static ModelSpec least_squares(std::size_t d) { return {Family::least_squares, d, 0, 0, 0.2}; }
  static ModelSpec logistic(std::size_t d) { return {Family::logistic_binary, d, 2, 0, 0.2}; }
  static ModelSpec softmax(std::size_t d, int c) { return {Family::softmax_linear, d, c, 0, 0.2}; }
  static ModelSpec mlp(std::size_t d, int hidden, int c, double slope = 0.2) {
    return {Family::mlp1, d, c, hidden, slope};
  }

  bool is_classifier() const noexcept { return family != Family::least_squares; }
  std::size_t num_classes() const noexcept { return static_cast<std::size_t>(classes); }

  /// Offset of the output block W inside the flat parameter vector.
  std::size_t output_offset() const noexcept {
    return family == Family::mlp1 ? static_cast<std::size_t>(hidden) * input_dim : 0;
  }

  std::size_t num_params() const noexcept {
    switch (family) {
      case Family::least_squares:
      case Family::logistic_binary: return input_dim;
      case Family::softmax_linear: return input_dim * num_classes();
      case Family::mlp1:
        return static_cast<std::size_t>(hidden) * (input_dim + num_classes());
    }
    return 0;
  }

  void validate() const {
    if (input_dim == 0) throw ConfigError("ModelSpec: input_dim must be positive");
    if (is_classifier() && classes < 2) throw ConfigError("ModelSpec: classes must be >= 2");
    if (family == Family::logistic_binary && classes != 2)
      throw ConfigError("ModelSpec: logistic_binary has exactly 2 classes");
    if (family == Family::mlp1) {
      if (hidden < 1) throw ConfigError("ModelSpec: hidden must be >= 1");
      if (!(leaky_slope > 0.0 && leaky_slope < 1.0))
        throw ConfigError("ModelSpec: leaky_slope must lie in (0, 1)");
    }
  }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Flat parameter vector; its layout is defined by a ModelSpec.
struct Params {
  Vector values;

  std::size_t size() const noexcept { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  std::span<const double> view() const noexcept { return values; }

  friend bool operator==(const Params&, const Params&) = default;
};

/// Label of one sample: a class index / regression target, or a soft label
/// distribution over classes when `soft` is non-empty.
struct Label {
  double y = 0.0;
  std::span<const double> soft{};
};

inline Label label_at(const Dataset& ds, std::size_t i) {
  if (ds.soft_labels) return {ds.y[i], ds.soft_labels->row(i)};
  return {ds.y[i], {}};
}

inline void check_shapes(const ModelSpec& spec, const Params& p, std::span<const double> x) {
  if (p.size() != spec.num_params())
    throw ShapeError("parameter length " + std::to_string(p.size()) + " does not match model (" +
                     std::to_string(spec.num_params()) + ")");
  if (x.size() != spec.input_dim)
    throw ShapeError("feature length " + std::to_string(x.size()) + " does not match model input (" +
                     std::to_string(spec.input_dim) + ")");
}

namespace detail {

/// Probability that the label assigns to class k.
inline double target_prob(const Label& lab, std::size_t k) {
  if (!lab.soft.empty()) return lab.soft[k];
  return static_cast<std::size_t>(lab.y) == k ? 1.0 : 0.0;
}

inline double log_sum_exp(std::span<const double> h) {
  const double m = *std::max_element(h.begin(), h.end());
  double s = 0.0;
  for (double v : h) s += std::exp(v - m);
  return m + std::log(s);
}

inline Vector softmax(std::span<const double> h) {
  const double m = *std::max_element(h.begin(), h.end());
  Vector p(h.size());
  double s = 0.0;
  for (std::size_t k = 0; k < h.size(); ++k) s += p[k] = std::exp(h[k] - m);
  for (double& v : p) v /= s;
  return p;
}

/// Forward pass of the output layer: logits h (c entries; binary uses a
/// single score) and, for mlp1, the hidden pre-activations and features.
struct Forward {
  Vector z;    // mlp1 pre-activations
  Vector phi;  // mlp1 features (or x itself for linear families)
  Vector h;    // logits / score
};

inline Forward forward(const ModelSpec& spec, const Params& p, std::span<const double> x) {
  Forward f;
  const std::size_t d = spec.input_dim;
  const std::size_t c = spec.num_classes();
  switch (spec.family) {
    case Family::least_squares:
    case Family::logistic_binary:
      f.h = {dot(p.view(), x)};
      break;
    case Family::softmax_linear: {
      f.h.assign(c, 0.0);
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t k = 0; k < c; ++k) f.h[k] += x[i] * p[i * c + k];
      break;
    }
    case Family::mlp1: {
      const std::size_t hd = static_cast<std::size_t>(spec.hidden);
      f.z.resize(hd);
      f.phi.resize(hd);
      for (std::size_t j = 0; j < hd; ++j) {
        f.z[j] = dot(p.view().subspan(j * d, d), x);
        f.phi[j] = f.z[j] > 0.0 ? f.z[j] : spec.leaky_slope * f.z[j];
      }
      const std::size_t off = spec.output_offset();
      f.h.assign(c, 0.0);
      for (std::size_t j = 0; j < hd; ++j)
        for (std::size_t k = 0; k < c; ++k) f.h[k] += f.phi[j] * p[off + j * c + k];
      break;
    }
  }
  return f;
}

/// d loss / d h (output-space gradient).
inline Vector output_grad(const ModelSpec& spec, const Forward& f, const Label& lab) {
  switch (spec.family) {
    case Family::least_squares: return {f.h[0] - lab.y};
    case Family::logistic_binary: return {sigmoid(f.h[0]) - target_prob(lab, 1)};
    case Family::softmax_linear:
    case Family::mlp1: {
      Vector delta = softmax(f.h);
      for (std::size_t k = 0; k < delta.size(); ++k) delta[k] -= target_prob(lab, k);
      return delta;
    }
  }
  return {};
}

inline double leaky_slope_at(const ModelSpec& spec, double z) { return z > 0.0 ? 1.0 : spec.leaky_slope; }

}  // namespace detail

/// Per-sample loss.
inline double loss(const ModelSpec& spec, const Params& p, std::span<const double> x, const Label& lab) {
  check_shapes(spec, p, x);
  const auto f = detail::forward(spec, p, x);
  switch (spec.family) {
    case Family::least_squares: {
      const double r = lab.y - f.h[0];
      return 0.5 * r * r;
    }
    case Family::logistic_binary: {
      // -q log sigma(s) - (1-q) log sigma(-s) = softplus(s) - q s
      const double s = f.h[0];
      return softplus(s) - detail::target_prob(lab, 1) * s;
    }
    case Family::softmax_linear:
    case Family::mlp1: {
      double ce = detail::log_sum_exp(f.h);
      for (std::size_t k = 0; k < f.h.size(); ++k) ce -= detail::target_prob(lab, k) * f.h[k];
      return ce;
    }
  }
  return 0.0;
}

inline double loss(const ModelSpec& spec, const Params& p, std::span<const double> x, double y) {
  return loss(spec, p, x, Label{y, {}});
}

/// Analytic gradient of the per-sample loss with respect to the parameters.
inline Vector param_grad(const ModelSpec& spec, const Params& p, std::span<const double> x, const Label& lab) {
  check_shapes(spec, p, x);
  const auto f = detail::forward(spec, p, x);
  const Vector delta = detail::output_grad(spec, f, lab);
  const std::size_t d = spec.input_dim;
  const std::size_t c = spec.num_classes();
  Vector g(spec.num_params(), 0.0);
  switch (spec.family) {
    case Family::least_squares:
    case Family::logistic_binary:
      for (std::size_t i = 0; i < d; ++i) g[i] = delta[0] * x[i];
      break;
    case Family::softmax_linear:
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t k = 0; k < c; ++k) g[i * c + k] = x[i] * delta[k];
      break;
    case Family::mlp1: {
      const std::size_t hd = static_cast<std::size_t>(spec.hidden);
      const std::size_t off = spec.output_offset();
      for (std::size_t j = 0; j < hd; ++j) {
        double back = 0.0;  // (W delta)_j
        for (std::size_t k = 0; k < c; ++k) {
          g[off + j * c + k] = f.phi[j] * delta[k];
          back += p[off + j * c + k] * delta[k];
        }
        const double dz = detail::leaky_slope_at(spec, f.z[j]) * back;
        for (std::size_t i = 0; i < d; ++i) g[j * d + i] = dz * x[i];
      }
      break;
    }
  }
  return g;
}

inline Vector param_grad(const ModelSpec& spec, const Params& p, std::span<const double> x, double y) {
  return param_grad(spec, p, x, Label{y, {}});
}

/// Sum of per-sample parameter gradients over `ds`, accumulated in row order.
inline Vector sum_param_grad(const ModelSpec& spec, const Params& p, const Dataset& ds) {
  Vector s(spec.num_params(), 0.0);
  for (std::size_t i = 0; i < ds.size(); ++i) axpy(1.0, param_grad(spec, p, ds.x.row(i), label_at(ds, i)), s);
  return s;
}

/// g(mu): mean parameter gradient over the dataset.
inline Vector mean_param_grad(const ModelSpec& spec, const Params& p, const Dataset& ds) {
  if (ds.size() == 0) throw DataError("mean_param_grad: empty dataset");
  Vector s = sum_param_grad(spec, p, ds);
  const double inv = 1.0 / static_cast<double>(ds.size());
  for (double& v : s) v *= inv;
  return s;
}

inline double mean_loss(const ModelSpec& spec, const Params& p, const Dataset& ds) {
  double s = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) s += loss(spec, p, ds.x.row(i), label_at(ds, i));
  return s / static_cast<double>(ds.size());
}

/// grad_x < grad_w loss(x, y; w), v >: the mixed second-order product that
/// drives feature updates of gradient-canceling attacks. Labels are held fixed.
inline Vector mixed_vjp(const ModelSpec& spec, const Params& p, std::span<const double> x, const Label& lab,
                        std::span<const double> v) {
  check_shapes(spec, p, x);
  if (v.size() != spec.num_params()) throw ShapeError("mixed_vjp: direction length mismatch");
  const auto f = detail::forward(spec, p, x);
  const Vector delta = detail::output_grad(spec, f, lab);
  const std::size_t d = spec.input_dim;
  const std::size_t c = spec.num_classes();
  Vector out(d, 0.0);
  switch (spec.family) {
    case Family::least_squares: {
      // (x^T v) w + (w^T x - y) v
      const double xv = dot(x, v);
      for (std::size_t i = 0; i < d; ++i) out[i] = xv * p[i] + delta[0] * v[i];
      break;
    }
    case Family::logistic_binary: {
      // (sigma(s) - q) v + sigma(s) sigma(-s) (x^T v) w
      const double s = f.h[0];
      const double curv = sigmoid(s) * sigmoid(-s) * dot(x, v);
      for (std::size_t i = 0; i < d; ++i) out[i] = delta[0] * v[i] + curv * p[i];
      break;
    }
    case Family::softmax_linear: {
      // V (p - q) + W (diag(p) - p p^T) V^T x
      const Vector prob = detail::softmax(f.h);
      Vector a(c, 0.0);  // V^T x
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t k = 0; k < c; ++k) a[k] += x[i] * v[i * c + k];
      const double pa = dot(prob, a);
      Vector ja(c);
      for (std::size_t k = 0; k < c; ++k) ja[k] = prob[k] * (a[k] - pa);
      for (std::size_t i = 0; i < d; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < c; ++k) s += v[i * c + k] * delta[k] + p[i * c + k] * ja[k];
        out[i] = s;
      }
      break;
    }
    case Family::mlp1: {
      // With s = leaky'(z), r = W delta, e = V_W^T phi + W^T (s . V_U x), J = diag(p) - p p^T:
      //   grad_x = V_U^T (s . r) + U^T (s . (V_W delta + W J e))
      const std::size_t hd = static_cast<std::size_t>(spec.hidden);
      const std::size_t off = spec.output_offset();
      const Vector prob = detail::softmax(f.h);
      Vector slope(hd), r(hd, 0.0), vux(hd), vwd(hd, 0.0);
      for (std::size_t j = 0; j < hd; ++j) {
        slope[j] = detail::leaky_slope_at(spec, f.z[j]);
        vux[j] = dot(v.subspan(j * d, d), x);
        for (std::size_t k = 0; k < c; ++k) {
          r[j] += p[off + j * c + k] * delta[k];
          vwd[j] += v[off + j * c + k] * delta[k];
        }
      }
      Vector e(c, 0.0);
      for (std::size_t j = 0; j < hd; ++j)
        for (std::size_t k = 0; k < c; ++k)
          e[k] += v[off + j * c + k] * f.phi[j] + p[off + j * c + k] * slope[j] * vux[j];
      const double pe = dot(prob, e);
      Vector je(c);
      for (std::size_t k = 0; k < c; ++k) je[k] = prob[k] * (e[k] - pe);
      for (std::size_t j = 0; j < hd; ++j) {
        double wje = 0.0;
        for (std::size_t k = 0; k < c; ++k) wje += p[off + j * c + k] * je[k];
        const double through_u = slope[j] * (vwd[j] + wje);
        const double direct = slope[j] * r[j];
        for (std::size_t i = 0; i < d; ++i) out[i] += through_u * p[j * d + i] + direct * v[j * d + i];
      }
      break;
    }
  }
  return out;
}

inline Vector mixed_vjp(const ModelSpec& spec, const Params& p, std::span<const double> x, double y,
                        std::span<const double> v) {
  return mixed_vjp(spec, p, x, Label{y, {}}, v);
}

/// Derivative of < grad_w loss(x, q; w), v > with respect to the soft label q
/// (c entries), or with respect to the target y for least squares (1 entry).
inline Vector label_vjp(const ModelSpec& spec, const Params& p, std::span<const double> x,
                        std::span<const double> v) {
  check_shapes(spec, p, x);
  const std::size_t d = spec.input_dim;
  const std::size_t c = spec.num_classes();
  switch (spec.family) {
    case Family::least_squares: return {-dot(x, v)};
    case Family::logistic_binary: return {0.0, -dot(x, v)};
    case Family::softmax_linear: {
      Vector out(c, 0.0);
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t k = 0; k < c; ++k) out[k] -= x[i] * v[i * c + k];
      return out;
    }
    case Family::mlp1: {
      const auto f = detail::forward(spec, p, x);
      const std::size_t hd = static_cast<std::size_t>(spec.hidden);
      const std::size_t off = spec.output_offset();
      Vector out(c, 0.0);
      for (std::size_t j = 0; j < hd; ++j) {
        const double s = detail::leaky_slope_at(spec, f.z[j]) * dot(v.subspan(j * d, d), x);
        for (std::size_t k = 0; k < c; ++k) out[k] -= v[off + j * c + k] * f.phi[j] + p[off + j * c + k] * s;
      }
      return out;
    }
  }
  return {};
}

/// <h, d loss/d h>: the per-sample term whose mean is the alignment
/// <w, g(mu)> (scalar-output families) or tr(W^T G(mu)) restricted to the
/// output block (softmax_linear, mlp1).
inline double output_alignment(const ModelSpec& spec, const Params& p, std::span<const double> x,
                               const Label& lab) {
  check_shapes(spec, p, x);
  const auto f = detail::forward(spec, p, x);
  return dot(f.h, detail::output_grad(spec, f, lab));
}

/// Predicted class: sign rule for binary (ties to class 0), argmax otherwise
/// (ties to the smallest index).
inline int predict(const ModelSpec& spec, const Params& p, std::span<const double> x) {
  if (!spec.is_classifier()) throw DomainError("predict: regression model has no class prediction");
  check_shapes(spec, p, x);
  const auto f = detail::forward(spec, p, x);
  if (spec.family == Family::logistic_binary) return f.h[0] > 0.0 ? 1 : 0;
  return static_cast<int>(std::max_element(f.h.begin(), f.h.end()) - f.h.begin());
}

inline double accuracy(const ModelSpec& spec, const Params& p, const Dataset& ds) {
  if (!ds.is_classification() || !spec.is_classifier())
    throw DomainError("accuracy: requires a classification task");
  if (ds.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (predict(spec, p, ds.x.row(i)) == static_cast<int>(ds.y[i])) ++correct;
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

/// Deterministic initialization: zeros for linear families, scaled Gaussian
/// weights for mlp1.
inline Params init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Params p{Vector(spec.num_params(), 0.0)};
  if (spec.family == Family::mlp1) {
    Rng rng(seed, 0x1417);
    const double su = std::sqrt(2.0 / static_cast<double>(spec.input_dim));
    const double sw = std::sqrt(1.0 / static_cast<double>(spec.hidden));
    const std::size_t off = spec.output_offset();
    for (std::size_t i = 0; i < off; ++i) p[i] = su * rng.normal();
    for (std::size_t i = off; i < p.size(); ++i) p[i] = sw * rng.normal();
  }
  return p;
}

/// Model spec matching a dataset's shape and label space.
inline ModelSpec spec_for(Family family, const Dataset& ds, int hidden = 16, double slope = 0.2) {
  ModelSpec spec{family, ds.dim(), ds.is_classification() ? ds.classes : 0, 0, slope};
  if (family == Family::mlp1) spec.hidden = hidden;
  spec.validate();
  return spec;
}

}  // namespace poisonlab
