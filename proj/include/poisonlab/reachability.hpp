#pragma once

// Poisoning-reachability thresholds.
//
// A target w is lambda-reachable when some admissible poison distribution nu
// makes the mixed gradient (1 - lambda) g(mu) + lambda g(nu) vanish. For
// margin losses this reduces to an interval condition on the alignment
// <w, g(mu)> against the extreme values (a, b) of t * l'(t); for
// cross-entropy it gives the threshold tau(c) = max{alignment / W((c-1)/e), 0}.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "poisonlab/data.hpp"
#include "poisonlab/errors.hpp"
#include "poisonlab/mathcore.hpp"
#include "poisonlab/models.hpp"

namespace poisonlab {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Degeneracy { none, zero_grad, zero_alignment };

inline std::string_view to_string(Degeneracy d) {
  switch (d) {
    case Degeneracy::none: return "none";
    case Degeneracy::zero_grad: return "zero_grad";
    case Degeneracy::zero_alignment: return "zero_alignment";
  }
  return "?";
}

struct ThresholdReport {
  double alignment = 0.0;
  double a = -kInf;
  double b = kInf;
  double lambda_star = 0.0;  ///< NaN when undefined
  double tau = 0.0;          ///< threshold under the requested class convention
  double tau2 = 0.0;         ///< threshold under the c = 2 convention
  int classes = 2;           ///< class count used for `tau`
  double grad_norm = 0.0;    ///< ||g(mu)||
  Degeneracy degenerate = Degeneracy::none;
};

inline double lambda_to_tau(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("lambda_to_tau: lambda outside [0, 1]");
  return lambda >= 1.0 ? kInf : lambda / (1.0 - lambda);
}

inline double tau_to_lambda(double tau) {
  if (!(tau >= 0.0)) throw DomainError("tau_to_lambda: tau must be >= 0");
  return std::isinf(tau) ? 1.0 : tau / (1.0 + tau);
}

/// Alignment <w, g(mu)> for scalar-output families, tr(W^T G(mu)) =
/// E <h, p - y> for softmax_linear, and the same trace over the output block
/// for mlp1.
inline double alignment(const ModelSpec& spec, const Params& p, const Dataset& ds) {
  if (ds.size() == 0) throw DataError("alignment: empty dataset");
  double s = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) s += output_alignment(spec, p, ds.x.row(i), label_at(ds, i));
  return s / static_cast<double>(ds.size());
}

// ---------------------------------------------------------------------------
// Margin bounds.

enum class MarginLoss { logistic, square, hinge, exponential, dichotomy };

inline MarginLoss margin_loss_from_string(std::string_view s) {
  if (s == "logistic") return MarginLoss::logistic;
  if (s == "square") return MarginLoss::square;
  if (s == "hinge") return MarginLoss::hinge;
  if (s == "exponential") return MarginLoss::exponential;
  if (s == "dichotomy") return MarginLoss::dichotomy;
  throw DomainError("unknown margin loss '" + std::string(s) +
                    "' (expected logistic, square, hinge, exponential or dichotomy)");
}

/// The smoothed-perceptron "dichotomy" loss: -(4t+1)e^-2 for t <= -1/2,
/// exp(1/t) on [-1/2, 0), and 0 for t >= 0.
inline double dichotomy_loss(double t) {
  if (t <= -0.5) return -(4.0 * t + 1.0) * std::exp(-2.0);
  if (t < 0.0) return std::exp(1.0 / t);
  return 0.0;
}

inline double dichotomy_derivative(double t) {
  if (t <= -0.5) return -4.0 * std::exp(-2.0);
  if (t < 0.0) return -std::exp(1.0 / t) / (t * t);
  return 0.0;
}

/// t * l'(t) for a decreasing margin loss. Not defined for `square`, whose
/// value also depends on the regression target.
inline double margin_term(MarginLoss kind, double t) {
  switch (kind) {
    case MarginLoss::logistic: return -t * sigmoid(-t);
    case MarginLoss::hinge: return t < 1.0 ? -t : 0.0;
    case MarginLoss::exponential: return -t * std::exp(-t);
    case MarginLoss::dichotomy: return t * dichotomy_derivative(t);
    case MarginLoss::square: break;
  }
  throw DomainError("margin_term: square loss depends on the target value");
}

struct Interval {
  double lo;
  double hi;
};

namespace detail {

/// Golden-section refinement of the extremum of f near `center` inside [lo, hi].
template <typename F>
double refine_extremum(F&& f, double lo, double hi, bool minimize) {
  constexpr double kPhi = 0.6180339887498949;
  auto val = [&](double t) { return minimize ? f(t) : -f(t); };
  double a = lo, b = hi;
  double c = b - kPhi * (b - a), d = a + kPhi * (b - a);
  double fc = val(c), fd = val(d);
  for (int it = 0; it < 200 && (b - a) > 1e-15 * (1.0 + std::abs(a) + std::abs(b)); ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kPhi * (b - a);
      fc = val(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kPhi * (b - a);
      fd = val(d);
    }
  }
  return f(0.5 * (a + b));
}

}  // namespace detail

/// (a, b) = (inf, sup) of t * l'(t) over the margin range `t_range`.
///
/// Over the whole real line the values are analytic. For a bounded range they
/// come from a dense grid plus golden-section refinement around the best grid
/// point; an infinite lower end sends b to +inf (every supported loss has
/// t l'(t) -> +inf as t -> -inf), an infinite upper end contributes the limit 0.
inline Interval margin_bounds(MarginLoss kind, Interval t_range = {-kInf, kInf}) {
  if (!(t_range.lo <= t_range.hi)) throw DomainError("margin_bounds: empty t_range");
  if (kind == MarginLoss::square) return {-kInf, kInf};

  if (std::isinf(t_range.lo) && std::isinf(t_range.hi)) {
    switch (kind) {
      case MarginLoss::logistic: return {-lambert_w0(kInvE), kInf};
      case MarginLoss::hinge: return {-1.0, kInf};
      case MarginLoss::exponential: return {-kInvE, kInf};
      case MarginLoss::dichotomy: return {0.0, kInf};
      case MarginLoss::square: break;
    }
  }

  constexpr double kClip = 60.0;
  const double lo = std::max(t_range.lo, -kClip);
  const double hi = std::min(t_range.hi, kClip);
  auto f = [kind](double t) { return margin_term(kind, t); };

  double inf_v = kInf, sup_v = -kInf;
  if (lo <= hi) {
    constexpr int kGrid = 4000;
    const double step = (hi - lo) / kGrid;
    int arg_min = 0, arg_max = 0;
    for (int k = 0; k <= kGrid; ++k) {
      const double v = f(lo + step * k);
      if (v < inf_v) inf_v = v, arg_min = k;
      if (v > sup_v) sup_v = v, arg_max = k;
    }
    if (step > 0.0) {
      auto bracket = [&](int k) {
        return std::pair{std::max(lo, lo + step * (k - 1)), std::min(hi, lo + step * (k + 1))};
      };
      auto [a0, a1] = bracket(arg_min);
      inf_v = std::min(inf_v, detail::refine_extremum(f, a0, a1, true));
      auto [b0, b1] = bracket(arg_max);
      sup_v = std::max(sup_v, detail::refine_extremum(f, b0, b1, false));
    }
  }
  if (std::isinf(t_range.hi)) {
    inf_v = std::min(inf_v, 0.0);
    sup_v = std::max(sup_v, 0.0);
  }
  if (std::isinf(t_range.lo)) sup_v = kInf;
  return {inf_v, sup_v};
}

/// Smallest poison proportion lambda for which a linear target is reachable:
/// max{A / (A - a), -A / (b - A)} clamped to [0, 1]. A term whose
/// denominator is infinite counts as 0.
inline double lambda_threshold(double align, double a, double b) {
  const double slack = 1e-12 * std::max(1.0, std::abs(align));
  if (align < a - slack || align > b + slack)
    throw DomainError("lambda_threshold: alignment lies outside [a, b]; inputs are inconsistent");
  auto term = [](double num, double den) {
    if (std::isinf(den)) return 0.0;
    if (den <= 0.0) return num > 0.0 ? 1.0 : 0.0;
    return num / den;
  };
  const double t1 = std::isinf(a) ? 0.0 : term(align, align - a);
  const double t2 = std::isinf(b) ? 0.0 : term(-align, b - align);
  return std::clamp(std::max(t1, t2), 0.0, 1.0);
}

/// tau = max{alignment / W((c-1)/e), 0}, plus lambda* and degeneracy flags.
///
/// `c_convention` > 0 overrides the model's class count (2 gives the
/// binary-logistic convention); 0 uses the model's own count. Regression
/// families always report tau = 0.
inline ThresholdReport tau_threshold(const ModelSpec& spec, const Params& p, const Dataset& ds,
                                     int c_convention = 0) {
  ThresholdReport r;
  const Vector g = mean_param_grad(spec, p, ds);
  r.grad_norm = norm2(g);
  r.alignment = alignment(spec, p, ds);

  if (!spec.is_classifier()) {
    r.classes = 0;
    r.a = -kInf;
    r.b = kInf;
    r.tau = r.tau2 = r.lambda_star = 0.0;
    if (r.grad_norm <= 1e-12) r.degenerate = Degeneracy::zero_grad;
    return r;
  }

  r.classes = c_convention > 0 ? c_convention : spec.classes;
  if (r.classes < 2) throw DomainError("tau_threshold: class convention must be >= 2");
  const double wc = lambert_w0(static_cast<double>(r.classes - 1) * kInvE);
  r.a = -wc;
  r.b = kInf;

  if (r.grad_norm <= 1e-12) {
    // nu = mu already cancels the gradient.
    r.degenerate = Degeneracy::zero_grad;
    r.tau = r.tau2 = r.lambda_star = 0.0;
    return r;
  }
  if (std::abs(r.alignment) <= 1e-14 * std::max(1.0, r.grad_norm * norm2(p.view())))
    r.degenerate = Degeneracy::zero_alignment;

  r.tau = std::max(r.alignment / wc, 0.0);
  r.tau2 = std::max(r.alignment / lambert_w0(kInvE), 0.0);
  r.lambda_star = tau_to_lambda(r.tau);
  return r;
}

/// Necessary lower bound on eps_d for an mlp1 target, from the output block
/// alone (features phi(x; u) held fixed).
inline double nn_necessary_tau(const ModelSpec& spec, const Params& p, const Dataset& ds) {
  if (spec.family != Family::mlp1) throw DomainError("nn_necessary_tau: requires an mlp1 model");
  const double wc = lambert_w0(static_cast<double>(spec.classes - 1) * kInvE);
  return std::max(alignment(spec, p, ds) / wc, 0.0);
}

// ---------------------------------------------------------------------------
// Exact membership test 0 in (1 - lambda) g(mu) + lambda conv(grads).

namespace detail {

inline double cross(std::span<const double> o, std::span<const double> a, std::span<const double> b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

/// Whether point q lies in the convex hull of 2-D points (with tolerance).
inline bool in_hull_2d(const std::vector<Vector>& pts, const Vector& q, double tol) {
  std::vector<Vector> s = pts;
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  if (s.size() == 1) return distance(s[0], q) <= tol;

  // Andrew's monotone chain.
  std::vector<Vector> hull(2 * s.size());
  std::size_t k = 0;
  for (const auto& pt : s) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pt) <= 0) --k;
    hull[k++] = pt;
  }
  for (std::size_t i = s.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], s[i]) <= 0) --k;
    hull[k++] = s[i];
  }
  hull.resize(k - 1);

  auto dist_to_segment = [](const Vector& a, const Vector& b, const Vector& p) {
    const double dx = b[0] - a[0], dy = b[1] - a[1];
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double ex = a[0] + t * dx - p[0], ey = a[1] + t * dy - p[1];
    return std::sqrt(ex * ex + ey * ey);
  };

  if (hull.size() <= 2) {
    // All points collinear: the hull is the segment between the extremes.
    return dist_to_segment(s.front(), s.back(), q) <= tol;
  }
  bool inside = true;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    const double edge = std::hypot(b[0] - a[0], b[1] - a[1]);
    // Near-coincident vertices give edges whose direction is pure rounding.
    if (edge <= tol) continue;
    if (cross(a, b, q) < -tol * edge) inside = false;
  }
  if (inside) return true;
  for (std::size_t i = 0; i < hull.size(); ++i)
    if (dist_to_segment(hull[i], hull[(i + 1) % hull.size()], q) <= tol) return true;
  return false;
}

/// Frank-Wolfe with exact line search for min ||c + sum theta_i v_i||^2 over
/// the simplex; returns the final squared norm.
inline double simplex_min_norm(std::span<const double> c, const std::vector<Vector>& v, double gap_tol,
                               int max_iters) {
  const std::size_t dim = c.size();
  // Start at the vertex closest to the optimum.
  std::size_t best = 0;
  double best_val = kInf;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double val = dot(add(c, v[i]), add(c, v[i]));
    if (val < best_val) best_val = val, best = i;
  }
  Vector cur = v[best];  // current convex combination sum theta_i v_i
  for (int it = 0; it < max_iters; ++it) {
    const Vector r = add(c, cur);
    std::size_t s = 0;
    double smin = kInf;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double val = dot(r, v[i]);
      if (val < smin) smin = val, s = i;
    }
    const double gap = dot(r, cur) - smin;  // >= f - f* for f = 0.5 ||r||^2
    if (gap <= gap_tol) break;
    Vector dir(dim);
    for (std::size_t j = 0; j < dim; ++j) dir[j] = v[s][j] - cur[j];
    const double dd = dot(dir, dir);
    if (dd == 0.0) break;
    const double step = std::clamp(-dot(r, dir) / dd, 0.0, 1.0);
    axpy(step, dir, cur);
  }
  const Vector r = add(c, cur);
  return dot(r, r);
}

}  // namespace detail

/// Decides 0 in (1 - lambda) g_mu + lambda conv(grads) for a finite set of
/// candidate gradients: interval test in 1-D, convex hull in 2-D, and
/// Frank-Wolfe to a duality gap of 1e-9 otherwise.
inline bool membership_check(std::span<const double> g_mu, const std::vector<Vector>& grads, double lambda) {
  if (grads.empty()) throw DomainError("membership_check: empty gradient set");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("membership_check: lambda outside [0, 1]");
  const std::size_t dim = g_mu.size();
  for (const auto& g : grads)
    if (g.size() != dim) throw ShapeError("membership_check: gradient dimension mismatch");

  double scale = norm2(g_mu);
  if (scale == 0.0) return true;
  if (lambda == 0.0) return false;
  for (const auto& g : grads) scale = std::max(scale, norm2(g));

  // 0 = (1 - lambda) g_mu + lambda q  <=>  q = -(1 - lambda) / lambda * g_mu in conv(grads).
  const Vector q = scaled(g_mu, -(1.0 - lambda) / lambda);
  const double tol = 1e-12 * std::max(scale, norm2(q));

  if (dim == 1) {
    double lo = kInf, hi = -kInf;
    for (const auto& g : grads) lo = std::min(lo, g[0]), hi = std::max(hi, g[0]);
    return q[0] >= lo - tol && q[0] <= hi + tol;
  }
  if (dim == 2) return detail::in_hull_2d(grads, q, tol);

  // min || (1 - lambda) g_mu + lambda sum theta_i g_i ||
  const Vector c = scaled(g_mu, 1.0 - lambda);
  std::vector<Vector> v;
  v.reserve(grads.size());
  for (const auto& g : grads) v.push_back(scaled(g, lambda));
  const double f = detail::simplex_min_norm(c, v, 1e-9 * scale * scale, 200000);
  return f <= 2e-9 * scale * scale;
}

}  // namespace poisonlab
