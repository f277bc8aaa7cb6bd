#pragma once

// Poison construction for a given target parameter: Gradient Canceling,
// Gradient Matching, and Frank-Wolfe over a discretized domain.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
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

enum class Schedule { cosine, constant };
enum class ClipMode { box, clean_range, none };

inline std::string_view to_string(Schedule s) { return s == Schedule::cosine ? "cosine" : "constant"; }

inline Schedule schedule_from_string(std::string_view s) {
  if (s == "cosine") return Schedule::cosine;
  if (s == "constant") return Schedule::constant;
  throw ConfigError("unknown schedule '" + std::string(s) + "' (expected cosine or constant)");
}

inline std::string_view to_string(ClipMode m) {
  switch (m) {
    case ClipMode::box: return "box";
    case ClipMode::clean_range: return "clean_range";
    case ClipMode::none: return "none";
  }
  return "?";
}

inline ClipMode clip_mode_from_string(std::string_view s) {
  if (s == "box") return ClipMode::box;
  if (s == "clean_range") return ClipMode::clean_range;
  if (s == "none") return ClipMode::none;
  throw ConfigError("unknown clip mode '" + std::string(s) + "' (expected box, clean_range or none)");
}

/// Batch-size sentinels: kAutoBatch picks full batch for n <= 10^4 and 1000
/// otherwise; kFullBatch always uses every point.
inline constexpr long kAutoBatch = -1;
inline constexpr long kFullBatch = 0;

inline std::size_t resolve_batch(long batch_size, std::size_t n) {
  if (batch_size == kFullBatch) return n;
  if (batch_size == kAutoBatch) return n <= 10000 ? n : 1000;
  return std::min(n, static_cast<std::size_t>(batch_size));
}

/// Learning rate at epoch t of T.
inline double scheduled_lr(double lr0, Schedule s, int t, int total) {
  if (s == Schedule::constant) return lr0;
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * t / total));
}

struct AttackOptions {
  int epochs = 1000;
  double lr = 0.5;
  double momentum = 0.9;
  Schedule schedule = Schedule::cosine;
  long batch_size = kAutoBatch;
  ClipMode clip_mode = ClipMode::box;
  bool optimize_labels = false;
  bool replace_mode = false;
  std::uint64_t seed = 0;
  /// Recompute the poison-gradient sum from scratch every epoch and record
  /// the largest merit discrepancy against the incremental value.
  bool check_incremental = false;

  void validate() const {
    if (epochs < 1) throw ConfigError("AttackOptions: epochs must be >= 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("AttackOptions: lr must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("AttackOptions: momentum must lie in [0, 1)");
    if (batch_size < kAutoBatch) throw ConfigError("AttackOptions: invalid batch_size");
  }

  friend bool operator==(const AttackOptions&, const AttackOptions&) = default;
};

struct AttackResult {
  Dataset poison;
  Vector merit_trace;      ///< objective after each epoch
  Vector grad_norm_trace;  ///< ||g(chi)|| at the target after each epoch
  double initial_merit = 0.0;
  double final_merit = 0.0;
  double final_grad_norm = 0.0;
  /// Clean data the attack was computed against: the replacement subset in
  /// replace mode, otherwise empty (meaning the full clean set).
  std::optional<Dataset> clean_used;
  double max_incremental_error = 0.0;
};

/// Round-half-up of n * eps.
inline std::size_t poison_count(std::size_t n, double eps_d) {
  if (!(eps_d > 0.0) || !std::isfinite(eps_d)) throw DomainError("poison budget eps_d must be a positive finite number");
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * eps_d + 0.5));
}

/// Per-feature [min, max] of a dataset's rows.
inline std::pair<Vector, Vector> feature_range(const Dataset& ds) {
  if (ds.size() == 0) throw DataError("feature_range: empty dataset");
  Vector lo(ds.x.row(0).begin(), ds.x.row(0).end()), hi = lo;
  for (std::size_t i = 1; i < ds.size(); ++i)
    for (std::size_t j = 0; j < ds.dim(); ++j) {
      lo[j] = std::min(lo[j], ds.x(i, j));
      hi[j] = std::max(hi[j], ds.x(i, j));
    }
  return {lo, hi};
}

/// Clamps one point in place according to the clip mode.
inline void project_point(std::span<double> x, std::span<const double> box_lo, std::span<const double> box_hi,
                          ClipMode mode, std::span<const double> clean_lo, std::span<const double> clean_hi) {
  if (mode == ClipMode::none) return;
  const bool use_box = mode == ClipMode::box;
  const auto lo = use_box ? box_lo : clean_lo;
  const auto hi = use_box ? box_hi : clean_hi;
  if (lo.size() != x.size() || hi.size() != x.size()) throw ShapeError("project_point: bound width mismatch");
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = std::clamp(x[j], lo[j], hi[j]);
}

/// Projects every row of `points` onto the admissible set.
inline Matrix project_admissible(const Matrix& points, std::span<const double> box_lo, std::span<const double> box_hi,
                                 ClipMode mode, std::span<const double> clean_lo = {},
                                 std::span<const double> clean_hi = {}) {
  for (std::size_t j = 0; j < box_lo.size() && j < box_hi.size(); ++j)
    if (!(box_lo[j] <= box_hi[j])) throw DomainError("project_admissible: invalid box");
  Matrix out = points;
  for (std::size_t i = 0; i < out.rows(); ++i) project_point(out.row(i), box_lo, box_hi, mode, clean_lo, clean_hi);
  return out;
}

/// Euclidean projection onto the probability simplex.
inline void project_simplex(std::span<double> q) {
  Vector s(q.begin(), q.end());
  std::sort(s.begin(), s.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    cum += s[k];
    const double t = (cum - 1.0) / static_cast<double>(k + 1);
    if (s[k] - t > 0.0) theta = t;
  }
  for (double& v : q) v = std::max(v - theta, 0.0);
}

namespace detail {

/// How one epoch of a feature-space poison optimizer is driven: given the
/// running sum S of poison gradients, return (direction v, coefficient c)
/// so that d objective / d z_j = c * mixed_vjp(z_j, v); and the objective.
struct PoisonObjective {
  std::function<std::pair<Vector, double>(const Vector& sum)> direction;
  std::function<double(const Vector& sum)> value;
};

inline AttackResult optimize_poison(const Dataset& clean, const ModelSpec& spec, const Params& target, double eps_d,
                                    const AttackOptions& opts, const std::function<PoisonObjective(const Dataset& mu,
                                                                                                   std::size_t m)>& make) {
  opts.validate();
  spec.validate();
  clean.validate();
  if (target.size() != spec.num_params()) throw ShapeError("attack: target length does not match the model");
  if (clean.dim() != spec.input_dim) throw ShapeError("attack: data width does not match the model");

  AttackResult res;
  Dataset mu = clean;
  if (opts.replace_mode) {
    const std::size_t keep = static_cast<std::size_t>(std::floor(static_cast<double>(clean.size()) / (1.0 + eps_d)));
    if (keep == 0) throw DomainError("attack: replace mode leaves no clean data");
    Rng rrng(opts.seed, 0x2e91);
    auto perm = rrng.permutation(clean.size());
    perm.resize(keep);
    std::sort(perm.begin(), perm.end());
    mu = subset(clean, perm);
    res.clean_used = mu;
  }
  const std::size_t n = mu.size();
  const std::size_t m = poison_count(n, eps_d);
  if (m == 0) throw DomainError("attack: eps_d * n rounds to zero poison points");

  // Initialization: seeded subsample of the clean data.
  Rng rng(opts.seed, 0x6a11);
  std::vector<std::size_t> init;
  while (init.size() < m) {
    auto perm = rng.permutation(n);
    for (std::size_t i : perm) {
      if (init.size() == m) break;
      init.push_back(i);
    }
  }
  Dataset poison = subset(mu, init);
  const std::size_t d = poison.dim();
  const std::size_t c = spec.is_classifier() ? spec.num_classes() : 0;
  const bool soft = opts.optimize_labels && spec.is_classifier();
  if (soft && !poison.soft_labels) {
    Matrix q(m, c);
    for (std::size_t j = 0; j < m; ++j) q(j, static_cast<std::size_t>(poison.y[j])) = 1.0;
    poison.soft_labels = std::move(q);
  }

  const auto [clean_lo, clean_hi] = feature_range(clean);
  const PoisonObjective obj = make(mu, m);

  auto point_grad = [&](std::size_t j) { return param_grad(spec, target, poison.x.row(j), label_at(poison, j)); };
  auto full_sum = [&]() {
    Vector s(spec.num_params(), 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      const Vector g = point_grad(j);
      axpy(1.0, g, s);
    }
    return s;
  };

  const Vector g_mu = mean_param_grad(spec, target, mu);
  const double eps_eff = static_cast<double>(m) / static_cast<double>(n);
  auto chi_norm = [&](const Vector& sum) {
    Vector g = g_mu;
    axpy(eps_eff / static_cast<double>(m), sum, g);
    return norm2(g) / (1.0 + eps_eff);
  };

  std::vector<Vector> grads(m);
  Vector sum(spec.num_params(), 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    grads[j] = point_grad(j);
    axpy(1.0, grads[j], sum);
  }
  res.initial_merit = obj.value(sum);
  if (!std::isfinite(res.initial_merit)) throw DivergenceError("attack: non-finite initial objective");

  const std::size_t batch = resolve_batch(opts.batch_size, m);
  Matrix vel(m, d);
  Matrix qvel(m, std::max<std::size_t>(c, 1));
  Vector yvel(m, 0.0);
  std::vector<std::size_t> order(m);
  for (std::size_t j = 0; j < m; ++j) order[j] = j;

  res.merit_trace.reserve(static_cast<std::size_t>(opts.epochs));
  res.grad_norm_trace.reserve(static_cast<std::size_t>(opts.epochs));
  for (int t = 0; t < opts.epochs; ++t) {
    const double lr = scheduled_lr(opts.lr, opts.schedule, t, opts.epochs);
    if (batch < m) rng.shuffle(order);
    for (std::size_t start = 0; start < m; start += batch) {
      const std::size_t stop = std::min(m, start + batch);
      const auto [dir, coef] = obj.direction(sum);
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t j = order[k];
        auto z = poison.x.row(j);
        const Label lab = label_at(poison, j);
        const Vector gz = mixed_vjp(spec, target, z, lab, dir);
        Vector gq;
        if (opts.optimize_labels) gq = label_vjp(spec, target, z, dir);
        auto v = vel.row(j);
        for (std::size_t i = 0; i < d; ++i) {
          v[i] = opts.momentum * v[i] + coef * gz[i];
          z[i] -= lr * v[i];
        }
        project_point(z, poison.box_lo, poison.box_hi, opts.clip_mode, clean_lo, clean_hi);
        if (opts.optimize_labels) {
          if (soft) {
            auto q = poison.soft_labels->row(j);
            auto qv = qvel.row(j);
            for (std::size_t k2 = 0; k2 < c; ++k2) {
              qv[k2] = opts.momentum * qv[k2] + coef * gq[k2];
              q[k2] -= lr * qv[k2];
            }
            project_simplex(q);
            poison.y[j] = static_cast<double>(std::max_element(q.begin(), q.end()) - q.begin());
          } else {
            yvel[j] = opts.momentum * yvel[j] + coef * gq[0];
            poison.y[j] -= lr * yvel[j];
          }
        }
      }
      // Refresh the running sum for the points touched in this batch.
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t j = order[k];
        Vector g = point_grad(j);
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += g[i] - grads[j][i];
        grads[j] = std::move(g);
      }
    }
    const double merit = obj.value(sum);
    if (!std::isfinite(merit) || !all_finite(poison.x.data()))
      throw DivergenceError("attack: objective became non-finite at epoch " + std::to_string(t + 1) +
                            " (learning rate too large?)");
    if (opts.check_incremental) {
      const Vector fresh = full_sum();
      res.max_incremental_error = std::max(res.max_incremental_error, std::abs(obj.value(fresh) - merit));
    }
    res.merit_trace.push_back(merit);
    res.grad_norm_trace.push_back(chi_norm(sum));
  }
  res.final_merit = res.merit_trace.back();
  res.final_grad_norm = norm2(mean_param_grad(spec, target, concat(mu, poison)));
  res.poison = std::move(poison);
  return res;
}

}  // namespace detail

/// GC merit 0.5 ||g(mu) + eps_d g(nu)|| ^2 for a given poison set.
inline double gc_merit(const ModelSpec& spec, const Params& target, const Dataset& clean, const Dataset& poison,
                       double eps_d) {
  Vector r = mean_param_grad(spec, target, clean);
  axpy(eps_d, mean_param_grad(spec, target, poison), r);
  return 0.5 * dot(r, r);
}

/// Gradient Canceling: moves m = round(n eps_d) poison points so that
/// g(mu) + eps_d g(nu) vanishes at the target.
inline AttackResult gradient_canceling(const Dataset& clean, const ModelSpec& spec, const Params& target, double eps_d,
                                       const AttackOptions& opts = {}) {
  return detail::optimize_poison(clean, spec, target, eps_d, opts, [&](const Dataset& mu, std::size_t m) {
    const Vector g_mu = mean_param_grad(spec, target, mu);
    const double w = eps_d / static_cast<double>(m);
    auto residual = [g_mu, w](const Vector& sum) {
      Vector r = g_mu;
      axpy(w, sum, r);
      return r;
    };
    return detail::PoisonObjective{
        [residual, w](const Vector& sum) { return std::pair{residual(sum), w}; },
        [residual](const Vector& sum) {
          const Vector r = residual(sum);
          return 0.5 * dot(r, r);
        }};
  });
}

/// Mean gradient of the reversed loss -log(1 - exp(-loss)); for least squares
/// the sign-flipped gradient.
inline Vector reversed_loss_grad(const ModelSpec& spec, const Params& p, const Dataset& ds) {
  if (ds.size() == 0) throw DataError("reversed_loss_grad: empty dataset");
  Vector out(spec.num_params(), 0.0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Label lab = label_at(ds, i);
    const Vector g = param_grad(spec, p, ds.x.row(i), lab);
    double coef = -1.0;
    if (spec.is_classifier()) {
      const double l = std::max(loss(spec, p, ds.x.row(i), lab), 1e-12);
      coef = -1.0 / std::expm1(l);
    }
    axpy(coef, g, out);
  }
  for (double& v : out) v /= static_cast<double>(ds.size());
  return out;
}

/// Cosine dissimilarity 1 - <a, b> / (||a|| ||b||).
inline double cosine_dissimilarity(std::span<const double> a, std::span<const double> b) {
  const double na = norm2(a), nb = norm2(b);
  if (na == 0.0 || nb == 0.0) return 1.0;
  return 1.0 - dot(a, b) / (na * nb);
}

/// Gradient Matching baseline: aligns the poison gradient with the
/// reversed-loss gradient of the clean data by cosine dissimilarity.
inline AttackResult gradient_matching(const Dataset& clean, const ModelSpec& spec, const Params& target, double eps_d,
                                      const AttackOptions& opts = {}) {
  return detail::optimize_poison(clean, spec, target, eps_d, opts, [&](const Dataset& mu, std::size_t m) {
    const Vector a = reversed_loss_grad(spec, target, mu);
    const double inv_m = 1.0 / static_cast<double>(m);
    return detail::PoisonObjective{
        [a, inv_m](const Vector& sum) {
          const Vector b = scaled(sum, inv_m);
          const double na = norm2(a), nb = norm2(b);
          Vector dir(b.size(), 0.0);
          if (na > 0.0 && nb > 0.0) {
            const double ab = dot(a, b);
            for (std::size_t i = 0; i < b.size(); ++i)
              dir[i] = -(a[i] / (na * nb) - ab * b[i] / (na * nb * nb * nb));
          }
          return std::pair{dir, inv_m};
        },
        [a, inv_m](const Vector& sum) { return cosine_dissimilarity(a, scaled(sum, inv_m)); }};
  });
}

// ---------------------------------------------------------------------------
// Frank-Wolfe over a finite candidate domain.

struct Candidate {
  Vector x;
  double y = 0.0;
};

struct FwDomain {
  std::vector<Candidate> points;
};

/// Regular grid over [lo, hi] per coordinate (steps points each), crossed
/// with the given labels. Limited to d <= 3.
inline FwDomain grid_domain(std::span<const double> lo, std::span<const double> hi, int steps,
                            std::span<const double> labels) {
  const std::size_t d = lo.size();
  if (d == 0 || d > 3 || hi.size() != d) throw DomainError("grid_domain: requires 1 <= d <= 3 and matching bounds");
  if (steps < 1 || labels.empty()) throw DomainError("grid_domain: empty domain");
  FwDomain dom;
  std::vector<int> idx(d, 0);
  while (true) {
    Vector x(d);
    for (std::size_t j = 0; j < d; ++j)
      x[j] = steps == 1 ? lo[j] : lo[j] + (hi[j] - lo[j]) * idx[j] / (steps - 1);
    for (double y : labels) dom.points.push_back({x, y});
    std::size_t j = 0;
    while (j < d && ++idx[j] == steps) idx[j++] = 0;
    if (j == d) break;
  }
  return dom;
}

/// Points alpha * direction for alpha on a grid in [alpha_lo, alpha_hi],
/// crossed with the given labels.
inline FwDomain line_domain(std::span<const double> direction, double alpha_lo, double alpha_hi, int steps,
                            std::span<const double> labels) {
  if (steps < 1 || labels.empty() || direction.empty()) throw DomainError("line_domain: empty domain");
  FwDomain dom;
  for (int k = 0; k < steps; ++k) {
    const double a = steps == 1 ? alpha_lo : alpha_lo + (alpha_hi - alpha_lo) * k / (steps - 1);
    for (double y : labels) dom.points.push_back({scaled(direction, a), y});
  }
  return dom;
}

enum class FwStep { open_loop, line_search };

struct Atom {
  std::size_t candidate;  ///< index into the domain
  Vector x;
  double y;
  double weight;
};

struct FwResult {
  std::vector<Atom> atoms;
  Vector objective_trace;                ///< 0.5 ||g(mu) + eps_d g(nu_t)||^2 after each iteration
  std::vector<std::size_t> support_trace;  ///< number of atoms after each iteration
};

/// Frank-Wolfe on the poison measure: each step picks the candidate that
/// minimizes <g(mu) + eps_d g(nu_t), grad loss(z)> and mixes it in with the
/// exact line-search step (or the open-loop step 2/(t+2)). The first step is 1.
inline FwResult frank_wolfe_attack(const Dataset& clean, const ModelSpec& spec, const Params& target, double eps_d,
                                   const FwDomain& domain, int iters, FwStep rule = FwStep::line_search) {
  if (domain.points.empty()) throw DomainError("frank_wolfe_attack: empty domain");
  if (iters < 1) throw DomainError("frank_wolfe_attack: iters must be >= 1");
  if (!(eps_d > 0.0)) throw DomainError("frank_wolfe_attack: eps_d must be > 0");
  const Vector g_mu = mean_param_grad(spec, target, clean);
  std::vector<Vector> cand_grad;
  cand_grad.reserve(domain.points.size());
  for (const auto& cpt : domain.points) cand_grad.push_back(param_grad(spec, target, cpt.x, cpt.y));

  FwResult res;
  Vector g_nu(spec.num_params(), 0.0);
  for (int t = 0; t < iters; ++t) {
    Vector r = g_mu;
    axpy(eps_d, g_nu, r);
    std::size_t best = 0;
    double best_val = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < cand_grad.size(); ++k) {
      const double v = dot(r, cand_grad[k]);
      if (v < best_val) best_val = v, best = k;
    }
    double eta = 2.0 / (t + 2.0);
    if (rule == FwStep::line_search && t > 0) {
      // minimize 0.5 ||r + eta * eps_d (g* - g_nu)||^2 over eta in [0, 1]
      const Vector dir = scaled(sub(cand_grad[best], g_nu), eps_d);
      const double dd = dot(dir, dir);
      eta = dd > 0.0 ? std::clamp(-dot(r, dir) / dd, 0.0, 1.0) : 0.0;
    }
    for (auto& a : res.atoms) a.weight *= 1.0 - eta;
    for (std::size_t i = 0; i < g_nu.size(); ++i) g_nu[i] = (1.0 - eta) * g_nu[i] + eta * cand_grad[best][i];
    auto it = std::find_if(res.atoms.begin(), res.atoms.end(), [&](const Atom& a) { return a.candidate == best; });
    if (it != res.atoms.end()) {
      it->weight += eta;
    } else if (eta > 0.0) {
      res.atoms.push_back({best, domain.points[best].x, domain.points[best].y, eta});
    }
    std::erase_if(res.atoms, [](const Atom& a) { return a.weight <= 0.0; });
    Vector rr = g_mu;
    axpy(eps_d, g_nu, rr);
    res.objective_trace.push_back(0.5 * dot(rr, rr));
    res.support_trace.push_back(res.atoms.size());
  }
  return res;
}

/// Converts weighted atoms into m uniform-weight points by largest-remainder
/// replication. `like` supplies task, class count and domain box.
inline Dataset atoms_to_dataset(const std::vector<Atom>& atoms, std::size_t m, const Dataset& like) {
  if (atoms.empty() || m == 0) throw DomainError("atoms_to_dataset: nothing to convert");
  double total = 0.0;
  for (const auto& a : atoms) total += a.weight;
  std::vector<std::size_t> count(atoms.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    const double share = atoms[k].weight / total * static_cast<double>(m);
    count[k] = static_cast<std::size_t>(std::floor(share));
    used += count[k];
    rem.push_back({share - std::floor(share), k});
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; used < m; ++k, ++used) ++count[rem[k % rem.size()].second];
  Dataset out;
  out.task = like.task;
  out.classes = like.classes;
  out.box_lo = like.box_lo;
  out.box_hi = like.box_hi;
  const std::size_t d = atoms.front().x.size();
  out.x = Matrix(0, d);
  for (std::size_t k = 0; k < atoms.size(); ++k)
    for (std::size_t r = 0; r < count[k]; ++r) {
      out.x.append_row(atoms[k].x);
      out.y.push_back(atoms[k].y);
    }
  return out;
}

}  // namespace poisonlab
