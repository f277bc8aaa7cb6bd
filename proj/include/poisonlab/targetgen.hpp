#pragma once

// Target parameters: corruption of a clean model, scaling, and the
// reachability-aware selection procedure.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "poisonlab/attack.hpp"
#include "poisonlab/data.hpp"
#include "poisonlab/errors.hpp"
#include "poisonlab/mathcore.hpp"
#include "poisonlab/models.hpp"
#include "poisonlab/parallel.hpp"
#include "poisonlab/reachability.hpp"

namespace poisonlab {

enum class Provenance { grad_ascent, random, scaled, external };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::grad_ascent: return "grad_ascent";
    case Provenance::random: return "random";
    case Provenance::scaled: return "scaled";
    case Provenance::external: return "external";
  }
  return "?";
}

inline Provenance provenance_from_string(std::string_view s) {
  if (s == "grad_ascent") return Provenance::grad_ascent;
  if (s == "random") return Provenance::random;
  if (s == "scaled") return Provenance::scaled;
  if (s == "external") return Provenance::external;
  throw ConfigError("unknown provenance '" + std::string(s) + "' (expected grad_ascent, random, scaled or external)");
}

struct TargetCandidate {
  Params params;
  double eps_w = 0.0;  ///< ||params - w0|| / ||w0||
  Provenance provenance = Provenance::external;
  double tau = std::numeric_limits<double>::quiet_NaN();
};

/// Projected gradient ascent on the clean loss inside the ball
/// ||w - w0|| <= eps_w ||w0||, with step eps_w ||w0|| / steps along the
/// normalized gradient.
inline TargetCandidate grad_ascent_corrupt(const Dataset& clean, const ModelSpec& spec, const Params& params0,
                                           double eps_w, int steps, std::uint64_t seed) {
  if (!(eps_w >= 0.0)) throw DomainError("grad_ascent_corrupt: eps_w must be >= 0");
  if (steps < 1) throw DomainError("grad_ascent_corrupt: steps must be >= 1");
  const double n0 = norm2(params0.view());
  if (eps_w > 0.0 && n0 == 0.0) throw DomainError("grad_ascent_corrupt: relative radius undefined for w0 = 0");
  TargetCandidate out{params0, 0.0, Provenance::grad_ascent};
  if (eps_w == 0.0) return out;

  const double radius = eps_w * n0;
  const double step = radius / steps;
  Rng rng(seed, 0x6a5c);
  Params w = params0;
  for (int s = 0; s < steps; ++s) {
    Vector g = mean_param_grad(spec, w, clean);
    double gn = norm2(g);
    if (gn == 0.0) {
      g = rng.unit_vector(g.size());
      gn = 1.0;
    }
    axpy(step / gn, g, w.values);
    const Vector delta = sub(w.view(), params0.view());
    const double dn = norm2(delta);
    if (dn > radius) {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = params0[i] + delta[i] * (radius / dn);
    }
  }
  out.params = w;
  out.eps_w = distance(w.view(), params0.view()) / n0;
  return out;
}

/// w0 + eps_w ||w0|| u with u uniform on the unit sphere.
inline TargetCandidate random_corrupt(const Params& params0, double eps_w, std::uint64_t seed) {
  if (!(eps_w >= 0.0)) throw DomainError("random_corrupt: eps_w must be >= 0");
  TargetCandidate out{params0, eps_w, Provenance::random};
  if (eps_w == 0.0 || params0.size() == 0) return out;
  Rng rng(seed, 0x4a4d);
  const Vector u = rng.unit_vector(params0.size());
  axpy(eps_w * norm2(params0.view()), u, out.params.values);
  return out;
}

/// s * params: every block for linear families, the output block W only for mlp1.
inline Params scale_params(const ModelSpec& spec, const Params& params, double s) {
  if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("scale_params: s must be a positive finite number");
  Params out = params;
  for (std::size_t i = spec.output_offset(); i < out.size(); ++i) out[i] *= s;
  return out;
}

/// Raised when a selection stage discards every remaining candidate.
class SelectionError : public DomainError {
 public:
  SelectionError(int stage, const std::string& what)
      : DomainError("select_target: stage " + std::to_string(stage) + " (" + what + ") removed every candidate"),
        stage_(stage) {}
  int stage() const noexcept { return stage_; }

 private:
  int stage_;
};

struct Selection {
  TargetCandidate target;
  std::size_t index = 0;     ///< position in the input list
  double val_score = 0.0;    ///< validation accuracy (classification) or mean loss (regression)
  double initial_merit = 0.0;
  double final_merit = 0.0;
};

/// Merits at or below this are treated as already canceled.
inline constexpr double kMeritFloor = 1e-20;

/// Three-stage selection: (1) drop candidates with tau > eps_d, (2) run GC
/// and keep those whose final merit is at most a tenth of the initial merit
/// (or numerically zero),
/// (3) return the survivor that hurts validation performance most (earliest
/// on ties). `c_convention` sets the class count used for tau.
inline Selection select_target(std::vector<TargetCandidate> candidates, double eps_d, const Dataset& clean,
                               const Dataset& val, const ModelSpec& spec, const AttackOptions& gc_opts,
                               int c_convention = 2, int jobs = 1) {
  if (candidates.empty()) throw DomainError("select_target: no candidates");
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto& cand = candidates[i];
    if (std::isnan(cand.tau)) {
      const auto rep = tau_threshold(spec, cand.params, clean, spec.is_classifier() ? c_convention : 0);
      cand.tau = rep.tau;
    }
    if (cand.tau <= eps_d) pool.push_back(i);
  }
  if (pool.empty()) throw SelectionError(1, "threshold above budget");

  std::vector<AttackResult> runs(pool.size());
  parallel_for(pool.size(), jobs, [&](std::size_t k) {
    runs[k] = gradient_canceling(clean, spec, candidates[pool[k]].params, eps_d, gc_opts);
  });
  std::vector<std::size_t> survivors;
  for (std::size_t k = 0; k < pool.size(); ++k)
    if (runs[k].final_merit <= std::max(runs[k].initial_merit / 10.0, kMeritFloor)) survivors.push_back(k);
  if (survivors.empty()) throw SelectionError(2, "gradient canceling did not converge");

  Selection best;
  double best_harm = -std::numeric_limits<double>::infinity();
  for (std::size_t k : survivors) {
    const auto& cand = candidates[pool[k]];
    const double score = spec.is_classifier() ? accuracy(spec, cand.params, val) : mean_loss(spec, cand.params, val);
    const double harm = spec.is_classifier() ? -score : score;
    if (harm > best_harm) {
      best_harm = harm;
      best = {cand, pool[k], score, runs[k].initial_merit, runs[k].final_merit};
    }
  }
  return best;
}

}  // namespace poisonlab
