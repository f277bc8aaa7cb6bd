#pragma once

// Retraining on clean + poison data, evaluation reports and the
// target-by-budget sweep engine.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "poisonlab/attack.hpp"
#include "poisonlab/data.hpp"
#include "poisonlab/errors.hpp"
#include "poisonlab/io.hpp"
#include "poisonlab/mathcore.hpp"
#include "poisonlab/models.hpp"
#include "poisonlab/parallel.hpp"
#include "poisonlab/reachability.hpp"
#include "poisonlab/train.hpp"

namespace poisonlab {

struct EvalReport {
  double clean_acc = std::numeric_limits<double>::quiet_NaN();     ///< percent
  double poisoned_acc = std::numeric_limits<double>::quiet_NaN();  ///< percent
  double acc_drop = std::numeric_limits<double>::quiet_NaN();      ///< percentage points
  double grad_norm_at_target = 0.0;  ///< ||g(chi)|| evaluated at the target
  double param_distance = 0.0;       ///< ||w_retrained - w_target||
  double eps_d = 0.0;                ///< poison count / clean count
  double tau = 0.0;
  std::uint64_t seed = 0;
  Params retrained;
};

/// Test accuracy in percent; NaN for regression models.
inline double accuracy_percent(const ModelSpec& spec, const Params& p, const Dataset& test) {
  if (!spec.is_classifier()) return std::numeric_limits<double>::quiet_NaN();
  return 100.0 * accuracy(spec, p, test);
}

/// Trains on clean + poison from the `seed` initialization and reports test
/// accuracy against the clean model. `clean_params`, when given, skips the
/// clean retraining.
inline EvalReport retrain_and_eval(const Dataset& clean, const Dataset& poison, const Dataset& test,
                                   const ModelSpec& spec, const Params& target, std::uint64_t seed,
                                   const TrainOptions& train_opts = {},
                                   const std::optional<Params>& clean_params = std::nullopt) {
  if (poison.size() > 0 && spec.is_classifier())
    for (double y : poison.y)
      if (y < 0 || y >= spec.classes) throw DataError("retrain_and_eval: poison label outside the class range");
  EvalReport r;
  r.seed = seed;
  const Params w_clean = clean_params ? *clean_params : train(spec, clean, train_opts, seed);
  const Dataset mixed = concat(clean, poison);
  r.retrained = poison.size() == 0 ? w_clean : train(spec, mixed, train_opts, seed);
  r.clean_acc = accuracy_percent(spec, w_clean, test);
  r.poisoned_acc = accuracy_percent(spec, r.retrained, test);
  r.acc_drop = r.clean_acc - r.poisoned_acc;
  r.grad_norm_at_target = norm2(mean_param_grad(spec, target, mixed));
  r.param_distance = distance(r.retrained.view(), target.view());
  r.eps_d = static_cast<double>(poison.size()) / static_cast<double>(clean.size());
  r.tau = tau_threshold(spec, target, clean).tau;
  return r;
}

enum class EpsMode { absolute, tau_multiple };

inline std::string_view to_string(EpsMode m) { return m == EpsMode::absolute ? "absolute" : "tau_multiple"; }

inline EpsMode eps_mode_from_string(std::string_view s) {
  if (s == "absolute") return EpsMode::absolute;
  if (s == "tau_multiple") return EpsMode::tau_multiple;
  throw ConfigError("unknown eps_mode '" + std::string(s) + "' (expected absolute or tau_multiple)");
}

struct SweepOptions {
  Vector eps_list;
  EpsMode eps_mode = EpsMode::absolute;
  AttackOptions gc;
  TrainOptions train;
  std::uint64_t base_seed = 0;
  int jobs = 1;
  int c_convention = 0;  ///< class count for tau (0 = the model's own)
};

struct SweepRow {
  std::size_t target_id = 0;
  double w1 = 0.0;
  double w2 = 0.0;
  double tau = 0.0;
  double eps_d = 0.0;
  double acc_drop = std::numeric_limits<double>::quiet_NaN();
  double grad_norm = std::numeric_limits<double>::quiet_NaN();
  double final_merit = std::numeric_limits<double>::quiet_NaN();
  double poisoned_acc = std::numeric_limits<double>::quiet_NaN();
  std::string error;
};

/// Seed of sweep cell (target i, budget j).
inline std::uint64_t cell_seed(std::uint64_t base, std::size_t target_index, std::size_t eps_index) {
  return splitmix64(hash_combine(hash_combine(base, target_index), eps_index));
}

/// For every (target, budget) pair: tau, GC attack, retraining and report.
/// Rows are target-major, budget-minor; a failing cell records its error
/// and leaves the metrics NaN.
inline std::vector<SweepRow> sweep_heatmap(const Dataset& clean, const Dataset& test, const ModelSpec& spec,
                                           const std::vector<Params>& targets, const SweepOptions& opts) {
  if (targets.empty() || opts.eps_list.empty()) throw DomainError("sweep_heatmap: empty target grid or eps_list");
  const Params w_clean = train(spec, clean, opts.train, opts.base_seed);
  const double clean_acc = accuracy_percent(spec, w_clean, test);
  const std::size_t ne = opts.eps_list.size();
  std::vector<SweepRow> rows(targets.size() * ne);
  parallel_for(rows.size(), opts.jobs, [&](std::size_t cell) {
    const std::size_t ti = cell / ne, ei = cell % ne;
    const Params& target = targets[ti];
    SweepRow& row = rows[cell];
    row.target_id = ti;
    row.w1 = target.size() > 0 ? target[0] : 0.0;
    row.w2 = target.size() > 1 ? target[1] : 0.0;
    try {
      row.tau = tau_threshold(spec, target, clean, opts.c_convention).tau;
      row.eps_d = opts.eps_mode == EpsMode::absolute ? opts.eps_list[ei] : opts.eps_list[ei] * row.tau;
      AttackOptions gc = opts.gc;
      gc.seed = cell_seed(opts.base_seed, ti, ei);
      const AttackResult atk = gradient_canceling(clean, spec, target, row.eps_d, gc);
      const Dataset& base = atk.clean_used ? *atk.clean_used : clean;
      const Params w = train(spec, concat(base, atk.poison), opts.train, opts.base_seed);
      row.poisoned_acc = accuracy_percent(spec, w, test);
      row.acc_drop = clean_acc - row.poisoned_acc;
      row.grad_norm = atk.final_grad_norm;
      row.final_merit = atk.final_merit;
    } catch (const Error& e) {
      row.error = e.what();
    }
  });
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  CsvWriter csv({"target_id", "w1", "w2", "tau", "eps_d", "acc_drop", "grad_norm", "final_merit", "error"});
  for (const auto& r : rows)
    csv.row({std::to_string(r.target_id), format_double(r.w1), format_double(r.w2), format_double(r.tau),
             format_double(r.eps_d), format_double(r.acc_drop), format_double(r.grad_norm),
             format_double(r.final_merit), r.error});
  return csv.str();
}

/// Learning curve of an attack: epoch, merit, ||g(chi)||.
inline std::string trace_csv(const AttackResult& r) {
  CsvWriter csv({"epoch", "merit", "grad_norm"});
  for (std::size_t t = 0; t < r.merit_trace.size(); ++t)
    csv.row({std::to_string(t + 1), format_double(r.merit_trace[t]), format_double(r.grad_norm_trace[t])});
  return csv.str();
}

}  // namespace poisonlab
