#pragma once

// JSON formats: parameter files, datasets, reports and experiment configs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "poisonlab/attack.hpp"
#include "poisonlab/data.hpp"
#include "poisonlab/defense.hpp"
#include "poisonlab/errors.hpp"
#include "poisonlab/harness.hpp"
#include "poisonlab/io.hpp"
#include "poisonlab/models.hpp"
#include "poisonlab/reachability.hpp"
#include "poisonlab/targetgen.hpp"
#include "poisonlab/train.hpp"

namespace poisonlab {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Scalars. Non-finite numbers are written as the strings "inf", "-inf", "nan".

inline Json real_to_json(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double real_from_json(const Json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw ConfigError("expected a number, got " + j.dump());
}

inline Json reals_to_json(std::span<const double> v) {
  Json a = Json::array();
  for (double x : v) a.push_back(real_to_json(x));
  return a;
}

inline Vector reals_from_json(const Json& j) {
  if (!j.is_array()) throw ConfigError("expected an array of numbers, got " + j.dump());
  Vector v;
  v.reserve(j.size());
  for (const auto& e : j) v.push_back(real_from_json(e));
  return v;
}

/// Levenshtein distance, for "did you mean" hints.
inline std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// Error text for an unknown name, listing the valid choices and the closest one.
inline std::string unknown_name(std::string_view kind, std::string_view name, const std::vector<std::string>& valid) {
  std::string msg = "unknown " + std::string(kind) + " '" + std::string(name) + "'";
  std::string best;
  std::size_t best_d = std::numeric_limits<std::size_t>::max();
  for (const auto& v : valid) {
    const auto d = edit_distance(name, v);
    if (d < best_d) best_d = d, best = v;
  }
  if (!best.empty() && best_d <= std::max<std::size_t>(2, name.size() / 2)) msg += "; did you mean '" + best + "'?";
  msg += " (valid: ";
  for (std::size_t i = 0; i < valid.size(); ++i) msg += (i ? ", " : "") + valid[i];
  return msg + ")";
}

inline std::string check_name(std::string_view kind, const std::string& name, const std::vector<std::string>& valid) {
  if (std::find(valid.begin(), valid.end(), name) == valid.end()) throw ConfigError(unknown_name(kind, name, valid));
  return name;
}

namespace detail {

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

inline double real_or(const Json& j, const char* key, double fallback) {
  return j.contains(key) && !j.at(key).is_null() ? real_from_json(j.at(key)) : fallback;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Models and parameter files.

inline Json spec_to_json(const ModelSpec& s) {
  return {{"family", std::string(to_string(s.family))},
          {"input_dim", s.input_dim},
          {"classes", s.classes},
          {"hidden", s.hidden},
          {"leaky_slope", s.leaky_slope}};
}

inline ModelSpec spec_from_json(const Json& j) {
  ModelSpec s;
  s.family = family_from_string(detail::get_or<std::string>(j, "family", "logistic_binary"));
  s.input_dim = detail::get_or<std::size_t>(j, "input_dim", 0);
  s.classes = detail::get_or<int>(j, "classes", s.family == Family::least_squares ? 0 : 2);
  s.hidden = detail::get_or<int>(j, "hidden", 0);
  s.leaky_slope = detail::real_or(j, "leaky_slope", 0.2);
  s.validate();
  return s;
}

/// Block shape of a parameter vector: [d], [d, c] or [hidden, d, c].
inline std::vector<std::size_t> param_shape(const ModelSpec& s) {
  switch (s.family) {
    case Family::least_squares:
    case Family::logistic_binary: return {s.input_dim};
    case Family::softmax_linear: return {s.input_dim, s.num_classes()};
    case Family::mlp1: return {static_cast<std::size_t>(s.hidden), s.input_dim, s.num_classes()};
  }
  return {};
}

struct ParamFile {
  ModelSpec spec;
  Params params;
  std::optional<TargetCandidate> meta;  ///< provenance, eps_w, tau when produced by targetgen
};

inline Json params_to_json(const ModelSpec& spec, const Params& p, const TargetCandidate* meta = nullptr) {
  Json j{{"model", spec_to_json(spec)}, {"shape", param_shape(spec)}, {"values", reals_to_json(p.view())}};
  if (meta) {
    j["provenance"] = std::string(to_string(meta->provenance));
    j["eps_w"] = real_to_json(meta->eps_w);
    j["tau"] = real_to_json(meta->tau);
  }
  return j;
}

inline ParamFile params_from_json(const Json& j) {
  if (!j.contains("model") || !j.contains("values")) throw ConfigError("parameter file needs 'model' and 'values'");
  ParamFile f;
  f.spec = spec_from_json(j.at("model"));
  f.params.values = reals_from_json(j.at("values"));
  if (f.params.size() != f.spec.num_params())
    throw ShapeError("parameter file holds " + std::to_string(f.params.size()) + " values but the model needs " +
                     std::to_string(f.spec.num_params()));
  if (j.contains("shape") && j.at("shape").get<std::vector<std::size_t>>() != param_shape(f.spec))
    throw ShapeError("parameter file shape does not match its model");
  if (!all_finite(f.params.view())) throw DataError("parameter file contains non-finite values");
  if (j.contains("provenance")) {
    TargetCandidate c{f.params, detail::real_or(j, "eps_w", 0.0), provenance_from_string(j.at("provenance").get<std::string>())};
    c.tau = detail::real_or(j, "tau", std::numeric_limits<double>::quiet_NaN());
    f.meta = c;
  }
  return f;
}

// ---------------------------------------------------------------------------
// Datasets.

inline Json dataset_to_json(const Dataset& ds) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < ds.size(); ++i) rows.push_back(reals_to_json(ds.x.row(i)));
  Json j{{"task", ds.is_classification() ? "classification" : "regression"},
         {"classes", ds.classes},
         {"dim", ds.dim()},
         {"box_lo", reals_to_json(ds.box_lo)},
         {"box_hi", reals_to_json(ds.box_hi)},
         {"x", rows},
         {"y", reals_to_json(ds.y)}};
  if (ds.soft_labels) {
    Json soft = Json::array();
    for (std::size_t i = 0; i < ds.size(); ++i) soft.push_back(reals_to_json(ds.soft_labels->row(i)));
    j["soft_labels"] = soft;
  }
  return j;
}

inline Dataset dataset_from_json(const Json& j) {
  try {
    Dataset ds;
    const auto task = detail::get_or<std::string>(j, "task", "classification");
    if (task != "classification" && task != "regression") throw DataError("dataset: unknown task '" + task + "'");
    ds.task = task == "classification" ? Task::classification : Task::regression;
    ds.classes = detail::get_or<int>(j, "classes", ds.is_classification() ? 2 : 0);
    const std::size_t dim = detail::get_or<std::size_t>(j, "dim", 0);
    ds.x = Matrix(0, dim);
    for (const auto& r : j.at("x")) ds.x.append_row(reals_from_json(r));
    ds.y = reals_from_json(j.at("y"));
    ds.box_lo = j.contains("box_lo") ? reals_from_json(j.at("box_lo")) : unbounded_lo(ds.dim());
    ds.box_hi = j.contains("box_hi") ? reals_from_json(j.at("box_hi")) : unbounded_hi(ds.dim());
    if (j.contains("soft_labels")) {
      Matrix soft(0, static_cast<std::size_t>(ds.classes));
      for (const auto& r : j.at("soft_labels")) soft.append_row(reals_from_json(r));
      ds.soft_labels = std::move(soft);
    }
    ds.validate();
    return ds;
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed dataset file: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("malformed dataset file: ") + e.what());
  } catch (const ShapeError& e) {
    throw DataError(std::string("malformed dataset file: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Reports.

inline Json threshold_to_json(const ThresholdReport& r) {
  return {{"alignment", real_to_json(r.alignment)},
          {"a", real_to_json(r.a)},
          {"b", real_to_json(r.b)},
          {"lambda_star", real_to_json(r.lambda_star)},
          {"tau", real_to_json(r.tau)},
          {"tau2", real_to_json(r.tau2)},
          {"classes", r.classes},
          {"grad_norm", real_to_json(r.grad_norm)},
          {"degenerate", std::string(to_string(r.degenerate))}};
}

inline Json eval_to_json(const EvalReport& r) {
  return {{"clean_acc", real_to_json(r.clean_acc)},
          {"poisoned_acc", real_to_json(r.poisoned_acc)},
          {"acc_drop", real_to_json(r.acc_drop)},
          {"grad_norm_at_target", real_to_json(r.grad_norm_at_target)},
          {"param_distance", real_to_json(r.param_distance)},
          {"eps_d", real_to_json(r.eps_d)},
          {"tau", real_to_json(r.tau)},
          {"seed", r.seed}};
}

// ---------------------------------------------------------------------------
// Options.

inline Json attack_options_to_json(const AttackOptions& o) {
  return {{"epochs", o.epochs},
          {"lr", o.lr},
          {"momentum", o.momentum},
          {"schedule", std::string(to_string(o.schedule))},
          {"batch_size", o.batch_size == kAutoBatch ? Json("auto") : o.batch_size == kFullBatch ? Json("full") : Json(o.batch_size)},
          {"clip_mode", std::string(to_string(o.clip_mode))},
          {"optimize_labels", o.optimize_labels},
          {"replace_mode", o.replace_mode}};
}

inline long batch_from_json(const Json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "auto") return kAutoBatch;
    if (s == "full") return kFullBatch;
    throw ConfigError("batch_size must be a positive integer, \"auto\" or \"full\"");
  }
  const long b = j.get<long>();
  if (b < 1) throw ConfigError("batch_size must be a positive integer, \"auto\" or \"full\"");
  return b;
}

inline AttackOptions attack_options_from_json(const Json& j) {
  AttackOptions o;
  o.epochs = detail::get_or<int>(j, "epochs", o.epochs);
  o.lr = detail::real_or(j, "lr", o.lr);
  o.momentum = detail::real_or(j, "momentum", o.momentum);
  o.schedule = schedule_from_string(detail::get_or<std::string>(j, "schedule", "cosine"));
  if (j.contains("batch_size")) o.batch_size = batch_from_json(j.at("batch_size"));
  o.clip_mode = clip_mode_from_string(detail::get_or<std::string>(j, "clip_mode", "box"));
  o.optimize_labels = detail::get_or<bool>(j, "optimize_labels", false);
  o.replace_mode = detail::get_or<bool>(j, "replace_mode", false);
  o.validate();
  return o;
}

inline Json train_options_to_json(const TrainOptions& o) {
  return {{"epochs", o.epochs},
          {"lr", o.lr},
          {"momentum", o.momentum},
          {"schedule", std::string(to_string(o.schedule))},
          {"batch_size", o.batch_size == kAutoBatch ? Json("auto") : o.batch_size == kFullBatch ? Json("full") : Json(o.batch_size)},
          {"grad_tol", o.grad_tol},
          {"closed_form_ls", o.closed_form_ls},
          {"bit_reproducible", o.bit_reproducible}};
}

inline TrainOptions train_options_from_json(const Json& j) {
  TrainOptions o;
  o.epochs = detail::get_or<int>(j, "epochs", o.epochs);
  o.lr = detail::real_or(j, "lr", o.lr);
  o.momentum = detail::real_or(j, "momentum", o.momentum);
  o.schedule = schedule_from_string(detail::get_or<std::string>(j, "schedule", "cosine"));
  if (j.contains("batch_size")) o.batch_size = batch_from_json(j.at("batch_size"));
  o.grad_tol = detail::real_or(j, "grad_tol", o.grad_tol);
  o.closed_form_ls = detail::get_or<bool>(j, "closed_form_ls", true);
  o.bit_reproducible = detail::get_or<bool>(j, "bit_reproducible", true);
  o.validate();
  return o;
}

// ---------------------------------------------------------------------------
// Experiment configuration.

inline const std::vector<std::string> kGenerators{"or", "gauss_classification", "gauss_regression", "toy3", "mnist", "file"};
inline const std::vector<std::string> kTargetSources{"file", "inline", "grad_ascent", "random", "scaled", "grid", "candidates"};
inline const std::vector<std::string> kAttacks{"gc", "gm", "fw"};
inline const std::vector<std::string> kDefenses{"none", "sever", "dpa"};

struct DatasetConfig {
  std::string generator = "or";
  int reps = 50;
  double noise = 0.05;
  int n = 1000;
  int d = 10;
  double sep = 2.0;
  Vector w_true{1.0, -1.0};
  double test_fraction = 0.3;
  std::string path;  ///< MNIST directory or dataset JSON
  std::vector<int> classes;
  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct GridConfig {
  double w1_lo = -2.0, w1_hi = -1.0;
  double w2_lo = -2.0, w2_hi = -1.0;
  int steps = 5;
  Vector tail{0.5};  ///< remaining coordinates shared by every grid target
  friend bool operator==(const GridConfig&, const GridConfig&) = default;
};

struct TargetConfig {
  std::string source = "file";
  std::string path;
  Vector values;
  double eps_w = 0.5;
  Vector eps_w_list;  ///< candidate corruption sizes for "candidates"
  int steps = 10;
  double scale = 1.0;
  std::vector<std::string> paths;  ///< explicit candidate files for "candidates"
  GridConfig grid;
  friend bool operator==(const TargetConfig&, const TargetConfig&) = default;
};

struct AttackConfig {
  std::string name = "gc";
  AttackOptions options;
  std::string fw_domain = "grid";  ///< grid | line
  std::string fw_step = "line_search";
  int fw_iters = 500;
  int fw_grid_steps = 41;
  double fw_lo = -5.0, fw_hi = 5.0;
  Vector fw_labels;  ///< empty: every class (classification) or a grid over the label range (regression)
  friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

struct DefenseConfig {
  std::string name = "none";
  double fraction = 0.0;  ///< Sever removal fraction; 0 uses lambda = eps_d / (1 + eps_d)
  int rounds = 2;
  int k = 10;
  friend bool operator==(const DefenseConfig&, const DefenseConfig&) = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  std::string model = "logistic_binary";
  int hidden = 16;
  double leaky_slope = 0.2;
  TargetConfig target;
  AttackConfig attack;
  TrainOptions train;
  Vector eps_d{0.1};
  std::string eps_mode = "absolute";
  int c_convention = 0;
  DefenseConfig defense;
  std::string output_dir = "out";
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

inline Json config_to_json(const ExperimentConfig& c) {
  const auto& d = c.dataset;
  const auto& t = c.target;
  const auto& a = c.attack;
  Json attack = attack_options_to_json(a.options);
  attack["name"] = a.name;
  attack["fw_domain"] = a.fw_domain;
  attack["fw_step"] = a.fw_step;
  attack["fw_iters"] = a.fw_iters;
  attack["fw_grid_steps"] = a.fw_grid_steps;
  attack["fw_lo"] = a.fw_lo;
  attack["fw_hi"] = a.fw_hi;
  attack["fw_labels"] = reals_to_json(a.fw_labels);
  return {
      {"seed", c.seed},
      {"dataset",
       {{"generator", d.generator}, {"reps", d.reps}, {"noise", d.noise}, {"n", d.n}, {"d", d.d}, {"sep", d.sep},
        {"w_true", reals_to_json(d.w_true)}, {"test_fraction", d.test_fraction}, {"path", d.path},
        {"classes", d.classes}}},
      {"model", {{"family", c.model}, {"hidden", c.hidden}, {"leaky_slope", c.leaky_slope}}},
      {"target",
       {{"source", t.source}, {"path", t.path}, {"values", reals_to_json(t.values)}, {"eps_w", t.eps_w},
        {"eps_w_list", reals_to_json(t.eps_w_list)}, {"steps", t.steps}, {"scale", t.scale}, {"paths", t.paths},
        {"grid",
         {{"w1", {t.grid.w1_lo, t.grid.w1_hi}}, {"w2", {t.grid.w2_lo, t.grid.w2_hi}}, {"steps", t.grid.steps},
          {"tail", reals_to_json(t.grid.tail)}}}}},
      {"attack", attack},
      {"train", train_options_to_json(c.train)},
      {"eps_d", reals_to_json(c.eps_d)},
      {"eps_mode", c.eps_mode},
      {"c_convention", c.c_convention},
      {"defense", {{"name", c.defense.name}, {"fraction", c.defense.fraction}, {"rounds", c.defense.rounds}, {"k", c.defense.k}}},
      {"output_dir", c.output_dir},
  };
}

inline ExperimentConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::vector<std::string> kTop{"seed",   "dataset", "model",        "target",  "attack",    "train",
                                             "eps_d",  "eps_mode", "c_convention", "defense", "output_dir"};
  for (const auto& [key, _] : j.items()) check_name("config key", key, kTop);
  try {
    ExperimentConfig c;
    c.seed = detail::get_or<std::uint64_t>(j, "seed", 0);
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      auto& o = c.dataset;
      o.generator = check_name("dataset generator", detail::get_or<std::string>(d, "generator", o.generator), kGenerators);
      o.reps = detail::get_or<int>(d, "reps", o.reps);
      o.noise = detail::real_or(d, "noise", o.noise);
      o.n = detail::get_or<int>(d, "n", o.n);
      o.d = detail::get_or<int>(d, "d", o.d);
      o.sep = detail::real_or(d, "sep", o.sep);
      if (d.contains("w_true")) o.w_true = reals_from_json(d.at("w_true"));
      o.test_fraction = detail::real_or(d, "test_fraction", o.test_fraction);
      o.path = detail::get_or<std::string>(d, "path", "");
      o.classes = detail::get_or<std::vector<int>>(d, "classes", {});
      if (!(o.test_fraction >= 0.0 && o.test_fraction < 1.0)) throw ConfigError("dataset.test_fraction must lie in [0, 1)");
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      if (!m.is_object()) throw ConfigError("'model' must be an object such as {\"family\": \"logistic_binary\"}");
      c.model = std::string(to_string(family_from_string(detail::get_or<std::string>(m, "family", c.model))));
      c.hidden = detail::get_or<int>(m, "hidden", c.hidden);
      c.leaky_slope = detail::real_or(m, "leaky_slope", c.leaky_slope);
    }
    if (j.contains("target")) {
      const auto& t = j.at("target");
      auto& o = c.target;
      o.source = check_name("target source", detail::get_or<std::string>(t, "source", o.source), kTargetSources);
      o.path = detail::get_or<std::string>(t, "path", "");
      if (t.contains("values")) o.values = reals_from_json(t.at("values"));
      o.eps_w = detail::real_or(t, "eps_w", o.eps_w);
      if (t.contains("eps_w_list")) o.eps_w_list = reals_from_json(t.at("eps_w_list"));
      o.steps = detail::get_or<int>(t, "steps", o.steps);
      o.scale = detail::real_or(t, "scale", o.scale);
      o.paths = detail::get_or<std::vector<std::string>>(t, "paths", {});
      if (t.contains("grid")) {
        const auto& g = t.at("grid");
        if (g.contains("w1")) {
          const Vector r = reals_from_json(g.at("w1"));
          if (r.size() != 2) throw ConfigError("target.grid.w1 must be [lo, hi]");
          o.grid.w1_lo = r[0], o.grid.w1_hi = r[1];
        }
        if (g.contains("w2")) {
          const Vector r = reals_from_json(g.at("w2"));
          if (r.size() != 2) throw ConfigError("target.grid.w2 must be [lo, hi]");
          o.grid.w2_lo = r[0], o.grid.w2_hi = r[1];
        }
        o.grid.steps = detail::get_or<int>(g, "steps", o.grid.steps);
        if (g.contains("tail")) o.grid.tail = reals_from_json(g.at("tail"));
        if (o.grid.steps < 1) throw ConfigError("target.grid.steps must be >= 1");
      }
    }
    if (j.contains("attack")) {
      const auto& a = j.at("attack");
      auto& o = c.attack;
      o.name = check_name("attack", detail::get_or<std::string>(a, "name", o.name), kAttacks);
      o.options = attack_options_from_json(a);
      o.fw_domain = check_name("frank-wolfe domain", detail::get_or<std::string>(a, "fw_domain", o.fw_domain), {"grid", "line"});
      o.fw_step = check_name("frank-wolfe step rule", detail::get_or<std::string>(a, "fw_step", o.fw_step), {"open_loop", "line_search"});
      o.fw_iters = detail::get_or<int>(a, "fw_iters", o.fw_iters);
      o.fw_grid_steps = detail::get_or<int>(a, "fw_grid_steps", o.fw_grid_steps);
      o.fw_lo = detail::real_or(a, "fw_lo", o.fw_lo);
      o.fw_hi = detail::real_or(a, "fw_hi", o.fw_hi);
      if (a.contains("fw_labels")) o.fw_labels = reals_from_json(a.at("fw_labels"));
    }
    if (j.contains("train")) c.train = train_options_from_json(j.at("train"));
    if (j.contains("eps_d")) {
      const auto& e = j.at("eps_d");
      c.eps_d = e.is_array() ? reals_from_json(e) : Vector{real_from_json(e)};
    }
    if (c.eps_d.empty()) throw ConfigError("eps_d must not be empty");
    for (double e : c.eps_d)
      if (!(e > 0.0) || !std::isfinite(e)) throw ConfigError("eps_d entries must be positive");
    c.eps_mode = check_name("eps_mode", detail::get_or<std::string>(j, "eps_mode", c.eps_mode), {"absolute", "tau_multiple"});
    c.c_convention = detail::get_or<int>(j, "c_convention", 0);
    if (j.contains("defense")) {
      const auto& d = j.at("defense");
      auto& o = c.defense;
      o.name = check_name("defense", detail::get_or<std::string>(d, "name", o.name), kDefenses);
      o.fraction = detail::real_or(d, "fraction", o.fraction);
      o.rounds = detail::get_or<int>(d, "rounds", o.rounds);
      o.k = detail::get_or<int>(d, "k", o.k);
      if (!(o.fraction >= 0.0 && o.fraction < 1.0)) throw ConfigError("defense.fraction must lie in [0, 1)");
      if (o.rounds < 1 || o.k < 1) throw ConfigError("defense.rounds and defense.k must be >= 1");
    }
    c.output_dir = detail::get_or<std::string>(j, "output_dir", c.output_dir);
    return c;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
}

/// Checks that every file the config references exists.
inline void validate_paths(const ExperimentConfig& c, const std::filesystem::path& base) {
  auto need = [&](const std::string& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string(what) + " path is required");
    const std::filesystem::path full = std::filesystem::path(p).is_absolute() ? std::filesystem::path(p) : base / p;
    if (!std::filesystem::exists(full)) throw ConfigError(std::string(what) + " '" + full.string() + "' does not exist");
  };
  if (c.dataset.generator == "mnist" || c.dataset.generator == "file") need(c.dataset.path, "dataset");
  if (c.target.source == "file" || c.target.source == "scaled") need(c.target.path, "target");
  for (const auto& p : c.target.paths) need(p, "candidate");
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j);
}

}  // namespace poisonlab
