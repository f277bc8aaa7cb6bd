// poisonlab command-line interface.
//
// Exit codes: 0 success, 1 unexpected failure, 2 configuration or usage
// error, 3 data error, 4 divergence, 5 invalid numerical request.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "poisonlab/poisonlab.hpp"

namespace fs = std::filesystem;
using namespace poisonlab;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kDivergence = 4, kDomain = 5 };

const std::vector<std::string> kCommands{"gen-data", "train",  "threshold", "make-target", "select-target",
                                         "attack",   "retrain", "sweep",    "defend"};

struct Common {
  std::string config;
  std::string out;
  int jobs = 0;
};

struct Context {
  ExperimentConfig cfg;
  fs::path base = ".";
  fs::path out_dir;
  int jobs = 1;

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
  }
  fs::path output(const std::string& name) const { return out_dir / name; }
};

Context make_context(const Common& common, bool need_config) {
  Context ctx;
  if (!common.config.empty()) {
    ctx.cfg = load_config(common.config);
    ctx.base = fs::path(common.config).parent_path();
    if (ctx.base.empty()) ctx.base = ".";
    validate_paths(ctx.cfg, ctx.base);
  } else if (need_config) {
    throw ConfigError("--config is required for this subcommand");
  }
  if (const char* env = std::getenv("POISONLAB_SEED")) {
    try {
      std::size_t used = 0;
      ctx.cfg.seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("POISONLAB_SEED must be an unsigned integer, got '") + env + "'");
    }
  }
  ctx.out_dir = common.out.empty() ? fs::path(ctx.cfg.output_dir) : fs::path(common.out);
  if (common.out.empty() && ctx.out_dir.is_relative() && !common.config.empty()) ctx.out_dir = ctx.base / ctx.out_dir;
  ctx.jobs = common.jobs > 0 ? common.jobs : default_jobs();
  return ctx;
}

void write_json(const fs::path& path, const Json& j) { atomic_write(path, j.dump(2) + "\n"); }

Json read_json(const fs::path& path) {
  try {
    return Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw DataError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Data, model and target resolution.

Dataset generate(const DatasetConfig& d, std::uint64_t seed, const Context& ctx) {
  if (d.generator == "or") return gen_or(seed, d.reps, d.noise);
  if (d.generator == "gauss_classification") return gen_gauss_classification(seed, d.n, d.d, d.sep);
  if (d.generator == "gauss_regression") return gen_gauss_regression(seed, d.n, static_cast<int>(d.w_true.size()), d.w_true, d.noise);
  if (d.generator == "toy3") return gen_toy3();
  if (d.generator == "file") return dataset_from_json(read_json(ctx.resolve(d.path)));
  throw ConfigError(unknown_name("dataset generator", d.generator, kGenerators));
}

TrainTest load_data(const Context& ctx) {
  const auto& d = ctx.cfg.dataset;
  if (d.generator == "mnist") {
    const std::set<int> keep(d.classes.begin(), d.classes.end());
    return load_mnist(ctx.resolve(d.path), keep);
  }
  Dataset all = generate(d, ctx.cfg.seed, ctx);
  if (d.test_fraction <= 0.0 || d.generator == "toy3") return {all, all};
  auto [train, test] = split(all, 1.0 - d.test_fraction, hash_combine(ctx.cfg.seed, 0x5b11));
  return {train, test};
}

ModelSpec model_for(const Context& ctx, const Dataset& ds) {
  return spec_for(family_from_string(ctx.cfg.model), ds, ctx.cfg.hidden, ctx.cfg.leaky_slope);
}

Params clean_model(const Context& ctx, const ModelSpec& spec, const Dataset& train_set) {
  return train(spec, train_set, ctx.cfg.train, ctx.cfg.seed);
}

ParamFile load_params(const fs::path& path, const ModelSpec& spec) {
  ParamFile f = params_from_json(read_json(path));
  if (!(f.spec == spec))
    throw ShapeError("parameter file '" + path.string() + "' is for model " + spec_to_json(f.spec).dump() +
                     ", expected " + spec_to_json(spec).dump());
  return f;
}

std::vector<Params> grid_targets(const GridConfig& g, const ModelSpec& spec) {
  std::vector<Params> out;
  auto at = [&](double lo, double hi, int k) { return g.steps == 1 ? lo : lo + (hi - lo) * k / (g.steps - 1); };
  for (int a = 0; a < g.steps; ++a)
    for (int b = 0; b < g.steps; ++b) {
      Params p{{at(g.w1_lo, g.w1_hi, a), at(g.w2_lo, g.w2_hi, b)}};
      p.values.insert(p.values.end(), g.tail.begin(), g.tail.end());
      if (p.size() != spec.num_params())
        throw ConfigError("grid targets have " + std::to_string(p.size()) + " coordinates but the model needs " +
                          std::to_string(spec.num_params()));
      out.push_back(std::move(p));
    }
  return out;
}

std::vector<TargetCandidate> resolve_targets(const Context& ctx, const ModelSpec& spec, const Dataset& train_set) {
  const auto& t = ctx.cfg.target;
  std::vector<TargetCandidate> out;
  auto external = [](const Params& p) { return TargetCandidate{p, 0.0, Provenance::external}; };
  if (t.source == "file") {
    auto f = load_params(ctx.resolve(t.path), spec);
    out.push_back(f.meta ? *f.meta : external(f.params));
  } else if (t.source == "inline") {
    if (t.values.size() != spec.num_params())
      throw ConfigError("target.values has " + std::to_string(t.values.size()) + " entries but the model needs " +
                        std::to_string(spec.num_params()));
    out.push_back(external(Params{t.values}));
  } else if (t.source == "scaled") {
    const auto f = load_params(ctx.resolve(t.path), spec);
    out.push_back({scale_params(spec, f.params, t.scale), 0.0, Provenance::scaled});
  } else if (t.source == "grid") {
    for (auto& p : grid_targets(t.grid, spec)) out.push_back(external(p));
  } else {
    const Params w0 = clean_model(ctx, spec, train_set);
    const std::uint64_t seed = hash_combine(ctx.cfg.seed, 0x7a67);
    if (t.source == "grad_ascent") {
      out.push_back(grad_ascent_corrupt(train_set, spec, w0, t.eps_w, t.steps, seed));
    } else if (t.source == "random") {
      out.push_back(random_corrupt(w0, t.eps_w, seed));
    } else if (t.source == "candidates") {
      for (const auto& p : t.paths) {
        auto f = load_params(ctx.resolve(p), spec);
        out.push_back(f.meta ? *f.meta : external(f.params));
      }
      for (double e : t.eps_w_list) {
        out.push_back(grad_ascent_corrupt(train_set, spec, w0, e, t.steps, seed));
        out.push_back(random_corrupt(w0, e, seed));
      }
      if (out.empty()) throw ConfigError("target source 'candidates' needs target.paths or target.eps_w_list");
    } else {
      throw ConfigError(unknown_name("target source", t.source, kTargetSources));
    }
  }
  return out;
}

TargetCandidate single_target(const Context& ctx, const ModelSpec& spec, const Dataset& train_set,
                              const std::string& override_path) {
  if (!override_path.empty()) {
    auto f = load_params(override_path, spec);
    return f.meta ? *f.meta : TargetCandidate{f.params, 0.0, Provenance::external};
  }
  auto all = resolve_targets(ctx, spec, train_set);
  if (all.size() != 1) throw ConfigError("this subcommand needs a single target; the config yields " + std::to_string(all.size()));
  return all.front();
}

double budget(const Context& ctx, const ModelSpec& spec, const Params& target, const Dataset& clean, double eps) {
  if (ctx.cfg.eps_mode == "tau_multiple") return eps * tau_threshold(spec, target, clean, ctx.cfg.c_convention).tau;
  return eps;
}

// ---------------------------------------------------------------------------
// Attacks.

struct AttackRun {
  AttackResult result;
  std::optional<FwResult> fw;
};

AttackRun run_attack(const Context& ctx, const ModelSpec& spec, const Dataset& clean, const Params& target, double eps) {
  const auto& a = ctx.cfg.attack;
  AttackOptions opts = a.options;
  opts.seed = hash_combine(ctx.cfg.seed, 0xa77a);
  if (a.name == "gc") return {gradient_canceling(clean, spec, target, eps, opts), std::nullopt};
  if (a.name == "gm") return {gradient_matching(clean, spec, target, eps, opts), std::nullopt};
  if (a.name != "fw") throw ConfigError(unknown_name("attack", a.name, kAttacks));

  Vector labels = a.fw_labels;
  if (labels.empty()) {
    if (spec.is_classifier()) {
      for (int k = 0; k < spec.classes; ++k) labels.push_back(k);
    } else {
      for (int k = 0; k < a.fw_grid_steps; ++k) labels.push_back(a.fw_lo + (a.fw_hi - a.fw_lo) * k / std::max(1, a.fw_grid_steps - 1));
    }
  }
  FwDomain dom;
  if (a.fw_domain == "line") {
    dom = line_domain(mean_param_grad(spec, target, clean), a.fw_lo, a.fw_hi, a.fw_grid_steps, labels);
  } else {
    // Free coordinates span [fw_lo, fw_hi]; a coordinate fixed by the domain box (e.g. a bias) keeps its value.
    Vector lo(clean.dim()), hi(clean.dim());
    for (std::size_t j = 0; j < clean.dim(); ++j) {
      lo[j] = std::max(a.fw_lo, clean.box_lo[j]);
      hi[j] = std::min(a.fw_hi, clean.box_hi[j]);
    }
    dom = grid_domain(lo, hi, a.fw_grid_steps, labels);
  }
  FwResult fw = frank_wolfe_attack(clean, spec, target, eps, dom, a.fw_iters,
                                   a.fw_step == "line_search" ? FwStep::line_search : FwStep::open_loop);
  AttackRun run;
  const std::size_t m = std::max<std::size_t>(1, poison_count(clean.size(), eps));
  run.result.poison = atoms_to_dataset(fw.atoms, m, clean);
  run.result.merit_trace = fw.objective_trace;
  for (double v : fw.objective_trace) run.result.grad_norm_trace.push_back(std::sqrt(2.0 * v) / (1.0 + eps));
  run.result.initial_merit = 0.5 * dot(mean_param_grad(spec, target, clean), mean_param_grad(spec, target, clean));
  run.result.final_merit = fw.objective_trace.back();
  run.result.final_grad_norm = norm2(mean_param_grad(spec, target, concat(clean, run.result.poison)));
  run.fw = std::move(fw);
  return run;
}

Json attack_report(const AttackResult& r, double eps, double tau) {
  return {{"eps_d", real_to_json(eps)},
          {"tau", real_to_json(tau)},
          {"poison_count", r.poison.size()},
          {"initial_merit", real_to_json(r.initial_merit)},
          {"final_merit", real_to_json(r.final_merit)},
          {"final_grad_norm", real_to_json(r.final_grad_norm)}};
}

// ---------------------------------------------------------------------------
// Subcommands.

int cmd_gen_data(const Context& ctx) {
  const auto data = load_data(ctx);
  write_json(ctx.output("train.json"), dataset_to_json(data.train));
  write_json(ctx.output("test.json"), dataset_to_json(data.test));
  std::cout << Json{{"train", data.train.size()}, {"test", data.test.size()}, {"dim", data.train.dim()}}.dump() << "\n";
  return kOk;
}

int cmd_train(const Context& ctx) {
  const auto data = load_data(ctx);
  const ModelSpec spec = model_for(ctx, data.train);
  const Params w = clean_model(ctx, spec, data.train);
  write_json(ctx.output("clean_params.json"), params_to_json(spec, w));
  Json summary{{"loss", mean_loss(spec, w, data.train)}, {"grad_norm", norm2(mean_param_grad(spec, w, data.train))}};
  if (spec.is_classifier()) {
    summary["train_acc"] = accuracy_percent(spec, w, data.train);
    summary["test_acc"] = accuracy_percent(spec, w, data.test);
  }
  write_json(ctx.output("train_report.json"), summary);
  std::cout << summary.dump() << "\n";
  return kOk;
}

struct ThresholdArgs {
  std::string model;
  std::string data;
  std::string target;
  int classes = 0;
};

int cmd_threshold(Context ctx, const ThresholdArgs& args, const std::string& out) {
  if (!args.model.empty()) ctx.cfg.model = std::string(to_string(family_from_string(args.model)));
  if (!args.data.empty()) {
    if (fs::exists(args.data)) {
      ctx.cfg.dataset.generator = "file";
      ctx.cfg.dataset.path = fs::absolute(args.data).string();
    } else {
      ctx.cfg.dataset.generator = check_name("dataset", args.data == "gauss" ? "gauss_classification" : args.data, kGenerators);
    }
  }
  if (args.classes > 0) ctx.cfg.c_convention = args.classes;
  const auto data = load_data(ctx);
  const ModelSpec spec = model_for(ctx, data.train);
  const TargetCandidate target = single_target(ctx, spec, data.train, args.target);
  const ThresholdReport rep = tau_threshold(spec, target.params, data.train, ctx.cfg.c_convention);
  const Json j = threshold_to_json(rep);
  if (!out.empty()) write_json(out, j);
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int cmd_make_target(const Context& ctx) {
  const auto data = load_data(ctx);
  const ModelSpec spec = model_for(ctx, data.train);
  auto targets = resolve_targets(ctx, spec, data.train);
  Json list = Json::array();
  for (auto& t : targets) {
    t.tau = tau_threshold(spec, t.params, data.train, ctx.cfg.c_convention).tau;
    list.push_back(params_to_json(spec, t.params, &t));
  }
  if (targets.size() == 1) {
    write_json(ctx.output("target.json"), list.front());
  } else {
    write_json(ctx.output("targets.json"), list);
  }
  Json summary = Json::array();
  for (const auto& t : targets)
    summary.push_back({{"provenance", std::string(to_string(t.provenance))}, {"eps_w", real_to_json(t.eps_w)}, {"tau", real_to_json(t.tau)}});
  std::cout << summary.dump() << "\n";
  return kOk;
}

int cmd_select_target(const Context& ctx) {
  const auto data = load_data(ctx);
  // Validation comes from the training split only; the test set is never used.
  auto [fit, val] = split(data.train, 0.7, hash_combine(ctx.cfg.seed, 0x5e1));
  const ModelSpec spec = model_for(ctx, fit);
  Context inner = ctx;
  auto candidates = resolve_targets(inner, spec, fit);
  AttackOptions gc = ctx.cfg.attack.options;
  gc.seed = hash_combine(ctx.cfg.seed, 0xa77a);
  const int c_conv = ctx.cfg.c_convention > 0 ? ctx.cfg.c_convention : 2;
  const Selection sel = select_target(candidates, ctx.cfg.eps_d.front(), fit, val, spec, gc, c_conv, ctx.jobs);
  write_json(ctx.output("target.json"), params_to_json(spec, sel.target.params, &sel.target));
  const Json report{{"index", sel.index},
                    {"candidates", candidates.size()},
                    {"provenance", std::string(to_string(sel.target.provenance))},
                    {"eps_w", real_to_json(sel.target.eps_w)},
                    {"tau", real_to_json(sel.target.tau)},
                    {"val_score", real_to_json(sel.val_score)},
                    {"initial_merit", real_to_json(sel.initial_merit)},
                    {"final_merit", real_to_json(sel.final_merit)}};
  write_json(ctx.output("selection.json"), report);
  std::cout << report.dump() << "\n";
  return kOk;
}

int cmd_attack(const Context& ctx, const std::string& target_path) {
  const auto data = load_data(ctx);
  const ModelSpec spec = model_for(ctx, data.train);
  const TargetCandidate target = single_target(ctx, spec, data.train, target_path);
  const double tau = tau_threshold(spec, target.params, data.train, ctx.cfg.c_convention).tau;
  const double eps = budget(ctx, spec, target.params, data.train, ctx.cfg.eps_d.front());
  const AttackRun run = run_attack(ctx, spec, data.train, target.params, eps);
  write_json(ctx.output("poison.json"), dataset_to_json(run.result.poison));
  atomic_write(ctx.output("trace.csv"), trace_csv(run.result));
  if (run.result.clean_used) write_json(ctx.output("clean_kept.json"), dataset_to_json(*run.result.clean_used));
  if (run.fw) {
    Json atoms = Json::array();
    for (const auto& a : run.fw->atoms)
      atoms.push_back({{"x", reals_to_json(a.x)}, {"y", real_to_json(a.y)}, {"weight", real_to_json(a.weight)}});
    write_json(ctx.output("atoms.json"), atoms);
  }
  const Json rep = attack_report(run.result, eps, tau);
  write_json(ctx.output("attack_report.json"), rep);
  std::cout << rep.dump() << "\n";
  return kOk;
}

int cmd_retrain(const Context& ctx, const std::string& poison_path, const std::string& target_path,
                const std::string& clean_path) {
  const auto data = load_data(ctx);
  const ModelSpec spec = model_for(ctx, data.train);
  const TargetCandidate target = single_target(ctx, spec, data.train, target_path);
  const Dataset poison = dataset_from_json(read_json(poison_path.empty() ? ctx.output("poison.json") : fs::path(poison_path)));
  const Dataset clean = clean_path.empty() ? data.train : dataset_from_json(read_json(clean_path));
  EvalReport rep = retrain_and_eval(clean, poison, data.test, spec, target.params, ctx.cfg.seed, ctx.cfg.train);
  write_json(ctx.output("retrained_params.json"), params_to_json(spec, rep.retrained));
  const Json j = eval_to_json(rep);
  write_json(ctx.output("eval.json"), j);
  std::cout << j.dump() << "\n";
  return kOk;
}

int cmd_sweep(const Context& ctx) {
  const auto data = load_data(ctx);
  const ModelSpec spec = model_for(ctx, data.train);
  const auto cands = resolve_targets(ctx, spec, data.train);
  std::vector<Params> targets;
  for (const auto& c : cands) targets.push_back(c.params);
  SweepOptions opts;
  opts.eps_list = ctx.cfg.eps_d;
  opts.eps_mode = eps_mode_from_string(ctx.cfg.eps_mode);
  opts.gc = ctx.cfg.attack.options;
  opts.train = ctx.cfg.train;
  opts.base_seed = ctx.cfg.seed;
  opts.jobs = ctx.jobs;
  opts.c_convention = ctx.cfg.c_convention;
  if (ctx.cfg.attack.name != "gc") throw ConfigError("sweep runs the gc attack; got attack '" + ctx.cfg.attack.name + "'");
  const auto rows = sweep_heatmap(data.train, data.test, spec, targets, opts);
  atomic_write(ctx.output("heatmap.csv"), sweep_csv(rows));
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.error.empty() ? 0 : 1;
  std::cout << Json{{"cells", rows.size()}, {"failed", failed}}.dump() << "\n";
  return kOk;
}

int cmd_defend(const Context& ctx, const std::string& target_path) {
  const auto data = load_data(ctx);
  const ModelSpec spec = model_for(ctx, data.train);
  const TargetCandidate target = single_target(ctx, spec, data.train, target_path);
  const auto& def = ctx.cfg.defense;
  if (def.name == "none") throw ConfigError("defend needs defense.name 'sever' or 'dpa'");
  Json report = Json::array();
  for (double e : ctx.cfg.eps_d) {
    const double eps = budget(ctx, spec, target.params, data.train, e);
    const AttackRun run = run_attack(ctx, spec, data.train, target.params, eps);
    const Dataset& base = run.result.clean_used ? *run.result.clean_used : data.train;
    const Params w_clean = clean_model(ctx, spec, data.train);
    const EvalReport undefended =
        retrain_and_eval(base, run.result.poison, data.test, spec, target.params, ctx.cfg.seed, ctx.cfg.train, w_clean);
    const Dataset mixed = concat(base, run.result.poison);
    Json row{{"eps_d", real_to_json(eps)}, {"defense", def.name}, {"undefended", eval_to_json(undefended)}};
    if (def.name == "sever") {
      const double frac = def.fraction > 0.0 ? def.fraction : eps / (1.0 + eps);
      const auto sev = sever_filter(mixed, spec, undefended.retrained, frac, def.rounds, ctx.cfg.train, ctx.cfg.seed);
      const Params w = train(spec, sev.filtered, ctx.cfg.train, ctx.cfg.seed);
      std::size_t poison_removed = 0;
      for (const auto& round : sev.removed_per_round)
        for (std::size_t i : round) poison_removed += i >= base.size() ? 1 : 0;
      const double acc = accuracy_percent(spec, w, data.test);
      row["defended"] = {{"poisoned_acc", real_to_json(acc)},
                         {"acc_drop", real_to_json(undefended.clean_acc - acc)},
                         {"kept", sev.filtered.size()},
                         {"poison_removed", poison_removed},
                         {"fraction", frac}};
    } else {
      const Ensemble ens = dpa_train(mixed, spec, static_cast<std::size_t>(def.k), ctx.cfg.seed, ctx.cfg.train, ctx.jobs);
      std::size_t correct = 0, certified = 0;
      const int budget_pts = static_cast<int>(run.result.poison.size());
      for (std::size_t i = 0; i < data.test.size(); ++i) {
        const auto pred = dpa_predict(ens, data.test.x.row(i));
        const bool ok = pred.label == static_cast<int>(data.test.y[i]);
        correct += ok ? 1 : 0;
        certified += ok && pred.certified_budget >= budget_pts ? 1 : 0;
      }
      const double n = static_cast<double>(data.test.size());
      const double acc = 100.0 * static_cast<double>(correct) / n;
      row["defended"] = {{"poisoned_acc", real_to_json(acc)},
                         {"acc_drop", real_to_json(undefended.clean_acc - acc)},
                         {"certified_acc", real_to_json(100.0 * static_cast<double>(certified) / n)},
                         {"k", def.k}};
    }
    report.push_back(row);
  }
  write_json(ctx.output("defense.json"), report);
  std::cout << report.dump() << "\n";
  return kOk;
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kDivergence;
  } catch (const DomainError& e) {
    std::cerr << "invalid request: " << e.what() << "\n";
    return kDomain;
  } catch (const ShapeError& e) {
    std::cerr << "shape mismatch: " << e.what() << "\n";
    return kDomain;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1 && argv[1][0] != '-') {
    const std::string cmd = argv[1];
    if (std::find(kCommands.begin(), kCommands.end(), cmd) == kCommands.end()) {
      std::cerr << "config error: " << unknown_name("subcommand", cmd, kCommands) << "\n";
      return kConfig;
    }
  }

  CLI::App app{"poisonlab: poisoning reachability thresholds, gradient-canceling attacks and defenses"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("-c,--config", common.config, "experiment config (JSON)");
    if (config_required) opt->required();
    opt->check(CLI::ExistingFile);
    sub->add_option("-o,--out", common.out, "output directory (overrides output_dir)");
    sub->add_option("-j,--jobs", common.jobs, "worker threads (default: logical cores)")->check(CLI::NonNegativeNumber);
  };

  auto* gen = app.add_subcommand("gen-data", "generate or load a dataset and write train/test JSON");
  add_common(gen, false);
  auto* trn = app.add_subcommand("train", "train the clean model");
  add_common(trn, false);

  ThresholdArgs th;
  std::string th_out;
  auto* thr = app.add_subcommand("threshold", "print the reachability threshold report of a target");
  add_common(thr, false);
  thr->add_option("--model", th.model, "model family");
  thr->add_option("--data", th.data, "generator name (or, toy3, gauss, gauss_regression) or dataset JSON");
  thr->add_option("--target", th.target, "target parameter file");
  thr->add_option("--classes", th.classes, "class count convention for tau (default: model's)");
  thr->add_option("--report", th_out, "also write the report to this file");

  auto* mk = app.add_subcommand("make-target", "build target parameters");
  add_common(mk, true);
  auto* sel = app.add_subcommand("select-target", "filter candidates by threshold and attack success");
  add_common(sel, true);

  std::string target_path, poison_path, clean_path;
  auto* atk = app.add_subcommand("attack", "construct poison data for a target");
  add_common(atk, true);
  atk->add_option("--target", target_path, "target parameter file (overrides the config)");

  auto* ret = app.add_subcommand("retrain", "retrain on clean + poison and evaluate");
  add_common(ret, true);
  ret->add_option("--poison", poison_path, "poison dataset JSON (default: <out>/poison.json)");
  ret->add_option("--target", target_path, "target parameter file (overrides the config)");
  ret->add_option("--clean", clean_path, "clean dataset JSON to mix with (default: the config's training data)");

  auto* swp = app.add_subcommand("sweep", "target-grid by budget sweep to a heatmap CSV");
  add_common(swp, true);
  auto* dfd = app.add_subcommand("defend", "attack, then evaluate Sever or DPA");
  add_common(dfd, true);
  dfd->add_option("--target", target_path, "target parameter file (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  return guarded([&]() -> int {
    if (gen->parsed()) return cmd_gen_data(make_context(common, false));
    if (trn->parsed()) return cmd_train(make_context(common, false));
    if (thr->parsed()) return cmd_threshold(make_context(common, false), th, th_out);
    if (mk->parsed()) return cmd_make_target(make_context(common, true));
    if (sel->parsed()) return cmd_select_target(make_context(common, true));
    if (atk->parsed()) return cmd_attack(make_context(common, true), target_path);
    if (ret->parsed()) return cmd_retrain(make_context(common, true), poison_path, target_path, clean_path);
    if (swp->parsed()) return cmd_sweep(make_context(common, true));
    if (dfd->parsed()) return cmd_defend(make_context(common, true), target_path);
    return kConfig;
  });
}
