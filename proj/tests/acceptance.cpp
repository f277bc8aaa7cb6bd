// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. All randomness is pinned to seed 0 unless a criterion asks for
// several seeds.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "poisonlab/poisonlab.hpp"

using namespace poisonlab;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Params toy_w(double s) { return Params{{0.0, s * std::log(2.0)}}; }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------

Outcome ac1_lambert() {
  Rng rng(0, 1);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double x = rng.uniform(-kInvE, 1000.0);
    const double w = lambert_w0(x);
    worst = std::max(worst, std::abs(w * std::exp(w) - x) / std::max(1.0, std::abs(x)));
  }
  const double w1e = lambert_w0(kInvE);
  const bool ok = worst <= 1e-12 && std::abs(w1e - 0.28) < 0.005;
  return {ok, fmt("max scaled residual %.2e, W(1/e) = %.5f", worst, w1e)};
}

Outcome ac2_toy_threshold() {
  const Dataset toy = gen_toy3();
  const auto spec = ModelSpec::logistic(2);
  const double align = alignment(spec, toy_w(2), toy);
  const double tau = tau_threshold(spec, toy_w(2), toy).tau;
  const double expect = 4.0 * std::log(2.0) / 15.0;
  const bool ok = std::abs(align - expect) <= 1e-10 && std::abs(tau - 0.664) <= 0.01;
  return {ok, fmt("alignment %.12f (expected %.12f), tau %.4f", align, expect, tau)};
}

std::vector<Params> or_grid() {
  std::vector<Params> out;
  for (int a = 0; a < 5; ++a)
    for (int b = 0; b < 5; ++b) out.push_back(Params{{-2.0 + 0.25 * a, -2.0 + 0.25 * b, 0.5}});
  return out;
}

struct OrSweep {
  Dataset train_set, test;
  SweepOptions opts;
};

OrSweep or_sweep_setup(int jobs) {
  auto [tr, te] = split(gen_or(0, 50, 0.05), 0.7, 0);
  SweepOptions o;
  o.eps_list = {0.5, 1.25};
  o.eps_mode = EpsMode::tau_multiple;
  o.gc.lr = 1.0;
  o.gc.clip_mode = ClipMode::none;
  o.jobs = jobs;
  return {tr, te, o};
}

Outcome ac3_phase_transition() {
  const auto s = or_sweep_setup(1);
  const auto spec = ModelSpec::logistic(3);
  const auto targets = or_grid();
  for (const auto& t : targets)
    if (accuracy(spec, t, s.test) != 0.0) return {false, "grid target with nonzero accuracy"};
  const auto rows = sweep_heatmap(s.train_set, s.test, spec, targets, s.opts);
  int induced = 0;
  std::vector<double> below, above;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].error.empty()) return {false, "cell error: " + rows[i].error};
    if (i % 2 == 0) {
      below.push_back(rows[i].grad_norm);
    } else {
      above.push_back(rows[i].grad_norm);
      induced += rows[i].poisoned_acc <= 5.0 ? 1 : 0;
    }
  }
  const double ratio = median(below) / median(above);
  return {induced >= 23 && ratio >= 10.0,
          fmt("%d/25 cells at 1.25 tau with accuracy <= 5%%; median grad norm 0.5 tau / 1.25 tau = %.1f", induced, ratio)};
}

Outcome ac4_least_squares() {
  const auto spec = ModelSpec::least_squares(2);
  const Params target{{-1.0, 2.0}};
  double worst_merit = 0.0, worst_dist = 0.0;
  for (std::uint64_t seed : {0, 1, 2}) {
    const Dataset ds = gen_gauss_regression(seed, 100, 2, Vector{1.0, -1.0}, 0.1);
    for (double eps : {0.01, 0.1, 1.0}) {
      AttackOptions o;
      o.seed = seed;
      o.clip_mode = ClipMode::none;
      o.optimize_labels = true;
      const auto r = gradient_canceling(ds, spec, target, eps, o);
      const Params w = train(spec, concat(ds, r.poison), {}, seed);
      worst_merit = std::max(worst_merit, r.final_merit);
      worst_dist = std::max(worst_dist, distance(w.values, target.values));
    }
  }
  return {worst_merit < 1e-10 && worst_dist < 1e-3,
          fmt("worst final merit %.2e, worst retrained distance %.2e", worst_merit, worst_dist)};
}

Outcome ac5_scaling_dichotomy() {
  const Dataset toy = gen_toy3();
  const auto spec = ModelSpec::logistic(2);
  std::string detail;
  bool ok = true;
  for (double lr : {0.01, 0.1, 1.0}) {
    AttackOptions o;
    o.lr = lr;
    o.clip_mode = ClipMode::none;
    const auto r = gradient_canceling(toy, spec, toy_w(2), 0.52, o);
    const double ratio = r.final_merit / r.initial_merit;
    ok = ok && ratio > 0.1;
    detail += fmt("2w* lr %g: final/initial %.4f; ", lr, ratio);
  }
  // Smallest merit any poison can reach at this budget: the poison mean's
  // alignment with w is bounded below by -W(1/e).
  const Vector gmu = mean_param_grad(spec, toy_w(2), toy);
  const double wn = 2.0 * std::log(2.0);
  const double floor_res = gmu[1] - 0.52 * lambert_w0(kInvE) / wn;
  detail += fmt("attainable floor %.3e; ", 0.5 * floor_res * floor_res);
  AttackOptions o;
  o.lr = 1.0;
  o.clip_mode = ClipMode::none;
  const auto r = gradient_canceling(toy, spec, toy_w(2 / 1.1), 0.52, o);
  ok = ok && r.final_merit < 1e-6;
  detail += fmt("(2/1.1)w* lr 1: final merit %.2e", r.final_merit);
  return {ok, detail};
}

// Central difference of f along each coordinate.
template <typename F>
Vector fd_grad(F&& f, Vector at, double h = 1e-6) {
  Vector g(at.size());
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double keep = at[i];
    at[i] = keep + h;
    const double fp = f(at);
    at[i] = keep - h;
    const double fm = f(at);
    at[i] = keep;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

double rel_err(const Vector& a, const Vector& b) {
  double e = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) e = std::max(e, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  return e;
}

Outcome ac6_derivative_oracles() {
  Rng rng(0);
  const std::vector<ModelSpec> specs{ModelSpec::least_squares(4), ModelSpec::logistic(4), ModelSpec::softmax(4, 3),
                                     ModelSpec::mlp(4, 5, 3, 0.2)};
  double worst_g = 0.0, worst_m = 0.0;
  for (const auto& spec : specs) {
    for (int done = 0; done < 100;) {
      Params p{Vector(spec.num_params())};
      for (double& v : p.values) v = 0.7 * rng.normal();
      Vector x(spec.input_dim);
      for (double& v : x) v = rng.normal();
      bool near_kink = false;
      if (spec.family == Family::mlp1)
        for (int j = 0; j < spec.hidden; ++j)
          near_kink = near_kink || std::abs(dot(p.view().subspan(j * spec.input_dim, spec.input_dim), x)) < 1e-2;
      if (near_kink) continue;
      const double y = spec.is_classifier() ? static_cast<double>(rng.below(spec.num_classes())) : rng.normal();
      Vector v(spec.num_params());
      for (double& e : v) e = rng.normal();
      worst_g = std::max(worst_g, rel_err(param_grad(spec, p, x, y),
                                          fd_grad([&](const Vector& w) { return loss(spec, Params{w}, x, y); }, p.values)));
      worst_m = std::max(worst_m, rel_err(mixed_vjp(spec, p, x, y, v),
                                          fd_grad([&](const Vector& xx) { return dot(param_grad(spec, p, xx, y), v); }, x)));
      ++done;
    }
  }
  return {worst_g <= 1e-6 && worst_m <= 1e-5,
          fmt("worst relative error: param_grad %.2e, mixed_vjp %.2e (400 cases each)", worst_g, worst_m)};
}

Outcome ac7_membership() {
  const auto spec = ModelSpec::logistic(2);
  const Dataset toy = gen_toy3();
  std::vector<Vector> xs;
  for (int i = 0; i <= 40; ++i)
    for (int j = 0; j <= 40; ++j) xs.push_back({-5.0 + 0.25 * i, -5.0 + 0.25 * j});
  Rng rng(0);
  int agree = 0, drawn = 0;
  while (drawn < 50) {
    const Params w{{rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)}};
    const double l_star = tau_threshold(spec, w, toy).lambda_star;
    if (!(l_star >= 0.1 && l_star <= 0.9)) continue;
    ++drawn;
    std::vector<Vector> grads;
    grads.reserve(xs.size() * 2);
    for (const auto& x : xs)
      for (double y : {0.0, 1.0}) grads.push_back(param_grad(spec, w, x, y));
    const Vector gmu = mean_param_grad(spec, w, toy);
    const bool above = membership_check(gmu, grads, std::min(1.0, l_star + 0.05));
    const bool below = membership_check(gmu, grads, l_star - 0.05);
    agree += above && !below ? 1 : 0;
  }
  return {agree >= 48, fmt("%d/50 targets agree with the closed-form threshold", agree)};
}

Outcome ac8_cross_entropy() {
  Rng rng(0);
  double worst_gap = kInf;
  bool ok = true;
  std::string detail;
  for (int c : {2, 3, 10}) {
    const double wc = lambert_w0(static_cast<double>(c - 1) * kInvE);
    for (int t = 0; t < 100000; ++t) {
      Vector h(static_cast<std::size_t>(c));
      for (double& v : h) v = 4.0 * rng.normal();
      const auto y = rng.below(static_cast<std::uint64_t>(c));
      const Vector p = detail::softmax(h);
      double s = 0.0;
      for (std::size_t k = 0; k < h.size(); ++k) s += h[k] * (p[k] - (k == y ? 1.0 : 0.0));
      worst_gap = std::min(worst_gap, s + wc);
      ok = ok && s >= -wc - 1e-9;
    }
    // Logits (t, 0, ..., 0) with label 0 approach the bound.
    double best = kInf;
    for (double t = -5.0; t <= 10.0; t += 1e-4) best = std::min(best, t * (1.0 / (1.0 + (c - 1) * std::exp(-t)) - 1.0));
    ok = ok && std::abs(best + wc) <= 1e-3;
    detail += fmt("c=%d construction gap %.1e; ", c, std::abs(best + wc));
  }
  detail += fmt("min draw slack %.2e; ", worst_gap);
  const Dataset ds = gen_gauss_classification(0, 60, 3, 1.0);
  const auto lg = ModelSpec::logistic(4);
  const auto sm = ModelSpec::softmax(4, 2);
  double worst_tau = 0.0;
  for (int t = 0; t < 20; ++t) {
    Params w{Vector(4)};
    for (double& v : w.values) v = rng.normal();
    Params wm{Vector(8, 0.0)};
    for (std::size_t i = 0; i < 4; ++i) wm[2 * i + 1] = w[i];
    worst_tau = std::max(worst_tau, std::abs(tau_threshold(lg, w, ds).tau - tau_threshold(sm, wm, ds, 2).tau));
  }
  ok = ok && worst_tau <= 1e-12;
  detail += fmt("max |tau(c=2) - binary tau| %.1e", worst_tau);
  return {ok, detail};
}

Outcome ac9_frank_wolfe() {
  const Dataset ds = gen_gauss_regression(0, 100, 2, Vector{1.0, -1.0}, 0.1);
  const auto spec = ModelSpec::least_squares(2);
  const auto dom = grid_domain(Vector{-4, -4}, Vector{4, 4}, 41, Vector{-10, -5, 0, 5, 10});
  const auto r = frank_wolfe_attack(ds, spec, Params{{-1, 2}}, 1.0, dom, 500);
  bool support_ok = true;
  for (std::size_t t = 0; t < r.support_trace.size(); ++t) support_ok = support_ok && r.support_trace[t] <= t + 1;
  const double obj = r.objective_trace.back();
  return {support_ok && obj < 1e-6, fmt("support bound %s, objective after 500 iterations %.2e",
                                        support_ok ? "held" : "violated", obj)};
}

Outcome ac10_defenses() {
  std::string detail;
  bool ok = true;
  {
    const auto spec = ModelSpec::least_squares(2);
    Dataset ds = gen_gauss_regression(11, 60, 2, Vector{1.0, -1.0}, 0.1);
    const Params w = train(spec, ds, {}, 0);
    const std::size_t planted = 17;
    ds.x(planted, 0) = 30.0;
    ds.x(planted, 1) = 30.0;
    ds.y[planted] = 200.0;
    const double big = norm2(param_grad(spec, w, ds.x.row(planted), label_at(ds, planted)));
    double typical = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (i != planted) typical = std::max(typical, norm2(param_grad(spec, w, ds.x.row(i), label_at(ds, i))));
    const auto r = sever_filter(ds, spec, w, 0.05, 2, {}, 0);
    const auto& first = r.removed_per_round.front();
    const bool removed = std::find(first.begin(), first.end(), planted) != first.end();
    ok = ok && big >= 100.0 * typical && removed;
    detail += fmt("outlier %.0fx largest clean gradient, removed in round 1: %s; ", big / typical, removed ? "yes" : "no");
  }
  {
    const auto spec = ModelSpec::logistic(3);
    const Params target{{0.5, 0.5, -0.8}};
    int shrunk = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto [tr, te] = split(gen_or(seed, 50, 0.05), 0.7, seed);
      const double clean = accuracy(spec, train(spec, tr, {}, seed), te);
      AttackOptions o;
      o.seed = seed;
      o.clip_mode = ClipMode::none;
      const auto att = gradient_canceling(tr, spec, target, 0.1, o);
      const Dataset mixed = concat(tr, att.poison);
      const Params wp = train(spec, mixed, {}, seed);
      const double undefended = clean - accuracy(spec, wp, te);
      const auto sv = sever_filter(mixed, spec, wp, 0.1 / 1.1, 2, {}, seed);
      const double defended = clean - accuracy(spec, train(spec, sv.filtered, {}, seed), te);
      shrunk += std::abs(defended) < std::abs(undefended) ? 1 : 0;
    }
    ok = ok && shrunk == 5;
    detail += fmt("Sever shrank the GC drop on %d/5 seeds; ", shrunk);
  }
  {
    const auto spec = ModelSpec::logistic(3);
    const std::size_t k = 5;
    auto [tr, te] = split(gen_or(0, 50, 0.2), 0.7, 0);
    const auto ens = dpa_train(tr, spec, k, 0, {});
    int certified = 0, violations = 0;
    for (std::size_t i = 0; i < te.size(); ++i) {
      const auto x = te.x.row(i);
      const auto p = dpa_predict(ens, x);
      if (p.certified_budget < 1) continue;
      ++certified;
      // A replaced shard can make its base model vote for any class.
      for (std::size_t j = 0; j < k; ++j)
        for (int c = 0; c < static_cast<int>(spec.num_classes()); ++c) {
          std::vector<int> votes(static_cast<std::size_t>(spec.num_classes()), 0);
          for (std::size_t m = 0; m < k; ++m) {
            const int v = m == j ? c : predict(spec, ens.models[m], x);
            ++votes[static_cast<std::size_t>(v)];
          }
          violations += dpa_vote(votes).label != p.label ? 1 : 0;
        }
    }
    ok = ok && certified > 0 && violations == 0;
    detail += fmt("DPA k=5: %d certified points, %d prediction flips under single-shard corruption", certified, violations);
  }
  return {ok, detail};
}

Outcome ac11_budget_monotone() {
  auto [tr, te] = split(gen_gauss_classification(0, 1000, 10, 2.0), 0.7, 0);
  const auto spec = ModelSpec::logistic(11);
  const Params w0 = train(spec, tr, {}, 0);
  const Params target = grad_ascent_corrupt(tr, spec, w0, 0.5, 50, 0).params;
  SweepOptions o;
  o.eps_list = {0.25, 0.5, 1.0, 2.0};
  o.eps_mode = EpsMode::tau_multiple;
  o.gc.epochs = 2000;
  o.gc.lr = 20.0;
  o.gc.clip_mode = ClipMode::none;
  const auto rows = sweep_heatmap(tr, te, spec, {target}, o);
  bool ok = rows.front().tau > 0.0;
  std::string detail = fmt("tau %.3f; grad norms", rows.front().tau);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ok = ok && rows[i].error.empty();
    if (i > 0) ok = ok && rows[i].grad_norm <= 1.05 * rows[i - 1].grad_norm;
    detail += fmt(" %.3e", rows[i].grad_norm);
  }
  return {ok, detail};
}

Outcome ac12_determinism() {
  const auto dir = std::filesystem::temp_directory_path() / "poisonlab_acceptance";
  std::filesystem::create_directories(dir);
  const auto spec = ModelSpec::logistic(3);
  std::vector<std::string> bytes;
  for (int jobs : {1, 4}) {
    const auto s = or_sweep_setup(jobs);
    const auto path = dir / fmt("heatmap_%d.csv", jobs);
    atomic_write(path, sweep_csv(sweep_heatmap(s.train_set, s.test, spec, or_grid(), s.opts)));
    bytes.push_back(read_file(path));
  }
  std::filesystem::remove_all(dir);
  const bool ok = bytes[0] == bytes[1] && !bytes[0].empty();
  return {ok, fmt("two runs (1 and 4 workers) %s, %zu bytes", ok ? "byte-identical" : "differ", bytes[0].size())};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"AC1", ac1_lambert},          {"AC2", ac2_toy_threshold}, {"AC3", ac3_phase_transition},
      {"AC4", ac4_least_squares},    {"AC5", ac5_scaling_dichotomy}, {"AC6", ac6_derivative_oracles},
      {"AC7", ac7_membership},       {"AC8", ac8_cross_entropy}, {"AC9", ac9_frank_wolfe},
      {"AC10", ac10_defenses},       {"AC11", ac11_budget_monotone}, {"AC12", ac12_determinism}};
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %s (%.2f s): %s\n", name, o.pass ? "PASS" : "FAIL", secs, o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
