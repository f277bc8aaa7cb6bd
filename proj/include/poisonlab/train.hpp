#pragma once

// Model training from scratch on an empirical distribution.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "poisonlab/attack.hpp"
#include "poisonlab/data.hpp"
#include "poisonlab/errors.hpp"
#include "poisonlab/mathcore.hpp"
#include "poisonlab/models.hpp"

namespace poisonlab {

struct TrainOptions {
  int epochs = 1000;
  /// Step size as a multiple of 1/L, where L bounds the loss curvature
  /// (0.25 lambda_max(X^T X / n) for logistic, 0.5 lambda_max for
  /// cross-entropy families).
  double lr = 1.0;
  double momentum = 0.9;
  Schedule schedule = Schedule::cosine;
  long batch_size = kAutoBatch;
  double grad_tol = 1e-8;
  /// Solve least squares by its normal equations instead of iterating.
  bool closed_form_ls = true;
  /// Reductions are always sequential in a fixed order, so training is
  /// bit-reproducible regardless of this flag; it is kept for configs.
  bool bit_reproducible = true;

  void validate() const {
    if (epochs < 1) throw ConfigError("TrainOptions: epochs must be >= 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("TrainOptions: lr must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("TrainOptions: momentum must lie in [0, 1)");
    if (!(grad_tol >= 0.0)) throw ConfigError("TrainOptions: grad_tol must be >= 0");
    if (batch_size < kAutoBatch) throw ConfigError("TrainOptions: invalid batch_size");
  }

  friend bool operator==(const TrainOptions&, const TrainOptions&) = default;
};

/// Largest eigenvalue of X^T X / n.
inline double feature_curvature(const Dataset& ds) {
  const auto sv = top_singular_vector(ds.x);
  return sv.sigma * sv.sigma / static_cast<double>(ds.size());
}

/// Least-squares minimizer via the normal equations; a tiny ridge is added
/// only when X^T X is numerically singular.
inline Params least_squares_fit(const Dataset& ds) {
  const std::size_t d = ds.dim(), n = ds.size();
  Matrix a(d, d);
  Vector b(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto x = ds.x.row(i);
    for (std::size_t r = 0; r < d; ++r) {
      b[r] += x[r] * ds.y[i];
      for (std::size_t c = 0; c < d; ++c) a(r, c) += x[r] * x[c];
    }
  }
  try {
    return Params{cholesky_solve(a, b)};
  } catch (const DomainError&) {
    double tr = 0.0;
    for (std::size_t r = 0; r < d; ++r) tr += a(r, r);
    const double ridge = 1e-12 * std::max(tr, 1.0);
    for (std::size_t r = 0; r < d; ++r) a(r, r) += ridge;
    return Params{cholesky_solve(a, b)};
  }
}

/// Trains from the deterministic initialization of `seed`.
///
/// Gradient descent with heavy-ball momentum and the configured schedule;
/// full batch for n <= 10^4, otherwise shuffled batches of 1000. Stops at the
/// epoch budget or when the full gradient norm drops below grad_tol.
inline Params train(const ModelSpec& spec, const Dataset& ds, const TrainOptions& opts, std::uint64_t seed) {
  opts.validate();
  spec.validate();
  if (ds.size() == 0) throw DataError("train: empty dataset");
  if (ds.dim() != spec.input_dim) throw ShapeError("train: data width does not match the model");

  if (spec.family == Family::least_squares && opts.closed_form_ls) return least_squares_fit(ds);

  Params p = init_params(spec, seed);
  const double curv = feature_curvature(ds);
  const double bound = spec.family == Family::logistic_binary ? 0.25 * curv : 0.5 * curv;
  const double step0 = bound > 0.0 ? opts.lr / bound : opts.lr;

  const std::size_t n = ds.size();
  const std::size_t batch = resolve_batch(opts.batch_size, n);
  Rng rng(seed, 0x7a);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  Vector vel(p.size(), 0.0);
  for (int t = 0; t < opts.epochs; ++t) {
    const double step = scheduled_lr(step0, opts.schedule, t, opts.epochs);
    if (batch < n) rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      Vector g(p.size(), 0.0);
      for (std::size_t k = start; k < stop; ++k) {
        const Vector gi = param_grad(spec, p, ds.x.row(order[k]), label_at(ds, order[k]));
        axpy(1.0, gi, g);
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      if (batch == n && opts.grad_tol > 0.0 && norm2(g) * inv < opts.grad_tol) return p;
      for (std::size_t i = 0; i < p.size(); ++i) {
        vel[i] = opts.momentum * vel[i] + g[i] * inv;
        p[i] -= step * vel[i];
      }
    }
    if (!all_finite(p.view())) throw DivergenceError("train: parameters became non-finite");
    if (batch < n && opts.grad_tol > 0.0 && norm2(mean_param_grad(spec, p, ds)) < opts.grad_tol) break;
  }
  if (!std::isfinite(mean_loss(spec, p, ds))) throw DivergenceError("train: non-finite loss");
  return p;
}

}  // namespace poisonlab
