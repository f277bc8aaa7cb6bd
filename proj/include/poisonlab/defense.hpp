#pragma once

// Defenses: Sever gradient-outlier filtering and Deep Partition Aggregation
// with per-sample certificates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "poisonlab/data.hpp"
#include "poisonlab/errors.hpp"
#include "poisonlab/mathcore.hpp"
#include "poisonlab/models.hpp"
#include "poisonlab/parallel.hpp"
#include "poisonlab/train.hpp"

namespace poisonlab {

// ---------------------------------------------------------------------------
// Sever.

/// Outlier scores of the rows of a gradient matrix: squared projection of
/// each mean-centered row onto the top right singular vector.
inline Vector sever_scores(const Matrix& grads) {
  const std::size_t n = grads.rows(), p = grads.cols();
  if (n == 0 || p == 0) throw ShapeError("sever_scores: empty gradient matrix");
  Vector mean(p, 0.0);
  for (std::size_t i = 0; i < n; ++i) axpy(1.0, grads.row(i), mean);
  for (double& v : mean) v /= static_cast<double>(n);
  Matrix centered = grads;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) centered(i, j) -= mean[j];
  const auto top = top_singular_vector(centered);
  Vector scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double proj = dot(centered.row(i), top.v);
    scores[i] = proj * proj;
  }
  return scores;
}

struct SeverResult {
  Dataset filtered;
  std::vector<std::size_t> kept;  ///< indices into the input, ascending
  std::vector<std::vector<std::size_t>> removed_per_round;
};

/// Keeps ceil((1 - fraction) n) samples, removing the rest in equal shares
/// over `rounds` rounds. Each round scores the current samples at the current parameters, drops the
/// highest scores (ties to the larger index), and retrains for the next round.
inline SeverResult sever_filter(const Dataset& mixed, const ModelSpec& spec, const Params& trained, double fraction,
                                int rounds, const TrainOptions& train_opts, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw DomainError("sever_filter: fraction must lie in (0, 1)");
  if (rounds < 1) throw DomainError("sever_filter: rounds must be >= 1");
  const std::size_t n = mixed.size();
  const auto keep_total = static_cast<std::size_t>(std::ceil((1.0 - fraction) * static_cast<double>(n) - 1e-9));
  if (keep_total == 0) throw DomainError("sever_filter: fraction removes every sample");
  const std::size_t remove_total = n - keep_total;

  SeverResult res;
  res.kept.resize(n);
  std::iota(res.kept.begin(), res.kept.end(), std::size_t{0});
  Params w = trained;
  for (int r = 0; r < rounds; ++r) {
    const std::size_t quota = remove_total * static_cast<std::size_t>(r + 1) / static_cast<std::size_t>(rounds) -
                              remove_total * static_cast<std::size_t>(r) / static_cast<std::size_t>(rounds);
    const Dataset cur = subset(mixed, res.kept);
    if (r > 0) w = train(spec, cur, train_opts, seed);
    Matrix grads(cur.size(), spec.num_params());
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const Vector g = param_grad(spec, w, cur.x.row(i), label_at(cur, i));
      std::copy(g.begin(), g.end(), grads.row(i).begin());
    }
    const Vector scores = sever_scores(grads);
    std::vector<std::size_t> order(cur.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return a > b;
    });
    std::vector<std::size_t> drop(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(quota));
    std::vector<std::size_t> removed;
    for (std::size_t k : drop) removed.push_back(res.kept[k]);
    std::sort(removed.begin(), removed.end());
    std::vector<std::size_t> next;
    for (std::size_t i : res.kept)
      if (!std::binary_search(removed.begin(), removed.end(), i)) next.push_back(i);
    res.kept = std::move(next);
    res.removed_per_round.push_back(std::move(removed));
  }
  res.filtered = subset(mixed, res.kept);
  return res;
}

// ---------------------------------------------------------------------------
// Deep Partition Aggregation.

/// Partition of sample `index`: a pure function of (index, seed, k).
inline std::size_t dpa_partition(std::size_t index, std::uint64_t seed, std::size_t k) {
  return static_cast<std::size_t>(splitmix64(hash_combine(seed, index)) % k);
}

struct Ensemble {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  ModelSpec spec;
  std::vector<Params> models;
  std::vector<std::size_t> assignment;  ///< partition of each training sample
};

/// Partition index lists for n samples; throws if any partition is empty.
inline std::vector<std::vector<std::size_t>> dpa_partitions(std::size_t n, std::uint64_t seed, std::size_t k) {
  if (k < 1) throw DomainError("dpa: k must be >= 1");
  if (k > n) throw DomainError("dpa: k exceeds the number of samples");
  std::vector<std::vector<std::size_t>> parts(k);
  for (std::size_t i = 0; i < n; ++i) parts[dpa_partition(i, seed, k)].push_back(i);
  for (std::size_t j = 0; j < k; ++j)
    if (parts[j].empty()) throw DomainError("dpa: partition " + std::to_string(j) + " is empty (k too large)");
  return parts;
}

inline Ensemble dpa_train(const Dataset& mixed, const ModelSpec& spec, std::size_t k, std::uint64_t seed,
                          const TrainOptions& train_opts, int jobs = 1) {
  if (!spec.is_classifier()) throw DomainError("dpa_train: requires a classification model");
  const auto parts = dpa_partitions(mixed.size(), seed, k);
  Ensemble e{k, seed, spec, std::vector<Params>(k), std::vector<std::size_t>(mixed.size())};
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i : parts[j]) e.assignment[i] = j;
  parallel_for(k, jobs, [&](std::size_t j) { e.models[j] = train(spec, subset(mixed, parts[j]), train_opts, seed); });
  return e;
}

struct DpaPrediction {
  int label = 0;
  int certified_budget = 0;
  std::vector<int> votes;
};

/// Plurality vote (ties to the smaller class) and the number of base models
/// an adversary may change without flipping it:
/// floor((N_top - N_second - [second < top]) / 2).
inline DpaPrediction dpa_vote(std::vector<int> votes) {
  if (votes.empty()) throw DomainError("dpa_vote: no classes");
  DpaPrediction out;
  out.label = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  int second = -1;
  for (int c = 0; c < static_cast<int>(votes.size()); ++c) {
    if (c == out.label) continue;
    if (second < 0 || votes[c] > votes[second]) second = c;
  }
  if (second < 0) {
    out.certified_budget = votes[out.label] / 2;
  } else {
    const int gap = votes[out.label] - votes[second] - (second < out.label ? 1 : 0);
    out.certified_budget = gap >= 0 ? gap / 2 : 0;
  }
  out.votes = std::move(votes);
  return out;
}

inline DpaPrediction dpa_predict(const Ensemble& e, std::span<const double> x) {
  std::vector<int> votes(e.spec.num_classes(), 0);
  for (const auto& m : e.models) ++votes[static_cast<std::size_t>(predict(e.spec, m, x))];
  return dpa_vote(std::move(votes));
}

}  // namespace poisonlab
