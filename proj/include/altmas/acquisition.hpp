#pragma once

// Acquisition functions: random, BALD, and metric-aware mutual information.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "altmas/estimation.hpp"
#include "altmas/metrics.hpp"
#include "altmas/surrogate.hpp"

namespace altmas {

enum class Strategy { kRandom, kBald, kMetricMI, kMultiMetricMI };

inline std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kRandom: return "random";
    case Strategy::kBald: return "bald";
    case Strategy::kMetricMI:
    case Strategy::kMultiMetricMI: return "altmas";
  }
  return "?";
}

/// Score per unlabeled index, in nats. `indices` is ascending; `raw` holds
/// the values before clamping at zero.
struct AcquisitionScores {
  Strategy strategy = Strategy::kRandom;
  std::vector<std::size_t> indices;
  std::vector<double> scores;
  std::vector<double> raw;

  std::size_t size() const { return indices.size(); }
  bool empty() const { return indices.empty(); }

  double at(std::size_t index) const {
    const auto it = std::lower_bound(indices.begin(), indices.end(), index);
    if (it == indices.end() || *it != index) {
      throw ConfigError("no score for index " + std::to_string(index));
    }
    return scores[static_cast<std::size_t>(it - indices.begin())];
  }
};

/// -sum p log p with 0 log 0 = 0.
inline double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

/// Entropy of the distribution obtained by pooling label probabilities
/// within each group.
inline double grouped_entropy(std::span<const double> label_probs,
                              std::span<const ValueGroup> groups) {
  double h = 0.0;
  for (const auto& g : groups) {
    double mass = 0.0;
    for (ClassIndex l : g.labels) mass += label_probs[static_cast<std::size_t>(l)];
    if (mass > 0.0) h -= mass * std::log(mass);
  }
  return h;
}

namespace detail {

// Means are taken relative to the first sample, so that identical passes
// reproduce their common value bit for bit and give a score of exactly 0.
template <typename F>
double sample_mean(std::size_t m, F&& value) {
  const double first = value(0);
  double shift = 0.0;
  for (std::size_t j = 1; j < m; ++j) shift += value(j) - first;
  return first + shift / static_cast<double>(m);
}

inline std::vector<double> mean_probs(const PosteriorSamples& ps, std::size_t i) {
  std::vector<double> mean(static_cast<std::size_t>(ps.num_classes));
  for (std::size_t h = 0; h < mean.size(); ++h) {
    mean[h] = sample_mean(ps.num_samples, [&](std::size_t j) { return ps.row(j, i)[h]; });
  }
  return mean;
}

}  // namespace detail

/// I[y; w | x] = H[mean_j p_j(x)] - mean_j H[p_j(x)].
inline AcquisitionScores bald_scores(const PosteriorSamples& ps,
                                     std::span<const std::size_t> unlabeled) {
  AcquisitionScores out;
  out.strategy = Strategy::kBald;
  out.indices.assign(unlabeled.begin(), unlabeled.end());
  std::sort(out.indices.begin(), out.indices.end());
  for (std::size_t i : out.indices) {
    if (i >= ps.num_points) throw ConfigError("unlabeled index outside posterior samples");
    const auto mean = detail::mean_probs(ps, i);
    const double conditional =
        detail::sample_mean(ps.num_samples, [&](std::size_t j) { return entropy(ps.row(j, i)); });
    const double raw = entropy(mean) - conditional;
    out.raw.push_back(raw);
    out.scores.push_back(std::max(0.0, raw));
  }
  return out;
}

/// Mutual information between the metric-value variable of one point and
/// the weights. `counts` are the per-sample composite counts; they are
/// restored before returning.
inline double metric_mi_point(const MetricSpec& spec, const PosteriorSamples& ps,
                              std::span<ConfusionCounts> counts, ClassIndex pred_x,
                              std::size_t x, double eps) {
  std::vector<ClassIndex> sampled(ps.num_samples);
  for (std::size_t j = 0; j < ps.num_samples; ++j) sampled[j] = ps.label(j, x);
  const auto q = candidate_metric_values(spec, counts, pred_x, sampled);
  const auto groups = group_values(q, eps);
  if (groups.size() <= 1) return 0.0;
  const double marginal = grouped_entropy(detail::mean_probs(ps, x), groups);
  const double conditional = detail::sample_mean(
      ps.num_samples, [&](std::size_t j) { return grouped_entropy(ps.row(j, x), groups); });
  return marginal - conditional;
}

inline AcquisitionScores metric_mi_scores(const MetricSpec& spec, const PosteriorSamples& ps,
                                          const TestPool& pool, const LabelState& state,
                                          std::vector<ConfusionCounts>& counts, double eps) {
  AcquisitionScores out;
  out.strategy = Strategy::kMetricMI;
  out.indices = state.unlabeled();
  const auto& mut = pool.mut_predictions();
  for (std::size_t x : out.indices) {
    const double raw = metric_mi_point(spec, ps, counts, mut[x], x, eps);
    out.raw.push_back(raw);
    out.scores.push_back(std::max(0.0, raw));
  }
  return out;
}

inline AcquisitionScores metric_mi_scores(const MetricSpec& spec, const PosteriorSamples& ps,
                                          const TestPool& pool, const LabelState& state,
                                          double eps = 1e-9) {
  auto counts = composite_counts(ps, pool, state);
  return metric_mi_scores(spec, ps, pool, state, counts, eps);
}

/// Elementwise sum of the single-metric scores.
inline AcquisitionScores multi_metric_scores(std::span<const MetricSpec> specs,
                                             const PosteriorSamples& ps, const TestPool& pool,
                                             const LabelState& state, double eps = 1e-9) {
  if (specs.empty()) throw ConfigError("multi_metric_scores needs at least one metric");
  auto counts = composite_counts(ps, pool, state);
  AcquisitionScores total = metric_mi_scores(specs[0], ps, pool, state, counts, eps);
  for (std::size_t k = 1; k < specs.size(); ++k) {
    const auto next = metric_mi_scores(specs[k], ps, pool, state, counts, eps);
    for (std::size_t n = 0; n < total.size(); ++n) {
      total.scores[n] += next.scores[n];
      total.raw[n] += next.raw[n];
    }
  }
  total.strategy = specs.size() == 1 ? Strategy::kMetricMI : Strategy::kMultiMetricMI;
  return total;
}

/// The `count` highest-scoring indices, best first; ties prefer the lower
/// pool index.
inline std::vector<std::size_t> select_top(const AcquisitionScores& scores, std::size_t count) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  count = std::min(count, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (scores.scores[a] != scores.scores[b]) {
                        return scores.scores[a] > scores.scores[b];
                      }
                      return scores.indices[a] < scores.indices[b];
                    });
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < count; ++k) out.push_back(scores.indices[order[k]]);
  return out;
}

inline std::size_t select_next(const AcquisitionScores& scores) {
  if (scores.empty()) throw ConfigError("select_next: no candidates");
  return select_top(scores, 1).front();
}

/// Uniform draw without replacement of `count` unlabeled indices.
inline std::vector<std::size_t> random_select_batch(std::span<const std::size_t> unlabeled,
                                                    std::size_t count, std::uint64_t seed) {
  if (unlabeled.empty()) throw ConfigError("random_select: no unlabeled points");
  std::vector<std::size_t> pool(unlabeled.begin(), unlabeled.end());
  count = std::min(count, pool.size());
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < count; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
    std::swap(pool[k], pool[pick(rng)]);
  }
  pool.resize(count);
  return pool;
}

inline std::size_t random_select(std::span<const std::size_t> unlabeled, std::uint64_t seed) {
  return random_select_batch(unlabeled, 1, seed).front();
}

}  // namespace altmas
