#pragma once

// Metric estimates from posterior samples over composite label vectors.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "altmas/datapool.hpp"
#include "altmas/metrics.hpp"
#include "altmas/surrogate.hpp"

namespace altmas {

inline constexpr double kRelativeErrorGuard = 1e-6;

struct MetricEstimate {
  std::string name;
  double estimate = 0.0;
  double truth = 0.0;
  double relative_error = 0.0;
  double absolute_error = 0.0;
};

inline double relative_error(double estimate, double truth) {
  return std::abs(estimate - truth) / std::max(truth, kRelativeErrorGuard);
}

inline MetricEstimate make_estimate(std::string name, double estimate, double truth) {
  return {std::move(name), estimate, truth, relative_error(estimate, truth),
          std::abs(estimate - truth)};
}

/// Per posterior sample j, confusion counts of the model-under-test against
/// the composite labels: revealed labels where known, sample j's predicted
/// labels elsewhere.
inline std::vector<ConfusionCounts> composite_counts(const PosteriorSamples& ps,
                                                     const TestPool& pool,
                                                     const LabelState& state) {
  const std::size_t n = pool.num_points();
  if (ps.num_points != n || state.num_points() != n) {
    throw ConfigError("posterior samples, label state and pool disagree on size");
  }
  if (ps.num_classes != pool.num_classes()) {
    throw ConfigError("posterior samples and pool disagree on class count");
  }
  const auto& mut = pool.mut_predictions();
  ConfusionCounts base(pool.num_classes());
  for (const auto& p : state.labeled()) base.add(mut[p.index], p.label);
  const auto unlabeled = state.unlabeled();
  std::vector<ConfusionCounts> out(ps.num_samples, base);
  for (std::size_t j = 0; j < ps.num_samples; ++j) {
    for (std::size_t i : unlabeled) out[j].add(mut[i], ps.label(j, i));
  }
  return out;
}

/// Mean over samples of the metric on each composite label vector.
inline double estimate_metric(const MetricSpec& spec, std::span<const ConfusionCounts> counts) {
  if (counts.empty()) throw ConfigError("estimate_metric needs at least one sample");
  // Shifted by the first sample so that agreeing samples reproduce their
  // common value exactly.
  const double first = metric_value(spec, counts.front());
  double shift = 0.0;
  for (std::size_t j = 1; j < counts.size(); ++j) shift += metric_value(spec, counts[j]) - first;
  return first + shift / static_cast<double>(counts.size());
}

inline double estimate_metric(const MetricSpec& spec, const PosteriorSamples& ps,
                              const TestPool& pool, const LabelState& state) {
  const auto counts = composite_counts(ps, pool, state);
  return estimate_metric(spec, counts);
}

/// Value of each metric on the fully labeled pool.
inline std::vector<double> true_metric_values(std::span<const MetricSpec> specs,
                                              const TestPool& pool) {
  const auto cc = confusion_from(pool.mut_predictions(), pool.oracle_truth(), pool.num_classes());
  std::vector<double> out;
  for (const auto& s : specs) out.push_back(metric_value(s, cc));
  return out;
}

inline std::vector<MetricEstimate> estimate_all(std::span<const MetricSpec> specs,
                                                const PosteriorSamples& ps, const TestPool& pool,
                                                const LabelState& state) {
  if (specs.empty()) throw ConfigError("estimate_all needs at least one metric");
  const auto counts = composite_counts(ps, pool, state);
  const auto truth = true_metric_values(specs, pool);
  std::vector<MetricEstimate> out;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    out.push_back(make_estimate(specs[k].name(), estimate_metric(specs[k], counts), truth[k]));
  }
  return out;
}

/// Majority-vote label per point over the M passes (ties: lowest class).
inline LabelVector majority_labels(const PosteriorSamples& ps) {
  LabelVector out(ps.num_points, 0);
  std::vector<int> votes(static_cast<std::size_t>(ps.num_classes));
  for (std::size_t i = 0; i < ps.num_points; ++i) {
    std::fill(votes.begin(), votes.end(), 0);
    for (std::size_t j = 0; j < ps.num_samples; ++j) ++votes[static_cast<std::size_t>(ps.label(j, i))];
    out[i] = static_cast<ClassIndex>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  }
  return out;
}

/// Fraction of pool points whose majority-vote surrogate label equals the
/// ground truth.
inline double surrogate_accuracy(const PosteriorSamples& ps, const TestPool& pool) {
  if (ps.num_points != pool.num_points()) throw ConfigError("posterior/pool size mismatch");
  if (ps.num_points == 0) return 0.0;
  const auto votes = majority_labels(ps);
  const auto& truth = pool.oracle_truth();
  std::size_t hit = 0;
  for (std::size_t i = 0; i < votes.size(); ++i) hit += votes[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(votes.size());
}

/// Metrics computed from the revealed labels alone (no surrogate).
inline std::vector<MetricEstimate> estimate_from_labeled(std::span<const MetricSpec> specs,
                                                         const TestPool& pool,
                                                         const LabelState& state) {
  const auto& mut = pool.mut_predictions();
  ConfusionCounts cc(pool.num_classes());
  for (const auto& p : state.labeled()) cc.add(mut[p.index], p.label);
  const auto truth = true_metric_values(specs, pool);
  std::vector<MetricEstimate> out;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    out.push_back(make_estimate(specs[k].name(), metric_value(specs[k], cc), truth[k]));
  }
  return out;
}

}  // namespace altmas
