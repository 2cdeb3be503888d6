#pragma once

// Reference implementations used only by tests. They recompute everything
// from scratch and share no code path with the library routines they check.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "altmas/altmas.hpp"

namespace altmas::oracle {

/// Metric by direct enumeration over the two label vectors.
inline double naive_metric(const MetricSpec& spec, const LabelVector& preds,
                           const LabelVector& labels, int num_classes) {
  const std::size_t n = preds.size();
  auto per_class = [&](bool precision, int c) {
    long long hit = 0, den = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool in_den = precision ? preds[i] == c : labels[i] == c;
      if (in_den) {
        ++den;
        if (preds[i] == labels[i]) ++hit;
      }
    }
    return den == 0 ? spec.zero_division : double(hit) / double(den);
  };
  switch (spec.kind) {
    case MetricKind::kAccuracy: {
      long long hit = 0;
      for (std::size_t i = 0; i < n; ++i) hit += preds[i] == labels[i];
      return double(hit) / double(n);
    }
    case MetricKind::kPrecision: return per_class(true, spec.cls);
    case MetricKind::kRecall: return per_class(false, spec.cls);
    case MetricKind::kMacroPrecision:
    case MetricKind::kMacroRecall: {
      double s = 0;
      for (int c = 0; c < num_classes; ++c) s += per_class(spec.kind == MetricKind::kMacroPrecision, c);
      return s / num_classes;
    }
  }
  return 0;
}

/// Connected components of the graph joining labels whose values differ by
/// at most eps (union-find over all pairs).
inline std::vector<std::vector<int>> naive_groups(const std::vector<double>& q, double eps) {
  const int C = static_cast<int>(q.size());
  std::vector<int> parent(C);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int a) {
    while (parent[a] != a) a = parent[a];
    return a;
  };
  for (int a = 0; a < C; ++a) {
    for (int b = a + 1; b < C; ++b) {
      if (std::abs(q[a] - q[b]) <= eps) parent[find(a)] = find(b);
    }
  }
  std::vector<std::vector<int>> groups;
  std::vector<int> slot(C, -1);
  for (int h = 0; h < C; ++h) {
    const int r = find(h);
    if (slot[r] < 0) {
      slot[r] = static_cast<int>(groups.size());
      groups.emplace_back();
    }
    groups[slot[r]].push_back(h);
  }
  return groups;
}

inline double entropy_by_definition(const std::vector<double>& p) {
  double h = 0;
  for (double v : p) {
    if (v > 0) h += -v * std::log(v);
  }
  return h;
}

/// Composite label vector for posterior sample j.
inline LabelVector composite_labels(const PosteriorSamples& ps, const LabelState& state,
                                    std::size_t j) {
  LabelVector labels(ps.num_points);
  for (std::size_t i = 0; i < ps.num_points; ++i) {
    labels[i] = state.is_labeled(i) ? state.label_of(i) : ps.label(j, i);
  }
  return labels;
}

/// Exhaustive metric-aware MI for one unlabeled point (pre-clamp).
inline double brute_force_mi(const MetricSpec& spec, const PosteriorSamples& ps,
                             const TestPool& pool, const LabelState& state, std::size_t x,
                             double eps) {
  const int C = pool.num_classes();
  const std::size_t M = ps.num_samples;
  std::vector<double> q(C, 0.0);
  for (int h = 0; h < C; ++h) {
    for (std::size_t j = 0; j < M; ++j) {
      LabelVector labels = composite_labels(ps, state, j);
      labels[x] = h;
      q[h] += naive_metric(spec, pool.mut_predictions(), labels, C);
    }
    q[h] /= double(M);
  }
  const auto groups = naive_groups(q, eps);
  std::vector<double> marginal;
  for (const auto& g : groups) {
    double mass = 0;
    for (int h : g) {
      for (std::size_t j = 0; j < M; ++j) mass += ps.prob(j, x, h);
    }
    marginal.push_back(mass / double(M));
  }
  double conditional = 0;
  for (std::size_t j = 0; j < M; ++j) {
    std::vector<double> pj;
    for (const auto& g : groups) {
      double mass = 0;
      for (int h : g) mass += ps.prob(j, x, h);
      pj.push_back(mass);
    }
    conditional += entropy_by_definition(pj);
  }
  return entropy_by_definition(marginal) - conditional / double(M);
}

inline double brute_force_bald(const PosteriorSamples& ps, std::size_t x) {
  const int C = ps.num_classes;
  const std::size_t M = ps.num_samples;
  std::vector<double> mean(C, 0.0);
  double conditional = 0;
  for (std::size_t j = 0; j < M; ++j) {
    std::vector<double> pj(C);
    for (int h = 0; h < C; ++h) {
      pj[h] = ps.prob(j, x, h);
      mean[h] += pj[h] / double(M);
    }
    conditional += entropy_by_definition(pj);
  }
  return entropy_by_definition(mean) - conditional / double(M);
}

/// Random small instance: pool with random predictions and truth, a random
/// labeled subset, and random posterior samples.
struct Instance {
  TestPool pool;
  LabelState state;
  PosteriorSamples ps;
};

/// `concentration` < 1 gives peaked (disagreeing) samples.
inline Instance random_instance(std::mt19937_64& rng, std::size_t n, int C, std::size_t M,
                                double concentration = 0.5) {
  std::uniform_int_distribution<int> cls(0, C - 1);
  LabelVector preds(n), truth(n);
  for (std::size_t i = 0; i < n; ++i) {
    preds[i] = cls(rng);
    truth[i] = cls(rng);
  }
  FeatureMatrix features = FeatureMatrix::Zero(static_cast<Eigen::Index>(n), 2);
  TestPool pool(features, preds, truth, C);
  LabelState state(n, n);
  std::uniform_int_distribution<std::size_t> n0(1, n - 1);
  init_labeled(state, pool, n0(rng), rng());
  PosteriorSamples ps(M, n, C);
  std::gamma_distribution<double> gamma(concentration, 1.0);
  for (std::size_t j = 0; j < M; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      auto row = ps.row(j, i);
      double s = 0;
      for (auto& v : row) {
        v = gamma(rng) + 1e-12;
        s += v;
      }
      for (auto& v : row) v /= s;
    }
  }
  ps.refresh_labels();
  return {std::move(pool), std::move(state), std::move(ps)};
}

}  // namespace altmas::oracle
