#pragma once

// Confusion-matrix metrics with O(1) single-label swap updates.

#include <algorithm>
#include <charconv>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "altmas/common.hpp"

namespace altmas {

/// counts[a][y] = #{i : prediction_i = a and label_i = y}, with cached row
/// and column sums so precision and recall are O(1).
class ConfusionCounts {
 public:
  ConfusionCounts() = default;
  explicit ConfusionCounts(int num_classes)
      : num_classes_(num_classes),
        counts_(static_cast<std::size_t>(num_classes) * num_classes, 0),
        pred_totals_(num_classes, 0),
        label_totals_(num_classes, 0) {
    if (num_classes <= 0) throw ConfigError("num_classes must be positive");
  }

  int num_classes() const { return num_classes_; }
  long long total() const { return total_; }
  long long correct() const { return correct_; }
  long long at(ClassIndex pred, ClassIndex label) const {
    return counts_[offset(pred, label)];
  }
  /// Number of points predicted as `pred`.
  long long pred_total(ClassIndex pred) const { return pred_totals_[pred]; }
  /// Number of points whose label is `label`.
  long long label_total(ClassIndex label) const { return label_totals_[label]; }

  void add(ClassIndex pred, ClassIndex label) {
    check(pred);
    check(label);
    ++counts_[offset(pred, label)];
    ++pred_totals_[pred];
    ++label_totals_[label];
    if (pred == label) ++correct_;
    ++total_;
  }

  /// Moves one (pred, old_label) observation to (pred, new_label).
  ConfusionCounts& swap(ClassIndex pred, ClassIndex old_label, ClassIndex new_label) {
    check(pred);
    check(old_label);
    check(new_label);
    auto& from = counts_[offset(pred, old_label)];
    if (from < 1) {
      throw NumericError("swap would decrement an empty confusion cell");
    }
    if (old_label == new_label) return *this;
    --from;
    ++counts_[offset(pred, new_label)];
    --label_totals_[old_label];
    ++label_totals_[new_label];
    correct_ += (pred == new_label) - (pred == old_label);
    return *this;
  }

  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;

 private:
  std::size_t offset(ClassIndex pred, ClassIndex label) const {
    return static_cast<std::size_t>(pred) * num_classes_ + label;
  }
  void check(ClassIndex c) const {
    if (c < 0 || c >= num_classes_) {
      throw ConfigError("class " + std::to_string(c) + " out of range [0, " +
                        std::to_string(num_classes_) + ")");
    }
  }

  int num_classes_ = 0;
  std::vector<long long> counts_;
  std::vector<long long> pred_totals_;
  std::vector<long long> label_totals_;
  long long correct_ = 0;
  long long total_ = 0;
};

inline ConfusionCounts confusion_from(std::span<const ClassIndex> preds,
                                      std::span<const ClassIndex> labels,
                                      int num_classes) {
  if (preds.size() != labels.size()) {
    throw ConfigError("confusion_from: length mismatch (" + std::to_string(preds.size()) +
                      " vs " + std::to_string(labels.size()) + ")");
  }
  ConfusionCounts cc(num_classes);
  for (std::size_t i = 0; i < preds.size(); ++i) cc.add(preds[i], labels[i]);
  return cc;
}

inline ConfusionCounts swap_label(ConfusionCounts cc, ClassIndex pred,
                                  ClassIndex old_label, ClassIndex new_label) {
  cc.swap(pred, old_label, new_label);
  return cc;
}

// ---------------------------------------------------------------------------

enum class MetricKind { kAccuracy, kPrecision, kRecall, kMacroPrecision, kMacroRecall };

struct MetricSpec {
  MetricKind kind = MetricKind::kAccuracy;
  ClassIndex cls = 0;  // per-class kinds only
  /// Value of a per-class precision/recall whose denominator is zero.
  double zero_division = 0.0;

  static MetricSpec accuracy() { return {MetricKind::kAccuracy}; }
  static MetricSpec precision(ClassIndex c) { return {MetricKind::kPrecision, c}; }
  static MetricSpec recall(ClassIndex c) { return {MetricKind::kRecall, c}; }
  static MetricSpec macro_precision() { return {MetricKind::kMacroPrecision}; }
  static MetricSpec macro_recall() { return {MetricKind::kMacroRecall}; }

  bool per_class() const {
    return kind == MetricKind::kPrecision || kind == MetricKind::kRecall;
  }

  std::string name() const {
    switch (kind) {
      case MetricKind::kAccuracy: return "accuracy";
      case MetricKind::kPrecision: return "precision:" + std::to_string(cls);
      case MetricKind::kRecall: return "recall:" + std::to_string(cls);
      case MetricKind::kMacroPrecision: return "macro_precision";
      case MetricKind::kMacroRecall: return "macro_recall";
    }
    return "?";
  }

  friend bool operator==(const MetricSpec&, const MetricSpec&) = default;
};

namespace detail {

inline double ratio_or(long long num, long long den, double zero_division) {
  return den == 0 ? zero_division : static_cast<double>(num) / static_cast<double>(den);
}

inline double precision_of(const ConfusionCounts& cc, ClassIndex c, double zd) {
  return ratio_or(cc.at(c, c), cc.pred_total(c), zd);
}

inline double recall_of(const ConfusionCounts& cc, ClassIndex c, double zd) {
  return ratio_or(cc.at(c, c), cc.label_total(c), zd);
}

}  // namespace detail

inline double metric_value(const MetricSpec& spec, const ConfusionCounts& cc) {
  if (cc.total() <= 0) throw NumericError("metric of empty confusion counts");
  const int C = cc.num_classes();
  if (spec.per_class() && (spec.cls < 0 || spec.cls >= C)) {
    throw ConfigError("metric " + spec.name() + " refers to a class outside [0, " +
                      std::to_string(C) + ")");
  }
  switch (spec.kind) {
    case MetricKind::kAccuracy:
      return static_cast<double>(cc.correct()) / static_cast<double>(cc.total());
    case MetricKind::kPrecision:
      return detail::precision_of(cc, spec.cls, spec.zero_division);
    case MetricKind::kRecall:
      return detail::recall_of(cc, spec.cls, spec.zero_division);
    case MetricKind::kMacroPrecision: {
      double sum = 0;
      for (ClassIndex c = 0; c < C; ++c) sum += detail::precision_of(cc, c, spec.zero_division);
      return sum / C;
    }
    case MetricKind::kMacroRecall: {
      double sum = 0;
      for (ClassIndex c = 0; c < C; ++c) sum += detail::recall_of(cc, c, spec.zero_division);
      return sum / C;
    }
  }
  return 0.0;
}

/// Expected metric value for every candidate label h of one point x:
///   q[h] = (1/M) sum_j metric(counts_j with x relabeled sampled[j] -> h).
/// Each counts_j must already count x with label sampled[j]. The counts are
/// swapped in place and restored before returning.
inline std::vector<double> candidate_metric_values(const MetricSpec& spec,
                                                   std::span<ConfusionCounts> per_sample,
                                                   ClassIndex pred_x,
                                                   std::span<const ClassIndex> sampled) {
  if (per_sample.empty()) throw ConfigError("candidate_metric_values needs M >= 1");
  if (per_sample.size() != sampled.size()) {
    throw ConfigError("candidate_metric_values: sample count mismatch");
  }
  const int C = per_sample.front().num_classes();
  std::vector<double> q(C, 0.0);
  for (std::size_t j = 0; j < per_sample.size(); ++j) {
    auto& cc = per_sample[j];
    const ClassIndex current = sampled[j];
    for (ClassIndex h = 0; h < C; ++h) {
      cc.swap(pred_x, current, h);
      q[h] += metric_value(spec, cc);
      cc.swap(pred_x, h, current);
    }
  }
  for (auto& v : q) v /= static_cast<double>(per_sample.size());
  return q;
}

/// A set of candidate labels sharing (within tolerance) one metric value.
struct ValueGroup {
  std::vector<ClassIndex> labels;
  double value = 0.0;
};

/// Single-linkage grouping of q on the sorted axis: consecutive values
/// closer than `eps` join the same group. Groups come out in ascending
/// value order; each group's labels are ascending.
inline std::vector<ValueGroup> group_values(std::span<const double> q, double eps) {
  std::vector<ClassIndex> order(q.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](ClassIndex a, ClassIndex b) { return q[a] < q[b]; });
  std::vector<ValueGroup> groups;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const ClassIndex h = order[k];
    if (k == 0 || q[h] - q[order[k - 1]] > eps) groups.emplace_back();
    groups.back().labels.push_back(h);
  }
  for (auto& g : groups) {
    double sum = 0;
    for (ClassIndex h : g.labels) sum += q[h];
    g.value = sum / static_cast<double>(g.labels.size());
    std::sort(g.labels.begin(), g.labels.end());
  }
  return groups;
}

// ---------------------------------------------------------------------------
// Metric-set names

/// Parses one of `accuracy`, `precision:<c>`, `recall:<c>`,
/// `macro_precision`, `macro_recall`.
inline MetricSpec parse_metric(std::string_view name, int num_classes) {
  auto parse_class = [&](std::string_view digits) {
    int c = -1;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), c);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || c < 0 ||
        c >= num_classes) {
      throw ConfigError("bad class in metric '" + std::string(name) + "'");
    }
    return c;
  };
  if (name == "accuracy") return MetricSpec::accuracy();
  if (name == "macro_precision") return MetricSpec::macro_precision();
  if (name == "macro_recall") return MetricSpec::macro_recall();
  if (name.starts_with("precision:")) return MetricSpec::precision(parse_class(name.substr(10)));
  if (name.starts_with("recall:")) return MetricSpec::recall(parse_class(name.substr(7)));
  throw ConfigError("unknown metric '" + std::string(name) + "'");
}

/// Comma-separated metric names. `full21` expands to accuracy plus the
/// precision and recall of each of 10 classes.
inline std::vector<MetricSpec> parse_metric_set(std::string_view list, int num_classes,
                                                double zero_division = 0.0) {
  std::vector<MetricSpec> specs;
  std::size_t start = 0;
  while (start <= list.size()) {
    auto end = list.find(',', start);
    if (end == std::string_view::npos) end = list.size();
    auto item = list.substr(start, end - start);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (item == "full21") {
      if (num_classes != 10) {
        throw ConfigError("full21 needs a 10-class pool, got " + std::to_string(num_classes));
      }
      specs.push_back(MetricSpec::accuracy());
      for (ClassIndex c = 0; c < 10; ++c) {
        specs.push_back(MetricSpec::precision(c));
        specs.push_back(MetricSpec::recall(c));
      }
    } else if (!item.empty()) {
      specs.push_back(parse_metric(item, num_classes));
    }
    start = end + 1;
  }
  if (specs.empty()) throw ConfigError("empty metric set");
  for (auto& s : specs) s.zero_division = zero_division;
  return specs;
}

}  // namespace altmas
