#pragma once

// Test pool ingestion (IDX, CSV, prediction lists) and the budgeted
// labeling oracle.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "altmas/common.hpp"

namespace altmas {

/// Features, model-under-test predictions, and the hidden ground truth for
/// every point of the test pool. Immutable after construction.
class TestPool {
 public:
  TestPool(FeatureMatrix features, LabelVector mut_predictions,
           LabelVector truth, int num_classes)
      : features_(std::move(features)),
        mut_predictions_(std::move(mut_predictions)),
        truth_(std::move(truth)),
        num_classes_(num_classes) {
    if (num_classes_ <= 0) throw ConfigError("num_classes must be positive");
    const auto n = static_cast<std::size_t>(features_.rows());
    if (mut_predictions_.size() != n || truth_.size() != n) {
      throw ConfigError("pool size mismatch: " + std::to_string(n) +
                        " feature rows, " +
                        std::to_string(mut_predictions_.size()) +
                        " predictions, " + std::to_string(truth_.size()) +
                        " labels");
    }
    auto in_range = [this](ClassIndex c) { return c >= 0 && c < num_classes_; };
    if (!std::all_of(mut_predictions_.begin(), mut_predictions_.end(), in_range) ||
        !std::all_of(truth_.begin(), truth_.end(), in_range)) {
      throw ConfigError("label outside [0, " + std::to_string(num_classes_) + ")");
    }
  }

  std::size_t num_points() const { return truth_.size(); }
  int num_classes() const { return num_classes_; }
  Eigen::Index dim() const { return features_.cols(); }

  const FeatureMatrix& features() const { return features_; }
  const LabelVector& mut_predictions() const { return mut_predictions_; }

  /// Ground truth. Only the oracle and the evaluation harness may read this.
  const LabelVector& oracle_truth() const { return truth_; }

  /// The first `n` points as a new pool (same class count).
  TestPool head(std::size_t n) const {
    n = std::min(n, num_points());
    const auto rows = static_cast<Eigen::Index>(n);
    return TestPool(features_.topRows(rows),
                    LabelVector(mut_predictions_.begin(),
                                mut_predictions_.begin() + rows),
                    LabelVector(truth_.begin(), truth_.begin() + rows),
                    num_classes_);
  }

  TestPool with_predictions(LabelVector predictions) const {
    return TestPool(features_, std::move(predictions), truth_, num_classes_);
  }

 private:
  FeatureMatrix features_;
  LabelVector mut_predictions_;
  LabelVector truth_;
  int num_classes_;
};

// ---------------------------------------------------------------------------
// IDX files

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes,
                               std::size_t offset, const std::string& what) {
  if (bytes.size() < offset + 4) throw IoError("truncated file: " + what);
  return (std::uint32_t{bytes[offset]} << 24) |
         (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) |
         std::uint32_t{bytes[offset + 3]};
}

inline void append_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline void write_file_bytes(const std::filesystem::path& path,
                             const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

inline std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex;
  os.width(8);
  os.fill('0');
  os << v;
  return os.str();
}

}  // namespace detail

/// Raw IDX label bytes (magic 0x00000801).
inline LabelVector load_idx_labels(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  const auto magic = detail::read_be32(bytes, 0, path.string());
  if (magic != kIdxLabelMagic) {
    throw IoError("bad magic " + detail::hex32(magic) + " in label file " +
                  path.string());
  }
  const auto count = detail::read_be32(bytes, 4, path.string());
  if (bytes.size() < 8 + std::size_t{count}) {
    throw IoError("truncated file: " + path.string());
  }
  return LabelVector(bytes.begin() + 8, bytes.begin() + 8 + count);
}

/// IDX images (magic 0x00000803), flattened to one row per image and scaled
/// by 1/255.
inline FeatureMatrix load_idx_images(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  const auto magic = detail::read_be32(bytes, 0, path.string());
  if (magic != kIdxImageMagic) {
    throw IoError("bad magic " + detail::hex32(magic) + " in image file " +
                  path.string());
  }
  const std::size_t count = detail::read_be32(bytes, 4, path.string());
  const std::size_t rows = detail::read_be32(bytes, 8, path.string());
  const std::size_t cols = detail::read_be32(bytes, 12, path.string());
  const std::size_t pixels = rows * cols;
  if (bytes.size() < 16 + count * pixels) {
    throw IoError("truncated file: " + path.string());
  }
  FeatureMatrix features(static_cast<Eigen::Index>(count),
                         static_cast<Eigen::Index>(pixels));
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t p = 0; p < pixels; ++p) {
      features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) =
          bytes[16 + i * pixels + p] / 255.0;
    }
  }
  return features;
}

inline std::pair<FeatureMatrix, LabelVector> load_idx(
    const std::filesystem::path& images_path,
    const std::filesystem::path& labels_path) {
  auto labels = load_idx_labels(labels_path);
  auto features = load_idx_images(images_path);
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw IoError("count mismatch: " + std::to_string(features.rows()) +
                  " images vs " + std::to_string(labels.size()) + " labels");
  }
  return {std::move(features), std::move(labels)};
}

inline void write_idx_labels(const std::filesystem::path& path,
                             const LabelVector& labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  detail::append_be32(out, kIdxLabelMagic);
  detail::append_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (ClassIndex l : labels) {
    if (l < 0 || l > 255) throw IoError("label does not fit in a byte");
    out.push_back(static_cast<std::uint8_t>(l));
  }
  detail::write_file_bytes(path, out);
}

/// Writes images whose features are in [0,1]; pixels are rounded back to
/// bytes.
inline void write_idx_images(const std::filesystem::path& path,
                             const FeatureMatrix& features, std::uint32_t rows,
                             std::uint32_t cols) {
  if (static_cast<Eigen::Index>(rows) * cols != features.cols()) {
    throw ConfigError("image shape does not match feature width");
  }
  std::vector<std::uint8_t> out;
  out.reserve(16 + static_cast<std::size_t>(features.size()));
  detail::append_be32(out, kIdxImageMagic);
  detail::append_be32(out, static_cast<std::uint32_t>(features.rows()));
  detail::append_be32(out, rows);
  detail::append_be32(out, cols);
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index p = 0; p < features.cols(); ++p) {
      const double v = std::clamp(features(i, p), 0.0, 1.0) * 255.0;
      out.push_back(static_cast<std::uint8_t>(std::lround(v)));
    }
  }
  detail::write_file_bytes(path, out);
}

// ---------------------------------------------------------------------------
// CSV pools and prediction files

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    cells.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

inline bool parse_int(std::string_view s, long long& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace detail

/// Standardizes every column to zero mean and unit variance. Constant
/// columns are only centered.
inline void standardize_columns(FeatureMatrix& features) {
  if (features.rows() == 0) return;
  for (Eigen::Index c = 0; c < features.cols(); ++c) {
    auto col = features.col(c);
    const double mean = col.mean();
    col.array() -= mean;
    const double sd = std::sqrt(col.squaredNorm() / static_cast<double>(col.size()));
    if (sd > 0) col /= sd;
  }
}

/// Reads `label,pred,f0,f1,...`. The class count is one more than the
/// largest value in either label column.
inline TestPool load_csv_pool(const std::filesystem::path& path,
                              bool standardize = false) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty CSV: " + path.string());
  const auto header = detail::split_commas(line);
  if (header.size() < 2 || detail::trim(header[0]) != "label" ||
      detail::trim(header[1]) != "pred") {
    throw IoError("CSV header must start with label,pred: " + path.string());
  }
  const std::size_t width = header.size();

  LabelVector truth, preds;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_commas(line);
    const auto where = path.string() + ":" + std::to_string(line_no);
    if (cells.size() != width) throw IoError("ragged row at " + where);
    long long label = 0, pred = 0;
    if (!detail::parse_int(cells[0], label) || !detail::parse_int(cells[1], pred)) {
      throw IoError("non-integer label at " + where);
    }
    if (label < 0 || pred < 0) throw IoError("negative label at " + where);
    if (label > 1'000'000 || pred > 1'000'000) throw IoError("label too large at " + where);
    truth.push_back(static_cast<ClassIndex>(label));
    preds.push_back(static_cast<ClassIndex>(pred));
    for (std::size_t c = 2; c < width; ++c) {
      double v = 0;
      if (!detail::parse_double(cells[c], v)) {
        throw IoError("non-numeric cell at " + where);
      }
      values.push_back(v);
    }
  }
  if (truth.empty()) throw IoError("CSV has no data rows: " + path.string());

  const auto n = static_cast<Eigen::Index>(truth.size());
  const auto d = static_cast<Eigen::Index>(width - 2);
  FeatureMatrix features = Eigen::Map<FeatureMatrix>(values.data(), n, d);
  if (standardize) standardize_columns(features);
  const int num_classes = 1 + std::max(*std::max_element(truth.begin(), truth.end()),
                                       *std::max_element(preds.begin(), preds.end()));
  return TestPool(std::move(features), std::move(preds), std::move(truth),
                  num_classes);
}

/// One decimal class index per line, exactly `num_points` lines.
inline LabelVector load_predictions(const std::filesystem::path& path,
                                    std::size_t num_points, int num_classes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  LabelVector out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) {
      throw IoError("blank line " + std::to_string(line_no) + " in " + path.string());
    }
    long long v = 0;
    if (!detail::parse_int(line, v)) {
      throw IoError("non-integer prediction at line " + std::to_string(line_no));
    }
    if (v < 0 || v >= num_classes) {
      throw IoError("prediction " + std::to_string(v) + " out of range [0, " +
                    std::to_string(num_classes) + ") at line " +
                    std::to_string(line_no));
    }
    out.push_back(static_cast<ClassIndex>(v));
  }
  if (out.size() != num_points) {
    throw IoError("expected " + std::to_string(num_points) + " predictions, got " +
                  std::to_string(out.size()));
  }
  return out;
}

inline void write_predictions(const std::filesystem::path& path,
                              const LabelVector& predictions) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (ClassIndex p : predictions) out << p << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Labeling oracle

class OracleError : public Error {
 public:
  explicit OracleError(const std::string& what) : Error(Category::kConfig, what) {}
};

/// Which pool points carry a revealed label, plus the query budget. Seed
/// labels revealed by init_labeled() do not count against the budget.
class LabelState {
 public:
  LabelState(std::size_t num_points, std::size_t budget_total)
      : revealed_(num_points, kUnknown), budget_total_(budget_total) {}

  std::size_t num_points() const { return revealed_.size(); }
  bool is_labeled(std::size_t index) const { return revealed_.at(index) != kUnknown; }

  /// Revealed pairs in the order they were revealed.
  const std::vector<LabeledPair>& labeled() const { return labeled_; }

  /// Unlabeled indices, ascending.
  std::vector<std::size_t> unlabeled() const {
    std::vector<std::size_t> out;
    out.reserve(revealed_.size() - labeled_.size());
    for (std::size_t i = 0; i < revealed_.size(); ++i) {
      if (revealed_[i] == kUnknown) out.push_back(i);
    }
    return out;
  }

  std::size_t num_labeled() const { return labeled_.size(); }
  std::size_t num_unlabeled() const { return revealed_.size() - labeled_.size(); }
  std::size_t seed_size() const { return seed_size_; }
  std::size_t budget_total() const { return budget_total_; }
  std::size_t budget_used() const { return budget_used_; }
  std::size_t budget_left() const { return budget_total_ - budget_used_; }

  /// Label revealed for `index`; throws if it is still hidden.
  ClassIndex label_of(std::size_t index) const {
    const auto l = revealed_.at(index);
    if (l == kUnknown) throw OracleError("index " + std::to_string(index) + " is not labeled");
    return l;
  }

 private:
  static constexpr ClassIndex kUnknown = -1;

  friend ClassIndex oracle_query(LabelState&, const TestPool&, std::size_t);
  friend void init_labeled(LabelState&, const TestPool&, std::size_t, std::uint64_t);

  std::vector<ClassIndex> revealed_;
  std::vector<LabeledPair> labeled_;
  std::size_t budget_total_;
  std::size_t budget_used_ = 0;
  std::size_t seed_size_ = 0;
};

/// Reveals truth[index], consuming one unit of budget.
inline ClassIndex oracle_query(LabelState& state, const TestPool& pool,
                               std::size_t index) {
  if (state.num_points() != pool.num_points()) {
    throw OracleError("label state does not match pool size");
  }
  if (index >= pool.num_points()) {
    throw OracleError("index " + std::to_string(index) + " out of range");
  }
  if (state.revealed_[index] != LabelState::kUnknown) {
    throw OracleError("index " + std::to_string(index) + " already labeled");
  }
  if (state.budget_used_ >= state.budget_total_) throw OracleError("budget exhausted");
  const ClassIndex label = pool.oracle_truth()[index];
  state.revealed_[index] = label;
  state.labeled_.push_back({index, label});
  ++state.budget_used_;
  return label;
}

/// Reveals `n0` uniformly drawn points without consuming budget.
inline void init_labeled(LabelState& state, const TestPool& pool, std::size_t n0,
                         std::uint64_t seed) {
  const std::size_t n = pool.num_points();
  if (state.num_points() != n) throw OracleError("label state does not match pool size");
  if (n0 == 0 || n0 > n) {
    throw ConfigError("initial labeled size " + std::to_string(n0) +
                      " must be in [1, " + std::to_string(n) + "]");
  }
  if (!state.labeled_.empty()) throw OracleError("label state already initialized");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first n0 slots are a uniform sample.
  for (std::size_t i = 0; i < n0; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(order[i], order[pick(rng)]);
    const std::size_t index = order[i];
    const ClassIndex label = pool.oracle_truth()[index];
    state.revealed_[index] = label;
    state.labeled_.push_back({index, label});
  }
  state.seed_size_ = n0;
}

/// Splits labeled pairs into (train, validation). `strata` (optional, one
/// entry per pair) holds a binary group id; the split is stratified when
/// both groups have at least two members.
inline std::pair<std::vector<LabeledPair>, std::vector<LabeledPair>> split_validation(
    std::span<const LabeledPair> pairs, double fraction, std::uint64_t seed,
    std::span<const int> strata = {}) {
  const std::size_t n = pairs.size();
  if (n < 2) throw ConfigError("split_validation needs at least 2 pairs");
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in (0, 1)");
  }
  if (!strata.empty() && strata.size() != n) {
    throw ConfigError("strata length does not match pairs");
  }
  const auto n_valid = static_cast<std::size_t>(std::clamp<long long>(
      std::llround(fraction * static_cast<double>(n)), 1, static_cast<long long>(n) - 1));

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> group_a, group_b;
  for (std::size_t i = 0; i < n; ++i) {
    (!strata.empty() && strata[i] != 0 ? group_b : group_a).push_back(i);
  }

  std::vector<std::size_t> valid_pos, train_pos;
  if (!strata.empty() && group_a.size() >= 2 && group_b.size() >= 2) {
    std::shuffle(group_a.begin(), group_a.end(), rng);
    std::shuffle(group_b.begin(), group_b.end(), rng);
    const auto na = static_cast<long long>(group_a.size());
    const auto nb = static_cast<long long>(group_b.size());
    const auto total = static_cast<long long>(n_valid);
    long long va = std::llround(static_cast<double>(total) * static_cast<double>(na) /
                                static_cast<double>(n));
    // Each stratum keeps at least one member on both sides where possible.
    long long lo = std::max(1LL, total - (nb - 1));
    long long hi = std::min(na - 1, total - 1);
    if (lo > hi) {
      lo = std::max(0LL, total - nb);
      hi = std::min(na, total);
    }
    va = std::clamp(va, lo, hi);
    const long long vb = total - va;
    valid_pos.insert(valid_pos.end(), group_a.begin(), group_a.begin() + va);
    train_pos.insert(train_pos.end(), group_a.begin() + va, group_a.end());
    valid_pos.insert(valid_pos.end(), group_b.begin(), group_b.begin() + vb);
    train_pos.insert(train_pos.end(), group_b.begin() + vb, group_b.end());
    std::sort(valid_pos.begin(), valid_pos.end());
    std::sort(train_pos.begin(), train_pos.end());
  } else {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::shuffle(all.begin(), all.end(), rng);
    valid_pos.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_valid));
    train_pos.assign(all.begin() + static_cast<std::ptrdiff_t>(n_valid), all.end());
    std::sort(valid_pos.begin(), valid_pos.end());
    std::sort(train_pos.begin(), train_pos.end());
  }

  std::vector<LabeledPair> train, valid;
  for (auto p : train_pos) train.push_back(pairs[p]);
  for (auto p : valid_pos) valid.push_back(pairs[p]);
  return {std::move(train), std::move(valid)};
}

}  // namespace altmas
