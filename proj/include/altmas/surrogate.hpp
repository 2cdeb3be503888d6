#pragma once

// MC-dropout MLP surrogate and the agreement classifier used to build the
// augmented labeled set.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <thread>
#include <vector>

#include "altmas/common.hpp"
#include "altmas/datapool.hpp"

namespace altmas {

struct MlpConfig {
  std::vector<int> hidden = {256, 256};
  double dropout_rate = 0.2;
  double learning_rate = 1e-3;
  int epochs = 50;
  int batch_size = 32;
  std::uint64_t seed = 0;
  /// Expected input width; 0 accepts whatever the features provide.
  int input_dim = 0;

  std::vector<int> layer_sizes(int input, int num_classes) const {
    std::vector<int> sizes{input};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(num_classes);
    return sizes;
  }
};

/// Fully connected ReLU network with inverted dropout after every hidden
/// layer and a softmax output. Activations are laid out one column per
/// example.
template <typename Scalar>
class BasicMlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  struct Layer {
    Matrix weights;  // out x in
    Vector bias;
  };
  using Gradient = std::vector<Layer>;
  /// One keep/scale mask per hidden layer, entries 0 or 1/(1-p).
  using Masks = std::vector<Matrix>;

  BasicMlp() = default;

  /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero.
  BasicMlp(std::vector<int> layer_sizes, double dropout_rate, std::uint64_t seed)
      : sizes_(std::move(layer_sizes)), dropout_rate_(dropout_rate) {
    if (sizes_.size() < 2) throw ConfigError("an MLP needs at least two layer sizes");
    if (!(dropout_rate_ >= 0.0 && dropout_rate_ < 1.0)) {
      throw ConfigError("dropout rate must lie in [0, 1)");
    }
    for (int s : sizes_) {
      if (s <= 0) throw ConfigError("layer sizes must be positive");
    }
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
      std::uniform_real_distribution<double> init(-bound, bound);
      Layer layer{Matrix(sizes_[l + 1], sizes_[l]), Vector::Zero(sizes_[l + 1])};
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
          layer.weights(r, c) = static_cast<Scalar>(init(rng));
        }
      }
      layers_.push_back(std::move(layer));
    }
  }

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int num_classes() const { return sizes_.back(); }
  double dropout_rate() const { return dropout_rate_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
    return n;
  }

  /// Draws dropout masks for a batch of `batch` columns. Each 64-bit draw
  /// yields four 16-bit uniforms, so the drop probability is quantized to
  /// multiples of 2^-16.
  Masks sample_masks(std::mt19937_64& rng, Eigen::Index batch) const {
    Masks masks;
    const Scalar keep_scale = static_cast<Scalar>(1.0 / (1.0 - dropout_rate_));
    const auto drop_below = static_cast<std::uint32_t>(std::lround(dropout_rate_ * 65536.0));
    for (std::size_t l = 1; l + 1 < sizes_.size(); ++l) {
      Matrix m(sizes_[l], batch);
      if (drop_below == 0) {
        m.setConstant(keep_scale);
      } else {
        Scalar* data = m.data();
        const Eigen::Index size = m.size();
        std::uint64_t bits = 0;
        for (Eigen::Index k = 0; k < size; ++k) {
          if ((k & 3) == 0) bits = rng();
          const auto u = static_cast<std::uint32_t>(bits & 0xffff);
          bits >>= 16;
          data[k] = u < drop_below ? Scalar(0) : keep_scale;
        }
      }
      masks.push_back(std::move(m));
    }
    return masks;
  }

  /// Output logits; `masks == nullptr` is the deterministic (no dropout)
  /// forward pass.
  Matrix logits(const Matrix& input, const Masks* masks = nullptr) const {
    Matrix a = input;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Matrix z = layers_[l].weights * a;
      z.colwise() += layers_[l].bias;
      if (l + 1 < layers_.size()) {
        z = z.cwiseMax(Scalar(0));
        if (masks) z.array() *= (*masks)[l].array();
      }
      a = std::move(z);
    }
    return a;
  }

  /// Mean cross-entropy over the batch; fills `grad` when non-null.
  double loss(const Matrix& input, std::span<const ClassIndex> targets,
              const Masks* masks = nullptr, Gradient* grad = nullptr) const {
    const Eigen::Index batch = input.cols();
    if (static_cast<std::size_t>(batch) != targets.size()) {
      throw ConfigError("batch/target size mismatch");
    }
    std::vector<Matrix> acts{input};
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Matrix z = layers_[l].weights * acts.back();
      z.colwise() += layers_[l].bias;
      if (l + 1 < layers_.size()) {
        z = z.cwiseMax(Scalar(0));
        if (masks) z.array() *= (*masks)[l].array();
      }
      acts.push_back(std::move(z));
    }
    // Softmax + cross-entropy, evaluated in double.
    const Matrix& out = acts.back();
    Matrix delta(out.rows(), batch);
    double total = 0.0;
    for (Eigen::Index c = 0; c < batch; ++c) {
      const double mx = static_cast<double>(out.col(c).maxCoeff());
      double sum = 0.0;
      for (Eigen::Index r = 0; r < out.rows(); ++r) {
        sum += std::exp(static_cast<double>(out(r, c)) - mx);
      }
      const double log_sum = mx + std::log(sum);
      const auto t = targets[static_cast<std::size_t>(c)];
      total += log_sum - static_cast<double>(out(t, c));
      for (Eigen::Index r = 0; r < out.rows(); ++r) {
        const double p = std::exp(static_cast<double>(out(r, c)) - log_sum);
        delta(r, c) = static_cast<Scalar>((p - (r == t ? 1.0 : 0.0)) / batch);
      }
    }
    if (grad) {
      grad->resize(layers_.size());
      for (std::size_t l = layers_.size(); l-- > 0;) {
        (*grad)[l].weights = delta * acts[l].transpose();
        (*grad)[l].bias = delta.rowwise().sum();
        if (l == 0) break;
        Matrix back = layers_[l].weights.transpose() * delta;
        // acts[l] is the masked ReLU output: zero exactly where the unit was
        // inactive or dropped; the mask scale carries through.
        if (masks) {
          back.array() *= (*masks)[l - 1].array();
        }
        back.array() *= (acts[l].array() > Scalar(0)).template cast<Scalar>();
        delta = std::move(back);
      }
    }
    return total / static_cast<double>(batch);
  }

  void apply_gradient(const Gradient& grad, double learning_rate) {
    const auto lr = static_cast<Scalar>(learning_rate);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      layers_[l].weights -= lr * grad[l].weights;
      layers_[l].bias -= lr * grad[l].bias;
    }
  }

  /// Flat parameter access (weights column-major, then bias, per layer).
  Scalar& parameter(std::size_t k) {
    for (auto& layer : layers_) {
      const auto nw = static_cast<std::size_t>(layer.weights.size());
      if (k < nw) return layer.weights.data()[k];
      k -= nw;
      const auto nb = static_cast<std::size_t>(layer.bias.size());
      if (k < nb) return layer.bias.data()[k];
      k -= nb;
    }
    throw ConfigError("parameter index out of range");
  }

  template <typename Other>
  BasicMlp<Other> cast() const {
    BasicMlp<Other> out;
    out.sizes_ = sizes_;
    out.dropout_rate_ = dropout_rate_;
    for (const auto& l : layers_) {
      out.layers_.push_back({l.weights.template cast<Other>(), l.bias.template cast<Other>()});
    }
    return out;
  }

 private:
  template <typename>
  friend class BasicMlp;

  std::vector<int> sizes_;
  double dropout_rate_ = 0.0;
  std::vector<Layer> layers_;
};

/// The production surrogate runs in single precision; gradient checks use
/// the double instantiation of the same code.
using Mlp = BasicMlp<float>;

namespace detail {

template <typename Scalar>
typename BasicMlp<Scalar>::Matrix gather_columns(const FeatureMatrix& features,
                                                 std::span<const std::size_t> rows) {
  typename BasicMlp<Scalar>::Matrix out(features.cols(), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t c = 0; c < rows.size(); ++c) {
    out.col(static_cast<Eigen::Index>(c)) =
        features.row(static_cast<Eigen::Index>(rows[c])).transpose().template cast<Scalar>();
  }
  return out;
}

}  // namespace detail

/// Mini-batch gradient descent on cross-entropy with dropout active. Each
/// call starts from a fresh seeded initialization; epochs == 0 returns the
/// initialized network.
template <typename Scalar = float>
BasicMlp<Scalar> train_mlp(const MlpConfig& config, const FeatureMatrix& features,
                           std::span<const LabeledPair> train_pairs, int num_classes) {
  if (train_pairs.empty()) throw ConfigError("train_mlp: empty training set");
  if (config.input_dim != 0 && config.input_dim != features.cols()) {
    throw ConfigError("train_mlp: feature dimension " + std::to_string(features.cols()) +
                      " does not match configured " + std::to_string(config.input_dim));
  }
  if (config.batch_size <= 0 || config.epochs < 0 || !(config.learning_rate > 0)) {
    throw ConfigError("train_mlp: bad optimizer settings");
  }
  for (const auto& p : train_pairs) {
    if (p.index >= static_cast<std::size_t>(features.rows())) {
      throw ConfigError("train_mlp: pair index out of range");
    }
    if (p.label < 0 || p.label >= num_classes) throw ConfigError("train_mlp: label out of range");
  }
  BasicMlp<Scalar> net(config.layer_sizes(static_cast<int>(features.cols()), num_classes),
                       config.dropout_rate, mix_seed(config.seed, 0));
  std::mt19937_64 rng(mix_seed(config.seed, 1));
  std::vector<std::size_t> order(train_pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> rows;
  std::vector<ClassIndex> targets;
  typename BasicMlp<Scalar>::Gradient grad;
  const auto batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      rows.clear();
      targets.clear();
      for (std::size_t k = start; k < end; ++k) {
        rows.push_back(train_pairs[order[k]].index);
        targets.push_back(train_pairs[order[k]].label);
      }
      const auto x = detail::gather_columns<Scalar>(features, rows);
      const auto masks = net.sample_masks(rng, x.cols());
      net.loss(x, targets, &masks, &grad);
      net.apply_gradient(grad, config.learning_rate);
    }
  }
  return net;
}

// ---------------------------------------------------------------------------

/// M stochastic forward passes over the whole pool.
struct PosteriorSamples {
  std::size_t num_samples = 0;
  std::size_t num_points = 0;
  int num_classes = 0;
  std::vector<double> probs;      // [j][i][h]
  std::vector<ClassIndex> labels;  // [j][i]

  PosteriorSamples() = default;
  PosteriorSamples(std::size_t m, std::size_t n, int c)
      : num_samples(m), num_points(n), num_classes(c),
        probs(m * n * static_cast<std::size_t>(c), 0.0), labels(m * n, 0) {}

  double prob(std::size_t j, std::size_t i, ClassIndex h) const {
    return probs[(j * num_points + i) * static_cast<std::size_t>(num_classes) +
                 static_cast<std::size_t>(h)];
  }
  std::span<const double> row(std::size_t j, std::size_t i) const {
    return {probs.data() + (j * num_points + i) * static_cast<std::size_t>(num_classes),
            static_cast<std::size_t>(num_classes)};
  }
  std::span<double> row(std::size_t j, std::size_t i) {
    return {probs.data() + (j * num_points + i) * static_cast<std::size_t>(num_classes),
            static_cast<std::size_t>(num_classes)};
  }
  ClassIndex label(std::size_t j, std::size_t i) const { return labels[j * num_points + i]; }

  /// Recomputes labels as the row-wise argmax (lowest index on ties).
  void refresh_labels() {
    for (std::size_t j = 0; j < num_samples; ++j) {
      for (std::size_t i = 0; i < num_points; ++i) {
        const auto r = row(j, i);
        labels[j * num_points + i] =
            static_cast<ClassIndex>(std::max_element(r.begin(), r.end()) - r.begin());
      }
    }
  }

  /// The same sample labels for every point of one pass, i.e. M one-hot
  /// "posteriors". Useful for deterministic surrogates.
  static PosteriorSamples one_hot(std::size_t m, const LabelVector& labels, int num_classes) {
    PosteriorSamples ps(m, labels.size(), num_classes);
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < labels.size(); ++i) {
        ps.row(j, i)[static_cast<std::size_t>(labels[i])] = 1.0;
      }
    }
    ps.refresh_labels();
    return ps;
  }
};

namespace detail {

template <typename Scalar>
void softmax_into(const typename BasicMlp<Scalar>::Matrix& logits, Eigen::Index col,
                  std::span<double> out) {
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    mx = std::max(mx, static_cast<double>(logits(r, col)));
  }
  double sum = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    out[static_cast<std::size_t>(r)] = std::exp(static_cast<double>(logits(r, col)) - mx);
    sum += out[static_cast<std::size_t>(r)];
  }
  for (auto& v : out) v /= sum;
}

}  // namespace detail

/// Runs `num_samples` dropout-masked passes. Pass j draws its masks from
/// its own stream, so the result does not depend on `workers`.
template <typename Scalar>
PosteriorSamples mc_forward(const BasicMlp<Scalar>& net, const FeatureMatrix& features,
                            std::size_t num_samples, std::uint64_t seed,
                            unsigned workers = 1) {
  if (num_samples == 0) throw ConfigError("mc_forward needs at least one sample");
  if (features.cols() != net.input_dim()) {
    throw ConfigError("mc_forward: feature width " + std::to_string(features.cols()) +
                      " does not match network input " + std::to_string(net.input_dim()));
  }
  const auto n = static_cast<std::size_t>(features.rows());
  PosteriorSamples ps(num_samples, n, net.num_classes());
  const typename BasicMlp<Scalar>::Matrix x = features.transpose().template cast<Scalar>();
  constexpr Eigen::Index kChunk = 2048;

  auto run_pass = [&](std::size_t j) {
    std::mt19937_64 rng(mix_seed(seed, j));
    for (Eigen::Index start = 0; start < x.cols(); start += kChunk) {
      const Eigen::Index len = std::min(kChunk, x.cols() - start);
      const auto masks = net.sample_masks(rng, len);
      const auto logits = net.logits(x.middleCols(start, len), &masks);
      for (Eigen::Index c = 0; c < len; ++c) {
        detail::softmax_into<Scalar>(logits, c,
                                     ps.row(j, static_cast<std::size_t>(start + c)));
      }
    }
  };

  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(num_samples)));
  if (workers == 1) {
    for (std::size_t j = 0; j < num_samples; ++j) run_pass(j);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t j = w; j < num_samples; j += workers) run_pass(j);
      });
    }
    for (auto& t : pool) t.join();
  }
  ps.refresh_labels();
  return ps;
}

/// Deterministic (dropout off) class probabilities for selected rows.
template <typename Scalar>
std::vector<std::vector<double>> predict_proba(const BasicMlp<Scalar>& net,
                                               const FeatureMatrix& features,
                                               std::span<const std::size_t> rows) {
  const auto x = detail::gather_columns<Scalar>(features, rows);
  const auto logits = net.logits(x);
  std::vector<std::vector<double>> out(rows.size(),
                                       std::vector<double>(static_cast<std::size_t>(net.num_classes())));
  for (std::size_t c = 0; c < rows.size(); ++c) {
    detail::softmax_into<Scalar>(logits, static_cast<Eigen::Index>(c), out[c]);
  }
  return out;
}

/// Max relative deviation between analytic gradients and central finite
/// differences (step 1e-5) over `num_checked` randomly chosen parameters,
/// with dropout masks frozen for the whole check. Deviation per parameter
/// is |a - n| / max(|a|, |n|, 1e-8).
inline double gradient_check(const BasicMlp<double>& net, const FeatureMatrix& batch,
                             std::span<const ClassIndex> targets, std::uint64_t seed,
                             std::size_t num_checked = 256) {
  constexpr double kStep = 1e-5;
  std::vector<std::size_t> rows(static_cast<std::size_t>(batch.rows()));
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const auto x = detail::gather_columns<double>(batch, rows);
  std::mt19937_64 rng(seed);
  const auto masks = net.sample_masks(rng, x.cols());

  BasicMlp<double>::Gradient grad;
  net.loss(x, targets, &masks, &grad);
  BasicMlp<double> flat_grad = net;
  for (std::size_t l = 0; l < grad.size(); ++l) flat_grad.layers()[l] = grad[l];

  const std::size_t total = net.num_parameters();
  std::vector<std::size_t> chosen(total);
  std::iota(chosen.begin(), chosen.end(), std::size_t{0});
  if (num_checked < total) {
    std::shuffle(chosen.begin(), chosen.end(), rng);
    chosen.resize(num_checked);
  }

  BasicMlp<double> probe = net;
  double worst = 0.0;
  for (std::size_t k : chosen) {
    double& w = probe.parameter(k);
    const double original = w;
    w = original + kStep;
    const double up = probe.loss(x, targets, &masks);
    w = original - kStep;
    const double down = probe.loss(x, targets, &masks);
    w = original;
    const double numeric = (up - down) / (2 * kStep);
    const double analytic = flat_grad.parameter(k);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Snapshots: u64 layer count, u64 sizes, then per layer the row-major
// weights and the bias as f64. Everything little-endian.

namespace detail {

inline void put_le64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xff);
  out.write(b, 8);
}

inline std::uint64_t get_le64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw IoError("truncated snapshot");
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k) v |= std::uint64_t{b[k]} << (8 * k);
  return v;
}

}  // namespace detail

template <typename Scalar>
void save_snapshot(const BasicMlp<Scalar>& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  detail::put_le64(out, net.layer_sizes().size());
  for (int s : net.layer_sizes()) detail::put_le64(out, static_cast<std::uint64_t>(s));
  for (const auto& layer : net.layers()) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        detail::put_le64(out, std::bit_cast<std::uint64_t>(static_cast<double>(layer.weights(r, c))));
      }
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) {
      detail::put_le64(out, std::bit_cast<std::uint64_t>(static_cast<double>(layer.bias(r))));
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

template <typename Scalar = double>
BasicMlp<Scalar> load_snapshot(const std::filesystem::path& path, double dropout_rate = 0.0) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const auto count = detail::get_le64(in);
  if (count < 2 || count > 64) throw IoError("bad snapshot header");
  std::vector<int> sizes;
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto s = detail::get_le64(in);
    if (s == 0 || s > (1u << 24)) throw IoError("bad snapshot layer size");
    sizes.push_back(static_cast<int>(s));
  }
  BasicMlp<Scalar> net(sizes, dropout_rate, 0);
  for (auto& layer : net.layers()) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        layer.weights(r, c) = static_cast<Scalar>(std::bit_cast<double>(detail::get_le64(in)));
      }
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) {
      layer.bias(r) = static_cast<Scalar>(std::bit_cast<double>(detail::get_le64(in)));
    }
  }
  return net;
}

// ---------------------------------------------------------------------------
// Agreement classifier and augmented labeled set

/// Duplicates uniformly drawn minority examples until both classes of the
/// binary `target` have equal counts.
inline std::vector<LabeledPair> oversample_minority(std::span<const LabeledPair> pairs,
                                                    std::mt19937_64& rng) {
  std::vector<LabeledPair> pos, neg;
  for (const auto& p : pairs) (p.label != 0 ? pos : neg).push_back(p);
  std::vector<LabeledPair> out(pairs.begin(), pairs.end());
  if (pos.empty() || neg.empty()) return out;
  const auto& minority = pos.size() < neg.size() ? pos : neg;
  const std::size_t deficit = std::max(pos.size(), neg.size()) - minority.size();
  std::uniform_int_distribution<std::size_t> pick(0, minority.size() - 1);
  for (std::size_t k = 0; k < deficit; ++k) out.push_back(minority[pick(rng)]);
  return out;
}

/// Predicts whether the model-under-test output is correct at a point.
class AgreementClassifier {
 public:
  AgreementClassifier() = default;
  explicit AgreementClassifier(Mlp net) : net_(std::move(net)) {}
  static AgreementClassifier constant(double agree_probability) {
    AgreementClassifier c;
    c.constant_ = agree_probability;
    return c;
  }

  bool is_trivial() const { return !net_.has_value(); }

  std::vector<double> agree_probability(const FeatureMatrix& features,
                                        std::span<const std::size_t> rows) const {
    if (!net_) return std::vector<double>(rows.size(), constant_);
    const auto probs = predict_proba(*net_, features, rows);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& p : probs) out.push_back(p[1]);
    return out;
  }

 private:
  std::optional<Mlp> net_;
  double constant_ = 0.0;
};

struct AgreementFit {
  AgreementClassifier classifier;
  double threshold = 0.5;
  double validation_precision = 0.0;
};

/// Thresholds swept when tuning the agreement classifier.
inline std::vector<double> agreement_threshold_grid() {
  std::vector<double> grid(101);
  for (int k = 0; k <= 100; ++k) grid[static_cast<std::size_t>(k)] = 0.5 + 0.005 * k;
  return grid;
}

/// Precision of "agree" predictions at threshold t; 0 when nothing is
/// predicted positive.
inline double precision_at(std::span<const double> probability, std::span<const int> agree,
                           double threshold) {
  long long tp = 0, fp = 0;
  for (std::size_t k = 0; k < probability.size(); ++k) {
    if (probability[k] >= threshold) (agree[k] ? tp : fp) += 1;
  }
  return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

/// Trains the binary agreement classifier 1{model output == label} with
/// the surrogate architecture, oversampling the minority class, then picks
/// the precision-maximizing softmax threshold on a validation split (ties go
/// to the higher threshold).
inline AgreementFit train_agreement_classifier(std::span<const LabeledPair> labeled,
                                               const TestPool& pool, const MlpConfig& config,
                                               double validation_fraction = 0.3) {
  if (labeled.size() < 10) {
    throw ConfigError("agreement classifier needs at least 10 labeled points");
  }
  const auto& mut = pool.mut_predictions();
  std::vector<LabeledPair> binary;
  std::vector<int> agree;
  for (const auto& p : labeled) {
    const int a = mut.at(p.index) == p.label ? 1 : 0;
    binary.push_back({p.index, a});
    agree.push_back(a);
  }
  auto [train, valid] =
      split_validation(binary, validation_fraction, mix_seed(config.seed, 11), agree);

  std::vector<int> valid_agree;
  for (const auto& p : valid) valid_agree.push_back(p.label);
  const bool has_pos = std::any_of(train.begin(), train.end(), [](auto& p) { return p.label == 1; });
  const bool has_neg = std::any_of(train.begin(), train.end(), [](auto& p) { return p.label == 0; });
  if (!(has_pos && has_neg)) {
    const int only = has_pos ? 1 : 0;
    const auto hits = std::count(valid_agree.begin(), valid_agree.end(), only);
    AgreementFit fit;
    fit.classifier = AgreementClassifier::constant(only == 1 ? 1.0 : 0.0);
    fit.threshold = 0.5;
    fit.validation_precision = static_cast<double>(hits) / static_cast<double>(valid_agree.size());
    return fit;
  }

  std::mt19937_64 rng(mix_seed(config.seed, 12));
  const auto balanced = oversample_minority(train, rng);
  MlpConfig cfg = config;
  cfg.seed = mix_seed(config.seed, 13);
  AgreementFit fit;
  fit.classifier = AgreementClassifier(train_mlp<float>(cfg, pool.features(), balanced, 2));

  std::vector<std::size_t> valid_rows;
  for (const auto& p : valid) valid_rows.push_back(p.index);
  const auto prob = fit.classifier.agree_probability(pool.features(), valid_rows);
  fit.validation_precision = -1.0;
  for (double t : agreement_threshold_grid()) {
    const double precision = precision_at(prob, valid_agree, t);
    if (precision >= fit.validation_precision) {
      fit.validation_precision = precision;
      fit.threshold = t;
    }
  }
  return fit;
}

/// Unlabeled points the classifier confidently marks as "agree", labeled
/// with the model-under-test output.
struct AugmentedSet {
  std::vector<std::size_t> indices;
  LabelVector labels;
  double validation_precision = 0.0;
  std::size_t num_candidates = 0;

  std::size_t size() const { return indices.size(); }
};

/// floor(precision^exponent * candidates), with a 1e-9 guard so that exact
/// products such as 0.7^2 * 100 are not truncated by rounding.
inline std::size_t augmented_size(double precision, std::size_t candidates,
                                  double exponent = 2.0) {
  const double p = std::clamp(precision, 0.0, 1.0);
  const double keep = std::pow(p, exponent) * static_cast<double>(candidates);
  return std::min(candidates, static_cast<std::size_t>(std::floor(keep + 1e-9)));
}

/// Keeps the top-N_s candidates by agreement probability (ties: lower index).
inline AugmentedSet select_augmented(std::span<const std::size_t> candidates,
                                     std::span<const double> probability, double precision,
                                     const LabelVector& mut_predictions, double exponent = 2.0) {
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (probability[a] != probability[b]) return probability[a] > probability[b];
    return candidates[a] < candidates[b];
  });
  AugmentedSet out;
  out.validation_precision = precision;
  out.num_candidates = candidates.size();
  const std::size_t keep = augmented_size(precision, candidates.size(), exponent);
  for (std::size_t k = 0; k < keep; ++k) {
    const std::size_t index = candidates[order[k]];
    out.indices.push_back(index);
    out.labels.push_back(mut_predictions.at(index));
  }
  return out;
}

inline AugmentedSet build_augmented_set(const AgreementClassifier& classifier, double threshold,
                                        double validation_precision, const TestPool& pool,
                                        std::span<const std::size_t> unlabeled,
                                        double exponent = 2.0) {
  const auto prob = classifier.agree_probability(pool.features(), unlabeled);
  std::vector<std::size_t> candidates;
  std::vector<double> candidate_prob;
  for (std::size_t k = 0; k < unlabeled.size(); ++k) {
    if (prob[k] >= threshold) {
      candidates.push_back(unlabeled[k]);
      candidate_prob.push_back(prob[k]);
    }
  }
  return select_augmented(candidates, candidate_prob, validation_precision,
                          pool.mut_predictions(), exponent);
}

/// Labeled pairs followed by the augmented pairs. Throws if the two sets
/// share an index.
inline std::vector<LabeledPair> assemble_training_set(std::span<const LabeledPair> labeled,
                                                      const AugmentedSet& augmented) {
  std::vector<LabeledPair> out(labeled.begin(), labeled.end());
  if (augmented.indices.empty()) return out;
  std::vector<std::size_t> seen;
  seen.reserve(labeled.size());
  for (const auto& p : labeled) seen.push_back(p.index);
  std::sort(seen.begin(), seen.end());
  for (std::size_t k = 0; k < augmented.indices.size(); ++k) {
    const auto index = augmented.indices[k];
    if (std::binary_search(seen.begin(), seen.end(), index)) {
      throw ConfigError("augmented index " + std::to_string(index) + " is already labeled");
    }
    out.push_back({index, augmented.labels[k]});
  }
  return out;
}

}  // namespace altmas
