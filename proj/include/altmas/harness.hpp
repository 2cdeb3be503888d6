#pragma once

// Active-testing driver, the Tradition baseline, synthetic pools, and
// CSV/SVG reporting.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "altmas/acquisition.hpp"
#include "altmas/datapool.hpp"
#include "altmas/estimation.hpp"
#include "altmas/metrics.hpp"
#include "altmas/surrogate.hpp"

namespace altmas {

struct ExperimentConfig {
  // Pool source: "csv" or "idx".
  std::string pool_source = "csv";
  std::filesystem::path pool_csv;
  std::filesystem::path pool_images;
  std::filesystem::path pool_labels;
  std::filesystem::path predictions;
  std::size_t pool_limit = 0;  // 0 keeps every point
  bool standardize = false;

  std::string metrics = "accuracy";
  std::string strategy = "altmas";  // random | bald | altmas | tradition
  std::size_t budget = 100;
  std::size_t n0 = 100;
  std::size_t mc_samples = 50;
  std::size_t repetitions = 3;
  std::uint64_t seed = 0;
  MlpConfig mlp;

  bool augmentation = true;
  /// Also augment for random/bald (ablation only).
  bool augment_baselines = false;
  double epsilon = 1e-9;
  std::size_t acquisition_batch = 1;
  std::size_t retrain_every = 1;
  double ns_exponent = 2.0;
  double zero_division = 0.0;
  double validation_fraction = 0.3;
  unsigned workers = 1;

  /// Write measured wall times to the CSV. Off by default so that reruns
  /// produce identical files.
  bool log_wall_time = false;
  bool with_tradition = false;
  std::filesystem::path out_dir = "altmas_out";
};

struct IterationRecord {
  std::size_t rep = 0;
  std::size_t iteration = 0;
  std::size_t labels_spent = 0;  // seed set included
  std::size_t budget_used = 0;   // seed set excluded
  std::vector<MetricEstimate> metrics;
  double surrogate_accuracy = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::size_t> chosen;
  std::size_t augmented = 0;
  double wall_time_ms = 0.0;

  double mean_relative_error() const {
    double s = 0;
    for (const auto& m : metrics) s += m.relative_error;
    return metrics.empty() ? 0.0 : s / static_cast<double>(metrics.size());
  }
};

struct ExperimentLog {
  std::string strategy;
  std::vector<IterationRecord> records;

  std::size_t repetitions() const {
    std::size_t r = 0;
    for (const auto& rec : records) r = std::max(r, rec.rep + 1);
    return r;
  }

  /// Mean over repetitions of the last iteration's average relative error.
  double final_mean_relative_error() const {
    std::map<std::size_t, double> last;
    for (const auto& rec : records) last[rec.rep] = rec.mean_relative_error();
    double s = 0;
    for (const auto& [rep, v] : last) s += v;
    return last.empty() ? 0.0 : s / static_cast<double>(last.size());
  }
};

/// What a surrogate sees when asked for posterior samples.
struct SurrogateRequest {
  const TestPool& pool;
  std::span<const LabeledPair> train;
  MlpConfig mlp;  // seed already set for this iteration
  std::size_t mc_samples;
  std::uint64_t mc_seed;
  unsigned workers;
};

using SurrogateFn = std::function<PosteriorSamples(const SurrogateRequest&)>;

/// Fresh dropout MLP per call, then M stochastic passes.
inline PosteriorSamples mc_dropout_surrogate(const SurrogateRequest& req) {
  const auto net = train_mlp<float>(req.mlp, req.pool.features(), req.train, req.pool.num_classes());
  return mc_forward(net, req.pool.features(), req.mc_samples, req.mc_seed, req.workers);
}

/// Test double: every pass reports the ground truth with certainty.
inline PosteriorSamples truth_echo_surrogate(const SurrogateRequest& req) {
  return PosteriorSamples::one_hot(req.mc_samples, req.pool.oracle_truth(), req.pool.num_classes());
}

// ---------------------------------------------------------------------------

inline Strategy parse_strategy(const std::string& name, std::size_t num_metrics) {
  if (name == "random") return Strategy::kRandom;
  if (name == "bald") return Strategy::kBald;
  if (name == "altmas") return num_metrics > 1 ? Strategy::kMultiMetricMI : Strategy::kMetricMI;
  throw ConfigError("unknown strategy '" + name + "'");
}

namespace detail {

inline void check_run_config(const ExperimentConfig& config, const TestPool& pool) {
  if (config.repetitions < 1) throw ConfigError("repetitions must be at least 1");
  if (config.acquisition_batch < 1) throw ConfigError("acquisition_batch must be at least 1");
  if (config.retrain_every < 1) throw ConfigError("retrain_every must be at least 1");
  if (config.mc_samples < 1) throw ConfigError("mc_samples must be at least 1");
  if (config.n0 < 1) throw ConfigError("n0 must be at least 1");
  if (config.budget + config.n0 > pool.num_points()) {
    throw ConfigError("budget (" + std::to_string(config.budget) + ") + n0 (" +
                      std::to_string(config.n0) + ") exceeds pool size " +
                      std::to_string(pool.num_points()));
  }
}

inline double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since)
      .count();
}

}  // namespace detail

/// The active-testing loop. Per iteration: optional augmentation, surrogate
/// retraining, estimation, scoring, then `acquisition_batch` oracle queries.
/// Iteration 0 estimates from the seed set; the last iteration is the first
/// one with no budget left, so a repetition logs ceil(budget/batch) + 1
/// iterations.
inline ExperimentLog run_active_testing(const ExperimentConfig& config, const TestPool& pool,
                                        std::span<const MetricSpec> specs,
                                        const SurrogateFn& surrogate = mc_dropout_surrogate,
                                        std::ostream* progress = nullptr) {
  detail::check_run_config(config, pool);
  if (specs.empty()) throw ConfigError("empty metric set");
  const Strategy strategy = parse_strategy(config.strategy, specs.size());
  const bool augment = config.augmentation &&
                       (strategy == Strategy::kMetricMI || strategy == Strategy::kMultiMetricMI ||
                        config.augment_baselines);

  ExperimentLog log;
  log.strategy = strategy_name(strategy);
  for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
    const std::uint64_t rep_seed = config.seed + rep;
    LabelState state(pool.num_points(), config.budget);
    init_labeled(state, pool, config.n0, mix_seed(rep_seed, 1));
    PosteriorSamples ps;
    std::size_t augmented = 0;
    for (std::size_t t = 0;; ++t) {
      const auto started = std::chrono::steady_clock::now();
      if (t % config.retrain_every == 0) {
        std::vector<LabeledPair> train(state.labeled().begin(), state.labeled().end());
        augmented = 0;
        if (augment && state.num_labeled() >= 10) {
          MlpConfig agree_cfg = config.mlp;
          agree_cfg.seed = mix_seed(rep_seed, 100'000 + t);
          const auto fit = train_agreement_classifier(state.labeled(), pool, agree_cfg,
                                                      config.validation_fraction);
          const auto unlabeled = state.unlabeled();
          const auto aug = build_augmented_set(fit.classifier, fit.threshold,
                                               fit.validation_precision, pool, unlabeled,
                                               config.ns_exponent);
          augmented = aug.size();
          train = assemble_training_set(state.labeled(), aug);
        }
        MlpConfig cfg = config.mlp;
        cfg.seed = mix_seed(rep_seed, 200'000 + t);
        ps = surrogate(SurrogateRequest{pool, train, cfg, config.mc_samples,
                                        mix_seed(rep_seed, 300'000 + t), config.workers});
      }

      IterationRecord rec;
      rec.rep = rep;
      rec.iteration = t;
      rec.labels_spent = state.num_labeled();
      rec.budget_used = state.budget_used();
      rec.metrics = estimate_all(specs, ps, pool, state);
      rec.surrogate_accuracy = surrogate_accuracy(ps, pool);
      rec.augmented = augmented;

      const bool done = state.budget_left() == 0 || state.num_unlabeled() == 0;
      if (!done) {
        const std::size_t batch = std::min(config.acquisition_batch, state.budget_left());
        const auto unlabeled = state.unlabeled();
        switch (strategy) {
          case Strategy::kRandom:
            rec.chosen = random_select_batch(unlabeled, batch, mix_seed(rep_seed, 400'000 + t));
            break;
          case Strategy::kBald:
            rec.chosen = select_top(bald_scores(ps, unlabeled), batch);
            break;
          case Strategy::kMetricMI:
          case Strategy::kMultiMetricMI:
            rec.chosen = select_top(multi_metric_scores(specs, ps, pool, state, config.epsilon), batch);
            break;
        }
        for (std::size_t index : rec.chosen) oracle_query(state, pool, index);
      }
      rec.wall_time_ms = detail::elapsed_ms(started);
      if (progress) {
        *progress << log.strategy << " rep " << rep << " iter " << t << " labels "
                  << rec.labels_spent << " avg_rel_err " << rec.mean_relative_error()
                  << " surrogate_acc " << rec.surrogate_accuracy << " aug " << augmented << " ("
                  << static_cast<long long>(rec.wall_time_ms) << " ms)\n";
      }
      log.records.push_back(std::move(rec));
      if (done) break;
    }
  }
  return log;
}

/// Baseline without a surrogate: metrics on the revealed labels only, new
/// labels drawn uniformly at random.
inline ExperimentLog run_tradition(const ExperimentConfig& config, const TestPool& pool,
                                   std::span<const MetricSpec> specs) {
  detail::check_run_config(config, pool);
  if (specs.empty()) throw ConfigError("empty metric set");
  ExperimentLog log;
  log.strategy = "tradition";
  for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
    const std::uint64_t rep_seed = config.seed + rep;
    LabelState state(pool.num_points(), config.budget);
    init_labeled(state, pool, config.n0, mix_seed(rep_seed, 1));
    for (std::size_t t = 0;; ++t) {
      const auto started = std::chrono::steady_clock::now();
      IterationRecord rec;
      rec.rep = rep;
      rec.iteration = t;
      rec.labels_spent = state.num_labeled();
      rec.budget_used = state.budget_used();
      rec.metrics = estimate_from_labeled(specs, pool, state);
      const bool done = state.budget_left() == 0 || state.num_unlabeled() == 0;
      if (!done) {
        const std::size_t batch = std::min(config.acquisition_batch, state.budget_left());
        rec.chosen = random_select_batch(state.unlabeled(), batch, mix_seed(rep_seed, 400'000 + t));
        for (std::size_t index : rec.chosen) oracle_query(state, pool, index);
      }
      rec.wall_time_ms = detail::elapsed_ms(started);
      log.records.push_back(std::move(rec));
      if (done) break;
    }
  }
  return log;
}

// ---------------------------------------------------------------------------
// CSV logs

inline constexpr const char* kLogHeader =
    "rep,iteration,labels_spent,metric,estimate,truth,rel_err,abs_err,surrogate_acc,"
    "chosen_index,wall_time_ms";

namespace detail {

inline std::string fmt_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace detail

/// One row per (rep, iteration, metric) in log order. `chosen_index` is -1
/// when nothing was queried and `;`-joined for batches.
inline void write_csv(const ExperimentLog& log, std::ostream& out, bool include_wall_time = false) {
  out << kLogHeader << '\n';
  for (const auto& rec : log.records) {
    std::string chosen;
    if (rec.chosen.empty()) {
      chosen = "-1";
    } else {
      for (std::size_t k = 0; k < rec.chosen.size(); ++k) {
        if (k) chosen += ';';
        chosen += std::to_string(rec.chosen[k]);
      }
    }
    const std::string wall = include_wall_time ? detail::fmt_real(rec.wall_time_ms) : "0";
    for (const auto& m : rec.metrics) {
      out << rec.rep << ',' << rec.iteration << ',' << rec.labels_spent << ',' << m.name << ','
          << detail::fmt_real(m.estimate) << ',' << detail::fmt_real(m.truth) << ','
          << detail::fmt_real(m.relative_error) << ',' << detail::fmt_real(m.absolute_error) << ','
          << detail::fmt_real(rec.surrogate_accuracy) << ',' << chosen << ',' << wall << '\n';
    }
  }
}

inline void write_csv(const ExperimentLog& log, const std::filesystem::path& path,
                      bool include_wall_time = false) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  write_csv(log, out, include_wall_time);
  if (!out) throw IoError("write failed: " + path.string());
}

/// Reads a log written by write_csv(); the strategy is the file stem.
inline ExperimentLog read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kLogHeader) {
    throw IoError("not an experiment log: " + path.string());
  }
  ExperimentLog log;
  log.strategy = path.stem().string();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_commas(line);
    const auto where = path.string() + ":" + std::to_string(line_no);
    if (cells.size() != 11) throw IoError("ragged row at " + where);
    long long rep = 0, iter = 0, spent = 0;
    double est = 0, truth = 0, rel = 0, abs_err = 0, wall = 0;
    double sacc = std::numeric_limits<double>::quiet_NaN();
    if (!detail::parse_int(cells[0], rep) || !detail::parse_int(cells[1], iter) ||
        !detail::parse_int(cells[2], spent) || !detail::parse_double(cells[4], est) ||
        !detail::parse_double(cells[5], truth) || !detail::parse_double(cells[6], rel) ||
        !detail::parse_double(cells[7], abs_err) || !detail::parse_double(cells[10], wall)) {
      throw IoError("bad number at " + where);
    }
    if (detail::trim(cells[8]) != "nan" && !detail::parse_double(cells[8], sacc)) {
      throw IoError("bad surrogate accuracy at " + where);
    }
    const bool same = !log.records.empty() &&
                      log.records.back().rep == static_cast<std::size_t>(rep) &&
                      log.records.back().iteration == static_cast<std::size_t>(iter);
    if (!same) {
      IterationRecord rec;
      rec.rep = static_cast<std::size_t>(rep);
      rec.iteration = static_cast<std::size_t>(iter);
      rec.labels_spent = static_cast<std::size_t>(spent);
      rec.surrogate_accuracy = sacc;
      rec.wall_time_ms = wall;
      const auto chosen = detail::trim(cells[9]);
      if (chosen != "-1") {
        std::size_t start = 0;
        while (start <= chosen.size()) {
          auto end = chosen.find(';', start);
          if (end == std::string_view::npos) end = chosen.size();
          long long v = 0;
          if (!detail::parse_int(chosen.substr(start, end - start), v) || v < 0) {
            throw IoError("bad chosen_index at " + where);
          }
          rec.chosen.push_back(static_cast<std::size_t>(v));
          start = end + 1;
        }
      }
      log.records.push_back(std::move(rec));
    }
    log.records.back().metrics.push_back(
        {std::string(detail::trim(cells[3])), est, truth, rel, abs_err});
  }
  return log;
}

// ---------------------------------------------------------------------------
// SVG report: average relative error vs labels spent, mean +/- standard
// error across repetitions, one series per log.

struct CurvePoint {
  double labels_spent = 0;
  double mean = 0;
  double standard_error = 0;
  std::size_t count = 0;
};

/// Aggregates a log by iteration index across repetitions.
inline std::vector<CurvePoint> error_curve(const ExperimentLog& log) {
  std::map<std::size_t, std::vector<std::pair<double, double>>> by_iter;
  for (const auto& rec : log.records) {
    by_iter[rec.iteration].push_back(
        {static_cast<double>(rec.labels_spent), rec.mean_relative_error()});
  }
  std::vector<CurvePoint> out;
  for (const auto& [iter, values] : by_iter) {
    CurvePoint p;
    p.count = values.size();
    for (const auto& [x, y] : values) {
      p.labels_spent += x;
      p.mean += y;
    }
    p.labels_spent /= static_cast<double>(p.count);
    p.mean /= static_cast<double>(p.count);
    if (p.count > 1) {
      double ss = 0;
      for (const auto& [x, y] : values) ss += (y - p.mean) * (y - p.mean);
      p.standard_error =
          std::sqrt(ss / static_cast<double>(p.count - 1)) / std::sqrt(static_cast<double>(p.count));
    }
    out.push_back(p);
  }
  return out;
}

inline void emit_svg(std::span<const ExperimentLog> logs, std::ostream& out) {
  std::vector<std::vector<CurvePoint>> curves;
  for (const auto& log : logs) {
    if (!log.records.empty()) curves.push_back(error_curve(log));
  }
  if (curves.empty()) throw ConfigError("emit_svg: empty log");

  constexpr double kWidth = 720, kHeight = 440;
  constexpr double kLeft = 70, kRight = 160, kTop = 30, kBottom = 50;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;

  double x_min = std::numeric_limits<double>::infinity(), x_max = -x_min, y_max = 0;
  for (const auto& c : curves) {
    for (const auto& p : c) {
      x_min = std::min(x_min, p.labels_spent);
      x_max = std::max(x_max, p.labels_spent);
      y_max = std::max(y_max, p.mean + p.standard_error);
    }
  }
  if (x_max <= x_min) {
    x_min -= 1;
    x_max += 1;
  }
  if (y_max <= 0) y_max = 1;
  y_max *= 1.05;
  auto sx = [&](double x) { return kLeft + (x - x_min) / (x_max - x_min) * plot_w; };
  auto sy = [&](double y) { return kTop + plot_h - y / y_max * plot_h; };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  static constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                            "#9467bd", "#8c564b"};

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // Axes and ticks.
  out << "<g stroke=\"black\" stroke-width=\"1\">\n";
  out << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(kTop + plot_h) << "\" x2=\""
      << num(kLeft + plot_w) << "\" y2=\"" << num(kTop + plot_h) << "\"/>\n";
  out << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(kLeft)
      << "\" y2=\"" << num(kTop + plot_h) << "\"/>\n";
  out << "</g>\n<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int k = 0; k <= 5; ++k) {
    const double xv = x_min + (x_max - x_min) * k / 5.0;
    const double yv = y_max * k / 5.0;
    out << "<text x=\"" << num(sx(xv)) << "\" y=\"" << num(kTop + plot_h + 16)
        << "\" text-anchor=\"middle\">" << num(xv) << "</text>\n";
    out << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(sy(yv) + 4)
        << "\" text-anchor=\"end\">" << num(yv) << "</text>\n";
  }
  out << "<text x=\"" << num(kLeft + plot_w / 2) << "\" y=\"" << num(kHeight - 12)
      << "\" text-anchor=\"middle\">labeled points</text>\n";
  out << "<text x=\"16\" y=\"" << num(kTop + plot_h / 2) << "\" text-anchor=\"middle\" "
      << "transform=\"rotate(-90 16 " << num(kTop + plot_h / 2)
      << ")\">average relative error</text>\n</g>\n";

  std::size_t series = 0;
  for (std::size_t s = 0; s < logs.size(); ++s) {
    if (logs[s].records.empty()) continue;
    const auto& c = curves[series];
    const char* color = kColors[series % std::size(kColors)];
    const bool band = std::any_of(c.begin(), c.end(), [](auto& p) { return p.count > 1; });
    out << "<g class=\"series\" data-name=\"" << logs[s].strategy << "\">\n";
    if (band && c.size() > 1) {
      out << "<polygon class=\"se-band\" fill=\"" << color << "\" fill-opacity=\"0.2\" points=\"";
      for (const auto& p : c) out << num(sx(p.labels_spent)) << ',' << num(sy(p.mean + p.standard_error)) << ' ';
      for (auto it = c.rbegin(); it != c.rend(); ++it) {
        out << num(sx(it->labels_spent)) << ',' << num(sy(it->mean - it->standard_error)) << ' ';
      }
      out << "\"/>\n";
    }
    if (c.size() > 1) {
      out << "<path class=\"mean\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" d=\"";
      for (std::size_t k = 0; k < c.size(); ++k) {
        out << (k ? " L" : "M") << num(sx(c[k].labels_spent)) << ',' << num(sy(c[k].mean));
      }
      out << "\"/>\n";
    } else {
      out << "<circle class=\"marker\" cx=\"" << num(sx(c[0].labels_spent)) << "\" cy=\""
          << num(sy(c[0].mean)) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    const double ly = kTop + 14 + 18.0 * static_cast<double>(series);
    out << "<line x1=\"" << num(kLeft + plot_w + 12) << "\" y1=\"" << num(ly) << "\" x2=\""
        << num(kLeft + plot_w + 32) << "\" y2=\"" << num(ly) << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << num(kLeft + plot_w + 38) << "\" y=\"" << num(ly + 4)
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << logs[s].strategy << "</text>\n";
    out << "</g>\n";
    ++series;
  }
  out << "</svg>\n";
}

inline void emit_svg(std::span<const ExperimentLog> logs, const std::filesystem::path& path) {
  std::ostringstream buf;
  emit_svg(logs, buf);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << buf.str();
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Synthetic pools

struct SynthOptions {
  std::size_t num_points = 2000;
  int num_classes = 2;
  int dim = 2;
  /// Fraction of points where the model-under-test is correct.
  double mut_accuracy = 0.7;
  /// "random": errors at uniformly drawn points; "region": errors at the
  /// points with the largest second coordinate.
  std::string flip = "random";
  /// Distance of each class mean from the origin (unit-variance noise).
  double separation = 2.5;
  std::uint64_t seed = 0;
};

/// Gaussian blobs with class means on a circle, plus a model-under-test
/// that is wrong on exactly round((1 - mut_accuracy) * N) points.
inline TestPool synth_blobs(const SynthOptions& opt) {
  if (opt.num_points == 0 || opt.num_classes < 2 || opt.dim < 2) {
    throw ConfigError("synth: need N >= 1, C >= 2, dim >= 2");
  }
  if (!(opt.mut_accuracy >= 0.0 && opt.mut_accuracy <= 1.0)) {
    throw ConfigError("synth: mut accuracy must lie in [0, 1]");
  }
  if (opt.flip != "random" && opt.flip != "region") {
    throw ConfigError("synth: flip must be 'random' or 'region'");
  }
  const std::size_t n = opt.num_points;
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  FeatureMatrix features(static_cast<Eigen::Index>(n), opt.dim);
  LabelVector truth(n);
  for (std::size_t i = 0; i < n; ++i) truth[i] = static_cast<ClassIndex>(i % static_cast<std::size_t>(opt.num_classes));
  std::shuffle(truth.begin(), truth.end(), rng);
  // Means sit along the first axis for two classes, on a circle otherwise,
  // so the second coordinate never separates classes when C == 2.
  for (std::size_t i = 0; i < n; ++i) {
    const double angle = 2.0 * M_PI * truth[i] / opt.num_classes;
    const auto row = static_cast<Eigen::Index>(i);
    for (int d = 0; d < opt.dim; ++d) features(row, d) = noise(rng);
    features(row, 0) += opt.separation * std::cos(angle);
    features(row, 1) += opt.separation * std::sin(angle);
  }

  const auto wrong = static_cast<std::size_t>(
      std::llround((1.0 - opt.mut_accuracy) * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (opt.flip == "random") {
    std::shuffle(order.begin(), order.end(), rng);
  } else {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return features(static_cast<Eigen::Index>(a), 1) > features(static_cast<Eigen::Index>(b), 1);
    });
  }
  LabelVector preds = truth;
  std::uniform_int_distribution<int> offset(1, opt.num_classes - 1);
  for (std::size_t k = 0; k < wrong; ++k) {
    const std::size_t i = order[k];
    preds[i] = (truth[i] + offset(rng)) % opt.num_classes;
  }
  return TestPool(std::move(features), std::move(preds), std::move(truth), opt.num_classes);
}

inline void write_csv_pool(const TestPool& pool, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "label,pred";
  for (Eigen::Index d = 0; d < pool.dim(); ++d) out << ",f" << d;
  out << '\n';
  for (std::size_t i = 0; i < pool.num_points(); ++i) {
    out << pool.oracle_truth()[i] << ',' << pool.mut_predictions()[i];
    for (Eigen::Index d = 0; d < pool.dim(); ++d) {
      out << ',' << detail::fmt_real(pool.features()(static_cast<Eigen::Index>(i), d));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

/// `metric,value` for accuracy and each class's precision and recall.
inline void write_truth_metrics(const TestPool& pool, const std::filesystem::path& path) {
  std::vector<MetricSpec> specs{MetricSpec::accuracy()};
  for (ClassIndex c = 0; c < pool.num_classes(); ++c) {
    specs.push_back(MetricSpec::precision(c));
    specs.push_back(MetricSpec::recall(c));
  }
  const auto values = true_metric_values(specs, pool);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "metric,value\n";
  for (std::size_t k = 0; k < specs.size(); ++k) {
    out << specs[k].name() << ',' << detail::fmt_real(values[k]) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Configuration files: `key = value` lines, `#` comments.

namespace detail {

inline bool parse_bool(std::string_view v) {
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  throw ConfigError("expected a boolean, got '" + std::string(v) + "'");
}

template <typename T>
T parse_unsigned(std::string_view key, std::string_view v) {
  long long x = 0;
  if (!parse_int(v, x) || x < 0) {
    throw ConfigError("'" + std::string(key) + "' expects a non-negative integer");
  }
  return static_cast<T>(x);
}

inline double parse_real(std::string_view key, std::string_view v) {
  double x = 0;
  if (!parse_double(v, x)) throw ConfigError("'" + std::string(key) + "' expects a number");
  return x;
}

}  // namespace detail

inline void apply_config_value(ExperimentConfig& c, std::string_view key, std::string_view raw) {
  const auto v = detail::trim(raw);
  const std::string value(v);
  if (key == "pool") c.pool_source = value;
  else if (key == "pool_csv") c.pool_csv = value;
  else if (key == "pool_images") c.pool_images = value;
  else if (key == "pool_labels") c.pool_labels = value;
  else if (key == "predictions") c.predictions = value;
  else if (key == "pool_limit") c.pool_limit = detail::parse_unsigned<std::size_t>(key, v);
  else if (key == "standardize") c.standardize = detail::parse_bool(v);
  else if (key == "metrics") c.metrics = value;
  else if (key == "strategy") c.strategy = value;
  else if (key == "budget") c.budget = detail::parse_unsigned<std::size_t>(key, v);
  else if (key == "n0") c.n0 = detail::parse_unsigned<std::size_t>(key, v);
  else if (key == "mc_samples") c.mc_samples = detail::parse_unsigned<std::size_t>(key, v);
  else if (key == "repetitions") c.repetitions = detail::parse_unsigned<std::size_t>(key, v);
  else if (key == "seed") c.seed = detail::parse_unsigned<std::uint64_t>(key, v);
  else if (key == "hidden") {
    c.mlp.hidden.clear();
    std::size_t start = 0;
    while (start <= v.size()) {
      auto end = v.find(',', start);
      if (end == std::string_view::npos) end = v.size();
      c.mlp.hidden.push_back(detail::parse_unsigned<int>(key, v.substr(start, end - start)));
      start = end + 1;
    }
  }
  else if (key == "dropout") c.mlp.dropout_rate = detail::parse_real(key, v);
  else if (key == "learning_rate") c.mlp.learning_rate = detail::parse_real(key, v);
  else if (key == "epochs") c.mlp.epochs = detail::parse_unsigned<int>(key, v);
  else if (key == "train_batch") c.mlp.batch_size = detail::parse_unsigned<int>(key, v);
  else if (key == "augmentation") c.augmentation = detail::parse_bool(v);
  else if (key == "augment_baselines") c.augment_baselines = detail::parse_bool(v);
  else if (key == "epsilon") c.epsilon = detail::parse_real(key, v);
  else if (key == "batch_size") c.acquisition_batch = detail::parse_unsigned<std::size_t>(key, v);
  else if (key == "retrain_every") c.retrain_every = detail::parse_unsigned<std::size_t>(key, v);
  else if (key == "ns_exponent") c.ns_exponent = detail::parse_real(key, v);
  else if (key == "zero_division") c.zero_division = detail::parse_real(key, v);
  else if (key == "validation_fraction") c.validation_fraction = detail::parse_real(key, v);
  else if (key == "workers") c.workers = detail::parse_unsigned<unsigned>(key, v);
  else if (key == "log_wall_time") c.log_wall_time = detail::parse_bool(v);
  else if (key == "with_tradition") c.with_tradition = detail::parse_bool(v);
  else if (key == "out") c.out_dir = value;
  else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

inline ExperimentConfig parse_config(std::istream& in, const std::string& origin = "config") {
  ExperimentConfig c;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    apply_config_value(c, detail::trim(body.substr(0, eq)), body.substr(eq + 1));
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_config(in, path.string());
}

/// Loads the pool named by the config, applying the prediction override
/// and the point limit.
inline TestPool load_pool(const ExperimentConfig& c) {
  if (c.pool_source == "csv") {
    if (c.pool_csv.empty()) throw ConfigError("pool_csv is required for a CSV pool");
    TestPool pool = load_csv_pool(c.pool_csv, c.standardize);
    if (c.pool_limit) pool = pool.head(c.pool_limit);
    if (!c.predictions.empty()) {
      pool = pool.with_predictions(
          load_predictions(c.predictions, pool.num_points(), pool.num_classes()));
    }
    return pool;
  }
  if (c.pool_source == "idx") {
    if (c.pool_images.empty() || c.pool_labels.empty()) {
      throw ConfigError("pool_images and pool_labels are required for an IDX pool");
    }
    if (c.predictions.empty()) throw ConfigError("predictions are required for an IDX pool");
    auto [features, truth] = load_idx(c.pool_images, c.pool_labels);
    if (c.standardize) standardize_columns(features);
    std::size_t n = truth.size();
    if (c.pool_limit) n = std::min(n, c.pool_limit);
    const int num_classes = 1 + *std::max_element(truth.begin(), truth.end());
    LabelVector placeholder(truth.size(), 0);
    TestPool full(std::move(features), std::move(placeholder), std::move(truth), num_classes);
    TestPool pool = full.head(n);
    return pool.with_predictions(load_predictions(c.predictions, n, num_classes));
  }
  throw ConfigError("pool must be 'csv' or 'idx', got '" + c.pool_source + "'");
}

}  // namespace altmas
