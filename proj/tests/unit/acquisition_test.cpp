#include "altmas/acquisition.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "support/oracles.hpp"

namespace altmas {
namespace {

std::vector<MetricSpec> small_specs(int C) {
  std::vector<MetricSpec> specs{MetricSpec::accuracy()};
  for (int c = 0; c < C; ++c) {
    specs.push_back(MetricSpec::precision(c));
    specs.push_back(MetricSpec::recall(c));
  }
  return specs;
}

// Copies sample 0 into every other sample.
void collapse_samples(PosteriorSamples& ps) {
  for (std::size_t j = 1; j < ps.num_samples; ++j) {
    for (std::size_t i = 0; i < ps.num_points; ++i) {
      const auto src = ps.row(0, i);
      auto dst = ps.row(j, i);
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
  ps.refresh_labels();
}

TEST(Entropy, ZeroTermsAndUniform) {
  EXPECT_DOUBLE_EQ(entropy(std::vector<double>{1.0, 0.0}), 0.0);
  EXPECT_NEAR(entropy(std::vector<double>{0.25, 0.25, 0.25, 0.25}), std::log(4.0), 1e-15);
}

TEST(Bald, IdenticalPassesScoreZero) {
  std::mt19937_64 rng(1);
  auto inst = oracle::random_instance(rng, 10, 3, 5);
  collapse_samples(inst.ps);
  const auto s = bald_scores(inst.ps, inst.state.unlabeled());
  for (double v : s.scores) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Bald, OppositeOneHotPassesScoreLn2) {
  const auto ps = PosteriorSamples::one_hot(1, LabelVector{0}, 2);
  PosteriorSamples two(2, 1, 2);
  two.row(0, 0)[0] = 1.0;
  two.row(1, 0)[1] = 1.0;
  two.refresh_labels();
  const std::vector<std::size_t> unl{0};
  EXPECT_NEAR(bald_scores(two, unl).scores[0], std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(bald_scores(ps, unl).scores[0], 0.0);
}

TEST(Bald, MatchesDirectFormula) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = oracle::random_instance(rng, 9, 3, 6);
    const auto s = bald_scores(inst.ps, inst.state.unlabeled());
    EXPECT_EQ(s.strategy, Strategy::kBald);
    for (std::size_t k = 0; k < s.size(); ++k) {
      EXPECT_NEAR(s.raw[k], oracle::brute_force_bald(inst.ps, s.indices[k]), 1e-12);
    }
  }
}

TEST(MetricMI, KeyedByUnlabeledSet) {
  std::mt19937_64 rng(3);
  auto inst = oracle::random_instance(rng, 12, 3, 4);
  const auto s = metric_mi_scores(MetricSpec::accuracy(), inst.ps, inst.pool, inst.state);
  EXPECT_EQ(s.indices, inst.state.unlabeled());
  EXPECT_EQ(s.strategy, Strategy::kMetricMI);
}

TEST(MetricMI, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const int C = 2 + static_cast<int>(rng() % 3);
    auto inst = oracle::random_instance(rng, 6, C, 4);
    for (const auto& spec : small_specs(C)) {
      const auto s = metric_mi_scores(spec, inst.ps, inst.pool, inst.state);
      for (std::size_t k = 0; k < s.size(); ++k) {
        const double ref = oracle::brute_force_mi(spec, inst.ps, inst.pool, inst.state, s.indices[k], 1e-9);
        EXPECT_NEAR(s.raw[k], ref, 1e-9) << spec.name();
      }
    }
  }
}

TEST(MetricMI, ZeroWithoutDisagreement) {
  std::mt19937_64 rng(5);
  auto inst = oracle::random_instance(rng, 10, 3, 6);
  collapse_samples(inst.ps);
  for (const auto& spec : small_specs(3)) {
    for (double v : metric_mi_scores(spec, inst.ps, inst.pool, inst.state).raw) EXPECT_NEAR(v, 0.0, 1e-12);
  }
}

TEST(MetricMI, ZeroWhenMetricIgnoresPoint) {
  // Precision(2) with no point predicted as 2 is constant whatever x's label.
  std::mt19937_64 rng(6);
  auto inst = oracle::random_instance(rng, 10, 3, 6, 0.2);
  LabelVector preds = inst.pool.mut_predictions();
  for (auto& p : preds) p = p == 2 ? 0 : p;
  const auto pool = inst.pool.with_predictions(preds);
  for (double v : metric_mi_scores(MetricSpec::precision(2), inst.ps, pool, inst.state).raw) {
    EXPECT_DOUBLE_EQ(v, 0.0);
  }
}

TEST(MetricMI, BoundedByBaldAndNonNegative) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    const int C = 2 + static_cast<int>(rng() % 3);
    auto inst = oracle::random_instance(rng, 10, C, 5, 0.3);
    const auto bald = bald_scores(inst.ps, inst.state.unlabeled());
    for (const auto& spec : small_specs(C)) {
      const auto s = metric_mi_scores(spec, inst.ps, inst.pool, inst.state);
      for (std::size_t k = 0; k < s.size(); ++k) {
        EXPECT_GE(s.raw[k], -1e-9);
        EXPECT_GE(s.scores[k], 0.0);
        EXPECT_LE(s.scores[k], bald.scores[k] + 1e-9);
      }
    }
  }
}

TEST(MultiMetric, SingleAndDuplicate) {
  std::mt19937_64 rng(8);
  auto inst = oracle::random_instance(rng, 10, 3, 5);
  const auto q = MetricSpec::recall(1);
  const auto single = metric_mi_scores(q, inst.ps, inst.pool, inst.state);
  const std::vector<MetricSpec> one{q}, two{q, q};
  const auto m1 = multi_metric_scores(one, inst.ps, inst.pool, inst.state);
  const auto m2 = multi_metric_scores(two, inst.ps, inst.pool, inst.state);
  EXPECT_EQ(m1.scores, single.scores);
  EXPECT_EQ(m2.strategy, Strategy::kMultiMetricMI);
  for (std::size_t k = 0; k < single.size(); ++k) EXPECT_DOUBLE_EQ(m2.scores[k], 2 * single.scores[k]);
}

TEST(MultiMetric, Full21IsSumOfIndependentMaps) {
  std::mt19937_64 rng(9);
  auto inst = oracle::random_instance(rng, 14, 10, 3, 0.2);
  const auto specs = parse_metric_set("full21", 10);
  const auto total = multi_metric_scores(specs, inst.ps, inst.pool, inst.state);
  std::vector<double> expect(total.size(), 0.0);
  for (const auto& spec : specs) {
    const auto s = metric_mi_scores(spec, inst.ps, inst.pool, inst.state);
    for (std::size_t k = 0; k < s.size(); ++k) expect[k] += s.scores[k];
  }
  for (std::size_t k = 0; k < total.size(); ++k) EXPECT_NEAR(total.scores[k], expect[k], 1e-12);
}

TEST(Select, SpecExamples) {
  AcquisitionScores s;
  s.indices = {3, 7};
  s.scores = {0.1, 0.5};
  EXPECT_EQ(select_next(s), 7u);
  s.scores = {0.0, 0.0};
  EXPECT_EQ(select_next(s), 3u);
  AcquisitionScores empty;
  EXPECT_THROW(select_next(empty), ConfigError);
}

TEST(Select, InvariantUnderIncreasingTransforms) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    AcquisitionScores s;
    for (std::size_t k = 0; k < 20; ++k) {
      s.indices.push_back(k * 2 + 1);
      s.scores.push_back(std::floor(u(rng) * 5) / 5);  // plenty of ties
    }
    const auto best = select_next(s);
    const auto top = select_top(s, 5);
    for (auto f : {+[](double v) { return 2 * v; }, +[](double v) { return std::exp(v) - 3; },
                   +[](double v) { return v * v * v + v; }}) {
      AcquisitionScores t = s;
      for (auto& v : t.scores) v = f(v);
      EXPECT_EQ(select_next(t), best);
      EXPECT_EQ(select_top(t, 5), top);
    }
  }
}

TEST(Select, TopIsBestFirst) {
  AcquisitionScores s;
  s.indices = {1, 2, 3, 4};
  s.scores = {0.2, 0.9, 0.2, 0.5};
  EXPECT_EQ(select_top(s, 3), (std::vector<std::size_t>{2, 4, 1}));
  EXPECT_EQ(select_top(s, 10).size(), 4u);
}

TEST(RandomSelect, SingletonAndDeterminism) {
  const std::vector<std::size_t> one{42};
  EXPECT_EQ(random_select(one, 5), 42u);
  const std::vector<std::size_t> many{1, 5, 9, 13, 17, 21};
  EXPECT_EQ(random_select(many, 77), random_select(many, 77));
  const auto batch = random_select_batch(many, 4, 3);
  EXPECT_EQ(batch.size(), 4u);
  EXPECT_EQ(std::set<std::size_t>(batch.begin(), batch.end()).size(), 4u);
  EXPECT_THROW(random_select(std::vector<std::size_t>{}, 1), ConfigError);
}

TEST(RandomSelect, UniformWithinThreeSigma) {
  const std::vector<std::size_t> idx{2, 4, 6, 8};
  std::map<std::size_t, int> freq;
  const int draws = 10000;
  for (int k = 0; k < draws; ++k) ++freq[random_select(idx, mix_seed(123, k))];
  const double sigma = std::sqrt(0.25 * 0.75 / draws);
  double chi2 = 0;
  for (auto i : idx) {
    const double f = freq[i] / double(draws);
    EXPECT_LE(std::abs(f - 0.25), 3 * sigma) << i;
    chi2 += std::pow(freq[i] - draws / 4.0, 2) / (draws / 4.0);
  }
  EXPECT_LT(chi2, 11.34);  // 99% quantile, 3 degrees of freedom
}

}  // namespace
}  // namespace altmas
