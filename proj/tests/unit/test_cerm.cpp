#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "spgrpo/cerm.hpp"
#include "spgrpo/errors.hpp"
#include "spgrpo/random.hpp"

using namespace spgrpo;
using namespace spgrpo::cerm;
using numerics::RandomSource;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

RewardMatrix random_matrix(RandomSource& rng, std::size_t g, std::size_t k) {
  std::vector<std::vector<double>> rows(g, std::vector<double>(k));
  for (auto& row : rows)
    for (double& v : row) v = rng.uniform();
  return RewardMatrix::from_rows(rows);
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST(Hoyer, ConstantVectorIsZero) {
  EXPECT_NEAR(hoyer(std::vector<double>(7, 0.4)), 0.0, 1e-12);
}

TEST(Hoyer, OneHotIsOne) {
  std::vector<double> r(5, 0.0);
  r[3] = 0.9;
  EXPECT_NEAR(hoyer(r), 1.0, 1e-12);
}

TEST(Hoyer, HandExample) {
  const double expected = (std::sqrt(2.0) - 4.0 / std::sqrt(10.0)) / (std::sqrt(2.0) - 1.0);
  EXPECT_NEAR(hoyer(std::vector<double>{3, 1}), expected, 1e-12);
  EXPECT_NEAR(hoyer(std::vector<double>{3, 1}), 0.3604, 1e-4);
}

TEST(Hoyer, AllZeroIsZeroAndNegativeThrows) {
  EXPECT_EQ(hoyer(std::vector<double>(4, 0.0)), 0.0);
  EXPECT_THROW(hoyer(std::vector<double>{0.5, -0.1}), DomainError);
}

// Property: Hoyer lies in [0, 1], is 0 only for equal entries, 1 only for one nonzero.
TEST(Hoyer, BoundsOnRandomVectors) {
  RandomSource rng(1);
  for (int n = 0; n < 500; ++n) {
    std::vector<double> r(2 + rng.uniform_index(15));
    for (double& v : r) v = rng.uniform() < 0.3 ? 0.0 : rng.uniform();
    if (std::all_of(r.begin(), r.end(), [](double v) { return v == 0.0; })) continue;
    const double h = hoyer(r);
    ASSERT_GE(h, 0.0);
    ASSERT_LE(h, 1.0);
    const auto nonzero = std::count_if(r.begin(), r.end(), [](double v) { return v > 0; });
    if (nonzero > 1) EXPECT_LT(h, 1.0 - 1e-12);
    if (nonzero == 1) EXPECT_NEAR(h, 1.0, 1e-12);
    const bool equal = std::all_of(r.begin(), r.end(), [&](double v) { return v == r[0]; });
    if (!equal) EXPECT_GT(h, 1e-12);
  }
}

TEST(GroupMeans, Examples) {
  const auto m = RewardMatrix::from_rows({{0.1, 0.5}, {0.2, 0.5}, {0.3, 0.5}});
  const auto means = group_means(m);
  EXPECT_NEAR(means[0], 0.2, 1e-15);
  EXPECT_EQ(means[1], 0.5);
}

TEST(GroupMeans, MatchesNaiveSummation) {
  RandomSource rng(2);
  const auto m = random_matrix(rng, 16, 3);
  const auto means = group_means(m);
  for (std::size_t j = 0; j < 3; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < 16; ++i) s += m.values[i * 3 + j];
    EXPECT_NEAR(means[j], s / 16, 1e-15);
  }
}

TEST(Transition, SigmoidHalfAtThreshold) {
  CermConfig cfg;
  cfg.beta = 0.0;
  const std::vector<double> means{0.75, 0.2, 0.9}, sparsities{0.3, 0.8, 0.1};
  EXPECT_DOUBLE_EQ(transition(1, means, sparsities, cfg), 0.5);
}

TEST(Transition, HandExample) {
  CermConfig cfg;
  cfg.thresholds = {0.75, 0.75};
  const std::vector<double> means{0.3, 0.8}, sparsities{0.5, 0.2};
  const double g = transition(2, means, sparsities, cfg);
  EXPECT_NEAR(g, sigmoid(0.05) + 0.3, 1e-15);
  EXPECT_NEAR(g, 0.8125, 1e-4);
}

TEST(Transition, FirstStageHasNoPredecessor) {
  CermConfig cfg;
  const std::vector<double> means{0.6, 0.6, 0.6}, sparsities{0.4, 0.1, 0.1};
  EXPECT_NEAR(transition(1, means, sparsities, cfg), sigmoid(0.6 - 0.75) - 0.4, 1e-15);
}

TEST(Transition, ZeroBetaIgnoresSparsity) {
  CermConfig cfg;
  cfg.beta = 0.0;
  const std::vector<double> means{0.4, 0.7, 0.9};
  for (std::size_t j = 1; j <= 3; ++j) {
    EXPECT_EQ(transition(j, means, std::vector<double>{0.1, 0.2, 0.3}, cfg),
              transition(j, means, std::vector<double>{0.9, 0.0, 0.6}, cfg));
  }
}

TEST(Transition, BadStageThrows) {
  CermConfig cfg;
  const std::vector<double> m{0.5, 0.5, 0.5};
  EXPECT_THROW(transition(0, m, m, cfg), DomainError);
  EXPECT_THROW(transition(4, m, m, cfg), DomainError);
}

TEST(StageWeights, ZeroAlphaUniform) {
  for (double w : stage_weights(std::vector<double>{0.1, 3.0, -2.0, 0.4}, 0.0))
    EXPECT_DOUBLE_EQ(w, 0.25);
}

TEST(StageWeights, HandSoftmax) {
  const auto w = stage_weights(std::vector<double>{1.0, 0.0}, 1.0);
  EXPECT_NEAR(w[0], 0.7311, 1e-4);
  EXPECT_NEAR(w[1], 0.2689, 1e-4);
  EXPECT_NEAR(w[0], std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-15);
}

TEST(StageWeights, NoOverflowForLargeInputs) {
  const auto w = stage_weights(std::vector<double>{1000.0, 999.0}, 8.0);
  EXPECT_TRUE(std::isfinite(w[0]) && std::isfinite(w[1]));
  EXPECT_NEAR(sum(w), 1.0, 1e-12);
}

// Property: weights stay on the simplex and ignore a common shift of g.
TEST(StageWeights, SimplexAndShiftInvariance) {
  RandomSource rng(3);
  for (int n = 0; n < 300; ++n) {
    std::vector<double> g(1 + rng.uniform_index(6));
    for (double& v : g) v = 4.0 * rng.normal();
    const double alpha = 20.0 * rng.uniform();
    const auto w = stage_weights(g, alpha);
    EXPECT_NEAR(sum(w), 1.0, 1e-12);
    for (double x : w) {
      ASSERT_GE(x, 0.0);
      ASSERT_LE(x, 1.0);
    }
    const double c = 10.0 * rng.normal();
    auto shifted = g;
    for (double& v : shifted) v += c;
    const auto ws = stage_weights(shifted, alpha);
    for (std::size_t j = 0; j < w.size(); ++j) EXPECT_NEAR(ws[j], w[j], 1e-12);
  }
}

TEST(MixedReward, OneHotSelectsColumn) {
  RandomSource rng(4);
  const auto m = random_matrix(rng, 6, 3);
  EXPECT_EQ(mixed_reward(m, std::vector<double>{0, 1, 0}), m.column(1));
}

TEST(MixedReward, UniformTwoTerms) {
  const auto m = RewardMatrix::from_rows({{0.2, 0.8}, {0.4, 0.4}});
  EXPECT_NEAR(mixed_reward(m, std::vector<double>{0.5, 0.5})[0], 0.5, 1e-15);
}

TEST(MixedReward, MatchesNaiveDoubleLoop) {
  RandomSource rng(5);
  const auto m = random_matrix(rng, 16, 3);
  const std::vector<double> w{0.2, 0.5, 0.3};
  const auto r = mixed_reward(m, w);
  for (std::size_t i = 0; i < 16; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < 3; ++j) acc += w[j] * m.values[i * 3 + j];
    EXPECT_NEAR(r[i], acc, 1e-15);
  }
}

TEST(MixedReward, SimplexViolationThrows) {
  const auto m = RewardMatrix::from_rows({{0.2, 0.8}, {0.4, 0.4}});
  EXPECT_THROW(mixed_reward(m, std::vector<double>{0.6, 0.6}), DomainError);
  EXPECT_THROW(mixed_reward(m, std::vector<double>{1.5, -0.5}), DomainError);
}

TEST(Advantages, ConstantGroupIsZero) {
  for (double a : normalize_advantages(std::vector<double>(8, 0.6))) EXPECT_NEAR(a, 0.0, 1e-12);
}

TEST(Advantages, HandExample) {
  const auto a = normalize_advantages(std::vector<double>{1, 2, 3});
  EXPECT_NEAR(a[0], -1.2247, 1e-4);
  EXPECT_NEAR(a[1], 0.0, 1e-12);
  EXPECT_NEAR(a[2], 1.2247, 1e-4);
}

// Property: zero mean, unit population std, invariant to positive affine maps.
TEST(Advantages, ContractAndAffineInvariance) {
  RandomSource rng(6);
  for (int n = 0; n < 200; ++n) {
    std::vector<double> r(2 + rng.uniform_index(20));
    for (double& v : r) v = rng.uniform();
    const auto a = normalize_advantages(r);
    const double mean = sum(a) / a.size();
    double var = 0.0;
    for (double x : a) var += (x - mean) * (x - mean);
    var /= a.size();
    double rmean = sum(r) / r.size(), rvar = 0.0;
    for (double x : r) rvar += (x - rmean) * (x - rmean);
    const double rstd = std::sqrt(rvar / r.size());
    EXPECT_NEAR(mean, 0.0, 1e-9);
    if (rstd > 1e-2) {
      EXPECT_NEAR(std::sqrt(var), 1.0, 1e-6);
    }
    const double scale = 0.01 + 10.0 * rng.uniform(), shift = rng.normal();
    auto t = r;
    for (double& v : t) v = scale * v + shift;
    const auto at = normalize_advantages(t);
    if (rstd > 1e-2) {
      for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(at[i], a[i], 1e-6);
    }
  }
}

TEST(CermStep, SingleTerm) {
  RandomSource rng(7);
  const auto m = random_matrix(rng, 8, 1);
  CermConfig cfg;
  cfg.thresholds = {0.75};
  const auto s = cerm_step(m, cfg);
  EXPECT_EQ(s.weights, (std::vector<double>{1.0}));
  const auto expected = normalize_advantages(m.column(0));
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(s.advantages[i], expected[i], 1e-15);
}

TEST(CermStep, IdenticalColumns) {
  RandomSource rng(8);
  std::vector<std::vector<double>> rows(10);
  for (auto& row : rows) row.assign(3, rng.uniform());
  const auto m = RewardMatrix::from_rows(rows);
  CermConfig cfg;
  cfg.alpha = 0.0;
  for (double w : cerm_step(m, cfg).weights) EXPECT_NEAR(w, 1.0 / 3.0, 1e-15);
  const auto col = normalize_advantages(m.column(0));
  for (double alpha : {0.0, 1.0, 8.0, 50.0}) {
    cfg.alpha = alpha;
    const auto s = cerm_step(m, cfg);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(s.advantages[i], col[i], 1e-9);
  }
}

TEST(CermStep, MatchesHandChain) {
  RandomSource rng(9);
  const auto m = random_matrix(rng, 16, 3);
  CermConfig cfg;
  const auto s = cerm_step(m, cfg);
  std::vector<double> means(3, 0.0), S(4, 0.0), g(3), w(3);
  for (std::size_t j = 0; j < 3; ++j) {
    double l1 = 0.0, l2 = 0.0;
    for (std::size_t i = 0; i < 16; ++i) {
      const double v = m.values[i * 3 + j];
      means[j] += v / 16;
      l1 += v;
      l2 += v * v;
    }
    S[j + 1] = (4.0 - l1 / std::sqrt(l2)) / 3.0;
  }
  for (std::size_t j = 0; j < 3; ++j) g[j] = sigmoid(means[j] - 0.75) + (S[j] - S[j + 1]);
  double z = 0.0;
  for (std::size_t j = 0; j < 3; ++j) z += std::exp(8 * g[j]);
  for (std::size_t j = 0; j < 3; ++j) w[j] = std::exp(8 * g[j]) / z;
  std::vector<double> mixed(16, 0.0);
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 3; ++j) mixed[i] += w[j] * m.values[i * 3 + j];
  const double mu = sum(mixed) / 16;
  double var = 0.0;
  for (double x : mixed) var += (x - mu) * (x - mu) / 16;
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_NEAR(s.group_means[j], means[j], 1e-14);
    EXPECT_NEAR(s.sparsities[j], S[j + 1], 1e-12);
    EXPECT_NEAR(s.transitions[j], g[j], 1e-12);
    EXPECT_NEAR(s.weights[j], w[j], 1e-12);
  }
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_NEAR(s.mixed[i], mixed[i], 1e-12);
    EXPECT_NEAR(s.advantages[i], (mixed[i] - mu) / (std::sqrt(var) + 1e-8), 1e-9);
  }
}

TEST(CermStep, EmaBlendsPriorWeights) {
  RandomSource rng(10);
  const auto m = random_matrix(rng, 8, 3);
  CermConfig cfg;
  const auto fresh = cerm_step(m, cfg);
  cfg.weight_mode = WeightMode::kEma;
  CermState prior;
  prior.weights = {1.0, 0.0, 0.0};
  const auto s = cerm_step(m, cfg, &prior);
  for (std::size_t j = 0; j < 3; ++j)
    EXPECT_NEAR(s.weights[j], 0.9 * prior.weights[j] + 0.1 * fresh.weights[j], 1e-12);
  EXPECT_NEAR(sum(s.weights), 1.0, 1e-12);
  EXPECT_EQ(cerm_step(m, cfg).weights, fresh.weights);
}

// Property: with beta = 0, raising a stage's mean never lowers its weight;
// with means fixed, w_j rises with S_{j-1} and falls with S_j.
TEST(CurriculumMonotonicity, MeanGrid) {
  CermConfig cfg;
  cfg.beta = 0.0;
  const std::vector<double> sparsities{0.2, 0.4, 0.1};
  for (std::size_t j = 0; j < 3; ++j) {
    double prev = -1.0;
    for (int step = 0; step <= 50; ++step) {
      std::vector<double> means{0.5, 0.6, 0.4};
      means[j] = step / 50.0;
      std::vector<double> g(3);
      for (std::size_t k = 0; k < 3; ++k) g[k] = transition(k + 1, means, sparsities, cfg);
      const double w = stage_weights(g, cfg.alpha)[j];
      EXPECT_GE(w, prev);
      prev = w;
    }
  }
}

TEST(CurriculumMonotonicity, SparsityGrid) {
  CermConfig cfg;
  const std::vector<double> means{0.5, 0.6, 0.4};
  for (std::size_t j = 1; j < 3; ++j) {
    double prev_up = -1.0, prev_down = 2.0;
    for (int step = 0; step <= 50; ++step) {
      std::vector<double> s_prev{0.3, 0.3, 0.3}, s_self{0.3, 0.3, 0.3};
      s_prev[j - 1] = step / 50.0;
      s_self[j] = step / 50.0;
      std::vector<double> g1(3), g2(3);
      for (std::size_t k = 0; k < 3; ++k) {
        g1[k] = transition(k + 1, means, s_prev, cfg);
        g2[k] = transition(k + 1, means, s_self, cfg);
      }
      const double up = stage_weights(g1, cfg.alpha)[j];
      const double down = stage_weights(g2, cfg.alpha)[j];
      EXPECT_GE(up, prev_up);
      EXPECT_LE(down, prev_down);
      prev_up = up;
      prev_down = down;
    }
  }
}

TEST(Calibrate, HandExample) {
  const auto c = calibrate_thresholds({{0.4, 0.5, 0.6, 0.8}});
  EXPECT_NEAR(c.thresholds[0], 0.68, 1e-15);
  EXPECT_TRUE(c.warnings.empty());
}

TEST(Calibrate, FlatCurveWarns) {
  const auto c = calibrate_thresholds({std::vector<double>(10, 0.5), {0.2, 0.4}});
  EXPECT_EQ(c.thresholds[0], 0.5);
  ASSERT_EQ(c.warnings.size(), 1u);
  EXPECT_NEAR(c.thresholds[1], 0.34, 1e-15);
}

TEST(Calibrate, UsesSmoothedEnds) {
  const std::vector<double> curve{0.0, 1.0, 2.0, 3.0};
  const auto c = calibrate_thresholds({curve}, 3);
  EXPECT_NEAR(c.thresholds[0], 0.5 + 0.7 * 2.0, 1e-15);
}

TEST(CermConfig, Validation) {
  CermConfig cfg;
  EXPECT_NO_THROW(cfg.validate(3));
  EXPECT_THROW(cfg.validate(2), ConfigError);
  cfg.alpha = -1.0;
  EXPECT_THROW(cfg.validate(3), ConfigError);
  cfg = CermConfig{};
  cfg.weight_mode = WeightMode::kEma;
  cfg.ema_decay = 1.0;
  EXPECT_THROW(cfg.validate(3), ConfigError);
  EXPECT_EQ(weight_mode_from_string(to_string(WeightMode::kEma)), WeightMode::kEma);
  EXPECT_THROW(weight_mode_from_string("sticky"), ConfigError);
}

TEST(StateRecord, SingleLineJson) {
  RandomSource rng(11);
  const auto s = cerm_step(random_matrix(rng, 4, 3), CermConfig{});
  const auto line = state_record(s);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  EXPECT_NE(line.find("\"weights\""), std::string::npos);
}
