#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "rvhate/math.hpp"
#include "rvhate/metrics.hpp"
#include "rvhate/voting.hpp"
#include "support/expect_error.hpp"
#include "support/synthetic.hpp"

using namespace rvhate;

TEST(WeightVector, Invariants) {
  EXPECT_NO_THROW(WeightVector({0.25, 0.25, 0.5}));
  EXPECT_RVHATE_ERROR(WeightVector({0.5, 0.6}), InvalidArgument);
  EXPECT_RVHATE_ERROR(WeightVector({1.0, 0.0}), InvalidArgument);
  EXPECT_RVHATE_ERROR(WeightVector({}), InvalidArgument);
  const auto u = WeightVector::uniform(4);
  for (double w : u.values()) EXPECT_DOUBLE_EQ(w, 0.25);
}

TEST(SoftVote, DegenerateWeightCopiesModuleZero) {
  std::mt19937_64 rng(1);
  const auto labels = synth::random_labels(rng, 50);
  const auto p = synth::heterogeneous_panel(rng, labels, {0.8, 0.6, 0.6, 0.6});
  const auto v = soft_vote(p, std::vector<double>{1, 0, 0, 0});
  for (std::size_t i = 0; i < p.examples(); ++i) {
    EXPECT_EQ(v.predictions[i], p.at(0, i, 1) > p.at(0, i, 0) ? 1 : 0);
  }
}

TEST(SoftVote, IdenticalModules) {
  LogitPanel p(4, 1);
  for (std::size_t k = 0; k < 4; ++k) p.set(k, 0, {0.2, 0.8});
  const auto v = soft_vote(p, WeightVector::uniform(4));
  EXPECT_NEAR(v.ensemble[0][0], 0.2, 1e-15);
  EXPECT_NEAR(v.ensemble[0][1], 0.8, 1e-15);
  EXPECT_EQ(v.predictions[0], 1);
}

TEST(SoftVote, LearnedWeightsHandComputed) {
  LogitPanel p(4, 1);
  p.set(0, 0, {1.0, -1.0});
  p.set(1, 0, {0.5, 0.0});
  p.set(2, 0, {-2.0, 2.0});
  p.set(3, 0, {0.0, 0.4});
  const std::vector<double> w{0.191, 0.258, 0.167, 0.357};
  const auto v = soft_vote(p, w);
  // Z0 = 0.191 + 0.129 - 0.334 + 0 = -0.014; Z1 = -0.191 + 0 + 0.334 + 0.1428 = 0.2858
  EXPECT_NEAR(v.ensemble[0][0], -0.014, 1e-12);
  EXPECT_NEAR(v.ensemble[0][1], 0.2858, 1e-12);
  EXPECT_EQ(v.predictions[0], 1);
}

TEST(SoftVote, TiesGoToZero) {
  LogitPanel p(2, 1);
  p.set(0, 0, {1.0, 0.0});
  p.set(1, 0, {0.0, 1.0});
  EXPECT_EQ(soft_vote(p, WeightVector::uniform(2)).predictions[0], 0);
}

TEST(SoftVote, ScaleInvarianceAndOracle) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int t = 0; t < 200; ++t) {
    const auto labels = synth::random_labels(rng, 30);
    const auto p = synth::heterogeneous_panel(rng, labels, {0.7, 0.7, 0.7, 0.7});
    std::vector<double> w(4);
    for (auto& x : w) x = u(rng);
    std::vector<double> scaled = w;
    for (auto& x : scaled) x *= 7.5;
    EXPECT_EQ(soft_vote(p, w).predictions, soft_vote(p, scaled).predictions);
    EXPECT_EQ(soft_vote(p, w).predictions, synth::oracle_vote(p, w));
  }
}

TEST(SoftVote, ShapeErrors) {
  LogitPanel p(2, 3);
  EXPECT_RVHATE_ERROR(soft_vote(p, std::vector<double>{1.0}), ShapeMismatch);
  EXPECT_RVHATE_ERROR(soft_vote(p, std::vector<double>{0.0, 0.0}), InvalidArgument);
  EXPECT_RVHATE_ERROR(soft_vote(p, std::vector<double>{-1.0, 2.0}), InvalidArgument);
  const std::vector<std::vector<Logits>> ragged{{{0, 1}}, {{0, 1}, {1, 0}}};
  EXPECT_RVHATE_ERROR(LogitPanel::from_modules(ragged), ShapeMismatch);
}

TEST(Panel, SelectModules) {
  LogitPanel p(3, 2);
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < 2; ++i) p.set(k, i, {static_cast<double>(k), static_cast<double>(i)});
  const std::vector<std::size_t> pick{2, 0};
  const auto s = p.select_modules(pick);
  EXPECT_EQ(s.modules(), 2u);
  EXPECT_EQ(s.at(0, 1, 0), 2.0);
  EXPECT_EQ(s.at(1, 1, 1), 1.0);
}

TEST(Policy, InitialMeanIsUniform) {
  const auto pol = WeightPolicy::initial(4);
  const auto mean = pol.mean_weights();
  for (double w : mean.values()) EXPECT_DOUBLE_EQ(w, 0.25);
  EXPECT_DOUBLE_EQ(pol.log_std[0], std::log(0.5));
}

TEST(Policy, SmallStdConcentratesOnSoftmaxOfMean) {
  auto pol = WeightPolicy::initial(4);
  pol.mu = {1, 0, 0, 0};
  for (auto& s : pol.log_std) s = std::log(1e-9);
  std::mt19937_64 rng(3);
  const auto s = sample_weights(pol, rng);
  const double e = std::exp(1.0);
  EXPECT_NEAR(s.w[0], e / (e + 3.0), 1e-6);
  EXPECT_NEAR(s.w[1], 1.0 / (e + 3.0), 1e-6);
  pol.mu = {0, 0, 0, 0};
  const auto s0 = sample_weights(pol, rng);
  for (double w : s0.w.values()) EXPECT_NEAR(w, 0.25, 1e-8);
}

TEST(Policy, SamplesStayOnTheSimplex) {
  auto pol = WeightPolicy::initial(4);
  pol.log_std.assign(4, std::log(50.0));
  std::mt19937_64 rng(4);
  for (int t = 0; t < 2000; ++t) {
    const auto s = sample_weights(pol, rng);
    double sum = 0;
    for (double w : s.w.values()) {
      EXPECT_GT(w, 0.0);
      sum += w;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(Policy, LogProbIsGaussian) {
  auto pol = WeightPolicy::initial(2);
  pol.mu = {0.5, -1.0};
  pol.log_std = {std::log(2.0), 0.0};
  const std::vector<double> u{1.5, 0.0};
  const double expect = (-0.5 * 0.25 - std::log(2.0) - 0.5 * std::log(2 * M_PI)) + (-0.5 - 0.5 * std::log(2 * M_PI));
  EXPECT_NEAR(pol.log_prob(u), expect, 1e-12);
}

TEST(Ppo, ClippedObjectiveHandCases) {
  EXPECT_DOUBLE_EQ(clipped_objective(1.5, 1.0, 0.2), 1.2);
  EXPECT_DOUBLE_EQ(clipped_objective(0.5, -1.0, 0.2), -0.8);
  EXPECT_DOUBLE_EQ(clipped_objective(0.5, 1.0, 0.2), 0.5);
  EXPECT_DOUBLE_EQ(clipped_objective(1.5, -1.0, 0.2), -1.5);
  EXPECT_DOUBLE_EQ(clipped_objective(1.0, 0.3, 0.2), 0.3);
}

TEST(Ppo, FreshBatchHasUnitRatios) {
  auto pol = WeightPolicy::initial(4);
  std::mt19937_64 rng(5);
  std::vector<Episode> eps;
  double mean_r = 0;
  for (int i = 0; i < 32; ++i) {
    auto s = sample_weights(pol, rng);
    const double r = s.w[0];
    mean_r += r / 32;
    eps.push_back({s.u, s.log_prob, r});
  }
  std::vector<double> adv;
  for (const auto& e : eps) adv.push_back(e.reward - 0.1);
  const double surr = clipped_surrogate(pol, eps, adv, nullptr);
  EXPECT_NEAR(surr, mean_r - 0.1, 1e-12);
  const auto d = ppo_update(pol, eps);
  for (double r : d.initial_ratios) EXPECT_DOUBLE_EQ(r, 1.0);
  EXPECT_DOUBLE_EQ(pol.baseline, mean_r);  // first batch seeds the baseline
  EXPECT_EQ(pol.steps, 1u);
}

TEST(Ppo, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 20; ++t) {
    auto old = WeightPolicy::initial(4);
    std::vector<Episode> eps;
    std::vector<double> adv;
    for (int i = 0; i < 16; ++i) {
      auto s = sample_weights(old, rng);
      eps.push_back({s.u, s.log_prob, 0.0});
      adv.push_back(synth::gaussian_vec(rng, 1)[0]);
    }
    auto pol = old;
    for (auto& m : pol.mu) m += 0.05 * synth::gaussian_vec(rng, 1)[0];
    for (auto& s : pol.log_std) s += 0.05 * synth::gaussian_vec(rng, 1)[0];
    std::vector<double> grad;
    clipped_surrogate(pol, eps, adv, &grad);
    const double h = 1e-6;
    for (std::size_t j = 0; j < 8; ++j) {
      auto plus = pol, minus = pol;
      (j < 4 ? plus.mu[j] : plus.log_std[j - 4]) += h;
      (j < 4 ? minus.mu[j] : minus.log_std[j - 4]) -= h;
      const double fd = (clipped_surrogate(plus, eps, adv, nullptr) - clipped_surrogate(minus, eps, adv, nullptr)) / (2 * h);
      EXPECT_TRUE(synth::rel_close(grad[j], fd, 1e-4, 1e-8)) << grad[j] << " vs " << fd;
    }
  }
}

TEST(Ppo, BaselineIsEma) {
  auto pol = WeightPolicy::initial(2);
  std::mt19937_64 rng(7);
  auto batch = [&](double r) {
    std::vector<Episode> eps;
    for (int i = 0; i < 4; ++i) {
      auto s = sample_weights(pol, rng);
      eps.push_back({s.u, s.log_prob, r});
    }
    return eps;
  };
  ppo_update(pol, batch(0.5));
  EXPECT_DOUBLE_EQ(pol.baseline, 0.5);
  ppo_update(pol, batch(1.0));
  EXPECT_DOUBLE_EQ(pol.baseline, 0.99 * 0.5 + 0.01 * 1.0);
}

TEST(Optimize, SingleModuleWeightIsOne) {
  std::mt19937_64 rng(8);
  const auto labels = synth::random_labels(rng, 20);
  const auto p = synth::heterogeneous_panel(rng, labels, {0.8});
  const auto r = optimize_weights(p, labels, OptimizeConfig{});
  ASSERT_EQ(r.weights.size(), 1u);
  EXPECT_EQ(r.weights[0], 1.0);
  EXPECT_TRUE(r.trace.empty());
}

TEST(Optimize, FlatRewardStaysNearUniform) {
  std::mt19937_64 rng(9);
  const auto labels = synth::random_labels(rng, 60);
  LogitPanel p(4, labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Logits z = synth::noisy_logits(rng, labels[i], 0.8);
    for (std::size_t k = 0; k < 4; ++k) p.set(k, i, z);
  }
  OptimizeConfig cfg;
  cfg.steps = 10000;
  const auto r = optimize_weights(p, labels, cfg);
  double tv = 0;
  for (double w : r.weights.values()) tv += std::abs(w - 0.25);
  EXPECT_LE(0.5 * tv, 0.1);
}

TEST(Optimize, DeterministicTrace) {
  std::mt19937_64 rng(10);
  const auto labels = synth::random_labels(rng, 40);
  const auto p = synth::heterogeneous_panel(rng, labels, {0.9, 0.6, 0.6, 0.6});
  OptimizeConfig cfg;
  cfg.steps = 640;
  const auto a = optimize_weights(p, labels, cfg);
  const auto b = optimize_weights(p, labels, cfg);
  EXPECT_EQ(a.trace.size(), 640u);
  std::ostringstream sa, sb;
  write_reward_trace(a.trace, sa);
  write_reward_trace(b.trace, sb);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(std::vector<double>(a.weights.values().begin(), a.weights.values().end()),
            std::vector<double>(b.weights.values().begin(), b.weights.values().end()));
}

TEST(Reward, IsMacroF1OfTheVote) {
  std::mt19937_64 rng(11);
  const auto labels = synth::random_labels(rng, 40);
  const auto p = synth::heterogeneous_panel(rng, labels, {0.7, 0.7, 0.7});
  const std::vector<double> w{0.2, 0.5, 0.3};
  EXPECT_DOUBLE_EQ(vote_reward(p, labels, w), synth::oracle_macro_f1(synth::oracle_vote(p, w), labels));
}
