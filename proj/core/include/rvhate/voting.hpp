#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rvhate/adam.hpp"
#include "rvhate/head.hpp"
#include "rvhate/ingestion.hpp"

namespace rvhate {

/// Strictly positive weights summing to one (within 1e-9).
class WeightVector {
 public:
  /// Throws InvalidArgument unless every value is > 0 and the sum is 1 ± 1e-9.
  explicit WeightVector(std::vector<double> w);
  static WeightVector uniform(std::size_t k);

  std::size_t size() const noexcept { return w_.size(); }
  double operator[](std::size_t i) const { return w_[i]; }
  std::span<const double> values() const noexcept { return w_; }

 private:
  std::vector<double> w_;
};

/// Cached per-module, per-example 2-class logits for one evaluation split.
class LogitPanel {
 public:
  LogitPanel() = default;
  LogitPanel(std::size_t modules, std::size_t examples);
  /// One logit list per module; all lists must have the same length.
  static LogitPanel from_modules(std::span<const std::vector<Logits>> per_module);

  std::size_t modules() const noexcept { return modules_; }
  std::size_t examples() const noexcept { return examples_; }
  double at(std::size_t k, std::size_t i, std::size_t h) const { return data_[(k * examples_ + i) * 2 + h]; }
  void set(std::size_t k, std::size_t i, const Logits& z);
  Logits logits(std::size_t k, std::size_t i) const { return {at(k, i, 0), at(k, i, 1)}; }

  /// Panel restricted to the given modules, in the given order.
  LogitPanel select_modules(std::span<const std::size_t> modules) const;
  void validate() const;

  friend bool operator==(const LogitPanel&, const LogitPanel&) = default;

 private:
  std::size_t modules_ = 0;
  std::size_t examples_ = 0;
  std::vector<double> data_;
};

LogitPanel build_panel(std::span<const ModuleHead> heads, const EmbeddingMatrix& embeddings,
                       std::span<const std::size_t> rows);

struct VoteResult {
  std::vector<int> predictions;
  std::vector<Logits> ensemble;
};

/// Z_i = sum_k w_k z_{k,i}; prediction is argmax with ties to class 0.
/// Weights must be nonnegative with a positive sum; scale does not matter.
VoteResult soft_vote(const LogitPanel& panel, std::span<const double> weights);
inline VoteResult soft_vote(const LogitPanel& panel, const WeightVector& w) { return soft_vote(panel, w.values()); }

/// Predictions only, written into `out` (resized); the allocation-free path
/// used by the reward oracle.
void soft_vote_predictions(const LogitPanel& panel, std::span<const double> weights, std::vector<int>& out);

/// Gaussian policy over pre-softmax weights for a constant state.
struct WeightPolicy {
  std::vector<double> mu;
  std::vector<double> log_std;
  double baseline = 0.0;
  bool baseline_initialized = false;
  double baseline_decay = 0.99;
  double clip_epsilon = 0.2;
  double learning_rate = 3e-3;
  std::size_t passes = 4;
  std::uint64_t steps = 0;  // number of ppo_update calls

  /// mu = 0 (uniform weights), log_std = log(0.5).
  static WeightPolicy initial(std::size_t k);

  std::size_t size() const noexcept { return mu.size(); }
  /// Deterministic weights softmax(mu).
  WeightVector mean_weights() const;
  double log_prob(std::span<const double> u) const;

  Adam optimizer;  // over (mu, log_std) concatenated
};

struct WeightSample {
  WeightVector w;
  std::vector<double> u;
  double log_prob = 0.0;
};

WeightSample sample_weights(const WeightPolicy& policy, std::mt19937_64& rng);

struct Episode {
  std::vector<double> u;
  double old_log_prob = 0.0;
  double reward = 0.0;
};

/// min(r * A, clip(r, 1 - eps, 1 + eps) * A)
double clipped_objective(double ratio, double advantage, double epsilon);

/// Mean clipped surrogate over episodes for explicit advantages, and its
/// analytic gradient with respect to (mu, log_std) concatenated.
double clipped_surrogate(const WeightPolicy& policy, std::span<const Episode> episodes,
                         std::span<const double> advantages, std::vector<double>* grad);

struct PpoDiagnostics {
  double mean_reward = 0.0;
  double mean_advantage = 0.0;
  double surrogate_before = 0.0;
  double surrogate_after = 0.0;
  std::vector<double> initial_ratios;  // ratios at the first pass
  double clip_fraction = 0.0;          // share of episodes clipped in the last pass
};

/// Advantages = reward - baseline; `passes` Adam ascent steps on the clipped
/// surrogate; then the baseline EMA absorbs the batch mean reward (the first
/// batch initializes it).
PpoDiagnostics ppo_update(WeightPolicy& policy, std::span<const Episode> episodes);

struct OptimizeConfig {
  std::size_t steps = 10000;            // total sampled weight vectors
  std::size_t episodes_per_update = 32;
  std::uint64_t seed = 13;
  double clip_epsilon = 0.2;
  double learning_rate = 3e-3;
  std::size_t passes = 4;
};

struct RewardPoint {
  std::size_t step = 0;
  double reward = 0.0;
  double baseline = 0.0;
};

struct OptimizeResult {
  WeightVector weights = WeightVector::uniform(1);
  double valid_macro_f1 = 0.0;  // reward of the returned weights
  std::vector<RewardPoint> trace;
  WeightPolicy policy;
};

/// Reward = validation macro-F1 of soft_vote on the cached panel.
double vote_reward(const LogitPanel& panel, std::span<const int> labels, std::span<const double> weights);

/// PPO over the weight simplex. A single-module panel returns weight 1.
OptimizeResult optimize_weights(const LogitPanel& panel, std::span<const int> labels, const OptimizeConfig& cfg);

/// CSV: step,reward,baseline
void write_reward_trace(std::span<const RewardPoint> trace, std::ostream& out);

}  // namespace rvhate
