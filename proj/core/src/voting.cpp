#include "rvhate/voting.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <ostream>

#include "rvhate/error.hpp"
#include "rvhate/metrics.hpp"
#include "rvhate/trainer.hpp"

namespace rvhate {

WeightVector::WeightVector(std::vector<double> w) : w_(std::move(w)) {
  if (w_.empty()) throw Error(ErrorCode::InvalidArgument, "weight vector is empty");
  double sum = 0.0;
  for (double x : w_) {
    if (!(x > 0.0) || !std::isfinite(x)) throw Error(ErrorCode::InvalidArgument, "weights must be positive");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorCode::InvalidArgument, "weights must sum to 1");
}

WeightVector WeightVector::uniform(std::size_t k) {
  return WeightVector(std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

LogitPanel::LogitPanel(std::size_t modules, std::size_t examples)
    : modules_(modules), examples_(examples), data_(modules * examples * 2, 0.0) {}

LogitPanel LogitPanel::from_modules(std::span<const std::vector<Logits>> per_module) {
  if (per_module.empty()) throw Error(ErrorCode::EmptyInput, "panel needs at least one module");
  LogitPanel p(per_module.size(), per_module.front().size());
  for (std::size_t k = 0; k < per_module.size(); ++k) {
    if (per_module[k].size() != p.examples_) throw Error(ErrorCode::ShapeMismatch, "modules differ in example count");
    for (std::size_t i = 0; i < p.examples_; ++i) p.set(k, i, per_module[k][i]);
  }
  return p;
}

void LogitPanel::set(std::size_t k, std::size_t i, const Logits& z) {
  if (k >= modules_ || i >= examples_) throw Error(ErrorCode::ShapeMismatch, "panel index out of range");
  data_[(k * examples_ + i) * 2] = z[0];
  data_[(k * examples_ + i) * 2 + 1] = z[1];
}

LogitPanel LogitPanel::select_modules(std::span<const std::size_t> modules) const {
  LogitPanel p(modules.size(), examples_);
  for (std::size_t m = 0; m < modules.size(); ++m) {
    if (modules[m] >= modules_) throw Error(ErrorCode::ShapeMismatch, "module index out of range");
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(modules[m] * examples_ * 2), examples_ * 2,
                p.data_.begin() + static_cast<std::ptrdiff_t>(m * examples_ * 2));
  }
  return p;
}

void LogitPanel::validate() const {
  if (modules_ == 0) throw Error(ErrorCode::ShapeMismatch, "panel has no modules");
  for (double x : data_) {
    if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteValue, "panel logit is not finite");
  }
}

LogitPanel build_panel(std::span<const ModuleHead> heads, const EmbeddingMatrix& embeddings,
                       std::span<const std::size_t> rows) {
  std::vector<std::vector<Logits>> per;
  per.reserve(heads.size());
  for (const auto& h : heads) per.push_back(compute_logits(h, embeddings, rows));
  auto panel = LogitPanel::from_modules(per);
  panel.validate();
  return panel;
}

namespace {

void check_weights(const LogitPanel& panel, std::span<const double> weights) {
  if (weights.size() != panel.modules()) {
    throw Error(ErrorCode::ShapeMismatch, std::to_string(weights.size()) + " weights for " +
                                              std::to_string(panel.modules()) + " modules");
  }
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorCode::InvalidArgument, "weights must be nonnegative");
    sum += w;
  }
  if (!(sum > 0.0)) throw Error(ErrorCode::InvalidArgument, "weights must not all be zero");
}

}  // namespace

void soft_vote_predictions(const LogitPanel& panel, std::span<const double> weights, std::vector<int>& out) {
  check_weights(panel, weights);
  const std::size_t n = panel.examples();
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double z0 = 0.0, z1 = 0.0;
    for (std::size_t k = 0; k < panel.modules(); ++k) {
      z0 += weights[k] * panel.at(k, i, 0);
      z1 += weights[k] * panel.at(k, i, 1);
    }
    out[i] = z1 > z0 ? 1 : 0;
  }
}

VoteResult soft_vote(const LogitPanel& panel, std::span<const double> weights) {
  check_weights(panel, weights);
  VoteResult r;
  r.predictions.resize(panel.examples());
  r.ensemble.resize(panel.examples());
  for (std::size_t i = 0; i < panel.examples(); ++i) {
    Logits z{0.0, 0.0};
    for (std::size_t k = 0; k < panel.modules(); ++k) {
      z[0] += weights[k] * panel.at(k, i, 0);
      z[1] += weights[k] * panel.at(k, i, 1);
    }
    r.ensemble[i] = z;
    r.predictions[i] = predict_label(z);
  }
  return r;
}

// ---------------------------------------------------------------------------

WeightPolicy WeightPolicy::initial(std::size_t k) {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "policy needs at least one module");
  WeightPolicy p;
  p.mu.assign(k, 0.0);
  p.log_std.assign(k, std::log(0.5));
  return p;
}

WeightVector WeightPolicy::mean_weights() const { return WeightVector(softmax(mu)); }

double WeightPolicy::log_prob(std::span<const double> u) const {
  if (u.size() != mu.size()) throw Error(ErrorCode::DimensionMismatch, "action size does not match policy");
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double lp = 0.0;
  for (std::size_t k = 0; k < mu.size(); ++k) {
    const double z = (u[k] - mu[k]) / std::exp(log_std[k]);
    lp += -0.5 * z * z - log_std[k] - half_log_2pi;
  }
  return lp;
}

namespace {

// softmax that never returns an exact zero, so sampled weights stay on the
// open simplex even for extreme actions
WeightVector positive_softmax(std::span<const double> u) {
  auto w = softmax(u);
  bool fix = false;
  for (double& x : w) {
    if (x < 1e-300) {
      x = 1e-300;
      fix = true;
    }
  }
  if (fix) {
    const double s = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& x : w) x /= s;
  }
  return WeightVector(std::move(w));
}

}  // namespace

WeightSample sample_weights(const WeightPolicy& policy, std::mt19937_64& rng) {
  std::vector<double> u(policy.size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    std::normal_distribution<double> n(policy.mu[k], std::exp(policy.log_std[k]));
    u[k] = n(rng);
  }
  const double lp = policy.log_prob(u);
  return WeightSample{positive_softmax(u), std::move(u), lp};
}

double clipped_objective(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

double clipped_surrogate(const WeightPolicy& policy, std::span<const Episode> episodes,
                         std::span<const double> advantages, std::vector<double>* grad) {
  if (episodes.empty()) throw Error(ErrorCode::EmptyBatch, "surrogate over zero episodes");
  if (advantages.size() != episodes.size()) throw Error(ErrorCode::LengthMismatch, "one advantage per episode");
  const std::size_t k = policy.size();
  const double inv_n = 1.0 / static_cast<double>(episodes.size());
  if (grad) grad->assign(2 * k, 0.0);
  double total = 0.0;
  for (std::size_t t = 0; t < episodes.size(); ++t) {
    const auto& ep = episodes[t];
    const double ratio = std::exp(policy.log_prob(ep.u) - ep.old_log_prob);
    const double a = advantages[t];
    const double unclipped = ratio * a;
    const double obj = clipped_objective(ratio, a, policy.clip_epsilon);
    total += obj * inv_n;
    // The clipped branch is constant in theta; only the unclipped branch
    // carries gradient, and only when it is the active minimum.
    if (grad && unclipped <= obj) {
      const double scale = inv_n * a * ratio;
      for (std::size_t j = 0; j < k; ++j) {
        const double var = std::exp(2.0 * policy.log_std[j]);
        const double d = ep.u[j] - policy.mu[j];
        (*grad)[j] += scale * d / var;
        (*grad)[k + j] += scale * (d * d / var - 1.0);
      }
    }
  }
  return total;
}

PpoDiagnostics ppo_update(WeightPolicy& policy, std::span<const Episode> episodes) {
  if (episodes.empty()) throw Error(ErrorCode::EmptyBatch, "ppo_update with no episodes");
  PpoDiagnostics diag;
  for (const auto& ep : episodes) diag.mean_reward += ep.reward;
  diag.mean_reward /= static_cast<double>(episodes.size());
  if (!policy.baseline_initialized) {
    policy.baseline = diag.mean_reward;
    policy.baseline_initialized = true;
  }

  std::vector<double> adv;
  adv.reserve(episodes.size());
  for (const auto& ep : episodes) adv.push_back(ep.reward - policy.baseline);
  diag.mean_advantage = std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(adv.size());

  for (const auto& ep : episodes) diag.initial_ratios.push_back(std::exp(policy.log_prob(ep.u) - ep.old_log_prob));

  const std::size_t k = policy.size();
  policy.optimizer.learning_rate = policy.learning_rate;
  std::vector<double> theta(2 * k);
  std::vector<double> grad;
  for (std::size_t pass = 0; pass < policy.passes; ++pass) {
    const double s = clipped_surrogate(policy, episodes, adv, &grad);
    if (pass == 0) diag.surrogate_before = s;
    std::copy(policy.mu.begin(), policy.mu.end(), theta.begin());
    std::copy(policy.log_std.begin(), policy.log_std.end(), theta.begin() + static_cast<std::ptrdiff_t>(k));
    for (double& g : grad) g = -g;  // ascend
    policy.optimizer.step(theta, grad);
    std::copy(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(k), policy.mu.begin());
    std::copy(theta.begin() + static_cast<std::ptrdiff_t>(k), theta.end(), policy.log_std.begin());
  }
  diag.surrogate_after = clipped_surrogate(policy, episodes, adv, nullptr);
  std::size_t clipped = 0;
  for (const auto& ep : episodes) {
    const double r = std::exp(policy.log_prob(ep.u) - ep.old_log_prob);
    clipped += (r < 1.0 - policy.clip_epsilon || r > 1.0 + policy.clip_epsilon);
  }
  diag.clip_fraction = static_cast<double>(clipped) / static_cast<double>(episodes.size());

  policy.baseline = policy.baseline_decay * policy.baseline + (1.0 - policy.baseline_decay) * diag.mean_reward;
  ++policy.steps;
  return diag;
}

// ---------------------------------------------------------------------------

double vote_reward(const LogitPanel& panel, std::span<const int> labels, std::span<const double> weights) {
  std::vector<int> preds;
  soft_vote_predictions(panel, weights, preds);
  return macro_f1(preds, labels);
}

OptimizeResult optimize_weights(const LogitPanel& panel, std::span<const int> labels, const OptimizeConfig& cfg) {
  panel.validate();
  if (labels.size() != panel.examples()) throw Error(ErrorCode::LengthMismatch, "labels do not match panel");
  if (cfg.episodes_per_update == 0) throw Error(ErrorCode::InvalidArgument, "episodes_per_update must be positive");
  OptimizeResult res;
  res.policy = WeightPolicy::initial(panel.modules());
  res.policy.clip_epsilon = cfg.clip_epsilon;
  res.policy.learning_rate = cfg.learning_rate;
  res.policy.passes = cfg.passes;
  if (panel.modules() == 1) {
    res.weights = WeightVector({1.0});
    res.valid_macro_f1 = vote_reward(panel, labels, res.weights.values());
    return res;
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<int> preds;
  std::vector<Episode> batch;
  std::size_t sampled = 0;
  while (sampled < cfg.steps) {
    const std::size_t n = std::min(cfg.episodes_per_update, cfg.steps - sampled);
    batch.clear();
    for (std::size_t e = 0; e < n; ++e) {
      auto s = sample_weights(res.policy, rng);
      soft_vote_predictions(panel, s.w.values(), preds);
      const double reward = macro_f1(preds, labels);
      res.trace.push_back({sampled + e + 1, reward, res.policy.baseline});
      batch.push_back({std::move(s.u), s.log_prob, reward});
    }
    ppo_update(res.policy, batch);
    sampled += n;
  }
  res.weights = res.policy.mean_weights();
  res.valid_macro_f1 = vote_reward(panel, labels, res.weights.values());
  return res;
}

void write_reward_trace(std::span<const RewardPoint> trace, std::ostream& out) {
  out << "step,reward,baseline\n";
  char buf[96];
  for (const auto& p : trace) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", p.step, p.reward, p.baseline);
    out << buf;
  }
}

}  // namespace rvhate
