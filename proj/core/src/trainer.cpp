#include "rvhate/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "rvhate/adam.hpp"
#include "rvhate/error.hpp"
#include "rvhate/metrics.hpp"

namespace rvhate {

HardNegativeQueue::HardNegativeQueue(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw Error(ErrorCode::InvalidArgument, "queue capacity must be positive");
}

void HardNegativeQueue::push(QueueEntry entry) {
  entries_.push_back(std::move(entry));
  ++pushed_;
  while (entries_.size() > capacity_) entries_.pop_front();
}

std::vector<std::size_t> select_hard_negatives(const HardNegativeQueue& queue, std::span<const double> z,
                                               int label, std::size_t hard_k, double rho) {
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t i = 0; i < queue.size(); ++i) {
    const auto& e = queue[i];
    const bool other_class = e.label != label;
    const bool confident_false_positive = e.label == 0 && e.hate_confidence >= rho;
    if (!other_class && !confident_false_positive) continue;
    scored.emplace_back(cosine_similarity(z, e.vector), i);
  }
  const std::size_t k = std::min(hard_k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(),
                    [](const auto& a, const auto& b) {
                      return a.first != b.first ? a.first > b.first : a.second < b.second;
                    });
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(scored[i].second);
  return out;
}

// ---------------------------------------------------------------------------

ContrastiveResult contrastive_loss_with_grad(std::span<const Vec> batch, std::span<const int> labels,
                                             std::span<const Vec> anchors, std::span<const int> anchor_labels,
                                             std::span<const std::vector<Vec>> negatives, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorCode::NonPositiveTemperature, "temperature must be positive");
  if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "contrastive loss of an empty batch");
  if (labels.size() != batch.size() || anchor_labels.size() != anchors.size()) {
    throw Error(ErrorCode::LengthMismatch, "labels do not match vectors");
  }
  if (!negatives.empty() && negatives.size() != batch.size()) {
    throw Error(ErrorCode::LengthMismatch, "negatives must be given per batch sample");
  }

  struct Unit {
    Vec dir;
    double norm;
  };
  auto unit = [](const Vec& v) {
    Unit u{v, l2_norm(v)};
    if (u.norm == 0.0) throw Error(ErrorCode::ZeroNormVector, "contrastive loss on a zero vector");
    for (double& x : u.dir) x /= u.norm;
    return u;
  };
  std::vector<Unit> ua;
  ua.reserve(anchors.size());
  for (const auto& a : anchors) ua.push_back(unit(a));

  const std::size_t b = batch.size();
  const double inv_b = 1.0 / static_cast<double>(b);
  ContrastiveResult res;
  res.grad_batch.assign(b, Vec{});
  res.grad_anchors.assign(anchors.size(), Vec(anchors.empty() ? 0 : anchors.front().size(), 0.0));

  std::vector<double> logits;
  std::vector<double> cosines;
  for (std::size_t i = 0; i < b; ++i) {
    const Unit zi = unit(batch[i]);
    const std::size_t npos = static_cast<std::size_t>(
        std::count(anchor_labels.begin(), anchor_labels.end(), labels[i]));
    if (npos == 0) {
      throw Error(ErrorCode::MissingAnchorClass, "no anchor carries label " + std::to_string(labels[i]));
    }
    std::vector<Unit> un;
    if (!negatives.empty()) {
      for (const auto& n : negatives[i]) un.push_back(unit(n));
    }
    const std::size_t nc = ua.size() + un.size();
    logits.resize(nc);
    cosines.resize(nc);
    for (std::size_t c = 0; c < nc; ++c) {
      const Vec& dir = c < ua.size() ? ua[c].dir : un[c - ua.size()].dir;
      cosines[c] = std::clamp(dot(zi.dir, dir), -1.0, 1.0);
      logits[c] = cosines[c] / tau;
    }
    const double lse = log_sum_exp(logits);
    double li = lse;
    for (std::size_t a = 0; a < ua.size(); ++a) {
      if (anchor_labels[a] == labels[i]) li -= logits[a] / static_cast<double>(npos);
    }
    res.loss += inv_b * li;

    // dl_i/ds_c = softmax_c - [c in P]/|P|, s_c = cos_c / tau
    Vec gz(zi.dir.size(), 0.0);
    for (std::size_t c = 0; c < nc; ++c) {
      double g = std::exp(logits[c] - lse);
      if (c < ua.size() && anchor_labels[c] == labels[i]) g -= 1.0 / static_cast<double>(npos);
      g *= inv_b / tau;
      if (g == 0.0) continue;
      const Unit& other = c < ua.size() ? ua[c] : un[c - ua.size()];
      // d cos(u,v)/du = (v_hat - cos * u_hat) / |u|
      for (std::size_t j = 0; j < gz.size(); ++j) gz[j] += g * (other.dir[j] - cosines[c] * zi.dir[j]) / zi.norm;
      if (c < ua.size()) {
        auto& ga = res.grad_anchors[c];
        for (std::size_t j = 0; j < ga.size(); ++j) {
          ga[j] += g * (zi.dir[j] - cosines[c] * other.dir[j]) / other.norm;
        }
      }
    }
    res.grad_batch[i] = std::move(gz);
  }
  // Positives are a subset of the candidates, so each term is >= 0 up to rounding.
  res.loss = std::max(res.loss, 0.0);
  return res;
}

double contrastive_loss(std::span<const Vec> batch, std::span<const int> labels, std::span<const Vec> anchors,
                        std::span<const int> anchor_labels, std::span<const std::vector<Vec>> negatives,
                        double tau) {
  return contrastive_loss_with_grad(batch, labels, anchors, anchor_labels, negatives, tau).loss;
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  auto bad = [](const char* what) { throw Error(ErrorCode::InvalidArgument, what); };
  if (epochs == 0) bad("epochs must be positive");
  if (batch_size == 0) bad("batch_size must be positive");
  if (!(learning_rate > 0.0)) bad("learning_rate must be positive");
  if (!(temperature > 0.0)) throw Error(ErrorCode::NonPositiveTemperature, "temperature must be positive");
  if (!(lambda >= 0.0 && lambda <= 1.0)) bad("lambda must lie in [0,1]");
  if (k_per_class == 0) bad("k_per_class must be positive");
  if (hidden == 0) bad("hidden must be positive");
  if (queue_capacity == 0) bad("queue_capacity must be positive");
  if (!(confidence_threshold >= 0.0 && confidence_threshold <= 1.0)) bad("confidence threshold must lie in [0,1]");
}

Mechanisms mechanisms_for(ModuleId id) noexcept {
  switch (id) {
    case ModuleId::M2: return {true, false};
    case ModuleId::M3: return {false, true};
    case ModuleId::Combined: return {true, true};
    default: return {};
  }
}

BatchLoss batch_objective(const ModuleHead& head, const EmbeddingMatrix& embeddings, const BatchInputs& in,
                          double lambda, double tau, std::span<double> grad) {
  const std::size_t b = in.rows.size();
  if (b == 0) throw Error(ErrorCode::EmptyBatch, "empty training batch");
  if (in.labels.size() != b) throw Error(ErrorCode::LengthMismatch, "batch labels do not match rows");
  const bool want_grad = !grad.empty();
  if (want_grad && grad.size() != head.params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "gradient buffer does not match parameters");
  }

  std::vector<HeadOutput> outs;
  outs.reserve(b);
  for (std::size_t r : in.rows) outs.push_back(forward(head, embeddings.row(r)));

  BatchLoss loss;
  std::vector<Logits> dlogits(b, Logits{0.0, 0.0});
  const double ce_scale = (1.0 - lambda) / static_cast<double>(b);
  for (std::size_t i = 0; i < b; ++i) {
    const auto& z = outs[i].logits;
    const int y = in.labels[i];
    const double lse = log_sum_exp(z);
    loss.cross_entropy += (lse - z[static_cast<std::size_t>(y)]) / static_cast<double>(b);
    for (std::size_t c = 0; c < 2; ++c) {
      dlogits[i][c] = ce_scale * (std::exp(z[c] - lse) - (static_cast<int>(c) == y ? 1.0 : 0.0));
    }
  }

  ContrastiveResult con;
  std::vector<HeadOutput> anchor_outs;
  if (lambda > 0.0) {
    anchor_outs.reserve(in.anchor_rows.size());
    std::vector<Vec> anchor_act;
    for (std::size_t r : in.anchor_rows) {
      anchor_outs.push_back(forward(head, embeddings.row(r)));
      anchor_act.push_back(anchor_outs.back().activation);
    }
    std::vector<Vec> batch_act;
    batch_act.reserve(b);
    for (const auto& o : outs) batch_act.push_back(o.activation);
    con = contrastive_loss_with_grad(batch_act, in.labels, anchor_act, in.anchor_labels, in.negatives, tau);
    loss.contrastive = con.loss;
  }
  loss.total = (1.0 - lambda) * loss.cross_entropy + lambda * loss.contrastive;

  if (want_grad) {
    Vec dact;
    for (std::size_t i = 0; i < b; ++i) {
      if (lambda > 0.0) {
        dact = con.grad_batch[i];
        for (double& g : dact) g *= lambda;
      } else {
        dact.clear();
      }
      backward(head, embeddings.row(in.rows[i]), outs[i], dlogits[i], dact, grad);
    }
    for (std::size_t a = 0; a < anchor_outs.size(); ++a) {
      dact = con.grad_anchors[a];
      for (double& g : dact) g *= lambda;
      backward(head, embeddings.row(in.anchor_rows[a]), anchor_outs[a], Logits{0.0, 0.0}, dact, grad);
    }
  }
  return loss;
}

// ---------------------------------------------------------------------------

std::vector<Logits> compute_logits(const ModuleHead& head, const EmbeddingMatrix& embeddings,
                                   std::span<const std::size_t> rows) {
  std::vector<Logits> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(head_logits(head, embeddings.row(r)));
  return out;
}

std::vector<int> predict(const ModuleHead& head, const EmbeddingMatrix& embeddings,
                         std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(predict_label(head_logits(head, embeddings.row(r))));
  return out;
}

TrainResult train_module(ModuleId id, const Dataset& dataset, const EmbeddingMatrix& embeddings,
                         const TrainConfig& cfg) {
  return train_head(id, mechanisms_for(id), dataset, embeddings, cfg);
}

TrainResult train_head(ModuleId id, Mechanisms mech, const Dataset& dataset, const EmbeddingMatrix& embeddings,
                       const TrainConfig& cfg) {
  cfg.validate();
  if (embeddings.count() != dataset.size()) {
    throw Error(ErrorCode::ShapeMismatch, std::to_string(embeddings.count()) + " embedding rows for " +
                                              std::to_string(dataset.size()) + " examples");
  }
  const auto train_idx = dataset.indices_of(Split::Train);
  const auto valid_idx = dataset.indices_of(Split::Valid);
  if (train_idx.empty()) throw Error(ErrorCode::EmptyInput, "no training examples");
  if (valid_idx.empty()) throw Error(ErrorCode::EmptyInput, "no validation examples");

  std::vector<int> labels(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) labels[i] = dataset.examples[i].label;
  const auto valid_labels = dataset.labels_of(valid_idx);
  const bool use_contrastive = cfg.lambda > 0.0;
  if (use_contrastive) {
    for (int y : {0, 1}) {
      const bool present = std::any_of(train_idx.begin(), train_idx.end(), [&](std::size_t i) { return labels[i] == y; });
      if (!present) {
        throw Error(ErrorCode::MissingAnchorClass, "training split has no examples of label " + std::to_string(y));
      }
    }
  }

  std::mt19937_64 rng(cfg.seed);
  ModuleHead head = ModuleHead::initialized(id, embeddings.dim(), cfg.hidden, rng);
  head.temperature = cfg.temperature;
  head.lambda = cfg.lambda;
  Adam adam;
  adam.learning_rate = cfg.learning_rate;
  HardNegativeQueue queue(cfg.queue_capacity);

  TrainResult result;
  result.best_valid_macro_f1 = -1.0;
  std::vector<double> grad(head.params.size());
  std::vector<Vec> points(dataset.size());

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    std::vector<std::size_t> anchor_rows;
    std::vector<int> anchor_labels;
    std::vector<std::size_t> active = train_idx;

    if (use_contrastive) {
      for (std::size_t i : train_idx) points[i] = forward(head, embeddings.row(i)).projected;
      ClusterOptions opts;
      opts.k_per_class = cfg.k_per_class;
      opts.metric = cfg.metric;
      opts.seed = cfg.seed + epoch;
      opts.remove_outliers = mech.outlier_removal;
      result.last_clusters = build_cluster_model(points, labels, train_idx, opts);
      anchor_rows = result.last_clusters.anchors();
      anchor_labels = result.last_clusters.anchor_labels();
      if (mech.outlier_removal) {
        std::erase_if(active, [&](std::size_t i) { return result.last_clusters.outlier[i]; });
        rec.outliers_removed = train_idx.size() - active.size();
      }
    }

    std::shuffle(active.begin(), active.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < active.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(active.size(), start + cfg.batch_size);
      const std::span<const std::size_t> rows(active.data() + start, end - start);
      std::vector<int> batch_labels;
      batch_labels.reserve(rows.size());
      for (std::size_t r : rows) batch_labels.push_back(labels[r]);

      std::vector<std::vector<Vec>> negatives;
      if (use_contrastive && mech.hard_negatives && !queue.empty()) {
        negatives.resize(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
          const auto out = forward(head, embeddings.row(rows[i]));
          if (out.degenerate) continue;
          for (std::size_t q : select_hard_negatives(queue, out.projected, batch_labels[i], cfg.hard_k,
                                                     cfg.confidence_threshold)) {
            negatives[i].push_back(queue[q].vector);
          }
        }
      }

      std::fill(grad.begin(), grad.end(), 0.0);
      BatchInputs in{rows, batch_labels, anchor_rows, anchor_labels, negatives};
      const BatchLoss bl = batch_objective(head, embeddings, in, cfg.lambda, cfg.temperature, grad);
      if (!std::isfinite(bl.total)) throw Error(ErrorCode::TrainingFailure, "loss became non-finite");
      adam.step(head.params, grad);
      loss_sum += bl.total;
      ++batches;

      if (use_contrastive && mech.hard_negatives) {
        for (std::size_t i = 0; i < rows.size(); ++i) {
          auto out = forward(head, embeddings.row(rows[i]));
          if (out.degenerate) continue;  // a zero vector has no direction to compare against
          queue.push({std::move(out.projected), batch_labels[i], hate_probability(out.logits)});
        }
      }
    }
    rec.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    rec.valid_macro_f1 = macro_f1(predict(head, embeddings, valid_idx), valid_labels);
    for (double p : head.params) {
      if (!std::isfinite(p)) throw Error(ErrorCode::TrainingFailure, "parameters became non-finite");
    }
    if (rec.valid_macro_f1 > result.best_valid_macro_f1) {
      result.best_valid_macro_f1 = rec.valid_macro_f1;
      result.best_epoch = epoch;
      result.head = head;
    }
    result.epochs.push_back(rec);
  }
  result.head.round_to_float32();
  return result;
}

void write_training_report(const TrainResult& result, std::ostream& out) {
  out << "epoch,train_loss,valid_macro_f1\n";
  char buf[128];
  for (const auto& e : result.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", e.epoch, e.train_loss, e.valid_macro_f1);
    out << buf;
  }
}

}  // namespace rvhate
