#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <span>
#include <vector>

#include "rvhate/clustering.hpp"
#include "rvhate/head.hpp"
#include "rvhate/ingestion.hpp"

namespace rvhate {

struct QueueEntry {
  Vec vector;                   // projected (unit) vector, a constant
  int label = 0;
  double hate_confidence = 0.0; // model's hate probability at insertion
};

/// Bounded FIFO of projected vectors from past batches.
class HardNegativeQueue {
 public:
  explicit HardNegativeQueue(std::size_t capacity = 2048);

  /// Appends, evicting the oldest entries beyond capacity.
  void push(QueueEntry entry);

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  bool empty() const noexcept { return entries_.empty(); }
  /// 0 is the oldest surviving entry.
  const QueueEntry& operator[](std::size_t i) const { return entries_[i]; }
  std::uint64_t total_pushed() const noexcept { return pushed_; }

 private:
  std::size_t capacity_;
  std::deque<QueueEntry> entries_;
  std::uint64_t pushed_ = 0;
};

/// Queue positions of up to hard_k entries ranked by cosine similarity to z
/// (descending, ties to the older entry). Eligible entries carry a label
/// different from `label`, or are non-hate entries the model scored as hate
/// with confidence >= rho.
std::vector<std::size_t> select_hard_negatives(const HardNegativeQueue& queue, std::span<const double> z,
                                               int label, std::size_t hard_k, double rho);

struct ContrastiveResult {
  double loss = 0.0;
  std::vector<Vec> grad_batch;    // dL/d(batch vector)
  std::vector<Vec> grad_anchors;  // dL/d(anchor vector)
};

/// Anchor-based supervised contrastive loss, averaged over the batch. For a
/// sample with label y the positives are the anchors labeled y and the
/// candidates are all anchors plus the sample's extra negatives:
///   l_i = -(1/|P|) sum_{a in P} log softmax_{c in C}(cos(z_i, z_c) / tau)[a]
/// Inputs need not be normalized; gradients are with respect to the raw
/// vectors. Negatives are treated as constants.
ContrastiveResult contrastive_loss_with_grad(std::span<const Vec> batch, std::span<const int> labels,
                                             std::span<const Vec> anchors, std::span<const int> anchor_labels,
                                             std::span<const std::vector<Vec>> negatives, double tau);

double contrastive_loss(std::span<const Vec> batch, std::span<const int> labels, std::span<const Vec> anchors,
                        std::span<const int> anchor_labels, std::span<const std::vector<Vec>> negatives,
                        double tau);

struct TrainConfig {
  std::size_t epochs = 6;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double temperature = 0.3;
  double lambda = 0.5;
  std::size_t k_per_class = 20;
  Metric metric = Metric::Cosine;
  std::uint64_t seed = 13;
  std::size_t hidden = 128;
  std::size_t hard_k = 8;
  double confidence_threshold = 0.9;
  std::size_t queue_capacity = 2048;

  void validate() const;
};

/// Which training mechanisms are switched on; the data augmentation of M1
/// happens before training and is not represented here.
struct Mechanisms {
  bool outlier_removal = false;  // IQR filter before anchor selection
  bool hard_negatives = false;   // cross-batch queue of negatives

  friend bool operator==(const Mechanisms&, const Mechanisms&) = default;
};

Mechanisms mechanisms_for(ModuleId id) noexcept;

struct BatchInputs {
  std::span<const std::size_t> rows;          // embedding rows of the batch
  std::span<const int> labels;
  std::span<const std::size_t> anchor_rows;   // may be empty when lambda == 0
  std::span<const int> anchor_labels;
  std::span<const std::vector<Vec>> negatives;  // per batch row; may be empty
};

struct BatchLoss {
  double total = 0.0;
  double cross_entropy = 0.0;
  double contrastive = 0.0;
};

/// (1 - lambda) * mean cross-entropy + lambda * contrastive loss for one
/// batch. When grad is nonempty the gradient w.r.t. head.params is
/// accumulated into it.
BatchLoss batch_objective(const ModuleHead& head, const EmbeddingMatrix& embeddings, const BatchInputs& in,
                          double lambda, double tau, std::span<double> grad);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid_macro_f1 = 0.0;
  std::size_t outliers_removed = 0;
};

struct TrainResult {
  ModuleHead head;  // validation-best epoch, rounded to checkpoint precision
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_valid_macro_f1 = 0.0;
  ClusterModel last_clusters;
};

/// Trains one head. The dataset and embeddings must be row-aligned; for M1
/// pass the augmented training set.
TrainResult train_module(ModuleId id, const Dataset& dataset, const EmbeddingMatrix& embeddings,
                         const TrainConfig& cfg);
TrainResult train_head(ModuleId id, Mechanisms mech, const Dataset& dataset, const EmbeddingMatrix& embeddings,
                       const TrainConfig& cfg);

std::vector<Logits> compute_logits(const ModuleHead& head, const EmbeddingMatrix& embeddings,
                                   std::span<const std::size_t> rows);
std::vector<int> predict(const ModuleHead& head, const EmbeddingMatrix& embeddings,
                         std::span<const std::size_t> rows);

/// CSV: epoch,train_loss,valid_macro_f1
void write_training_report(const TrainResult& result, std::ostream& out);

}  // namespace rvhate
