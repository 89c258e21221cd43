#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rvhate/metrics.hpp"
#include "rvhate/trainer.hpp"
#include "rvhate/voting.hpp"

namespace rvhate {

struct EvalRow {
  std::string variant;
  std::vector<double> per_seed_macro_f1;
  double macro_f1_mean = 0.0;
  double macro_f1_std = 0.0;  // sample standard deviation over seeds
  Confusion confusion;        // first seed's test-split counts
};

/// Mean and sample standard deviation are recomputed from the per-seed values.
EvalRow aggregate_row(std::string variant, std::vector<double> per_seed_macro_f1, const Confusion& first_seed);

struct EvalReport {
  std::string dataset;
  std::vector<EvalRow> rows;

  const EvalRow* find(std::string_view variant) const;
};

/// variant,seed_count,macro_f1_mean,macro_f1_std,tn,fp,fn,tp
void write_report_csv(const EvalReport& report, std::ostream& out);
/// Aligned text table with a footer stating the metric conventions.
void write_report_table(const EvalReport& report, std::ostream& out);

/// Per-seed score of one variant.
struct VariantScore {
  std::string variant;
  double macro_f1 = 0.0;
  Confusion confusion;
  std::vector<double> weights;  // empty for single-head variants
};

/// Cached logits of K module heads on the validation and test splits.
struct SeedPanels {
  std::vector<std::string> module_names;
  LogitPanel valid;
  LogitPanel test;
  std::vector<int> valid_labels;
  std::vector<int> test_labels;
};

std::string leave_one_out_name(std::string_view module);

/// Panel-level ablation for one seed: every module solo, the full learned
/// vote ("RV"), each leave-one-out vote with re-optimized weights
/// ("RV - Mk"), and the equal-weights vote. Weights are learned on the
/// validation panel and scored on the test panel.
std::vector<VariantScore> ablate_panels(const SeedPanels& panels, const OptimizeConfig& opt);

/// The training inputs of one dataset: the base split and, for M1 and the
/// combined variant, its augmented counterpart (row-aligned on the base
/// rows, tagged copies appended).
struct ModuleData {
  const Dataset* base = nullptr;
  const EmbeddingMatrix* base_embeddings = nullptr;
  const Dataset* augmented = nullptr;
  const EmbeddingMatrix* augmented_embeddings = nullptr;

  /// Data the given module trains on; throws InvalidArgument if M1 is
  /// requested without augmented data.
  std::pair<const Dataset*, const EmbeddingMatrix*> for_module(ModuleId id) const;
};

/// Trains the given modules for one seed (heads ordered as `modules`).
std::vector<TrainResult> train_modules(const ModuleData& data, std::span<const ModuleId> modules,
                                       const TrainConfig& cfg, std::size_t jobs = 1);

SeedPanels make_seed_panels(const ModuleData& data, std::span<const ModuleHead> heads);

struct AblationOptions {
  TrainConfig train;
  OptimizeConfig optimize;
  std::vector<std::uint64_t> seeds{13, 42, 87};
  std::size_t jobs = 1;
};

/// Full ablation table: solo modules, RV, leave-one-out rows, equal weights,
/// the l2-metric RV, and a single combined-mechanism head. Every row is
/// averaged over seeds and scored on the test split.
EvalReport run_ablation(const ModuleData& data, const AblationOptions& opts);

}  // namespace rvhate
