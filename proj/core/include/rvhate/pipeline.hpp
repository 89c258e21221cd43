#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rvhate/error.hpp"
#include "rvhate/evaluation.hpp"
#include "rvhate/ingestion.hpp"
#include "rvhate/tagging.hpp"
#include "rvhate/trainer.hpp"

namespace rvhate {

/// Declarative description of a full run. Field names match the JSON config
/// file and the manifest written next to the outputs.
struct RunConfig {
  std::filesystem::path dataset;
  std::optional<std::filesystem::path> embeddings;            // built-in featurizer when absent
  std::optional<std::filesystem::path> augmented_embeddings;  // required for M1 with external embeddings
  FeaturizerConfig featurizer;
  std::optional<std::filesystem::path> gazetteer;             // default list when absent
  TrainConfig train;
  std::vector<ModuleId> modules{ModuleId::M0, ModuleId::M1, ModuleId::M2, ModuleId::M3};
  std::size_t rl_steps = 10000;
  std::size_t episodes_per_update = 32;
  std::vector<std::uint64_t> seeds{13, 42, 87};
  bool ablate = false;
  std::size_t jobs = 1;
  std::filesystem::path out;  // not part of the manifest

  /// Throws InvalidArgument / IoError.
  void validate() const;

  /// JSON document of every field except `out`.
  std::string to_json() const;
  /// Overlays the fields present in a JSON document onto this config.
  void merge_json(std::string_view json_text);
  static RunConfig from_json_file(const std::filesystem::path& path);
};

/// Gazetteer shipped with the project (source tree or install prefix).
std::filesystem::path default_gazetteer_path();

/// A failure attributed to one pipeline stage.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, ErrorCategory category, const std::string& what)
      : std::runtime_error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)), category_(category) {}

  const std::string& stage() const noexcept { return stage_; }
  ErrorCategory category() const noexcept { return category_; }

 private:
  std::string stage_;
  ErrorCategory category_;
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::vector<ModuleId> modules;
  std::vector<double> weights;  // one per module in `modules`
  double valid_macro_f1 = 0.0;
};

struct PipelineSummary {
  std::vector<SeedOutcome> seeds;
  EvalReport eval;
  std::optional<EvalReport> ablation;
  std::vector<std::filesystem::path> written;  // relative to out
};

/// Runs load -> embed -> tag -> train -> vote -> eval (-> ablate) and writes
/// every artifact under cfg.out. Throws StageError.
PipelineSummary run_pipeline(const RunConfig& cfg, std::ostream& log);

/// dataset,seed,w0,w1,w2,w3,valid_macro_f1 (absent modules get weight 0)
void write_weight_report(const std::string& dataset, std::span<const SeedOutcome> seeds, std::ostream& out);

}  // namespace rvhate
