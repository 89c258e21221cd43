// rvhate command-line tool.
//
//   rvhate featurize --data d.jsonl --out d.rvhe [--dim 512]
//   rvhate tag       --data d.jsonl --out augmented.jsonl [--gazetteer g.tsv]
//   rvhate train     --data d.jsonl --module M2 --out m2.rvhd
//   rvhate vote      --data d.jsonl --heads m0.rvhd m1.rvhd ... --out dir
//   rvhate eval      --data d.jsonl --heads ... [--weights ...] --out dir
//   rvhate pipeline  --data d.jsonl --out dir [--config run.json]
//   rvhate ablate    (pipeline with the ablation table)
//
// Exit codes: 0 ok, 2 input error, 3 training failure, 4 internal error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rvhate/error.hpp"
#include "rvhate/evaluation.hpp"
#include "rvhate/ingestion.hpp"
#include "rvhate/pipeline.hpp"
#include "rvhate/tagging.hpp"
#include "rvhate/trainer.hpp"
#include "rvhate/voting.hpp"

namespace fs = std::filesystem;
using namespace rvhate;

namespace {

constexpr int kExitInput = 2;

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Input: return 2;
    case ErrorCategory::Training: return 3;
    case ErrorCategory::Internal: return 4;
  }
  return 4;
}

std::optional<NgramRange> parse_range(const std::string& s) {
  if (s == "none" || s == "off") return std::nullopt;
  const auto comma = s.find(',');
  try {
    if (comma == std::string::npos) {
      const int n = std::stoi(s);
      return NgramRange{n, n};
    }
    return NgramRange{std::stoi(s.substr(0, comma)), std::stoi(s.substr(comma + 1))};
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, "bad n-gram range '" + s + "' (expected MIN,MAX or none)");
  }
}

// Flags shared by every subcommand that needs embeddings.
struct EmbeddingFlags {
  std::string embeddings;
  std::string augmented_embeddings;
  std::size_t dim = 512;
  std::string word = "1,2";
  std::string chars = "3,5";
  std::uint64_t hash_seed = 0;
  CLI::Option* dim_opt = nullptr;
  CLI::Option* word_opt = nullptr;
  CLI::Option* chars_opt = nullptr;
  CLI::Option* hash_opt = nullptr;
  CLI::Option* emb_opt = nullptr;
  CLI::Option* aug_opt = nullptr;

  void attach(CLI::App* app, bool with_files) {
    if (with_files) {
      emb_opt = app->add_option("--embeddings", embeddings, "RVHE file row-aligned with --data")
                    ->check(CLI::ExistingFile);
      aug_opt = app->add_option("--augmented-embeddings", augmented_embeddings,
                                "RVHE file for the tagged training set (M1 with external embeddings)")
                    ->check(CLI::ExistingFile);
    }
    dim_opt = app->add_option("--dim", dim, "hashed feature dimension");
    word_opt = app->add_option("--word-ngrams", word, "word n-gram range MIN,MAX or none");
    chars_opt = app->add_option("--char-ngrams", chars, "char n-gram range MIN,MAX or none");
    hash_opt = app->add_option("--hash-seed", hash_seed, "feature hash seed");
  }

  void apply(FeaturizerConfig& f) const {
    if (dim_opt->count()) f.dim = dim;
    if (word_opt->count()) f.word_ngrams = parse_range(word);
    if (chars_opt->count()) f.char_ngrams = parse_range(chars);
    if (hash_opt->count()) f.hash_seed = hash_seed;
  }

  FeaturizerConfig config() const {
    FeaturizerConfig f;
    apply(f);
    return f;
  }

  EmbeddingMatrix load(const Dataset& d) const {
    EmbeddingMatrix m = (emb_opt && emb_opt->count()) ? read_embeddings(embeddings) : featurize(d, config());
    if (m.count() != d.size()) {
      throw Error(ErrorCode::ShapeMismatch, "embeddings have " + std::to_string(m.count()) + " rows, dataset has " +
                                                std::to_string(d.size()));
    }
    return m;
  }
};

// Flags mirroring TrainConfig.
struct TrainFlags {
  std::string metric = "cosine";
  std::vector<CLI::Option*> opts;
  CLI::Option* metric_opt = nullptr;
  TrainConfig parsed;

  void attach(CLI::App* app) {
    opts.push_back(app->add_option("--epochs", parsed.epochs, "training epochs"));
    opts.push_back(app->add_option("--batch-size", parsed.batch_size, "examples per batch"));
    opts.push_back(app->add_option("--lr", parsed.learning_rate, "head learning rate"));
    opts.push_back(app->add_option("--temperature", parsed.temperature, "contrastive temperature"));
    opts.push_back(app->add_option("--lambda", parsed.lambda, "contrastive loss weight"));
    opts.push_back(app->add_option("--k", parsed.k_per_class, "clusters per class"));
    opts.push_back(app->add_option("--hidden", parsed.hidden, "projection width"));
    opts.push_back(app->add_option("--hard-k", parsed.hard_k, "hard negatives per sample"));
    opts.push_back(app->add_option("--confidence", parsed.confidence_threshold, "hard-negative confidence"));
    opts.push_back(app->add_option("--queue", parsed.queue_capacity, "negative queue capacity"));
    metric_opt = app->add_option("--metric", metric, "cosine or l2")->check(CLI::IsMember({"cosine", "l2"}));
  }

  // Copies only the flags the user passed.
  void apply(TrainConfig& t) const {
    if (opts[0]->count()) t.epochs = parsed.epochs;
    if (opts[1]->count()) t.batch_size = parsed.batch_size;
    if (opts[2]->count()) t.learning_rate = parsed.learning_rate;
    if (opts[3]->count()) t.temperature = parsed.temperature;
    if (opts[4]->count()) t.lambda = parsed.lambda;
    if (opts[5]->count()) t.k_per_class = parsed.k_per_class;
    if (opts[6]->count()) t.hidden = parsed.hidden;
    if (opts[7]->count()) t.hard_k = parsed.hard_k;
    if (opts[8]->count()) t.confidence_threshold = parsed.confidence_threshold;
    if (opts[9]->count()) t.queue_capacity = parsed.queue_capacity;
    if (metric_opt->count()) t.metric = *parse_metric(metric);
  }
};

ModuleId module_or_throw(const std::string& s) {
  const auto id = parse_module_id(s);
  if (!id) throw Error(ErrorCode::InvalidArgument, "unknown module '" + s + "'");
  return *id;
}

template <typename Writer>
void write_text(const fs::path& p, Writer&& w) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
  w(out);
}

SeedPanels panels_for(const Dataset& d, const EmbeddingMatrix& e, const std::vector<ModuleHead>& heads) {
  ModuleData data;
  data.base = &d;
  data.base_embeddings = &e;
  return make_seed_panels(data, heads);
}

std::vector<ModuleHead> load_heads(const std::vector<std::string>& paths) {
  std::vector<ModuleHead> heads;
  for (const auto& p : paths) heads.push_back(read_head(p));
  return heads;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble hate-speech detection over fixed text embeddings"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "rvhate 0.1.0");

  // featurize
  auto* feat = app.add_subcommand("featurize", "hash a dataset into an RVHE embedding file");
  std::string feat_data, feat_out;
  EmbeddingFlags feat_emb;
  feat->add_option("--data", feat_data, "JSONL dataset")->required()->check(CLI::ExistingFile);
  feat->add_option("--out", feat_out, "output RVHE file")->required();
  feat_emb.attach(feat, false);

  // tag
  auto* tag = app.add_subcommand("tag", "mark gazetteer targets and write the augmented dataset");
  std::string tag_data, tag_out, tag_gaz;
  tag->add_option("--data", tag_data, "JSONL dataset")->required()->check(CLI::ExistingFile);
  tag->add_option("--out", tag_out, "output JSONL")->required();
  tag->add_option("--gazetteer", tag_gaz, "term<TAB>category file")->check(CLI::ExistingFile);

  // train
  auto* train = app.add_subcommand("train", "train one module head");
  std::string train_data, train_out, train_module_name = "M0", train_gaz;
  std::uint64_t train_seed = 13;
  EmbeddingFlags train_emb;
  TrainFlags train_flags;
  train->add_option("--data", train_data, "JSONL dataset")->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "output RVHD checkpoint")->required();
  train->add_option("--module", train_module_name, "M0, M1, M2, M3 or combined");
  train->add_option("--seed", train_seed, "initialization and shuffling seed");
  train->add_option("--gazetteer", train_gaz, "term<TAB>category file")->check(CLI::ExistingFile);
  train_emb.attach(train, true);
  train_flags.attach(train);

  // vote
  auto* vote = app.add_subcommand("vote", "learn soft-voting weights on the validation split");
  std::string vote_data, vote_out;
  std::vector<std::string> vote_heads;
  std::size_t vote_steps = 10000, vote_episodes = 32;
  std::uint64_t vote_seed = 13;
  EmbeddingFlags vote_emb;
  vote->add_option("--data", vote_data, "JSONL dataset")->required()->check(CLI::ExistingFile);
  vote->add_option("--heads", vote_heads, "RVHD checkpoints")->required()->check(CLI::ExistingFile);
  vote->add_option("--out", vote_out, "output directory")->required();
  vote->add_option("--rl-steps", vote_steps, "sampled weight vectors");
  vote->add_option("--episodes", vote_episodes, "episodes per policy update");
  vote->add_option("--seed", vote_seed, "policy sampling seed");
  vote_emb.attach(vote, true);

  // eval
  auto* eval = app.add_subcommand("eval", "score heads and their vote on the test split");
  std::string eval_data, eval_out;
  std::vector<std::string> eval_heads;
  std::vector<double> eval_weights;
  EmbeddingFlags eval_emb;
  eval->add_option("--data", eval_data, "JSONL dataset")->required()->check(CLI::ExistingFile);
  eval->add_option("--heads", eval_heads, "RVHD checkpoints")->required()->check(CLI::ExistingFile);
  eval->add_option("--weights", eval_weights, "vote weights (default: equal)");
  eval->add_option("--out", eval_out, "output directory")->required();
  eval_emb.attach(eval, true);

  // pipeline / ablate share their flags
  struct RunFlags {
    std::string config, data, out, gazetteer;
    std::vector<std::string> modules;
    std::vector<std::uint64_t> seeds;
    std::size_t rl_steps = 0, episodes = 0, jobs = 0;
    EmbeddingFlags emb;
    TrainFlags train;
    CLI::Option *config_opt, *data_opt, *out_opt, *gaz_opt, *modules_opt, *seeds_opt, *steps_opt, *episodes_opt,
        *jobs_opt;
  };
  RunFlags pipe_flags, abl_flags;
  auto attach_run = [](CLI::App* a, RunFlags& f) {
    f.config_opt = a->add_option("--config", f.config, "JSON run config; flags override it")
                       ->check(CLI::ExistingFile);
    f.data_opt = a->add_option("--data", f.data, "JSONL dataset")->check(CLI::ExistingFile);
    f.out_opt = a->add_option("--out", f.out, "output directory")->required();
    f.gaz_opt = a->add_option("--gazetteer", f.gazetteer, "term<TAB>category file")->check(CLI::ExistingFile);
    f.modules_opt = a->add_option("--modules", f.modules, "subset of M0 M1 M2 M3");
    f.seeds_opt = a->add_option("--seeds", f.seeds, "training and policy seeds");
    f.steps_opt = a->add_option("--rl-steps", f.rl_steps, "sampled weight vectors per seed");
    f.episodes_opt = a->add_option("--episodes", f.episodes, "episodes per policy update");
    f.jobs_opt = a->add_option("--jobs", f.jobs, "concurrent training jobs");
    f.emb.attach(a, true);
    f.train.attach(a);
  };
  auto* pipe = app.add_subcommand("pipeline", "train, vote and evaluate end to end");
  attach_run(pipe, pipe_flags);
  auto* abl = app.add_subcommand("ablate", "pipeline plus the ablation table");
  attach_run(abl, abl_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  auto resolve_run = [](const RunFlags& f, bool ablate) {
    RunConfig cfg = f.config_opt->count() ? RunConfig::from_json_file(f.config) : RunConfig{};
    if (f.data_opt->count()) cfg.dataset = f.data;
    cfg.out = f.out;
    if (f.gaz_opt->count()) cfg.gazetteer = fs::path(f.gazetteer);
    if (f.emb.emb_opt->count()) cfg.embeddings = fs::path(f.emb.embeddings);
    if (f.emb.aug_opt->count()) cfg.augmented_embeddings = fs::path(f.emb.augmented_embeddings);
    f.emb.apply(cfg.featurizer);
    f.train.apply(cfg.train);
    if (f.modules_opt->count()) {
      cfg.modules.clear();
      for (const auto& m : f.modules) cfg.modules.push_back(module_or_throw(m));
    }
    if (f.seeds_opt->count()) cfg.seeds = f.seeds;
    if (f.steps_opt->count()) cfg.rl_steps = f.rl_steps;
    if (f.episodes_opt->count()) cfg.episodes_per_update = f.episodes;
    if (f.jobs_opt->count()) cfg.jobs = f.jobs;
    if (ablate) cfg.ablate = true;
    return cfg;
  };

  try {
    if (*feat) {
      const Dataset d = load_dataset(feat_data);
      const EmbeddingMatrix m = featurize(d, feat_emb.config());
      write_embeddings(m, feat_out);
      std::printf("wrote %zu x %zu embeddings to %s (%zu zero rows)\n", m.count(), m.dim(), feat_out.c_str(),
                  m.warning_count());
    } else if (*tag) {
      const Dataset d = load_dataset(tag_data);
      const Gazetteer g = load_gazetteer(tag_gaz.empty() ? default_gazetteer_path() : fs::path(tag_gaz));
      const Dataset aug = augment_train_set(d, g);
      write_dataset(aug, tag_out);
      std::printf("train examples: %zu -> %zu\n", d.count(Split::Train), aug.count(Split::Train));
    } else if (*train) {
      const ModuleId id = module_or_throw(train_module_name);
      const Dataset d = load_dataset(train_data);
      validate_trainable(d);
      TrainConfig tc;
      train_flags.apply(tc);
      tc.seed = train_seed;
      const EmbeddingMatrix e = train_emb.load(d);
      Dataset aug;
      EmbeddingMatrix aug_e;
      ModuleData data{&d, &e, nullptr, nullptr};
      if (id == ModuleId::M1 || id == ModuleId::Combined) {
        aug = augment_train_set(d, load_gazetteer(train_gaz.empty() ? default_gazetteer_path() : fs::path(train_gaz)));
        if (train_emb.emb_opt->count()) {
          if (!train_emb.aug_opt->count()) {
            throw Error(ErrorCode::InvalidArgument, "--augmented-embeddings is required with --embeddings for M1");
          }
          aug_e = read_embeddings(train_emb.augmented_embeddings);
        } else {
          aug_e = featurize(aug, train_emb.config());
        }
        data.augmented = &aug;
        data.augmented_embeddings = &aug_e;
      }
      const auto [td, te] = data.for_module(id);
      const TrainResult r = train_module(id, *td, *te, tc);
      write_head(r.head, train_out);
      write_text(fs::path(train_out).replace_extension(".csv"), [&](std::ostream& os) { write_training_report(r, os); });
      std::printf("%s: best epoch %zu, validation macro-F1 %.4f\n", std::string(to_string(id)).c_str(), r.best_epoch,
                  r.best_valid_macro_f1);
    } else if (*vote) {
      const Dataset d = load_dataset(vote_data);
      const EmbeddingMatrix e = vote_emb.load(d);
      const auto panels = panels_for(d, e, load_heads(vote_heads));
      OptimizeConfig oc;
      oc.steps = vote_steps;
      oc.episodes_per_update = vote_episodes;
      oc.seed = vote_seed;
      const auto res = optimize_weights(panels.valid, panels.valid_labels, oc);
      SeedOutcome o;
      o.seed = vote_seed;
      o.weights.assign(res.weights.values().begin(), res.weights.values().end());
      o.valid_macro_f1 = res.valid_macro_f1;
      for (const auto& name : panels.module_names) o.modules.push_back(module_or_throw(name));
      write_text(fs::path(vote_out) / "weights.csv",
                 [&](std::ostream& os) { write_weight_report(d.name, std::span(&o, 1), os); });
      write_text(fs::path(vote_out) / "reward_trace.csv", [&](std::ostream& os) { write_reward_trace(res.trace, os); });
      std::printf("weights:");
      for (double w : o.weights) std::printf(" %.4f", w);
      std::printf("  validation macro-F1 %.4f\n", o.valid_macro_f1);
    } else if (*eval) {
      const Dataset d = load_dataset(eval_data);
      const EmbeddingMatrix e = eval_emb.load(d);
      const auto panels = panels_for(d, e, load_heads(eval_heads));
      const std::size_t k = panels.module_names.size();
      if (eval_weights.empty()) eval_weights.assign(k, 1.0 / static_cast<double>(k));
      if (eval_weights.size() != k) throw Error(ErrorCode::ShapeMismatch, "one weight per head is required");
      EvalReport report;
      report.dataset = d.name;
      for (std::size_t m = 0; m < k; ++m) {
        std::vector<double> w(k, 0.0);
        w[m] = 1.0;
        const auto c = confusion(soft_vote(panels.test, w).predictions, panels.test_labels);
        report.rows.push_back(aggregate_row(panels.module_names[m], {macro_f1(c)}, c));
      }
      if (k > 1) {
        const auto c = confusion(soft_vote(panels.test, eval_weights).predictions, panels.test_labels);
        report.rows.push_back(aggregate_row("RV", {macro_f1(c)}, c));
      }
      write_text(fs::path(eval_out) / "eval.csv", [&](std::ostream& os) { write_report_csv(report, os); });
      write_text(fs::path(eval_out) / "eval.txt", [&](std::ostream& os) { write_report_table(report, os); });
      write_report_table(report, std::cout);
    } else {
      const bool ablate = static_cast<bool>(*abl);
      const RunConfig cfg = resolve_run(ablate ? abl_flags : pipe_flags, ablate);
      const auto summary = run_pipeline(cfg, std::cerr);
      write_report_table(summary.eval, std::cout);
      if (summary.ablation) write_report_table(*summary.ablation, std::cout);
    }
  } catch (const StageError& e) {
    std::fprintf(stderr, "rvhate: %s\n", e.what());
    return exit_code(e.category());
  } catch (const Error& e) {
    std::fprintf(stderr, "rvhate: %s\n", e.what());
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "rvhate: internal error: %s\n", e.what());
    return 4;
  }
  return 0;
}
