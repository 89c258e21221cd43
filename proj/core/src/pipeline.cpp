#include "rvhate/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "rvhate/parallel.hpp"
#include "rvhate/voting.hpp"

namespace rvhate {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

std::filesystem::path default_gazetteer_path() {
#ifdef RVHATE_SOURCE_GAZETTEER
  if (fs::exists(RVHATE_SOURCE_GAZETTEER)) return RVHATE_SOURCE_GAZETTEER;
#endif
#ifdef RVHATE_DEFAULT_GAZETTEER
  return RVHATE_DEFAULT_GAZETTEER;
#else
  return "data/gazetteer.tsv";
#endif
}

// ---------------------------------------------------------------------------

void RunConfig::validate() const {
  if (dataset.empty()) throw Error(ErrorCode::InvalidArgument, "no dataset path given");
  if (!fs::exists(dataset)) throw Error(ErrorCode::IoError, "dataset not found: " + dataset.string());
  if (embeddings && !fs::exists(*embeddings)) {
    throw Error(ErrorCode::IoError, "embeddings not found: " + embeddings->string());
  }
  if (augmented_embeddings && !fs::exists(*augmented_embeddings)) {
    throw Error(ErrorCode::IoError, "augmented embeddings not found: " + augmented_embeddings->string());
  }
  if (gazetteer && !fs::exists(*gazetteer)) throw Error(ErrorCode::IoError, "gazetteer not found: " + gazetteer->string());
  if (modules.empty()) throw Error(ErrorCode::InvalidArgument, "at least one module is required");
  for (std::size_t i = 0; i < modules.size(); ++i) {
    if (modules[i] == ModuleId::Combined) throw Error(ErrorCode::InvalidArgument, "'combined' is not a voting module");
    for (std::size_t j = 0; j < i; ++j) {
      if (modules[i] == modules[j]) throw Error(ErrorCode::InvalidArgument, "module listed twice");
    }
  }
  if (seeds.empty()) throw Error(ErrorCode::InvalidArgument, "at least one seed is required");
  if (rl_steps == 0 || episodes_per_update == 0) throw Error(ErrorCode::InvalidArgument, "RL step counts must be positive");
  if (jobs == 0) throw Error(ErrorCode::InvalidArgument, "jobs must be positive");
  if (!embeddings) featurizer.validate();
  train.validate();
}

namespace {

ordered_json range_json(const std::optional<NgramRange>& r) {
  if (!r) return nullptr;
  return ordered_json::array({r->min, r->max});
}

std::optional<NgramRange> range_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  if (!j.is_array() || j.size() != 2) throw Error(ErrorCode::ParseError, "n-gram range must be [min, max] or null");
  return NgramRange{j[0].get<int>(), j[1].get<int>()};
}

template <typename T>
void take(const nlohmann::json& j, const char* key, T& dst) {
  if (j.contains(key) && !j[key].is_null()) dst = j[key].get<T>();
}

void take_path(const nlohmann::json& j, const char* key, std::optional<fs::path>& dst) {
  if (!j.contains(key)) return;
  if (j[key].is_null()) {
    dst.reset();
  } else {
    dst = fs::path(j[key].get<std::string>());
  }
}

}  // namespace

std::string RunConfig::to_json() const {
  ordered_json j;
  j["dataset"] = dataset.string();
  j["embeddings"] = embeddings ? ordered_json(embeddings->string()) : ordered_json(nullptr);
  j["augmented_embeddings"] =
      augmented_embeddings ? ordered_json(augmented_embeddings->string()) : ordered_json(nullptr);
  j["featurizer"] = {{"dim", featurizer.dim},
                     {"word_ngrams", range_json(featurizer.word_ngrams)},
                     {"char_ngrams", range_json(featurizer.char_ngrams)},
                     {"hash_seed", featurizer.hash_seed}};
  j["gazetteer"] = gazetteer ? ordered_json(gazetteer->string()) : ordered_json(nullptr);
  j["train"] = {{"epochs", train.epochs},
                {"batch_size", train.batch_size},
                {"learning_rate", train.learning_rate},
                {"temperature", train.temperature},
                {"lambda", train.lambda},
                {"k_per_class", train.k_per_class},
                {"hidden", train.hidden},
                {"hard_k", train.hard_k},
                {"confidence_threshold", train.confidence_threshold},
                {"queue_capacity", train.queue_capacity}};
  j["metric"] = std::string(to_string(train.metric));
  auto mods = ordered_json::array();
  for (auto m : modules) mods.push_back(std::string(to_string(m)));
  j["modules"] = mods;
  j["rl_steps"] = rl_steps;
  j["episodes_per_update"] = episodes_per_update;
  j["seeds"] = seeds;
  j["ablate"] = ablate;
  j["jobs"] = jobs;
  return j.dump(2) + "\n";
}

void RunConfig::merge_json(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, std::string("run config: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "run config must be a JSON object");
  try {
    if (j.contains("dataset")) dataset = j["dataset"].get<std::string>();
    take_path(j, "embeddings", embeddings);
    take_path(j, "augmented_embeddings", augmented_embeddings);
    take_path(j, "gazetteer", gazetteer);
    if (j.contains("featurizer")) {
      const auto& f = j["featurizer"];
      take(f, "dim", featurizer.dim);
      if (f.contains("word_ngrams")) featurizer.word_ngrams = range_from(f["word_ngrams"]);
      if (f.contains("char_ngrams")) featurizer.char_ngrams = range_from(f["char_ngrams"]);
      take(f, "hash_seed", featurizer.hash_seed);
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      take(t, "epochs", train.epochs);
      take(t, "batch_size", train.batch_size);
      take(t, "learning_rate", train.learning_rate);
      take(t, "temperature", train.temperature);
      take(t, "lambda", train.lambda);
      take(t, "k_per_class", train.k_per_class);
      take(t, "hidden", train.hidden);
      take(t, "hard_k", train.hard_k);
      take(t, "confidence_threshold", train.confidence_threshold);
      take(t, "queue_capacity", train.queue_capacity);
    }
    if (j.contains("metric")) {
      const auto m = parse_metric(j["metric"].get<std::string>());
      if (!m) throw Error(ErrorCode::ParseError, "metric must be 'cosine' or 'l2'");
      train.metric = *m;
    }
    if (j.contains("modules")) {
      modules.clear();
      for (const auto& m : j["modules"]) {
        const auto id = parse_module_id(m.get<std::string>());
        if (!id) throw Error(ErrorCode::ParseError, "unknown module " + m.dump());
        modules.push_back(*id);
      }
    }
    take(j, "rl_steps", rl_steps);
    take(j, "episodes_per_update", episodes_per_update);
    if (j.contains("seeds")) seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    take(j, "ablate", ablate);
    take(j, "jobs", jobs);
    if (j.contains("out") && !j["out"].is_null()) out = j["out"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("run config: ") + e.what());
  }
}

RunConfig RunConfig::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg;
  cfg.merge_json(ss.str());
  return cfg;
}

// ---------------------------------------------------------------------------

void write_weight_report(const std::string& dataset, std::span<const SeedOutcome> seeds, std::ostream& out) {
  out << "dataset,seed,w0,w1,w2,w3,valid_macro_f1\n";
  char buf[256];
  for (const auto& s : seeds) {
    double w[4] = {0.0, 0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < s.modules.size(); ++i) {
      const auto slot = static_cast<std::size_t>(s.modules[i]);
      if (slot < 4) w[slot] = s.weights[i];
    }
    std::snprintf(buf, sizeof buf, "%s,%llu,%.6f,%.6f,%.6f,%.6f,%.6f\n", dataset.c_str(),
                  static_cast<unsigned long long>(s.seed), w[0], w[1], w[2], w[3], s.valid_macro_f1);
    out << buf;
  }
}

namespace {

template <typename F>
auto in_stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e.category(), e.what());
  } catch (const std::exception& e) {
    throw StageError(name, ErrorCategory::Internal, e.what());
  }
}

class OutputDir {
 public:
  explicit OutputDir(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create output directory " + root_.string());
  }

  template <typename Writer>
  void text(const fs::path& rel, Writer&& w) {
    const fs::path p = prepare(rel);
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + p.string());
    w(out);
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + p.string());
  }

  void head(const fs::path& rel, const ModuleHead& h) { write_head(h, prepare(rel)); }

  const std::vector<fs::path>& written() const { return written_; }

 private:
  fs::path prepare(const fs::path& rel) {
    const fs::path p = root_ / rel;
    fs::create_directories(p.parent_path());
    written_.push_back(rel);
    return p;
  }

  fs::path root_;
  std::vector<fs::path> written_;
};

std::string seed_dir(std::uint64_t seed) { return "seed-" + std::to_string(seed); }

}  // namespace

PipelineSummary run_pipeline(const RunConfig& cfg, std::ostream& log) {
  in_stage("config", [&] {
    cfg.validate();
    if (cfg.out.empty()) throw Error(ErrorCode::InvalidArgument, "no output directory given");
    return 0;
  });
  OutputDir out = in_stage("config", [&] { return OutputDir(cfg.out); });
  out.text("manifest.json", [&](std::ostream& os) { os << cfg.to_json(); });
  const std::size_t jobs = std::min(cfg.jobs, thread_cap());

  const Dataset dataset = in_stage("load", [&] {
    auto d = load_dataset(cfg.dataset);
    validate_trainable(d);
    return d;
  });
  log << "loaded " << dataset.size() << " examples (" << dataset.count(Split::Train) << " train, "
      << dataset.count(Split::Valid) << " valid, " << dataset.count(Split::Test) << " test)\n";

  const EmbeddingMatrix embeddings = in_stage("embed", [&] {
    EmbeddingMatrix m = cfg.embeddings ? read_embeddings(*cfg.embeddings) : featurize(dataset, cfg.featurizer);
    if (m.count() != dataset.size()) {
      throw Error(ErrorCode::ShapeMismatch, std::to_string(m.count()) + " embedding rows for " +
                                                std::to_string(dataset.size()) + " examples");
    }
    return m;
  });
  log << "embeddings: " << embeddings.count() << " x " << embeddings.dim() << " (" << embeddings.warning_count()
      << " zero rows)\n";

  const bool need_aug =
      std::find(cfg.modules.begin(), cfg.modules.end(), ModuleId::M1) != cfg.modules.end() || cfg.ablate;
  Dataset augmented;
  EmbeddingMatrix augmented_emb;
  if (need_aug) {
    in_stage("tag", [&] {
      const auto g = load_gazetteer(cfg.gazetteer.value_or(default_gazetteer_path()));
      augmented = augment_train_set(dataset, g);
      if (cfg.embeddings) {
        if (!cfg.augmented_embeddings) {
          throw Error(ErrorCode::InvalidArgument,
                      "M1 with external embeddings needs augmented_embeddings for the tagged set");
        }
        augmented_emb = read_embeddings(*cfg.augmented_embeddings);
      } else {
        augmented_emb = featurize(augmented, cfg.featurizer);
      }
      if (augmented_emb.count() != augmented.size()) {
        throw Error(ErrorCode::ShapeMismatch, "augmented embeddings do not match the augmented dataset");
      }
      out.text("augmented.jsonl", [&](std::ostream& os) {
        for (const auto& ex : augmented.examples) {
          ordered_json j;
          j["id"] = ex.id;
          j["text"] = ex.text;
          j["label"] = ex.label;
          j["split"] = std::string(to_string(ex.split));
          os << j.dump() << '\n';
        }
      });
      return 0;
    });
    log << "augmented train set: " << dataset.count(Split::Train) << " -> " << augmented.count(Split::Train) << "\n";
  }

  ModuleData data;
  data.base = &dataset;
  data.base_embeddings = &embeddings;
  if (need_aug) {
    data.augmented = &augmented;
    data.augmented_embeddings = &augmented_emb;
  }

  const std::size_t nmod = cfg.modules.size();
  const std::size_t nseed = cfg.seeds.size();
  std::vector<TrainResult> trained(nmod * nseed);
  in_stage("train", [&] {
    parallel_for(trained.size(), jobs, [&](std::size_t job) {
      const std::size_t s = job / nmod;
      const std::size_t m = job % nmod;
      TrainConfig tc = cfg.train;
      tc.seed = cfg.seeds[s];
      const auto [d, e] = data.for_module(cfg.modules[m]);
      trained[job] = train_module(cfg.modules[m], *d, *e, tc);
    });
    for (std::size_t job = 0; job < trained.size(); ++job) {
      const auto seed = cfg.seeds[job / nmod];
      const auto name = std::string(to_string(cfg.modules[job % nmod]));
      const fs::path dir = fs::path("heads") / seed_dir(seed);
      const auto [d, e] = data.for_module(cfg.modules[job % nmod]);
      std::vector<std::string> ids;
      for (const auto& ex : d->examples) ids.push_back(ex.id);
      out.head(dir / (name + ".rvhd"), trained[job].head);
      out.text(dir / (name + "_train.csv"), [&](std::ostream& os) { write_training_report(trained[job], os); });
      out.text(dir / (name + "_clusters.csv"),
               [&](std::ostream& os) { write_cluster_report(trained[job].last_clusters, ids, os); });
      log << "trained " << name << " seed " << seed << ": best epoch " << trained[job].best_epoch
          << ", valid macro-F1 " << trained[job].best_valid_macro_f1 << "\n";
    }
    return 0;
  });

  PipelineSummary summary;
  std::vector<SeedPanels> panels(nseed);
  in_stage("vote", [&] {
    for (std::size_t s = 0; s < nseed; ++s) {
      std::vector<ModuleHead> heads;
      for (std::size_t m = 0; m < nmod; ++m) heads.push_back(trained[s * nmod + m].head);
      panels[s] = make_seed_panels(data, heads);
      SeedOutcome o;
      o.seed = cfg.seeds[s];
      o.modules = cfg.modules;
      if (nmod == 1) {
        o.weights = {1.0};
        o.valid_macro_f1 = vote_reward(panels[s].valid, panels[s].valid_labels, o.weights);
      } else {
        OptimizeConfig oc;
        oc.steps = cfg.rl_steps;
        oc.episodes_per_update = cfg.episodes_per_update;
        oc.seed = cfg.seeds[s];
        const auto res = optimize_weights(panels[s].valid, panels[s].valid_labels, oc);
        o.weights.assign(res.weights.values().begin(), res.weights.values().end());
        o.valid_macro_f1 = res.valid_macro_f1;
        out.text("reward_trace_" + seed_dir(o.seed) + ".csv",
                 [&](std::ostream& os) { write_reward_trace(res.trace, os); });
      }
      summary.seeds.push_back(std::move(o));
    }
    out.text("weights.csv", [&](std::ostream& os) { write_weight_report(dataset.name, summary.seeds, os); });
    return 0;
  });

  in_stage("eval", [&] {
    summary.eval.dataset = dataset.name;
    auto add_row = [&](const std::string& name, auto weights_for_seed) {
      std::vector<double> f1;
      Confusion first;
      for (std::size_t s = 0; s < nseed; ++s) {
        const auto vote = soft_vote(panels[s].test, weights_for_seed(s));
        const auto c = confusion(vote.predictions, panels[s].test_labels);
        if (s == 0) first = c;
        f1.push_back(macro_f1(c));
      }
      summary.eval.rows.push_back(aggregate_row(name, std::move(f1), first));
    };
    for (std::size_t m = 0; m < nmod; ++m) {
      add_row(std::string(to_string(cfg.modules[m])), [&](std::size_t) {
        std::vector<double> w(nmod, 0.0);
        w[m] = 1.0;
        return w;
      });
    }
    if (nmod > 1) add_row("RV", [&](std::size_t s) { return summary.seeds[s].weights; });
    out.text("eval.csv", [&](std::ostream& os) { write_report_csv(summary.eval, os); });
    out.text("eval.txt", [&](std::ostream& os) { write_report_table(summary.eval, os); });
    return 0;
  });

  if (cfg.ablate) {
    in_stage("ablate", [&] {
      AblationOptions ao;
      ao.train = cfg.train;
      ao.optimize.steps = cfg.rl_steps;
      ao.optimize.episodes_per_update = cfg.episodes_per_update;
      ao.seeds = cfg.seeds;
      ao.jobs = jobs;
      summary.ablation = run_ablation(data, ao);
      out.text("ablation.csv", [&](std::ostream& os) { write_report_csv(*summary.ablation, os); });
      out.text("ablation.txt", [&](std::ostream& os) { write_report_table(*summary.ablation, os); });
      return 0;
    });
  }
  summary.written = out.written();
  return summary;
}

}  // namespace rvhate
