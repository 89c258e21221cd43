#include "rvhate/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <ostream>

#include "rvhate/error.hpp"
#include "rvhate/parallel.hpp"

namespace rvhate {

std::size_t thread_cap() {
  if (const char* env = std::getenv("RV_HATE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

EvalRow aggregate_row(std::string variant, std::vector<double> per_seed_macro_f1, const Confusion& first_seed) {
  EvalRow row;
  row.variant = std::move(variant);
  row.per_seed_macro_f1 = std::move(per_seed_macro_f1);
  row.macro_f1_mean = mean(row.per_seed_macro_f1);
  row.macro_f1_std = sample_stddev(row.per_seed_macro_f1);
  row.confusion = first_seed;
  return row;
}

const EvalRow* EvalReport::find(std::string_view variant) const {
  for (const auto& r : rows) {
    if (r.variant == variant) return &r;
  }
  return nullptr;
}

void write_report_csv(const EvalReport& report, std::ostream& out) {
  out << "variant,seed_count,macro_f1_mean,macro_f1_std,tn,fp,fn,tp\n";
  char buf[256];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.6f,%.6f,%zu,%zu,%zu,%zu\n", r.variant.c_str(),
                  r.per_seed_macro_f1.size(), r.macro_f1_mean, r.macro_f1_std, r.confusion.tn, r.confusion.fp,
                  r.confusion.fn, r.confusion.tp);
    out << buf;
  }
}

void write_report_table(const EvalReport& report, std::ostream& out) {
  std::size_t width = std::string_view("variant").size();
  for (const auto& r : report.rows) width = std::max(width, r.variant.size());
  const int w = static_cast<int>(width);
  char buf[256];
  if (!report.dataset.empty()) out << "dataset: " << report.dataset << '\n';
  std::snprintf(buf, sizeof buf, "%-*s  %5s  %8s  %8s  %6s  %6s  %6s  %6s\n", w, "variant", "seeds", "F1 mean",
                "F1 std", "TN", "FP", "FN", "TP");
  out << buf;
  out << std::string(width + 58, '-') << '\n';
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %5zu  %8.2f  %8.2f  %6zu  %6zu  %6zu  %6zu\n", w, r.variant.c_str(),
                  r.per_seed_macro_f1.size(), 100.0 * r.macro_f1_mean, 100.0 * r.macro_f1_std, r.confusion.tn,
                  r.confusion.fp, r.confusion.fn, r.confusion.tp);
    out << buf;
  }
  out << "macro-F1 in percent on the test split; std is the sample standard deviation over seeds.\n"
         "Per-class F1 is 0 when precision + recall is 0. Confusion counts are from the first seed.\n";
}

// ---------------------------------------------------------------------------

std::string leave_one_out_name(std::string_view module) { return "RV - " + std::string(module); }

namespace {

VariantScore score_vote(std::string name, const LogitPanel& panel, std::span<const int> labels,
                        std::span<const double> weights, bool keep_weights) {
  const auto vote = soft_vote(panel, weights);
  VariantScore s;
  s.variant = std::move(name);
  s.confusion = confusion(vote.predictions, labels);
  s.macro_f1 = macro_f1(s.confusion);
  if (keep_weights) s.weights.assign(weights.begin(), weights.end());
  return s;
}

}  // namespace

std::vector<VariantScore> ablate_panels(const SeedPanels& panels, const OptimizeConfig& opt) {
  const std::size_t k = panels.valid.modules();
  if (k == 0 || panels.test.modules() != k || panels.module_names.size() != k) {
    throw Error(ErrorCode::ShapeMismatch, "validation and test panels disagree on modules");
  }
  std::vector<VariantScore> out;
  for (std::size_t m = 0; m < k; ++m) {
    std::vector<double> onehot(k, 0.0);
    onehot[m] = 1.0;
    out.push_back(score_vote(panels.module_names[m], panels.test, panels.test_labels, onehot, false));
  }

  const auto full = optimize_weights(panels.valid, panels.valid_labels, opt);
  out.push_back(score_vote("RV", panels.test, panels.test_labels, full.weights.values(), true));

  if (k >= 2) {
    for (std::size_t drop = 0; drop < k; ++drop) {
      std::vector<std::size_t> keep;
      for (std::size_t m = 0; m < k; ++m) {
        if (m != drop) keep.push_back(m);
      }
      const auto valid = panels.valid.select_modules(keep);
      const auto test = panels.test.select_modules(keep);
      const auto res = optimize_weights(valid, panels.valid_labels, opt);
      out.push_back(score_vote(leave_one_out_name(panels.module_names[drop]), test, panels.test_labels,
                               res.weights.values(), true));
    }
  }

  const auto eq = WeightVector::uniform(k);
  out.push_back(score_vote("equal-weights", panels.test, panels.test_labels, eq.values(), true));
  return out;
}

// ---------------------------------------------------------------------------

std::pair<const Dataset*, const EmbeddingMatrix*> ModuleData::for_module(ModuleId id) const {
  if (!base || !base_embeddings) throw Error(ErrorCode::InvalidArgument, "module data has no base dataset");
  if (id == ModuleId::M1) {
    if (!augmented || !augmented_embeddings) {
      throw Error(ErrorCode::InvalidArgument, "M1 requires an augmented training set");
    }
    return {augmented, augmented_embeddings};
  }
  if (id == ModuleId::Combined && augmented && augmented_embeddings) return {augmented, augmented_embeddings};
  return {base, base_embeddings};
}

std::vector<TrainResult> train_modules(const ModuleData& data, std::span<const ModuleId> modules,
                                       const TrainConfig& cfg, std::size_t jobs) {
  std::vector<TrainResult> results(modules.size());
  parallel_for(modules.size(), jobs, [&](std::size_t i) {
    const auto [d, e] = data.for_module(modules[i]);
    results[i] = train_module(modules[i], *d, *e, cfg);
  });
  return results;
}

SeedPanels make_seed_panels(const ModuleData& data, std::span<const ModuleHead> heads) {
  SeedPanels p;
  const auto valid_rows = data.base->indices_of(Split::Valid);
  const auto test_rows = data.base->indices_of(Split::Test);
  for (const auto& h : heads) p.module_names.emplace_back(to_string(h.module_id));
  p.valid = build_panel(heads, *data.base_embeddings, valid_rows);
  p.test = build_panel(heads, *data.base_embeddings, test_rows);
  p.valid_labels = data.base->labels_of(valid_rows);
  p.test_labels = data.base->labels_of(test_rows);
  return p;
}

EvalReport run_ablation(const ModuleData& data, const AblationOptions& opts) {
  if (opts.seeds.empty()) throw Error(ErrorCode::InvalidArgument, "ablation needs at least one seed");
  validate_trainable(*data.base);
  const std::vector<ModuleId> modules{ModuleId::M0, ModuleId::M1, ModuleId::M2, ModuleId::M3};

  std::vector<std::string> order;
  std::map<std::string, std::vector<VariantScore>> scores;
  auto record = [&](VariantScore s) {
    if (!scores.contains(s.variant)) order.push_back(s.variant);
    scores[s.variant].push_back(std::move(s));
  };

  for (std::uint64_t seed : opts.seeds) {
    TrainConfig cfg = opts.train;
    cfg.seed = seed;
    OptimizeConfig opt = opts.optimize;
    opt.seed = seed;

    cfg.metric = Metric::Cosine;
    auto trained = train_modules(data, modules, cfg, opts.jobs);
    std::vector<ModuleHead> heads;
    for (auto& t : trained) heads.push_back(std::move(t.head));
    const auto panels = make_seed_panels(data, heads);
    for (auto& s : ablate_panels(panels, opt)) record(std::move(s));

    cfg.metric = Metric::L2;
    auto trained_l2 = train_modules(data, modules, cfg, opts.jobs);
    std::vector<ModuleHead> heads_l2;
    for (auto& t : trained_l2) heads_l2.push_back(std::move(t.head));
    const auto panels_l2 = make_seed_panels(data, heads_l2);
    const auto w_l2 = optimize_weights(panels_l2.valid, panels_l2.valid_labels, opt);
    record(score_vote("RV (l2)", panels_l2.test, panels_l2.test_labels, w_l2.weights.values(), true));

    cfg.metric = Metric::Cosine;
    const auto [d, e] = data.for_module(ModuleId::Combined);
    const auto combined = train_head(ModuleId::Combined, mechanisms_for(ModuleId::Combined), *d, *e, cfg);
    const ModuleHead combined_heads[] = {combined.head};
    const auto panels_c = make_seed_panels(data, combined_heads);
    const double one[] = {1.0};
    record(score_vote("combined-modules", panels_c.test, panels_c.test_labels, one, false));
  }

  EvalReport report;
  report.dataset = data.base->name;
  for (const auto& name : order) {
    const auto& v = scores[name];
    std::vector<double> f1;
    for (const auto& s : v) f1.push_back(s.macro_f1);
    report.rows.push_back(aggregate_row(name, std::move(f1), v.front().confusion));
  }
  return report;
}

}  // namespace rvhate
