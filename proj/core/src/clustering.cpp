#include "rvhate/clustering.hpp"

#include <algorithm>
#include <limits>
#include <ostream>
#include <random>

#include "rvhate/error.hpp"

namespace rvhate {

std::string_view to_string(Metric m) noexcept { return m == Metric::Cosine ? "cosine" : "l2"; }

std::optional<Metric> parse_metric(std::string_view s) noexcept {
  if (s == "cosine") return Metric::Cosine;
  if (s == "l2") return Metric::L2;
  return std::nullopt;
}

double metric_distance(std::span<const double> point, std::span<const double> centroid, Metric metric) {
  return metric == Metric::Cosine ? 1.0 - cosine_similarity(point, centroid)
                                  : euclidean_distance(point, centroid);
}

Vec centroid_of(std::span<const Vec> points, std::span<const std::size_t> members, Metric metric) {
  if (members.empty()) throw Error(ErrorCode::EmptyCluster, "centroid of an empty cluster");
  Vec c(points[members.front()].size(), 0.0);
  for (std::size_t m : members) {
    const auto& p = points[m];
    if (p.size() != c.size()) throw Error(ErrorCode::DimensionMismatch, "cluster members differ in dim");
    for (std::size_t j = 0; j < c.size(); ++j) c[j] += p[j];
  }
  for (double& x : c) x /= static_cast<double>(members.size());
  if (metric == Metric::Cosine) normalize_in_place(c);
  return c;
}

namespace {

std::size_t nearest(std::span<const double> p, const std::vector<Vec>& centroids, double* best_d2) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (best_d2) *best_d2 = best_d;
  return best;
}

std::vector<Vec> plus_plus_seeds(const std::vector<Vec>& pts, std::size_t k, std::mt19937_64& rng) {
  const std::size_t n = pts.size();
  std::vector<Vec> centers;
  std::vector<bool> chosen(n, false);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::size_t first = pick(rng);
  centers.push_back(pts[first]);
  chosen[first] = true;

  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(pts[i], centers[0]);

  while (centers.size() < k) {
    double total = 0.0;
    for (double d : d2) total += d;
    std::size_t next = n;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      const double r = u(rng);
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        acc += d2[i];
        next = i;
        if (acc > r) break;
      }
    }
    if (next == n) {
      // all remaining mass is zero (duplicates): take the lowest unused point
      for (std::size_t i = 0; i < n; ++i) {
        if (!chosen[i]) {
          next = i;
          break;
        }
      }
    }
    chosen[next] = true;
    centers.push_back(pts[next]);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(pts[i], centers.back()));
  }
  return centers;
}

}  // namespace

KMeansResult kmeans(std::span<const Vec> points, std::size_t k, std::uint64_t seed, Metric metric) {
  const std::size_t n = points.size();
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
  if (k > n) {
    throw Error(ErrorCode::KTooLarge, "k=" + std::to_string(k) + " exceeds " + std::to_string(n) + " points");
  }
  std::vector<Vec> pts(points.begin(), points.end());
  if (metric == Metric::Cosine) {
    for (auto& p : pts) normalize_in_place(p);
  }

  std::mt19937_64 rng(seed);
  KMeansResult res;
  res.centroids = plus_plus_seeds(pts, k, rng);
  res.assignment.assign(n, 0);
  const std::size_t dim = pts.front().size();

  std::vector<std::size_t> prev;
  for (std::size_t iter = 0; iter < kMaxKMeansIterations; ++iter) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double d2 = 0.0;
      res.assignment[i] = nearest(pts[i], res.centroids, &d2);
      inertia += d2;
    }
    res.inertia_trace.push_back(inertia);
    res.iterations = iter + 1;
    if (!prev.empty() && prev == res.assignment) {
      res.converged = true;
      break;
    }
    prev = res.assignment;

    std::vector<Vec> sums(k, Vec(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = sums[res.assignment[i]];
      for (std::size_t j = 0; j < dim; ++j) s[j] += pts[i][j];
      ++counts[res.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      for (double& x : sums[c]) x /= static_cast<double>(counts[c]);
      if (metric == Metric::Cosine && !normalize_in_place(sums[c])) continue;
      res.centroids[c] = std::move(sums[c]);
    }
  }
  return res;
}

std::size_t select_anchor(std::span<const Vec> points, std::span<const std::size_t> members,
                          std::span<const double> centroid, Metric metric) {
  if (members.empty()) throw Error(ErrorCode::EmptyCluster, "cannot select an anchor from an empty cluster");
  std::size_t best = members.front();
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t m : members) {
    // lower is better for both metrics
    const double score = metric == Metric::Cosine ? -cosine_similarity(points[m], centroid)
                                                  : euclidean_distance(points[m], centroid);
    if (score < best_score || (score == best_score && m < best)) {
      best_score = score;
      best = m;
    }
  }
  return best;
}

IqrThreshold iqr_threshold(std::span<const double> distances) {
  std::vector<double> sorted(distances.begin(), distances.end());
  std::sort(sorted.begin(), sorted.end());
  IqrThreshold t;
  t.q1 = quantile_sorted(sorted, 0.25);
  t.q3 = quantile_sorted(sorted, 0.75);
  t.iqr = t.q3 - t.q1;
  t.upper_bound = t.q3 + 1.5 * t.iqr;
  return t;
}

IqrResult iqr_filter(std::span<const Vec> points, std::span<const std::size_t> members,
                     std::span<const double> centroid, Metric metric) {
  if (members.empty()) throw Error(ErrorCode::EmptyCluster, "IQR filter on an empty cluster");
  IqrResult r;
  r.distances.reserve(members.size());
  for (std::size_t m : members) r.distances.push_back(metric_distance(points[m], centroid, metric));
  r.threshold = iqr_threshold(r.distances);
  for (std::size_t i = 0; i < members.size(); ++i) {
    (r.distances[i] < r.threshold.upper_bound ? r.kept : r.removed).push_back(members[i]);
  }
  if (r.kept.empty()) {
    r.degenerate = true;
    r.kept.assign(members.begin(), members.end());
    r.removed.clear();
  }
  r.centroid = centroid_of(points, r.kept, metric);
  return r;
}

std::vector<std::size_t> ClusterModel::anchors() const {
  std::vector<std::size_t> out;
  out.reserve(clusters.size());
  for (const auto& c : clusters) out.push_back(c.anchor);
  return out;
}

std::vector<int> ClusterModel::anchor_labels() const {
  std::vector<int> out;
  out.reserve(clusters.size());
  for (const auto& c : clusters) out.push_back(c.label);
  return out;
}

std::size_t ClusterModel::outlier_count() const {
  return static_cast<std::size_t>(std::count(outlier.begin(), outlier.end(), true));
}

ClusterModel build_cluster_model(std::span<const Vec> points, std::span<const int> labels,
                                 std::span<const std::size_t> subset, const ClusterOptions& opts) {
  if (labels.size() != points.size()) throw Error(ErrorCode::LengthMismatch, "labels and points differ in length");
  ClusterModel model;
  model.metric = opts.metric;
  model.k_per_class = opts.k_per_class;
  model.assignment.assign(points.size(), -1);
  model.outlier.assign(points.size(), false);

  for (int label : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i : subset) {
      if (labels[i] == label) idx.push_back(i);
    }
    if (idx.empty()) continue;
    std::vector<Vec> local;
    local.reserve(idx.size());
    for (std::size_t i : idx) local.push_back(points[i]);

    const std::size_t k = std::min(opts.k_per_class, idx.size());
    const std::uint64_t class_seed = opts.seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(label + 1));
    const auto km = kmeans(local, k, class_seed, opts.metric);

    std::vector<std::vector<std::size_t>> groups(k);
    for (std::size_t j = 0; j < idx.size(); ++j) groups[km.assignment[j]].push_back(idx[j]);

    for (auto& members : groups) {
      if (members.empty()) continue;
      Cluster c;
      c.label = label;
      c.members = members;
      c.centroid = centroid_of(points, members, opts.metric);
      std::vector<std::size_t> kept = members;
      if (opts.remove_outliers) {
        auto f = iqr_filter(points, members, c.centroid, opts.metric);
        c.removed = std::move(f.removed);
        c.centroid = std::move(f.centroid);
        c.degenerate = f.degenerate;
        kept = std::move(f.kept);
      }
      c.anchor = select_anchor(points, kept, c.centroid, opts.metric);
      const int id = static_cast<int>(model.clusters.size());
      for (std::size_t m : c.members) model.assignment[m] = id;
      for (std::size_t m : c.removed) model.outlier[m] = true;
      model.clusters.push_back(std::move(c));
    }
  }
  return model;
}

namespace {

std::string csv_field(std::string s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

}  // namespace

void write_cluster_report(const ClusterModel& model, std::span<const std::string> ids, std::ostream& out) {
  out << "cluster_id,label,size,anchor_id,removed_count\n";
  for (std::size_t c = 0; c < model.clusters.size(); ++c) {
    const auto& cl = model.clusters[c];
    const std::string anchor = csv_field(cl.anchor < ids.size() ? ids[cl.anchor] : std::to_string(cl.anchor));
    out << c << ',' << cl.label << ',' << cl.members.size() << ',' << anchor << ',' << cl.removed.size() << '\n';
  }
}

}  // namespace rvhate
