#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rvhate/math.hpp"

namespace rvhate {

enum class Metric { Cosine, L2 };

std::string_view to_string(Metric m) noexcept;
std::optional<Metric> parse_metric(std::string_view s) noexcept;

/// Distance used for anchor ranking and outlier thresholds: 1 - cos under
/// the cosine metric, Euclidean under l2.
double metric_distance(std::span<const double> point, std::span<const double> centroid, Metric metric);

/// Mean of the selected points, L2-renormalized under the cosine metric.
Vec centroid_of(std::span<const Vec> points, std::span<const std::size_t> members, Metric metric);

struct KMeansResult {
  std::vector<Vec> centroids;
  std::vector<std::size_t> assignment;   // point -> cluster
  std::vector<double> inertia_trace;     // one entry per assignment step
  std::size_t iterations = 0;
  bool converged = false;

  double inertia() const { return inertia_trace.empty() ? 0.0 : inertia_trace.back(); }
};

inline constexpr std::size_t kMaxKMeansIterations = 100;

/// Lloyd's algorithm with k-means++ seeding. Under the cosine metric points
/// are L2-normalized and centroids renormalized after each update (spherical
/// k-means); assignment uses squared Euclidean distance in both cases.
KMeansResult kmeans(std::span<const Vec> points, std::size_t k, std::uint64_t seed,
                    Metric metric = Metric::Cosine);

/// Member closest to the centroid (max cosine / min Euclidean). Ties go to
/// the lowest point index.
std::size_t select_anchor(std::span<const Vec> points, std::span<const std::size_t> members,
                          std::span<const double> centroid, Metric metric);

struct IqrThreshold {
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
  double upper_bound = 0.0;
};

/// Q1/Q3 by linear interpolation, upper bound Q3 + 1.5 * IQR.
IqrThreshold iqr_threshold(std::span<const double> distances);

struct IqrResult {
  std::vector<std::size_t> kept;
  std::vector<std::size_t> removed;
  Vec centroid;               // recomputed over kept
  std::vector<double> distances;  // parallel to the input members
  IqrThreshold threshold;
  bool degenerate = false;    // every member was at or above the bound; nothing removed
};

/// Keeps members whose distance to the centroid is strictly below the upper
/// bound and recomputes the centroid over the survivors.
IqrResult iqr_filter(std::span<const Vec> points, std::span<const std::size_t> members,
                     std::span<const double> centroid, Metric metric);

struct Cluster {
  int label = 0;
  std::vector<std::size_t> members;  // every point assigned here, outliers included
  std::vector<std::size_t> removed;
  Vec centroid;
  std::size_t anchor = 0;
  bool degenerate = false;
};

struct ClusterOptions {
  std::size_t k_per_class = 20;
  Metric metric = Metric::Cosine;
  std::uint64_t seed = 0;
  bool remove_outliers = false;
};

struct ClusterModel {
  Metric metric = Metric::Cosine;
  std::size_t k_per_class = 0;
  std::vector<Cluster> clusters;
  std::vector<int> assignment;  // point -> cluster id, -1 when not clustered
  std::vector<bool> outlier;

  std::vector<std::size_t> anchors() const;
  std::vector<int> anchor_labels() const;
  std::size_t outlier_count() const;
};

/// Clusters each label of `subset` separately (class-pure clusters), then
/// optionally applies the IQR filter and selects one anchor per cluster.
/// k is capped at the class size.
ClusterModel build_cluster_model(std::span<const Vec> points, std::span<const int> labels,
                                 std::span<const std::size_t> subset, const ClusterOptions& opts);

/// CSV: cluster_id,label,size,anchor_id,removed_count
void write_cluster_report(const ClusterModel& model, std::span<const std::string> ids, std::ostream& out);

}  // namespace rvhate
