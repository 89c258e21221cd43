#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "rvhate/clustering.hpp"
#include "support/expect_error.hpp"
#include "support/synthetic.hpp"

using namespace rvhate;

namespace {

std::vector<std::size_t> iota_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

std::vector<Vec> unit_points(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
  std::vector<Vec> pts;
  for (std::size_t i = 0; i < n; ++i) pts.push_back(synth::unit_vec(rng, dim));
  return pts;
}

}  // namespace

TEST(KMeans, SingleClusterIsNormalizedMean) {
  std::mt19937_64 rng(1);
  const auto pts = unit_points(rng, 12, 4);
  const auto r = kmeans(pts, 1, 7);
  Vec mean(4, 0.0);
  for (const auto& p : pts)
    for (std::size_t j = 0; j < 4; ++j) mean[j] += p[j];
  const Vec expect = normalized(mean);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(r.centroids[0][j], expect[j], 1e-12);
}

TEST(KMeans, KEqualsNHasZeroInertia) {
  std::mt19937_64 rng(2);
  const auto pts = unit_points(rng, 9, 3);
  const auto r = kmeans(pts, 9, 3);
  EXPECT_NEAR(r.inertia(), 0.0, 1e-12);
  std::vector<std::size_t> seen = r.assignment;
  std::sort(seen.begin(), seen.end());
  EXPECT_EQ(seen, iota_n(9));
}

TEST(KMeans, SeparatesTwoBlobs) {
  std::mt19937_64 rng(3);
  std::vector<Vec> pts;
  std::vector<int> blob;
  const Vec c0{1, 0, 0}, c1{0, 1, 0};
  for (int i = 0; i < 40; ++i) {
    const Vec& c = i < 20 ? c0 : c1;
    Vec p = synth::gaussian_vec(rng, 3, 0.05);
    for (std::size_t j = 0; j < 3; ++j) p[j] += c[j];
    pts.push_back(normalized(p));
    blob.push_back(i < 20 ? 0 : 1);
  }
  for (Metric m : {Metric::Cosine, Metric::L2}) {
    const auto r = kmeans(pts, 2, 11, m);
    // Same partition as the blob labels, up to renaming.
    for (std::size_t i = 0; i < pts.size(); ++i) {
      EXPECT_EQ(r.assignment[i] == r.assignment[0], blob[i] == blob[0]) << i;
    }
  }
}

TEST(KMeans, InertiaNeverIncreases) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 30; ++t) {
    const auto pts = unit_points(rng, 60, 5);
    for (Metric m : {Metric::Cosine, Metric::L2}) {
      const auto r = kmeans(pts, 6, static_cast<std::uint64_t>(t), m);
      for (std::size_t i = 1; i < r.inertia_trace.size(); ++i) {
        EXPECT_LE(r.inertia_trace[i], r.inertia_trace[i - 1] + 1e-9);
      }
      EXPECT_LE(r.iterations, kMaxKMeansIterations);
    }
  }
}

TEST(KMeans, DeterministicForSeed) {
  std::mt19937_64 rng(5);
  const auto pts = unit_points(rng, 50, 4);
  const auto a = kmeans(pts, 5, 99);
  const auto b = kmeans(pts, 5, 99);
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_EQ(a.centroids, b.centroids);
}

TEST(KMeans, Errors) {
  std::mt19937_64 rng(6);
  const auto pts = unit_points(rng, 3, 2);
  EXPECT_RVHATE_ERROR(kmeans(pts, 4, 0), KTooLarge);
  EXPECT_RVHATE_ERROR(kmeans(pts, 0, 0), InvalidArgument);
}

TEST(Anchor, SingleMember) {
  const std::vector<Vec> pts{{1, 0}, {0, 1}};
  const std::vector<std::size_t> members{1};
  EXPECT_EQ(select_anchor(pts, members, Vec{1, 0}, Metric::Cosine), 1u);
}

TEST(Anchor, ThreeMemberHandCase) {
  const std::vector<Vec> pts{{1, 0}, normalized(Vec{0.9, 0.1}), {0, 1}};
  const auto members = iota_n(3);
  const Vec centroid = centroid_of(pts, members, Metric::Cosine);
  for (Metric m : {Metric::Cosine, Metric::L2}) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 3; ++i) {
      const bool better = m == Metric::Cosine ? synth::oracle_cos(pts[i], centroid) > synth::oracle_cos(pts[best], centroid)
                                              : synth::oracle_l2(pts[i], centroid) < synth::oracle_l2(pts[best], centroid);
      if (better) best = i;
    }
    EXPECT_EQ(select_anchor(pts, members, centroid, m), best);
  }
  EXPECT_EQ(select_anchor(pts, members, centroid, Metric::Cosine), 1u);
}

TEST(Anchor, MetricsCanDisagree) {
  // Off-sphere points: the closest point in angle is far in distance.
  const std::vector<Vec> pts{{10, 1}, {0.5, 0.3}};
  const auto members = iota_n(2);
  const Vec centroid{1, 0};
  EXPECT_EQ(select_anchor(pts, members, centroid, Metric::Cosine), 0u);
  EXPECT_EQ(select_anchor(pts, members, centroid, Metric::L2), 1u);
}

TEST(Anchor, TiesGoToLowestIndex) {
  const std::vector<Vec> pts{{0, 1}, {1, 0}, {1, 0}};
  const std::vector<std::size_t> members{2, 1, 0};
  EXPECT_EQ(select_anchor(pts, members, Vec{1, 0}, Metric::Cosine), 1u);
  EXPECT_EQ(select_anchor(pts, members, Vec{1, 0}, Metric::L2), 1u);
}

TEST(Iqr, HandCase) {
  const auto t = iqr_threshold(Vec{1, 2, 3, 4, 100});
  EXPECT_DOUBLE_EQ(t.q1, 2.0);
  EXPECT_DOUBLE_EQ(t.q3, 4.0);
  EXPECT_DOUBLE_EQ(t.iqr, 2.0);
  EXPECT_DOUBLE_EQ(t.upper_bound, 7.0);
}

TEST(Iqr, FilterRemovesTheFarPoint) {
  // Points on a line from the origin centroid, distances 1,2,3,4,100.
  const std::vector<Vec> pts{{1, 0}, {2, 0}, {3, 0}, {4, 0}, {100, 0}};
  const auto members = iota_n(5);
  const auto r = iqr_filter(pts, members, Vec{0, 0}, Metric::L2);
  EXPECT_EQ(r.removed, std::vector<std::size_t>{4});
  EXPECT_EQ(r.kept.size(), 4u);
  EXPECT_FALSE(r.degenerate);
  EXPECT_DOUBLE_EQ(r.centroid[0], 2.5);
}

TEST(Iqr, EqualDistancesTriggerTheGuard) {
  const std::vector<Vec> pts{{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  const auto members = iota_n(4);
  const auto r = iqr_filter(pts, members, Vec{0, 0}, Metric::L2);
  EXPECT_TRUE(r.degenerate);
  EXPECT_TRUE(r.removed.empty());
  EXPECT_EQ(r.kept.size(), 4u);
}

TEST(Iqr, FilterMatchesOracleOnRandomClusters) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 100; ++t) {
    const auto pts = unit_points(rng, 3 + rng() % 30, 4);
    const auto members = iota_n(pts.size());
    const Vec centroid = centroid_of(pts, members, Metric::Cosine);
    const auto r = iqr_filter(pts, members, centroid, Metric::Cosine);
    std::vector<double> d;
    for (const auto& p : pts) d.push_back(1.0 - synth::oracle_cos(p, centroid));
    const double q1 = synth::oracle_quantile(d, 0.25), q3 = synth::oracle_quantile(d, 0.75);
    const double ub = q3 + 1.5 * (q3 - q1);
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (d[i] < ub) keep.push_back(i);
    if (keep.empty()) {
      EXPECT_TRUE(r.degenerate);
    } else {
      EXPECT_EQ(r.kept, keep);
    }
    EXPECT_EQ(r.kept.size() + r.removed.size(), pts.size());
  }
}

TEST(ClusterModel, PerClassClustersAndAnchors) {
  const auto s = synth::separable_set(120, 8, 4);
  std::vector<Vec> pts;
  for (std::size_t i = 0; i < s.embeddings.count(); ++i) {
    pts.emplace_back(s.embeddings.row(i).begin(), s.embeddings.row(i).end());
  }
  std::vector<int> labels;
  for (const auto& e : s.dataset.examples) labels.push_back(e.label);
  const auto subset = s.dataset.indices_of(Split::Train);
  ClusterOptions opts;
  opts.k_per_class = 4;
  opts.remove_outliers = true;
  const auto m = build_cluster_model(pts, labels, subset, opts);
  EXPECT_LE(m.clusters.size(), 8u);
  EXPECT_GE(m.clusters.size(), 2u);
  for (const auto& c : m.clusters) {
    EXPECT_EQ(labels[c.anchor], c.label);
    EXPECT_TRUE(std::find(c.removed.begin(), c.removed.end(), c.anchor) == c.removed.end());
    for (auto i : c.members) EXPECT_EQ(labels[i], c.label);
  }
  const auto anchors = m.anchors();
  const auto al = m.anchor_labels();
  EXPECT_EQ(anchors.size(), m.clusters.size());
  EXPECT_GE(std::count(al.begin(), al.end(), 1), 1);
  EXPECT_GE(std::count(al.begin(), al.end(), 0), 1);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const bool in_train = s.dataset.examples[i].split == Split::Train;
    EXPECT_EQ(m.assignment[i] >= 0, in_train);
  }
  std::ostringstream csv;
  std::vector<std::string> ids;
  for (const auto& e : s.dataset.examples) ids.push_back(e.id);
  write_cluster_report(m, ids, csv);
  EXPECT_EQ(csv.str().rfind("cluster_id,label,size,anchor_id,removed_count\n", 0), 0u);
}

TEST(ClusterModel, KIsCappedAtClassSize) {
  const std::vector<Vec> pts{{1, 0}, {0, 1}, {0.6, 0.8}};
  const std::vector<int> labels{0, 1, 1};
  const std::vector<std::size_t> subset{0, 1, 2};
  ClusterOptions opts;
  opts.k_per_class = 20;
  const auto m = build_cluster_model(pts, labels, subset, opts);
  EXPECT_EQ(m.clusters.size(), 3u);
}
