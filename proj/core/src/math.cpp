#include "rvhate/math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "rvhate/error.hpp"

namespace rvhate {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroNormVector: return "ZeroNormVector";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::InvalidLabel: return "InvalidLabel";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::EmptyCluster: return "EmptyCluster";
    case ErrorCode::MissingAnchorClass: return "MissingAnchorClass";
    case ErrorCode::NonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::TrainingFailure: return "TrainingFailure";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

ErrorCategory category_of(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::KTooLarge:
    case ErrorCode::EmptyCluster:
    case ErrorCode::MissingAnchorClass:
    case ErrorCode::NonPositiveTemperature:
    case ErrorCode::EmptyBatch:
    case ErrorCode::TrainingFailure:
      return ErrorCategory::Training;
    case ErrorCode::InvariantViolation:
      return ErrorCategory::Internal;
    default:
      return ErrorCategory::Input;
  }
}

namespace {

void require_same_dim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
}

}  // namespace

void check_vector(std::span<const double> v) {
  if (v.empty()) throw Error(ErrorCode::EmptyInput, "vector has dimension 0");
  for (double x : v) {
    if (!std::isfinite(x)) throw Error(ErrorCode::NonFiniteValue, "vector entry is not finite");
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a, b);
  check_vector(a);
  check_vector(b);
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) {
    throw Error(ErrorCode::ZeroNormVector, "cosine similarity of a zero vector");
  }
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a, b);
  check_vector(a);
  check_vector(b);
  return std::sqrt(squared_distance(a, b));
}

Vec normalized(std::span<const double> v) {
  Vec out(v.begin(), v.end());
  if (!normalize_in_place(out)) throw Error(ErrorCode::ZeroNormVector, "cannot normalize a zero vector");
  return out;
}

bool normalize_in_place(std::span<double> v) {
  const double n = l2_norm(v);
  if (n == 0.0) return false;
  for (double& x : v) x /= n;
  return true;
}

double quantile_sorted(std::span<const double> xs, double p) {
  if (xs.empty()) throw Error(ErrorCode::EmptyInput, "quantile of an empty list");
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile p outside [0,1]");
  const double h = static_cast<double>(xs.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= xs.size()) return xs[lo];
  const double frac = h - static_cast<double>(lo);
  return xs[lo] + frac * (xs[lo + 1] - xs[lo]);
}

double quantile(std::span<const double> xs, QuantileSpec spec) {
  std::vector<double> sorted(xs.begin(), xs.end());
  std::sort(sorted.begin(), sorted.end());
  return quantile_sorted(sorted, spec.p);
}

double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

Vec softmax(std::span<const double> xs) {
  const double lse = log_sum_exp(xs);
  Vec out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = std::exp(xs[i] - lse);
  return out;
}

double mean(std::span<const double> xs) {
  if (xs.empty()) throw Error(ErrorCode::EmptyInput, "mean of an empty list");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_stddev(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace rvhate
