#pragma once

// Vector primitives and order statistics shared by every stage of the
// pipeline. All functions are pure.

#include <span>
#include <vector>

namespace rvhate {

using Vec = std::vector<double>;

// Throws DimensionMismatch / NonFiniteValue / EmptyInput.
void check_vector(std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

/// Cosine of the angle between a and b, clamped to [-1, 1].
/// Throws ZeroNormVector if either argument has zero norm.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

double euclidean_distance(std::span<const double> a, std::span<const double> b);
double squared_distance(std::span<const double> a, std::span<const double> b);

/// Returns v / ||v||, or all zeros when ||v|| == 0.
Vec normalized(std::span<const double> v);
/// Normalizes in place; returns false (and leaves v untouched) when v is zero.
bool normalize_in_place(std::span<double> v);

enum class QuantileMethod { LinearInterpolation };

struct QuantileSpec {
  double p = 0.5;
  QuantileMethod method = QuantileMethod::LinearInterpolation;
};

/// Order-statistic quantile with h = (n-1)p and linear interpolation between
/// neighbours. Input need not be sorted.
double quantile(std::span<const double> xs, QuantileSpec spec);
/// Same as quantile() but requires xs sorted ascending.
double quantile_sorted(std::span<const double> xs, double p);

double log_sum_exp(std::span<const double> xs);
Vec softmax(std::span<const double> xs);

double mean(std::span<const double> xs);
/// Sample standard deviation (n-1 denominator); 0 for a single value.
double sample_stddev(std::span<const double> xs);

}  // namespace rvhate
