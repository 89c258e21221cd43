#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace rvhate {

/// Adaptive-moment optimizer over a flat parameter vector.
struct Adam {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  std::vector<double> m;
  std::vector<double> v;
  long step_count = 0;

  /// Descends along `grad` (pass the negated gradient to ascend).
  void step(std::span<double> params, std::span<const double> grad) {
    if (m.size() != params.size()) {
      m.assign(params.size(), 0.0);
      v.assign(params.size(), 0.0);
    }
    ++step_count;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      params[i] -= learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + epsilon);
    }
  }
};

}  // namespace rvhate
