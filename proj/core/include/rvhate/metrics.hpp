#pragma once

#include <cstddef>
#include <span>

namespace rvhate {

struct Confusion {
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tp = 0;

  std::size_t total() const noexcept { return tn + fp + fn + tp; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

/// Binary counts with label 1 as the positive class.
Confusion confusion(std::span<const int> preds, std::span<const int> labels);

/// F1 of one class; 0 when precision + recall is 0.
double class_f1(const Confusion& c, int positive_class);

/// Unweighted mean of the class-0 and class-1 F1 scores.
double macro_f1(std::span<const int> preds, std::span<const int> labels);
double macro_f1(const Confusion& c);

}  // namespace rvhate
