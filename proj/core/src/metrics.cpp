#include "rvhate/metrics.hpp"

#include <string>

#include "rvhate/error.hpp"

namespace rvhate {

Confusion confusion(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(preds.size()) + " predictions for " +
                                               std::to_string(labels.size()) + " labels");
  }
  Confusion c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int p = preds[i];
    const int y = labels[i];
    if ((p != 0 && p != 1) || (y != 0 && y != 1)) throw Error(ErrorCode::InvalidLabel, "labels must be 0 or 1");
    if (y == 1) {
      (p == 1 ? c.tp : c.fn)++;
    } else {
      (p == 1 ? c.fp : c.tn)++;
    }
  }
  return c;
}

double class_f1(const Confusion& c, int positive_class) {
  // For class 0 the roles of the counts swap.
  const double tp = static_cast<double>(positive_class == 1 ? c.tp : c.tn);
  const double fp = static_cast<double>(positive_class == 1 ? c.fp : c.fn);
  const double fn = static_cast<double>(positive_class == 1 ? c.fn : c.fp);
  const double denom = 2.0 * tp + fp + fn;
  return denom == 0.0 ? 0.0 : 2.0 * tp / denom;
}

double macro_f1(const Confusion& c) { return 0.5 * (class_f1(c, 0) + class_f1(c, 1)); }

double macro_f1(std::span<const int> preds, std::span<const int> labels) {
  if (labels.empty() && preds.empty()) throw Error(ErrorCode::EmptyInput, "macro-F1 of zero examples");
  return macro_f1(confusion(preds, labels));
}

}  // namespace rvhate
