#pragma once

// Weight vectors for the three attribute matchers: uniform (plain), from
// per-attribute training accuracy, and from the probe's own confidence.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "facesig/error.hpp"
#include "facesig/signature.hpp"

namespace facesig {

inline constexpr double kWeightFloor = 0.01;

struct AttributeAccuracyTable {
  std::map<std::string, double> accuracy;
};

inline WeightVector uniform_weights(std::size_t d) {
  if (d < 1) throw Error(ErrorCode::invalid_argument, "uniform_weights: d must be >= 1");
  return {std::vector<double>(d, 1.0)};
}

/// w_i = max(accuracy_i, 0.01), ordered by `names`. The table must cover
/// exactly the attributes in `names`.
inline WeightVector weights_from_training_accuracy(const AttributeAccuracyTable& table,
                                                   std::span<const std::string> names) {
  if (names.empty()) throw Error(ErrorCode::invalid_argument, "no attribute names");
  WeightVector w;
  w.weights.reserve(names.size());
  for (const auto& name : names) {
    auto it = table.accuracy.find(name);
    if (it == table.accuracy.end())
      throw Error(ErrorCode::invalid_argument, "accuracy table is missing attribute '" + name + "'");
    const double acc = it->second;
    if (!(acc >= 0.0 && acc <= 1.0))
      throw Error(ErrorCode::invalid_argument,
                  "accuracy for '" + name + "' is outside [0,1]");
    w.weights.push_back(std::max(acc, kWeightFloor));
  }
  if (table.accuracy.size() != names.size())
    throw Error(ErrorCode::invalid_argument,
                "accuracy table has attributes outside the active set");
  return w;
}

/// w_i = max(2 |p_i - 0.5|, 0.01): distance of each probe probability from the
/// decision boundary, rescaled to [0, 1].
inline WeightVector weights_from_probe_confidence(const AttributeComponent& probe) {
  if (probe.probabilities.empty())
    throw Error(ErrorCode::invalid_argument, "probe has no attribute probabilities");
  WeightVector w;
  w.weights.reserve(probe.probabilities.size());
  for (double p : probe.probabilities) {
    if (!(p >= 0.0 && p <= 1.0))
      throw Error(ErrorCode::invalid_argument, "probability outside [0,1]");
    w.weights.push_back(std::max(2.0 * std::abs(p - 0.5), kWeightFloor));
  }
  return w;
}

}  // namespace facesig
