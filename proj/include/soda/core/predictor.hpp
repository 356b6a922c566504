#pragma once

#include <array>

#include "soda/core/ctr_class.hpp"
#include "soda/core/domain.hpp"

namespace soda {

using ClassProbabilities = std::array<double, kNumClasses>;

/// Plug-in contract for anything evaluated by the metrics harness.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual ClassProbabilities predict_proba(const FeatureBundle& bundle) const = 0;
};

inline ClassProbabilities one_hot(CtrClass c) {
  ClassProbabilities p{};
  p[static_cast<std::size_t>(index_of(c))] = 1.0;
  return p;
}

}  // namespace soda
