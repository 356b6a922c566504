#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "soda/core/ctr_class.hpp"
#include "soda/error.hpp"

namespace soda {

struct BucketThresholds {
  double t1 = 0.0;
  double t2 = 0.0;
  std::string fitted_on;
  std::size_t n_fitted = 0;

  friend bool operator==(const BucketThresholds&, const BucketThresholds&) = default;
};

inline void to_json(nlohmann::json& j, const BucketThresholds& t) {
  j = {{"t1", t.t1}, {"t2", t.t2}, {"fitted_on", t.fitted_on}, {"n_fitted", t.n_fitted}};
}

inline void from_json(const nlohmann::json& j, BucketThresholds& t) {
  j.at("t1").get_to(t.t1);
  j.at("t2").get_to(t.t2);
  t.fitted_on = j.value("fitted_on", std::string{});
  t.n_fitted = j.value("n_fitted", std::size_t{0});
}

/// Quantile with linear interpolation between order statistics, h = (n-1)p.
inline double interpolated_quantile(std::vector<double> values, double p) {
  require(!values.empty(), ErrorCode::TooFewValues, "quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = static_cast<std::size_t>(std::ceil(h));
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

/// Tertile cut points of a CTR sample.
inline BucketThresholds fit_thresholds(const std::vector<double>& ctr_values, std::string fitted_on = {}) {
  require(ctr_values.size() >= 3, ErrorCode::TooFewValues,
          "need at least 3 CTR values, got " + std::to_string(ctr_values.size()));
  for (double v : ctr_values) {
    require(std::isfinite(v) && v >= 0.0 && v <= 1.0, ErrorCode::InvalidArgument,
            "CTR values must lie in [0,1]");
  }
  BucketThresholds t;
  t.t1 = interpolated_quantile(ctr_values, 1.0 / 3.0);
  t.t2 = interpolated_quantile(ctr_values, 2.0 / 3.0);
  t.fitted_on = std::move(fitted_on);
  t.n_fitted = ctr_values.size();
  return t;
}

/// Below if v < t1, Average if t1 <= v < t2, Above if v >= t2; every value is
/// Average when t1 == t2.
inline CtrClass bucketize(double value, const BucketThresholds& t) {
  if (t.t1 == t.t2) return CtrClass::Average;
  if (value < t.t1) return CtrClass::BelowAverage;
  if (value < t.t2) return CtrClass::Average;
  return CtrClass::AboveAverage;
}

}  // namespace soda
