#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <vector>

#include "soda/nn/fusion.hpp"

namespace soda::nn {

/// Addresses one scalar inside a parameter struct.
struct Coordinate {
  std::size_t tensor = 0;
  Eigen::Index offset = 0;
};

/// Uniform sample of distinct coordinates over all parameters.
template <class P>
std::vector<Coordinate> sample_coordinates(const P& params, std::size_t count, std::uint64_t seed) {
  const auto ts = tensors(params);
  std::vector<std::size_t> starts;
  std::size_t total = 0;
  for (const auto& t : ts) {
    starts.push_back(total);
    total += static_cast<std::size_t>(t.value->size());
  }
  count = std::min(count, total);
  Rng rng(seed);
  std::set<std::size_t> chosen;
  while (chosen.size() < count) chosen.insert(static_cast<std::size_t>(rng.below(total)));
  std::vector<Coordinate> out;
  for (std::size_t flat : chosen) {
    const auto it = std::upper_bound(starts.begin(), starts.end(), flat);
    const auto t = static_cast<std::size_t>(std::distance(starts.begin(), it) - 1);
    out.push_back({t, static_cast<Eigen::Index>(flat - starts[t])});
  }
  return out;
}

template <class P>
typename P::Scalar& coordinate(P& params, const Coordinate& c) {
  return tensors(params)[c.tensor].value->data()[c.offset];
}

/// Central difference (L(x+eps) - L(x-eps)) / 2eps along one coordinate.
template <class P>
double numeric_gradient(P params, const std::function<double(const P&)>& loss, const Coordinate& c,
                        double epsilon) {
  auto& x = coordinate(params, c);
  const auto saved = x;
  x = saved + static_cast<typename P::Scalar>(epsilon);
  const double up = loss(params);
  x = saved - static_cast<typename P::Scalar>(epsilon);
  const double down = loss(params);
  x = saved;
  return (up - down) / (2.0 * epsilon);
}

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

struct GradientCheckReport {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
};

/// Compares an analytic gradient against central finite differences on a
/// sample of coordinates and returns the worst relative error.
template <class P>
GradientCheckReport check_gradients(const P& params, const std::function<double(const P&)>& loss,
                                    const std::function<P(const P&)>& gradient, double epsilon,
                                    std::size_t n_coordinates, std::uint64_t seed) {
  const P analytic = gradient(params);
  GradientCheckReport report;
  for (const auto& c : sample_coordinates(params, n_coordinates, seed)) {
    const double ga = static_cast<double>(tensors(analytic)[c.tensor].value->data()[c.offset]);
    const double gn = numeric_gradient(params, loss, c, epsilon);
    report.max_relative_error = std::max(report.max_relative_error, relative_error(ga, gn));
    ++report.coordinates;
  }
  return report;
}

/// Fusion-network specialization: mean cross-entropy over a small batch,
/// dropout disabled, 64-bit arithmetic.
inline GradientCheckReport check_fusion_gradients(const FusionParams<double>& params,
                                                  const std::vector<PreparedInput<double>>& batch,
                                                  const std::vector<CtrClass>& labels,
                                                  double epsilon = 1e-5,
                                                  std::size_t n_coordinates = 200,
                                                  std::uint64_t seed = 0) {
  require(!batch.empty() && batch.size() <= 4 && batch.size() == labels.size(),
          ErrorCode::InvalidArgument, "gradient check expects 1..4 labelled rows");
  std::vector<const PreparedInput<double>*> ptrs;
  for (const auto& b : batch) ptrs.push_back(&b);
  std::function<double(const FusionParams<double>&)> loss = [&](const FusionParams<double>& p) {
    return fusion_batch_loss(p, ptrs, labels, 0.0, nullptr, nullptr);
  };
  std::function<FusionParams<double>(const FusionParams<double>&)> grad =
      [&](const FusionParams<double>& p) {
        FusionParams<double> g = zeros_like(p);
        fusion_batch_loss(p, ptrs, labels, 0.0, nullptr, &g);
        return g;
      };
  return check_gradients(params, loss, grad, epsilon, n_coordinates, seed);
}

}  // namespace soda::nn
