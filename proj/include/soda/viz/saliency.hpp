#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "soda/core/image.hpp"
#include "soda/error.hpp"
#include "soda/fs.hpp"
#include "soda/nn/fusion.hpp"

namespace soda::viz {

/// G x G patch saliency, row-major, min-max normalized to [0,1].
struct SaliencyMap {
  int grid = 0;
  std::vector<double> values;
  std::string normalization = "min-max";

  double at(int row, int col) const { return values[static_cast<std::size_t>(row * grid + col)]; }
};

/// Full-resolution saliency field, H x W, row-major.
struct SaliencyField {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Min-max normalization; a constant input maps to all zeros.
inline void min_max_normalize(std::vector<double>& v) {
  if (v.empty()) return;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double mn = *lo, mx = *hi;
  if (!(mx > mn)) {
    std::fill(v.begin(), v.end(), 0.0);
    return;
  }
  for (auto& x : v) x = (x - mn) / (mx - mn);
}

/// Attention rollout: per layer the head-mean attention is mixed half-and-half
/// with the identity and row-normalized; layers are multiplied in forward
/// order and the class-token row over patch tokens becomes the map.
inline SaliencyMap rollout(const nn::AttentionTrace& trace) {
  require(!trace.layers.empty() && trace.n_heads() > 0, ErrorCode::EmptyTrace, "attention trace is empty");
  const int tokens = trace.tokens();
  const int n_patches = tokens - 1;
  const int grid = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n_patches))));
  require(n_patches > 0 && grid * grid == n_patches, ErrorCode::DimensionError,
          "attention covers " + std::to_string(n_patches) + " patches, not a square grid");

  using M = nn::Mat<double>;
  M rolled = M::Identity(tokens, tokens);
  for (const auto& layer : trace.layers) {
    M mean = M::Zero(tokens, tokens);
    for (const auto& head : layer) {
      require(head.rows() == tokens && head.cols() == tokens, ErrorCode::DimensionError,
              "attention heads have inconsistent shapes");
      mean += head;
    }
    mean /= static_cast<double>(layer.size());
    M mixed = 0.5 * mean + 0.5 * M::Identity(tokens, tokens);
    for (Eigen::Index i = 0; i < mixed.rows(); ++i) {
      const double s = mixed.row(i).sum();
      if (s > 0) mixed.row(i) /= s;
    }
    rolled = mixed * rolled;
  }
  SaliencyMap map;
  map.grid = grid;
  map.values.resize(static_cast<std::size_t>(n_patches));
  for (int j = 0; j < n_patches; ++j) map.values[static_cast<std::size_t>(j)] = rolled(0, j + 1);
  min_max_normalize(map.values);
  return map;
}

/// Share of total saliency inside the top-left quadrant (0 when the map is all zeros).
inline double top_left_mass(const SaliencyMap& map) {
  const int half = map.grid / 2;
  double inside = 0, total = 0;
  for (int r = 0; r < map.grid; ++r) {
    for (int c = 0; c < map.grid; ++c) {
      total += map.at(r, c);
      if (r < half && c < half) inside += map.at(r, c);
    }
  }
  return total > 0 ? inside / total : 0.0;
}

/// Bilinear upsampling with grid values located at patch centers; edges clamp.
inline SaliencyField upsample(const SaliencyMap& map, int height, int width) {
  require(map.grid > 0 && height >= map.grid && width >= map.grid, ErrorCode::DimensionError,
          "target " + std::to_string(height) + "x" + std::to_string(width) + " smaller than grid " +
              std::to_string(map.grid));
  SaliencyField out{height, width, std::vector<double>(static_cast<std::size_t>(height) * width)};
  const int g = map.grid;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * g / height - 0.5, 0.0, g - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, g - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * g / width - 0.5, 0.0, g - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, g - 1);
      const double wx = fx - x0;
      const double top = (1 - wx) * map.at(y0, x0) + wx * map.at(y0, x1);
      const double bot = (1 - wx) * map.at(y1, x0) + wx * map.at(y1, x1);
      out.values[static_cast<std::size_t>(y) * width + x] = (1 - wy) * top + wy * bot;
    }
  }
  return out;
}

}  // namespace soda::viz
