#pragma once

#include <array>
#include <string>

#include <nlohmann/json.hpp>

#include "soda/core/image.hpp"
#include "soda/viz/saliency.hpp"

namespace soda::viz {

enum class Colormap { BlueRed, Gray };

inline std::string to_string(Colormap c) { return c == Colormap::Gray ? "gray" : "blue_red"; }

inline Colormap parse_colormap(const std::string& s) {
  if (s == "blue_red") return Colormap::BlueRed;
  if (s == "gray") return Colormap::Gray;
  fail(ErrorCode::InvalidArgument, "unknown colormap " + s);
}

/// RGB in [0,255] for a saliency value in [0,1].
inline std::array<double, 3> apply_colormap(Colormap c, double s) {
  s = std::clamp(s, 0.0, 1.0);
  if (c == Colormap::Gray) return {255.0 * s, 255.0 * s, 255.0 * s};
  return {255.0 * s, 0.0, 255.0 * (1.0 - s)};
}

struct HeatmapOverlay {
  ImageBuffer image;
  double alpha = 0.5;
  Colormap colormap = Colormap::BlueRed;
};

/// out = (1 - alpha) * banner + alpha * colormap(saliency), rounded per channel.
inline HeatmapOverlay render_overlay(const ImageBuffer& banner, const SaliencyField& saliency, double alpha,
                                     Colormap colormap = Colormap::BlueRed) {
  require(saliency.height == banner.height() && saliency.width == banner.width(), ErrorCode::DimensionError,
          "saliency field does not match banner dimensions");
  require(alpha >= 0.0 && alpha <= 1.0, ErrorCode::InvalidArgument, "alpha must lie in [0,1]");
  HeatmapOverlay out{ImageBuffer(banner.height(), banner.width()), alpha, colormap};
  for (int y = 0; y < banner.height(); ++y) {
    for (int x = 0; x < banner.width(); ++x) {
      const auto color = apply_colormap(colormap, saliency.at(y, x));
      for (int c = 0; c < 3; ++c) {
        out.image.at(y, x, c) = clamp_channel((1.0 - alpha) * banner.at(y, x, c) + alpha * color[static_cast<std::size_t>(c)]);
      }
    }
  }
  return out;
}

inline nlohmann::json grid_json(const SaliencyMap& map) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < map.grid; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < map.grid; ++c) row.push_back(map.at(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json sidecar_json(const HeatmapOverlay& overlay, const SaliencyMap& map, const std::string& model_id,
                                   const std::string& ad_id) {
  return {{"grid", grid_json(map)},
          {"alpha", overlay.alpha},
          {"colormap", to_string(overlay.colormap)},
          {"model_id", model_id},
          {"ad_id", ad_id}};
}

inline SaliencyMap map_from_sidecar(const nlohmann::json& j) {
  SaliencyMap m;
  const auto& rows = j.at("grid");
  m.grid = static_cast<int>(rows.size());
  for (const auto& row : rows) {
    require(static_cast<int>(row.size()) == m.grid, ErrorCode::DimensionError, "sidecar grid is not square");
    for (const auto& v : row) m.values.push_back(v.get<double>());
  }
  return m;
}

struct ExportedHeatmap {
  fs::path image;
  fs::path sidecar;
};

/// Writes <prefix>.png and <prefix>.json.
inline ExportedHeatmap export_heatmap(const HeatmapOverlay& overlay, const SaliencyMap& map,
                                      const fs::path& path_prefix, const std::string& model_id,
                                      const std::string& ad_id) {
  const fs::path dir = path_prefix.parent_path().empty() ? fs::path(".") : path_prefix.parent_path();
  if (!fs::is_directory(dir)) fail(ErrorCode::IoError, "output directory does not exist: " + dir.string());
  ExportedHeatmap out{fs::path(path_prefix.string() + ".png"), fs::path(path_prefix.string() + ".json")};
  write_png(out.image, overlay.image);
  write_atomic(out.sidecar, sidecar_json(overlay, map, model_id, ad_id).dump() + "\n");
  return out;
}

}  // namespace soda::viz
