#pragma once

#include "soda/nn/model.hpp"
#include "soda/viz/overlay.hpp"
#include "soda/viz/saliency.hpp"

namespace soda::viz {

struct AdHeatmap {
  int frame = 0;
  SaliencyMap map;
  HeatmapOverlay overlay;  // at the frame's original resolution
  nn::PredictionResult prediction;  // for this frame only
};

/// Rollout saliency for one frame of a record, blended over the frame at its
/// original resolution.
inline AdHeatmap ad_heatmap(const nn::CtrModel& model, const AdRecord& record, const PreprocessContext& ctx,
                            int frame = 0, double alpha = 0.5, Colormap colormap = Colormap::BlueRed) {
  const auto& frames = record.creative.frames;
  require(!frames.empty(), ErrorCode::PreconditionFailed, "ad " + record.ad_id + " has no frames");
  require(frame >= 0 && static_cast<std::size_t>(frame) < frames.size(), ErrorCode::InvalidArgument,
          "frame " + std::to_string(frame) + " out of range for " + std::to_string(frames.size()) + " frames");
  require(alpha >= 0.0 && alpha <= 1.0, ErrorCode::InvalidArgument, "alpha must lie in [0,1]");
  const auto& ref = frames[static_cast<std::size_t>(frame)];
  const ImageBuffer original = ctx.load_frame ? ctx.load_frame(ref) : read_png(ctx.image_root / ref);

  FeatureBundle bundle = encode_shared_features(record, ctx);
  bundle.image = resize_bilinear(original, ctx.image_size, ctx.image_size);
  AdHeatmap out;
  out.frame = frame;
  out.prediction = model.forward(bundle, true);
  out.map = rollout(*out.prediction.attention);
  out.overlay = render_overlay(original, upsample(out.map, original.height(), original.width()), alpha, colormap);
  return out;
}

}  // namespace soda::viz
