#pragma once

#include <functional>
#include <vector>

#include "soda/core/domain.hpp"
#include "soda/ingestion/vocab.hpp"

namespace soda {

/// Everything needed to turn a record into model-facing bundles.
struct PreprocessContext {
  FeatureSchema schema;
  Vocabulary vocab;
  int max_len = 64;
  int image_size = 64;
  fs::path image_root;
  /// Overrides disk loading (used for inline payloads and tests).
  std::function<ImageBuffer(const std::string&)> load_frame;

  ImageBuffer frame(const std::string& ref) const {
    ImageBuffer img = load_frame ? load_frame(ref) : read_png(image_root / ref);
    return resize_bilinear(img, image_size, image_size);
  }
};

/// Tabular and text part of a bundle; the image is filled per frame.
inline FeatureBundle encode_shared_features(const AdRecord& record, const PreprocessContext& ctx) {
  FeatureBundle b;
  for (const auto& name : ctx.schema.continuous) b.continuous.push_back(record.continuous_features.at(name));
  for (const auto& field : ctx.schema.categorical) {
    auto it = record.categorical_features.find(field.name);
    b.categorical_ids.push_back(it == record.categorical_features.end() ? 0 : field.id_of(it->second));
  }
  b.token_ids = tokenize(creative_text(record.creative), ctx.vocab, ctx.max_len);
  return b;
}

/// One row per frame; zero-frame creatives get a single all-zero blank frame.
inline std::vector<TrainingRow> expand_creative(const AdRecord& record, CtrClass label,
                                                const PreprocessContext& ctx) {
  const FeatureBundle shared = encode_shared_features(record, ctx);
  std::vector<TrainingRow> rows;
  const auto& frames = record.creative.frames;
  if (frames.empty()) {
    TrainingRow row{shared, label, record.ad_id, 0, record.objective};
    row.bundle.image = ImageBuffer(ctx.image_size, ctx.image_size, 0);
    rows.push_back(std::move(row));
    return rows;
  }
  for (std::size_t i = 0; i < frames.size(); ++i) {
    TrainingRow row{shared, label, record.ad_id, static_cast<int>(i), record.objective};
    try {
      row.bundle.image = ctx.frame(frames[i]);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::UnresolvableImage) throw;
      fail(ErrorCode::PreprocessFailure, "ad " + record.ad_id + " frame " + std::to_string(i) +
                                             ": " + e.what());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace soda
