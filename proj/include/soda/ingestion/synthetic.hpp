#pragma once

#include <array>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "soda/core/domain.hpp"
#include "soda/ingestion/corpus.hpp"
#include "soda/rng.hpp"

namespace soda {

struct SyntheticSpec {
  int n_ads = 300;
  int n_brands = 4;
  int image_size = 64;
  double signal_quadrant_strength = 0.8;
  double tabular_signal_strength = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    require(n_ads > 0, ErrorCode::InvalidArgument, "n_ads must be positive");
    require(n_brands > 0, ErrorCode::InvalidArgument, "n_brands must be positive");
    require(image_size >= 8, ErrorCode::InvalidArgument, "image_size must be >= 8");
    require(signal_quadrant_strength >= 0 && signal_quadrant_strength <= 1,
            ErrorCode::InvalidArgument, "signal_quadrant_strength must be in [0,1]");
    require(tabular_signal_strength >= 0 && tabular_signal_strength <= 1,
            ErrorCode::InvalidArgument, "tabular_signal_strength must be in [0,1]");
  }
};

struct SyntheticCorpus {
  CorpusManifest manifest;
  std::vector<AdRecord> records;
  std::vector<CtrClass> latent;                  // parallel to records
  std::map<std::string, ImageBuffer> images;    // relative path -> image
};

namespace synth {

inline const std::vector<std::string> kPositiveKeywords = {"exclusive", "bonus", "free", "unlimited",
                                                           "reward"};
inline const std::vector<std::string> kNegativeKeywords = {"restrictions", "fees", "conditions",
                                                           "delay", "surcharge"};
inline const std::vector<std::string> kNeutralWords = {
    "fast",   "net",    "plan",    "game",   "home",   "fiber",  "mobile", "deal",
    "family", "data",   "stream",  "connect", "speed", "city",   "night",  "weekend",
    "watch",  "play",   "share",   "music",  "travel", "phone",  "device", "signal",
    "today",  "new",    "better",  "simple", "smart",  "online"};
inline const std::vector<std::string> kCallsToAction = {"Learn More", "Shop Now", "Sign Up",
                                                        "Get Offer", "Download"};
inline const std::vector<std::string> kObjectives = {"Conversion", "Traffic", "Awareness"};

inline const FeatureSchema& schema() {
  static const FeatureSchema s{
      {"log_spend", "log_impressions", "days_active", "engagement_score"},
      {{"placement", {"feed", "stories", "reels", "right_column"}},
       {"device", {"mobile", "desktop", "tablet"}},
       {"age_band", {"18-24", "25-34", "35-44", "45+"}}}};
  return s;
}

template <class T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  return v[rng.below(v.size())];
}

inline std::string words(Rng& rng, int n) {
  std::string out;
  for (int i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += pick(rng, kNeutralWords);
  }
  return out;
}

inline std::string padded(const char* prefix, int value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*d", prefix, width, value);
  return buf;
}

/// Noisy background with distractor rectangles outside the top-left quadrant;
/// the top-left quadrant is shifted by +/- lift for the planted classes.
inline ImageBuffer render_frame(Rng& rng, int size, CtrClass cls, double strength) {
  ImageBuffer img(size, size);
  std::array<int, 3> base{};
  for (auto& b : base) b = 70 + static_cast<int>(rng.below(81));
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      for (int c = 0; c < 3; ++c) {
        img.at(y, x, c) = clamp_channel(base[c] + rng.uniform(-20.0, 20.0));
      }
    }
  }
  const int half = size / 2;
  const int n_rects = 1 + static_cast<int>(rng.below(3));
  for (int k = 0; k < n_rects; ++k) {
    const int quadrant = 1 + static_cast<int>(rng.below(3));  // never top-left
    const int qy = (quadrant / 2) * half;
    const int qx = (quadrant % 2) * half;
    const int h = 4 + static_cast<int>(rng.below(static_cast<std::uint64_t>(half - 4)));
    const int w = 4 + static_cast<int>(rng.below(static_cast<std::uint64_t>(half - 4)));
    const int y0 = qy + static_cast<int>(rng.below(static_cast<std::uint64_t>(half - h + 1)));
    const int x0 = qx + static_cast<int>(rng.below(static_cast<std::uint64_t>(half - w + 1)));
    std::array<int, 3> color{};
    for (auto& c : color) c = static_cast<int>(rng.below(256));
    for (int y = y0; y < y0 + h; ++y) {
      for (int x = x0; x < x0 + w; ++x) {
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<std::uint8_t>(color[c]);
      }
    }
  }
  if (cls != CtrClass::Average) {
    const double lift = (cls == CtrClass::AboveAverage ? 1.0 : -1.0) * strength * 255.0 * 0.5;
    for (int y = 0; y < half; ++y) {
      for (int x = 0; x < half; ++x) {
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = clamp_channel(img.at(y, x, c) + lift);
      }
    }
  }
  return img;
}

/// Class-disjoint CTR ranges, so tertile bucketing recovers the latent class
/// whenever classes are balanced.
inline double draw_ctr(Rng& rng, CtrClass cls) {
  switch (cls) {
    case CtrClass::BelowAverage: return rng.uniform(0.004, 0.012);
    case CtrClass::Average: return rng.uniform(0.016, 0.024);
    case CtrClass::AboveAverage: return rng.uniform(0.030, 0.045);
  }
  return 0.02;
}

}  // namespace synth

/// Deterministic corpus with planted signal in image, text and one tabular column.
inline SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SyntheticCorpus out;
  out.manifest.corpus_id = "synthetic-n" + std::to_string(spec.n_ads) + "-s" + std::to_string(spec.seed);
  out.manifest.records_path = "records.jsonl";
  out.manifest.images_dir = "images";
  out.manifest.schema = synth::schema();
  out.manifest.objectives = synth::kObjectives;

  // Balanced latent classes.
  std::vector<CtrClass> classes(static_cast<std::size_t>(spec.n_ads));
  for (int i = 0; i < spec.n_ads; ++i) classes[static_cast<std::size_t>(i)] = class_from_index(i % 3);
  rng.shuffle(classes);

  std::vector<std::string> brands;
  for (int b = 0; b < spec.n_brands; ++b) brands.push_back(synth::padded("brand_", b + 1, 2));

  for (int i = 0; i < spec.n_ads; ++i) {
    const CtrClass cls = classes[static_cast<std::size_t>(i)];
    AdRecord r;
    r.ad_id = synth::padded("ad_", i + 1, 5);
    const int brand_idx = static_cast<int>(rng.below(brands.size()));
    const int campaign = static_cast<int>(rng.below(synth::kObjectives.size()));
    const int adset = static_cast<int>(rng.below(2));
    r.campaign_id = brands[static_cast<std::size_t>(brand_idx)] + "_c" + std::to_string(campaign + 1);
    r.adset_id = r.campaign_id + "_s" + std::to_string(adset + 1);
    r.objective = synth::kObjectives[static_cast<std::size_t>(campaign)];
    r.creative.creative_id = "cr_" + r.ad_id.substr(3);
    r.creative.brand = brands[static_cast<std::size_t>(brand_idx)];

    std::vector<std::string> head;
    const int n_head = 2 + static_cast<int>(rng.below(3));
    for (int k = 0; k < n_head; ++k) head.push_back(synth::pick(rng, synth::kNeutralWords));
    if (cls == CtrClass::AboveAverage) head.push_back(synth::pick(rng, synth::kPositiveKeywords));
    if (cls == CtrClass::BelowAverage) head.push_back(synth::pick(rng, synth::kNegativeKeywords));
    rng.shuffle(head);
    for (std::size_t k = 0; k < head.size(); ++k) r.creative.headline += (k ? " " : "") + head[k];
    r.creative.body = synth::words(rng, 4 + static_cast<int>(rng.below(5)));
    r.creative.call_to_action = synth::pick(rng, synth::kCallsToAction);

    const int n_frames = rng.bernoulli(0.2) ? 2 : 1;
    for (int f = 0; f < n_frames; ++f) {
      const std::string ref = r.ad_id + "_f" + std::to_string(f) + ".png";
      out.images[ref] = synth::render_frame(rng, spec.image_size, cls, spec.signal_quadrant_strength);
      r.creative.frames.push_back(ref);
    }

    const double centered = index_of(cls) - 1.0;
    r.continuous_features["log_spend"] = rng.normal(5.0, 1.0);
    r.continuous_features["log_impressions"] = rng.normal(9.0, 1.0);
    r.continuous_features["days_active"] = rng.uniform(1.0, 30.0);
    r.continuous_features["engagement_score"] =
        rng.normal() + 1.5 * spec.tabular_signal_strength * centered;
    for (const auto& field : synth::schema().categorical) {
      r.categorical_features[field.name] = synth::pick(rng, field.vocabulary);
    }
    r.observed_ctr = synth::draw_ctr(rng, cls);
    out.records.push_back(std::move(r));
    out.latent.push_back(cls);
  }
  return out;
}

/// Writes manifest.json, records.jsonl and images/ under dir.
inline fs::path write_corpus(const SyntheticCorpus& corpus, const fs::path& dir) {
  fs::create_directories(dir / corpus.manifest.images_dir);
  for (const auto& [ref, img] : corpus.images) write_png(dir / corpus.manifest.images_dir / ref, img);
  write_atomic(dir / corpus.manifest.records_path, records_to_jsonl(corpus.records));
  const fs::path manifest = dir / "manifest.json";
  write_atomic(manifest, corpus.manifest.to_json().dump(2) + "\n");
  return manifest;
}

}  // namespace soda
