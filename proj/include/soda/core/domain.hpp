#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "soda/core/ctr_class.hpp"
#include "soda/core/image.hpp"
#include "soda/error.hpp"
#include "soda/fs.hpp"

namespace soda {

using json = nlohmann::json;

struct Creative {
  std::string creative_id;
  std::string headline;
  std::string body;
  std::string call_to_action;
  std::vector<std::string> frames;  // relative image paths
  std::string brand;

  friend bool operator==(const Creative&, const Creative&) = default;
};

struct AdRecord {
  std::string ad_id;
  std::string campaign_id;
  std::string adset_id;
  std::string objective;
  Creative creative;
  std::map<std::string, double> continuous_features;
  std::map<std::string, std::string> categorical_features;
  std::optional<double> observed_ctr;

  friend bool operator==(const AdRecord&, const AdRecord&) = default;
};

struct CategoricalField {
  std::string name;
  std::vector<std::string> vocabulary;

  /// Id 0 is reserved for tokens outside the declared vocabulary.
  int vocab_size() const { return static_cast<int>(vocabulary.size()) + 1; }

  int id_of(const std::string& token) const {
    for (std::size_t i = 0; i < vocabulary.size(); ++i) {
      if (vocabulary[i] == token) return static_cast<int>(i) + 1;
    }
    return 0;
  }

  friend bool operator==(const CategoricalField&, const CategoricalField&) = default;
};

/// Column set shared by every record of one corpus.
struct FeatureSchema {
  std::vector<std::string> continuous;
  std::vector<CategoricalField> categorical;

  std::vector<int> categorical_vocab_sizes() const {
    std::vector<int> out;
    for (const auto& f : categorical) out.push_back(f.vocab_size());
    return out;
  }

  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;
};

struct FeatureBundle {
  std::vector<double> continuous;
  std::vector<int> categorical_ids;
  std::vector<int> token_ids;
  ImageBuffer image;

  friend bool operator==(const FeatureBundle&, const FeatureBundle&) = default;
};

struct TrainingRow {
  FeatureBundle bundle;
  CtrClass label = CtrClass::Average;
  std::string source_ad_id;
  int frame_index = 0;
  std::string objective;  // carried for per-objective evaluation
};

/// Validates a record against the corpus schema. When image_root is given,
/// every frame must resolve to an existing file under it.
/// Returns the record unchanged, or throws ValidationError listing every violation.
inline const AdRecord& validate_ad(const AdRecord& record, const FeatureSchema& schema,
                                   const std::optional<fs::path>& image_root = std::nullopt) {
  std::vector<Violation> v;
  auto need = [&](const std::string& value, const char* field) {
    if (value.empty()) v.push_back({ErrorCode::MissingField, field, "must be non-empty"});
  };
  need(record.ad_id, "ad_id");
  need(record.campaign_id, "campaign_id");
  need(record.adset_id, "adset_id");
  need(record.creative.creative_id, "creative_id");

  if (record.observed_ctr) {
    const double ctr = *record.observed_ctr;
    if (!(ctr >= 0.0 && ctr <= 1.0)) {
      v.push_back({ErrorCode::CtrOutOfRange, "observed_ctr",
                   "value " + std::to_string(ctr) + " outside [0,1]"});
    }
  }

  for (const auto& name : schema.continuous) {
    auto it = record.continuous_features.find(name);
    if (it == record.continuous_features.end()) {
      v.push_back({ErrorCode::SchemaMismatch, "continuous." + name, "missing"});
    } else if (!std::isfinite(it->second)) {
      v.push_back({ErrorCode::SchemaMismatch, "continuous." + name, "not finite"});
    }
  }
  for (const auto& [name, _] : record.continuous_features) {
    if (std::find(schema.continuous.begin(), schema.continuous.end(), name) ==
        schema.continuous.end()) {
      v.push_back({ErrorCode::SchemaMismatch, "continuous." + name, "not in schema"});
    }
  }
  for (const auto& field : schema.categorical) {
    if (!record.categorical_features.contains(field.name)) {
      v.push_back({ErrorCode::SchemaMismatch, "categorical." + field.name, "missing"});
    }
  }
  for (const auto& [name, _] : record.categorical_features) {
    const bool known = std::any_of(schema.categorical.begin(), schema.categorical.end(),
                                   [&](const CategoricalField& f) { return f.name == name; });
    if (!known) v.push_back({ErrorCode::SchemaMismatch, "categorical." + name, "not in schema"});
  }

  if (image_root) {
    for (std::size_t i = 0; i < record.creative.frames.size(); ++i) {
      const fs::path p = *image_root / record.creative.frames[i];
      if (!fs::is_regular_file(p)) {
        v.push_back({ErrorCode::UnresolvableImage, "frames[" + std::to_string(i) + "]",
                     p.string()});
      }
    }
  }

  if (!v.empty()) throw ValidationError(std::move(v));
  return record;
}

// JSON wire format for one record line.

inline json to_json(const AdRecord& r) {
  json j;
  j["ad_id"] = r.ad_id;
  j["campaign_id"] = r.campaign_id;
  j["adset_id"] = r.adset_id;
  j["objective"] = r.objective;
  j["creative_id"] = r.creative.creative_id;
  j["brand"] = r.creative.brand;
  j["headline"] = r.creative.headline;
  j["body"] = r.creative.body;
  j["call_to_action"] = r.creative.call_to_action;
  j["frames"] = r.creative.frames;
  j["continuous"] = r.continuous_features;
  j["categorical"] = r.categorical_features;
  j["observed_ctr"] = r.observed_ctr ? json(*r.observed_ctr) : json(nullptr);
  return j;
}

/// Parses one record object. Missing text fields are treated as empty and
/// caught by validate_ad; type errors throw.
inline AdRecord ad_from_json(const json& j) {
  if (!j.is_object()) fail(ErrorCode::InvalidArgument, "record must be a JSON object");
  auto text = [&](const char* key) -> std::string {
    if (!j.contains(key) || j[key].is_null()) return {};
    if (!j[key].is_string()) fail(ErrorCode::InvalidArgument, std::string(key) + " must be text");
    return j[key].get<std::string>();
  };
  AdRecord r;
  r.ad_id = text("ad_id");
  r.campaign_id = text("campaign_id");
  r.adset_id = text("adset_id");
  r.objective = text("objective");
  r.creative.creative_id = j.contains("creative_id") ? text("creative_id") : r.ad_id;
  r.creative.brand = text("brand");
  r.creative.headline = text("headline");
  r.creative.body = text("body");
  r.creative.call_to_action = text("call_to_action");
  if (j.contains("frames") && !j["frames"].is_null()) {
    r.creative.frames = j["frames"].get<std::vector<std::string>>();
  }
  if (j.contains("continuous") && !j["continuous"].is_null()) {
    r.continuous_features = j["continuous"].get<std::map<std::string, double>>();
  }
  if (j.contains("categorical") && !j["categorical"].is_null()) {
    r.categorical_features = j["categorical"].get<std::map<std::string, std::string>>();
  }
  if (j.contains("observed_ctr") && !j["observed_ctr"].is_null()) {
    if (!j["observed_ctr"].is_number()) fail(ErrorCode::InvalidArgument, "observed_ctr must be a number");
    r.observed_ctr = j["observed_ctr"].get<double>();
  }
  return r;
}

inline json to_json(const FeatureSchema& s) {
  json cats = json::array();
  for (const auto& f : s.categorical) cats.push_back({{"name", f.name}, {"vocabulary", f.vocabulary}});
  return {{"continuous", s.continuous}, {"categorical", cats}};
}

inline FeatureSchema schema_from_json(const json& continuous, const json& categorical) {
  FeatureSchema s;
  s.continuous = continuous.get<std::vector<std::string>>();
  for (const auto& c : categorical) {
    s.categorical.push_back(
        {c.at("name").get<std::string>(), c.at("vocabulary").get<std::vector<std::string>>()});
  }
  return s;
}

}  // namespace soda
