#pragma once

#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "soda/core/domain.hpp"
#include "soda/core/expand.hpp"
#include "soda/fs.hpp"
#include "soda/rng.hpp"

namespace soda {

struct CorpusManifest {
  std::string corpus_id;
  fs::path records_path;  // resolved against base_dir when relative
  fs::path images_dir;
  FeatureSchema schema;
  std::vector<std::string> objectives;
  fs::path base_dir;  // directory of the manifest file; not serialized

  fs::path resolved_records() const {
    return records_path.is_absolute() ? records_path : base_dir / records_path;
  }
  fs::path resolved_images() const {
    return images_dir.is_absolute() ? images_dir : base_dir / images_dir;
  }

  json to_json() const {
    json cats = soda::to_json(schema)["categorical"];
    return {{"corpus_id", corpus_id},
            {"records_path", records_path.generic_string()},
            {"images_dir", images_dir.generic_string()},
            {"continuous_schema", schema.continuous},
            {"categorical_schema", cats},
            {"objectives", objectives}};
  }

  static CorpusManifest from_json(const json& j, fs::path base_dir = {}) {
    CorpusManifest m;
    try {
      m.corpus_id = j.at("corpus_id").get<std::string>();
      m.records_path = j.at("records_path").get<std::string>();
      m.images_dir = j.at("images_dir").get<std::string>();
      m.schema = schema_from_json(j.at("continuous_schema"), j.at("categorical_schema"));
      m.objectives = j.value("objectives", std::vector<std::string>{});
    } catch (const json::exception& e) {
      fail(ErrorCode::ParseError, std::string("manifest: ") + e.what());
    }
    m.base_dir = std::move(base_dir);
    return m;
  }
};

inline CorpusManifest read_manifest(const fs::path& path) {
  if (!fs::is_regular_file(path)) fail(ErrorCode::IoError, "manifest not found: " + path.string());
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return CorpusManifest::from_json(j, path.parent_path());
}

/// Parses the JSON-lines records file and validates every record, in file order.
inline std::vector<AdRecord> load_corpus(const CorpusManifest& manifest) {
  const fs::path records = manifest.resolved_records();
  const fs::path images = manifest.resolved_images();
  if (!fs::is_regular_file(records)) fail(ErrorCode::IoError, "records file not found: " + records.string());
  if (!fs::is_directory(images)) fail(ErrorCode::IoError, "images dir not found: " + images.string());

  std::ifstream in(records);
  std::vector<AdRecord> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    AdRecord rec;
    try {
      rec = ad_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(lineno, e.what());
    } catch (const Error& e) {
      throw ParseError(lineno, e.what());
    }
    try {
      validate_ad(rec, manifest.schema, images);
    } catch (const ValidationError& e) {
      for (const auto& v : e.violations()) {
        if (v.code == ErrorCode::UnresolvableImage) {
          fail(ErrorCode::UnresolvableImage, v.detail);
        }
      }
      throw;
    }
    if (!seen.insert(rec.ad_id).second) {
      throw ParseError(lineno, "duplicate ad_id " + rec.ad_id);
    }
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::string records_to_jsonl(const std::vector<AdRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

/// Splits rows by source ad (all frames of one ad land in one split).
/// Ads are ordered by first appearance, shuffled with the seed, then cut by
/// rounded ratio counts.
struct DatasetSplit {
  std::vector<TrainingRow> train, val, test;
};

inline DatasetSplit split_dataset(const std::vector<TrainingRow>& rows,
                                  std::array<double, 3> ratios, std::uint64_t seed) {
  require(!rows.empty(), ErrorCode::EmptyInput, "cannot split an empty dataset");
  for (double r : ratios) require(r > 0.0, ErrorCode::InvalidArgument, "split ratios must be positive");
  require(std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) <= 1e-9, ErrorCode::InvalidArgument,
          "split ratios must sum to 1");

  std::vector<std::string> ads;
  std::set<std::string> seen;
  for (const auto& r : rows) {
    if (seen.insert(r.source_ad_id).second) ads.push_back(r.source_ad_id);
  }
  Rng rng(seed);
  rng.shuffle(ads);
  const auto n = static_cast<double>(ads.size());
  const auto n_train = static_cast<std::size_t>(std::llround(ratios[0] * n));
  const auto n_val = std::min(ads.size() - n_train, static_cast<std::size_t>(std::llround(ratios[1] * n)));

  std::map<std::string, int> bucket;
  for (std::size_t i = 0; i < ads.size(); ++i) {
    bucket[ads[i]] = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
  }
  DatasetSplit split;
  for (const auto& r : rows) {
    switch (bucket[r.source_ad_id]) {
      case 0: split.train.push_back(r); break;
      case 1: split.val.push_back(r); break;
      default: split.test.push_back(r); break;
    }
  }
  return split;
}

}  // namespace soda
