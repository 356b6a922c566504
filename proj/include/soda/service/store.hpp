#pragma once

#include <map>
#include <algorithm>
#include <cctype>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "soda/core/domain.hpp"
#include "soda/hash.hpp"
#include "soda/ingestion/corpus.hpp"
#include "soda/nn/artifact.hpp"

namespace soda::service {

using json = nlohmann::json;

/// Store metadata written at ingest: corpus id, feature schema and objectives.
struct StoreMeta {
  std::string corpus_id = "default";
  std::optional<FeatureSchema> schema;
  std::vector<std::string> objectives;
};

/// File-backed store. Layout under root:
///   ads.jsonl              one AdRecord per line, frames are image names
///   images/<sha256>.png    content-addressed frames
///   models/<name>/         model artifacts
///   insights/<corpus>.csv  insight tables
///   reports/               analysis reports
///   jobs/<job_id>.json     persisted job states
///   store.json             StoreMeta
/// Every file is replaced with write-temp-then-rename.
class Store {
 public:
  explicit Store(fs::path root) : root_(std::move(root)) {
    for (const char* d : {"images", "models", "insights", "reports", "jobs"}) {
      std::error_code ec;
      fs::create_directories(root_ / d, ec);
      if (!fs::is_directory(root_ / d)) fail(ErrorCode::IoError, "cannot create store directory " + (root_ / d).string());
    }
    load_ads();
    load_meta();
  }

  const fs::path& root() const { return root_; }
  fs::path images_dir() const { return root_ / "images"; }
  fs::path models_dir() const { return root_ / "models"; }
  fs::path reports_dir() const { return root_ / "reports"; }
  fs::path jobs_dir() const { return root_ / "jobs"; }
  fs::path insights_path(const std::string& corpus) const { return root_ / "insights" / (corpus + ".csv"); }

  // ------------------------------------------------------------ metadata

  StoreMeta meta() const {
    std::shared_lock lock(mu_);
    return meta_;
  }

  void set_meta(const StoreMeta& m) {
    std::unique_lock lock(mu_);
    meta_ = m;
    json j{{"corpus_id", m.corpus_id}, {"objectives", m.objectives}};
    j["schema"] = m.schema ? to_json(*m.schema) : json(nullptr);
    write_atomic(root_ / "store.json", j.dump(2) + "\n");
  }

  // ------------------------------------------------------------ images

  /// Stores PNG bytes under their SHA-256; returns the file name.
  std::string put_image(std::span<const std::uint8_t> png) {
    try {
      (void)decode_png(png);
    } catch (const Error& e) {
      fail(ErrorCode::PreprocessFailure, std::string("not a decodable PNG: ") + e.what());
    }
    const auto name = sha256_hex(png) + ".png";
    const auto path = images_dir() / name;
    std::unique_lock lock(image_mu_);
    if (!fs::exists(path)) write_atomic(path, png);
    return name;
  }

  bool has_image(const std::string& name) const { return fs::is_regular_file(images_dir() / name); }

  // ------------------------------------------------------------ ads

  std::optional<AdRecord> get_ad(const std::string& ad_id) const {
    std::shared_lock lock(mu_);
    auto it = index_.find(ad_id);
    if (it == index_.end()) return std::nullopt;
    return ads_[it->second];
  }

  std::vector<AdRecord> ads() const {
    std::shared_lock lock(mu_);
    return ads_;
  }

  std::size_t ad_count() const {
    std::shared_lock lock(mu_);
    return ads_.size();
  }

  /// Inserts or replaces a record (frames must already be stored images).
  /// Returns true when the ad is new.
  bool put_ad(const AdRecord& record) { return put_ads({record}) > 0; }

  /// Returns the number of new ads.
  std::size_t put_ads(const std::vector<AdRecord>& records) {
    std::unique_lock lock(mu_);
    std::size_t added = 0;
    for (const auto& r : records) {
      for (const auto& f : r.creative.frames) {
        if (!has_image(f)) fail(ErrorCode::UnresolvableImage, "frame " + f + " is not in the store");
      }
      if (auto it = index_.find(r.ad_id); it != index_.end()) {
        ads_[it->second] = r;
      } else {
        index_[r.ad_id] = ads_.size();
        ads_.push_back(r);
        ++added;
      }
    }
    write_atomic(root_ / "ads.jsonl", records_to_jsonl(ads_));
    return added;
  }

  /// Copies a corpus into the store: frames become content-addressed names.
  std::size_t ingest(const CorpusManifest& manifest, const std::vector<AdRecord>& records) {
    std::vector<AdRecord> rewritten;
    rewritten.reserve(records.size());
    for (auto r : records) {
      for (auto& f : r.creative.frames) f = put_image(read_bytes(manifest.resolved_images() / f));
      rewritten.push_back(std::move(r));
    }
    const auto added = put_ads(rewritten);
    StoreMeta m = meta();
    m.corpus_id = manifest.corpus_id;
    m.schema = manifest.schema;
    m.objectives = manifest.objectives;
    set_meta(m);
    return added;
  }

  std::vector<std::string> brands() const {
    std::shared_lock lock(mu_);
    std::set<std::string> b;
    for (const auto& a : ads_) b.insert(a.creative.brand);
    return {b.begin(), b.end()};
  }

  // ------------------------------------------------------------ models

  fs::path model_dir(const std::string& name) const {
    require(valid_name(name), ErrorCode::InvalidArgument, "invalid model name '" + name + "'");
    return models_dir() / name;
  }

  bool has_model(const std::string& name) const {
    return valid_name(name) && fs::is_regular_file(models_dir() / name / "config.json");
  }

  std::vector<std::string> model_names() const {
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(models_dir())) {
      if (fs::is_regular_file(e.path() / "config.json")) out.push_back(e.path().filename().string());
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Loaded once, then shared read-only.
  std::shared_ptr<const nn::CtrModel> model(const std::string& name) {
    {
      std::shared_lock lock(model_mu_);
      if (auto it = models_.find(name); it != models_.end()) return it->second;
    }
    if (!has_model(name)) fail(ErrorCode::NotFound, "unknown model '" + name + "'");
    auto m = std::make_shared<const nn::CtrModel>(nn::load_model(model_dir(name)));
    std::unique_lock lock(model_mu_);
    return models_.try_emplace(name, std::move(m)).first->second;
  }

  void save_model(const nn::CtrModel& m, const std::string& name) {
    nn::save_model(m, model_dir(name));
    std::unique_lock lock(model_mu_);
    models_.erase(name);
  }

  // ------------------------------------------------------------ reports

  /// Writes reports/<name> and returns the path relative to the root.
  std::string write_report(const std::string& name, const std::string& content) {
    require(valid_name(name), ErrorCode::InvalidArgument, "invalid report name '" + name + "'");
    write_atomic(reports_dir() / name, content);
    return "reports/" + name;
  }

  static bool valid_name(const std::string& s) {
    if (s.empty() || s == "." || s == "..") return false;
    for (char c : s) {
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
    }
    return true;
  }

 private:
  void load_ads() {
    const auto path = root_ / "ads.jsonl";
    if (!fs::exists(path)) return;
    std::istringstream in(read_text(path));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        auto r = ad_from_json(json::parse(line));
        index_[r.ad_id] = ads_.size();
        ads_.push_back(std::move(r));
      } catch (const json::exception& e) {
        throw ParseError(lineno, std::string("ads.jsonl: ") + e.what());
      }
    }
  }

  void load_meta() {
    const auto path = root_ / "store.json";
    if (!fs::exists(path)) return;
    const auto j = json::parse(read_text(path));
    meta_.corpus_id = j.value("corpus_id", "default");
    meta_.objectives = j.value("objectives", std::vector<std::string>{});
    if (j.contains("schema") && j["schema"].is_object()) {
      meta_.schema = schema_from_json(j["schema"].at("continuous"), j["schema"].at("categorical"));
    }
  }

  fs::path root_;
  mutable std::shared_mutex mu_;
  std::mutex image_mu_;
  std::vector<AdRecord> ads_;
  std::map<std::string, std::size_t> index_;
  StoreMeta meta_;
  std::shared_mutex model_mu_;
  std::map<std::string, std::shared_ptr<const nn::CtrModel>> models_;
};

}  // namespace soda::service
