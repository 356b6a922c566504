#pragma once

#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "soda/llm/pipeline.hpp"
#include "soda/service/jobs.hpp"
#include "soda/service/store.hpp"

namespace soda::service {

/// Everything an analysis job needs. Insight tables are cached in the store
/// so later reports reuse earlier extractions.
struct AnalysisContext {
  Store& store;
  llm::LlmBackend& backend;
  llm::ImageBackend& images;
  llm::TemplateSet templates;
  int workers = 4;
  int max_retries = 2;
  llm::Clock clock = llm::system_clock();
  std::mutex insights_mu;

  AnalysisContext(Store& s, llm::LlmBackend& b, llm::ImageBackend& i, llm::TemplateSet t)
      : store(s), backend(b), images(i), templates(std::move(t)) {}
};

inline std::vector<std::string> string_array(const json& params, const char* field) {
  if (!params.contains(field)) return {};
  const auto& v = params.at(field);
  require(v.is_array(), ErrorCode::InvalidArgument, std::string(field) + " must be an array of strings");
  std::vector<std::string> out;
  for (const auto& s : v) {
    require(s.is_string(), ErrorCode::InvalidArgument, std::string(field) + " must be an array of strings");
    out.push_back(s.get<std::string>());
  }
  return out;
}

/// Checks parameters against the store before a job is accepted.
/// NotFound for unknown brands; InvalidArgument for malformed parameters.
inline void validate_analysis_params(const Store& store, JobKind kind, const json& params) {
  require(params.is_object(), ErrorCode::InvalidArgument, "params must be an object");
  const auto known = store.brands();
  auto need_brand = [&](const std::string& b) {
    if (std::find(known.begin(), known.end(), b) == known.end()) fail(ErrorCode::NotFound, "unknown brand '" + b + "'");
  };
  switch (kind) {
    case JobKind::Extraction:
      require(store.ad_count() > 0, ErrorCode::NotFound, "the store holds no ads");
      for (const auto& b : string_array(params, "brands")) need_brand(b);
      break;
    case JobKind::BrandPersona:
      require(params.contains("brand") && params["brand"].is_string(), ErrorCode::InvalidArgument,
              "brand_persona needs a 'brand' string");
      need_brand(params["brand"].get<std::string>());
      break;
    case JobKind::Comparative: {
      const auto brands = string_array(params, "brands");
      const auto n = brands.empty() ? known.size() : brands.size();
      require(n >= 2 && n <= 8, ErrorCode::InvalidArgument, "comparative needs 2 to 8 brands");
      for (const auto& b : brands) need_brand(b);
      break;
    }
    case JobKind::PersonaBatch: {
      require(params.contains("interest_sets") && params["interest_sets"].is_array() &&
                  !params["interest_sets"].empty(),
              ErrorCode::InvalidArgument, "persona_batch needs a non-empty 'interest_sets' array");
      for (const auto& set : params["interest_sets"]) {
        require(set.is_array() && !set.empty(), ErrorCode::InvalidArgument, "each interest set must be a non-empty array");
        for (const auto& s : set) require(s.is_string(), ErrorCode::InvalidArgument, "interests must be strings");
      }
      break;
    }
  }
}

/// Insight records for `ads`, extracting only those missing from the
/// store's table; the table is rewritten with the union.
inline std::vector<llm::AdInsightRecord> insights_for(AnalysisContext& ctx, const std::vector<AdRecord>& ads) {
  std::lock_guard lock(ctx.insights_mu);
  const auto path = ctx.store.insights_path(ctx.store.meta().corpus_id);
  std::map<std::string, llm::AdInsightRecord> table;
  if (fs::exists(path)) {
    for (auto& r : llm::read_insights_table(path)) table.emplace(r.ad_id, std::move(r));
  }
  std::vector<AdRecord> missing;
  for (const auto& a : ads) {
    if (!table.count(a.ad_id)) missing.push_back(a);
  }
  if (!missing.empty()) {
    for (auto& r : llm::extract_all(missing, ctx.backend, ctx.templates.ad_insight, ctx.max_retries, ctx.workers)) {
      table.emplace(r.ad_id, std::move(r));
    }
    std::vector<llm::AdInsightRecord> all;
    for (const auto& a : ctx.store.ads()) {
      if (auto it = table.find(a.ad_id); it != table.end()) all.push_back(it->second);
    }
    llm::insights_to_table(all, path);
  }
  std::vector<llm::AdInsightRecord> out;
  for (const auto& a : ads) out.push_back(table.at(a.ad_id));
  return out;
}

inline std::vector<AdRecord> ads_of_brands(const Store& store, const std::vector<std::string>& brands) {
  std::vector<AdRecord> out;
  for (const auto& a : store.ads()) {
    if (brands.empty() || std::find(brands.begin(), brands.end(), a.creative.brand) != brands.end()) out.push_back(a);
  }
  return out;
}

inline json run_analysis(AnalysisContext& ctx, const JobState& job) {
  validate_analysis_params(ctx.store, job.kind, job.params);
  const auto corpus = ctx.store.meta().corpus_id;
  switch (job.kind) {
    case JobKind::Extraction: {
      const auto recs = insights_for(ctx, ads_of_brands(ctx.store, string_array(job.params, "brands")));
      return {{"insights", "insights/" + corpus + ".csv"}, {"rows", recs.size()}};
    }
    case JobKind::BrandPersona: {
      const auto brand = job.params.at("brand").get<std::string>();
      const auto recs = insights_for(ctx, ads_of_brands(ctx.store, {brand}));
      const auto report = llm::brand_persona_analysis(brand, recs, ctx.backend, ctx.templates.brand_persona, ctx.clock);
      const auto path =
          ctx.store.write_report("brand_persona_" + brand + "_" + job.job_id + ".json", to_json(report).dump(2) + "\n");
      return {{"report", path}};
    }
    case JobKind::Comparative: {
      auto brands = string_array(job.params, "brands");
      if (brands.empty()) brands = ctx.store.brands();
      const auto ads = ads_of_brands(ctx.store, brands);
      const auto per_brand = llm::group_by_brand(ads, insights_for(ctx, ads));
      const auto report = llm::comparative_analysis(per_brand, ctx.backend, ctx.templates.comparative, ctx.clock);
      const auto path = ctx.store.write_report("comparative_" + job.job_id + ".json", to_json(report).dump(2) + "\n");
      return {{"report", path}};
    }
    case JobKind::PersonaBatch: {
      auto few_shot = string_array(job.params, "few_shot");
      if (few_shot.empty()) few_shot = llm::default_few_shot_examples();
      json personas = json::array();
      for (const auto& set : job.params.at("interest_sets")) {
        auto p = llm::persona_with_image(set.get<std::vector<std::string>>(), ctx.backend, ctx.images, ctx.templates,
                                         few_shot, ctx.store.images_dir(), ctx.clock);
        personas.push_back(to_json(p));
      }
      const auto path = ctx.store.write_report("personas_" + job.job_id + ".json", personas.dump(2) + "\n");
      return {{"report", path}, {"personas", personas.size()}};
    }
  }
  return nullptr;
}

}  // namespace soda::service
