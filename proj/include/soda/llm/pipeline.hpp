#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "soda/llm/insights.hpp"
#include "soda/llm/reports.hpp"

namespace soda::llm {

inline const std::vector<std::string>& default_few_shot_examples() {
  static const std::vector<std::string> v{
      "portrait of a young gamer at a desk setup, warm light",
      "candid photo of a nurse walking home at dusk, city background, shallow depth of field",
      "a retired couple cooking together in a bright kitchen, natural window light"};
  return v;
}

struct CampaignAnalysisOptions {
  int max_retries = 2;
  int workers = 4;
  std::vector<std::vector<std::string>> interest_sets;
  std::vector<std::string> few_shot_examples = default_few_shot_examples();
  Clock clock = system_clock();
};

struct CampaignAnalysis {
  std::vector<AdInsightRecord> insights;
  std::map<std::string, BrandPersonaReport> brand_reports;
  std::optional<ComparativeReport> comparative;  // present for 2 to 8 brands
  std::vector<UserPersona> personas;
};

inline std::map<std::string, std::vector<AdInsightRecord>> group_by_brand(const std::vector<AdRecord>& ads,
                                                                          const std::vector<AdInsightRecord>& insights) {
  std::map<std::string, std::string> brand_of;
  for (const auto& a : ads) brand_of[a.ad_id] = a.creative.brand;
  std::map<std::string, std::vector<AdInsightRecord>> out;
  for (const auto& r : insights) {
    auto it = brand_of.find(r.ad_id);
    if (it == brand_of.end()) fail(ErrorCode::UnknownAdReference, "insight for unknown ad " + r.ad_id);
    out[it->second].push_back(r);
  }
  return out;
}

/// Persona with prompt and stored image; images land in `images_dir` and the
/// persona's image_ref is "images/<sha256>.png".
inline UserPersona persona_with_image(const std::vector<std::string>& interests, LlmBackend& backend,
                                      ImageBackend& images, const TemplateSet& templates,
                                      const std::vector<std::string>& few_shot, const fs::path& images_dir,
                                      const Clock& clock) {
  auto persona = generate_user_persona(interests, backend, templates.user_persona, clock);
  persona.image_prompt = generate_image_prompt(persona, few_shot, backend, templates.image_prompt, clock);
  const auto stored = generate_persona_image(*persona.image_prompt, images, images_dir);
  persona.image_ref = "images/" + stored.sha256 + ".png";
  return persona;
}

/// Extraction, then (after all extractions finish) per-brand reports, the
/// comparative report and personas. Writes into out_dir:
/// insights.csv, brand_persona/<brand>.json, comparative.json, personas.json, images/.
inline CampaignAnalysis run_campaign_analysis(const std::vector<AdRecord>& ads, LlmBackend& backend,
                                              ImageBackend& images, const TemplateSet& templates,
                                              const CampaignAnalysisOptions& opt, const fs::path& out_dir) {
  require(!ads.empty(), ErrorCode::PreconditionFailed, "campaign analysis needs at least one ad");
  fs::create_directories(out_dir / "brand_persona");
  CampaignAnalysis a;
  a.insights = extract_all(ads, backend, templates.ad_insight, opt.max_retries, opt.workers);
  insights_to_table(a.insights, out_dir / "insights.csv");

  const auto per_brand = group_by_brand(ads, a.insights);
  for (const auto& [brand, recs] : per_brand) {
    auto report = brand_persona_analysis(brand, recs, backend, templates.brand_persona, opt.clock);
    write_atomic(out_dir / "brand_persona" / (brand + ".json"), to_json(report).dump(2) + "\n");
    a.brand_reports.emplace(brand, std::move(report));
  }
  if (per_brand.size() >= 2 && per_brand.size() <= 8) {
    a.comparative = comparative_analysis(per_brand, backend, templates.comparative, opt.clock);
    write_atomic(out_dir / "comparative.json", to_json(*a.comparative).dump(2) + "\n");
  }
  json personas = json::array();
  for (const auto& interests : opt.interest_sets) {
    a.personas.push_back(persona_with_image(interests, backend, images, templates, opt.few_shot_examples,
                                            out_dir / "images", opt.clock));
    personas.push_back(to_json(a.personas.back()));
  }
  write_atomic(out_dir / "personas.json", personas.dump(2) + "\n");
  return a;
}

}  // namespace soda::llm
