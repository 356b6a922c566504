#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "soda/hash.hpp"
#include "soda/llm/backend.hpp"
#include "soda/llm/insights.hpp"

namespace soda::llm {

/// Deterministic stand-in answers for offline runs. Reads the <data>...</data>
/// payload every shipped template carries and returns schema-valid JSON for
/// its task. Plug into ScriptedMock as the fallback responder.
namespace heuristic {

inline json payload(const std::string& user_text) {
  const auto open = user_text.rfind("<data>");
  const auto close = user_text.rfind("</data>");
  if (open == std::string::npos || close == std::string::npos || close < open) {
    fail(ErrorCode::BackendError, "mock responder: prompt carries no <data> payload");
  }
  try {
    return json::parse(user_text.substr(open + 6, close - open - 6));
  } catch (const json::exception& e) {
    fail(ErrorCode::BackendError, std::string("mock responder: bad <data> payload: ") + e.what());
  }
}

inline std::uint64_t pick(const std::string& key, std::uint64_t n) {
  const auto d = sha256(key);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | d[static_cast<std::size_t>(i)];
  return v % n;
}

inline bool contains_any(const std::string& text, std::initializer_list<const char*> words) {
  const auto t = lower(text);
  for (const char* w : words) {
    if (t.find(w) != std::string::npos) return true;
  }
  return false;
}

inline std::string product_for(const std::string& cta) {
  static const std::map<std::string, std::string> m{{"Shop Now", "retail products"},
                                                     {"Sign Up", "subscription service"},
                                                     {"Download", "mobile app"},
                                                     {"Get Offer", "promotional bundle"},
                                                     {"Learn More", "service plan"}};
  auto it = m.find(cta);
  return it == m.end() ? "consumer service" : it->second;
}

inline json ad_insight(const json& d) {
  const std::string text = d.value("headline", "") + " " + d.value("body", "");
  const std::string id = d.value("ad_id", "");
  std::string archetype, tone;
  if (contains_any(text, {"exclusive", "bonus", "free", "unlimited", "reward"})) {
    archetype = "Hero";
    tone = "urgent";
  } else if (contains_any(text, {"restrictions", "fees", "conditions", "delay", "surcharge"})) {
    archetype = "Sage";
    tone = "informative";
  } else {
    archetype = kArchetypes[pick(id + ":a", kArchetypes.size())];
    tone = kTones[pick(id + ":t", kTones.size())];
  }
  const std::string cta = d.value("call_to_action", "Learn More");
  const std::string objective = d.value("objective", "");
  return {{"ad_id", id},
          {"product", product_for(cta)},
          {"advertised_offer", d.value("headline", "")},
          {"human_need", "The viewer wants a " + product_for(cta) + " that fits everyday life."},
          {"human_insight", "People act when an offer feels " + std::string(tone == "urgent" ? "scarce" : "trustworthy") + "."},
          {"archetype", archetype},
          {"tone", tone},
          {"target_audience", objective == "Conversion" ? "ready-to-buy shoppers" : "broad mobile audience"},
          {"topical_category", d.value("brand", "") + " " + product_for(cta)},
          {"call_to_action", cta}};
}

inline std::string value_for_tone(const std::string& tone) {
  static const std::map<std::string, std::string> m{{"informative", "clarity"},     {"playful", "fun"},
                                                     {"urgent", "momentum"},        {"aspirational", "ambition"},
                                                     {"reassuring", "trust"},       {"humorous", "lightness"}};
  auto it = m.find(tone);
  return it == m.end() ? "reliability" : it->second;
}

/// Most frequent value; ties go to the smallest.
inline std::string mode(const std::vector<std::string>& v) {
  std::map<std::string, int> counts;
  for (const auto& x : v) ++counts[x];
  std::string best;
  int n = -1;
  for (const auto& [k, c] : counts) {
    if (c > n) {
      best = k;
      n = c;
    }
  }
  return best;
}

inline json brand_persona(const json& d) {
  std::vector<std::string> archetypes, tones, ids;
  for (const auto& r : d.at("records")) {
    archetypes.push_back(r.at("archetype"));
    tones.push_back(r.at("tone"));
    ids.push_back(r.at("ad_id"));
  }
  const auto top = mode(archetypes);
  std::vector<std::string> values;
  std::map<std::string, int> tone_counts;
  for (const auto& t : tones) ++tone_counts[t];
  for (const auto& [t, c] : tone_counts) {
    const auto v = value_for_tone(t);
    if (std::find(values.begin(), values.end(), v) == values.end()) values.push_back(v);
    if (values.size() == 3) break;
  }
  json goals = json::array();
  for (const auto& v : values) goals.push_back({{"value", v}, {"goal", "Make customers associate the brand with " + v + "."}});
  std::vector<std::string> support;
  for (std::size_t i = 0; i < ids.size() && support.size() < 2; ++i) {
    if (archetypes[i] == top) support.push_back(ids[i]);
  }
  return {{"brand_values", values},
          {"goals", goals},
          {"primary_persona",
           {{"name", top},
            {"description", d.value("brand", "") + " speaks as a " + top + ", most visibly in its " +
                                std::to_string(support.size()) + " strongest ads."},
            {"supporting_ad_ids", support}}}};
}

inline json comparative(const json& d) {
  json positioning = json::array();
  std::map<std::string, std::vector<std::string>> by_archetype;
  for (const auto& [brand, recs] : d.at("brands").items()) {
    std::vector<std::string> a, t;
    for (const auto& r : recs) {
      a.push_back(r.at("archetype"));
      t.push_back(r.at("tone"));
    }
    const auto top = mode(a);
    by_archetype[top].push_back(brand);
    positioning.push_back({{"brand", brand},
                           {"summary", brand + " positions itself as a " + top + " brand with a mostly " + mode(t) +
                                           " voice across " + std::to_string(recs.size()) + " ads."}});
  }
  json factors = json::array();
  for (const auto& [archetype, brands] : by_archetype) {
    factors.push_back({{"factor", archetype + " framing"}, {"brands", brands}});
  }
  return {{"positioning", positioning}, {"distinguishing_factors", factors}};
}

inline json user_persona(const json& d) {
  static const std::vector<std::string> names{"Alex Morgan", "Sam Rivera", "Jordan Lee", "Taylor Chen",
                                              "Riley Patel", "Casey Novak", "Jamie Okafor", "Morgan Silva"};
  static const std::vector<std::string> ages{"18-24", "25-34", "35-44", "45-54"};
  static const std::vector<std::string> jobs{"software tester", "nurse", "student", "sales manager",
                                             "graphic designer", "teacher"};
  const auto interests = d.at("interests").get<std::vector<std::string>>();
  const auto key = json(interests).dump();
  std::string list;
  for (std::size_t i = 0; i < interests.size(); ++i) list += (i ? ", " : "") + interests[i];
  const auto name = names[pick(key + ":n", names.size())];
  return {{"name", name},
          {"age_range", ages[pick(key + ":a", ages.size())]},
          {"occupation", jobs[pick(key + ":o", jobs.size())]},
          {"narrative", name + " spends free evenings on " + list +
                            " and compares offers carefully before committing to a new plan."}};
}

inline json image_prompt(const json& d) {
  const auto& p = d.at("persona");
  std::string interests;
  for (const auto& i : p.at("interests")) interests += (interests.empty() ? "" : " and ") + i.get<std::string>();
  return {{"prompt_text", "portrait of a " + p.at("age_range").get<std::string>() + " year old " +
                              p.at("occupation").get<std::string>() + " enjoying " + interests + ", warm natural light"},
          {"negative_prompt", "text, watermark, distorted hands"},
          {"style_tags", {"photographic", "candid"}}};
}

inline std::string respond(const CompletionRequest& request) {
  const json d = payload(request.user_text);
  const std::string task = d.value("task", "");
  if (task == "ad_insight") return ad_insight(d).dump();
  if (task == "brand_persona") return brand_persona(d).dump();
  if (task == "comparative") return comparative(d).dump();
  if (task == "user_persona") return user_persona(d).dump();
  if (task == "image_prompt") return image_prompt(d).dump();
  fail(ErrorCode::BackendError, "mock responder: unknown task '" + task + "'");
}

}  // namespace heuristic

/// ScriptedMock whose unscripted requests are answered heuristically.
inline std::unique_ptr<ScriptedMock> make_offline_mock() { return std::make_unique<ScriptedMock>(heuristic::respond); }

}  // namespace soda::llm
