#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <exception>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "soda/core/domain.hpp"
#include "soda/llm/backend.hpp"
#include "soda/llm/template.hpp"

namespace soda::llm {

inline constexpr std::array<const char*, 12> kArchetypes{"Innocent", "Everyman", "Hero",     "Outlaw",
                                                         "Explorer", "Creator",  "Ruler",    "Magician",
                                                         "Lover",    "Caregiver", "Jester",  "Sage"};
inline constexpr std::array<const char*, 6> kTones{"informative", "playful",    "urgent",
                                                   "aspirational", "reassuring", "humorous"};

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

/// Canonical spelling of a vocabulary member (case-insensitive match), or nullopt.
template <std::size_t N>
std::optional<std::string> canonical(const std::array<const char*, N>& vocab, const std::string& value) {
  const auto v = lower(value);
  for (const char* m : vocab) {
    if (lower(m) == v) return std::string(m);
  }
  return std::nullopt;
}

inline bool is_archetype(const std::string& s) {
  return std::find_if(kArchetypes.begin(), kArchetypes.end(), [&](const char* a) { return s == a; }) != kArchetypes.end();
}
inline bool is_tone(const std::string& s) {
  return std::find_if(kTones.begin(), kTones.end(), [&](const char* t) { return s == t; }) != kTones.end();
}

struct AdInsightRecord {
  std::string ad_id;
  std::string product;
  std::string advertised_offer;
  std::string human_need;
  std::string human_insight;
  std::string archetype;
  std::string tone;
  std::string target_audience;
  std::string topical_category;
  std::string call_to_action;
  int retry_count = 0;
  std::string backend_id;
  std::string prompt_version;

  bool operator==(const AdInsightRecord&) const = default;
};

/// Fields the model must produce, in CSV column order after ad_id.
inline constexpr std::array<const char*, 9> kInsightTextFields{
    "product", "advertised_offer", "human_need", "human_insight", "archetype",
    "tone",    "target_audience",  "topical_category", "call_to_action"};

inline json to_json(const AdInsightRecord& r) {
  return {{"ad_id", r.ad_id},
          {"product", r.product},
          {"advertised_offer", r.advertised_offer},
          {"human_need", r.human_need},
          {"human_insight", r.human_insight},
          {"archetype", r.archetype},
          {"tone", r.tone},
          {"target_audience", r.target_audience},
          {"topical_category", r.topical_category},
          {"call_to_action", r.call_to_action},
          {"retry_count", r.retry_count},
          {"backend_id", r.backend_id},
          {"prompt_version", r.prompt_version}};
}

inline AdInsightRecord insight_from_json(const json& j) {
  AdInsightRecord r;
  r.ad_id = j.at("ad_id").get<std::string>();
  r.product = j.at("product").get<std::string>();
  r.advertised_offer = j.at("advertised_offer").get<std::string>();
  r.human_need = j.at("human_need").get<std::string>();
  r.human_insight = j.at("human_insight").get<std::string>();
  r.archetype = j.at("archetype").get<std::string>();
  r.tone = j.at("tone").get<std::string>();
  r.target_audience = j.at("target_audience").get<std::string>();
  r.topical_category = j.at("topical_category").get<std::string>();
  r.call_to_action = j.at("call_to_action").get<std::string>();
  r.retry_count = j.value("retry_count", 0);
  r.backend_id = j.value("backend_id", "");
  r.prompt_version = j.value("prompt_version", "");
  return r;
}

/// Parses a completion that must be exactly one JSON object. Surrounding
/// whitespace and a single ``` fence are tolerated.
inline json parse_json_object(const std::string& completion) {
  std::string s = detail::trim(completion);
  if (s.rfind("```", 0) == 0) {
    const auto first_nl = s.find('\n');
    const auto last = s.rfind("```");
    if (first_nl != std::string::npos && last != std::string::npos && last > first_nl) {
      s = detail::trim(s.substr(first_nl + 1, last - first_nl - 1));
    }
  }
  json j;
  try {
    j = json::parse(s);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("completion is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("completion must be a single JSON object");
  return j;
}

/// Validates a parsed completion for `ad_id`; throws std::invalid_argument
/// listing every problem.
inline AdInsightRecord validate_insight(const json& j, const std::string& ad_id) {
  std::vector<std::string> problems;
  AdInsightRecord r;
  r.ad_id = ad_id;
  if (j.contains("ad_id") && !(j["ad_id"].is_string() && j["ad_id"].get<std::string>() == ad_id)) {
    problems.push_back("ad_id must be \"" + ad_id + "\"");
  }
  std::map<std::string, std::string> values;
  for (const char* f : kInsightTextFields) {
    if (!j.contains(f) || !j[f].is_string() || detail::trim(j[f].get<std::string>()).empty()) {
      problems.push_back(std::string(f) + " must be a non-empty string");
      continue;
    }
    values[f] = detail::trim(j[f].get<std::string>());
  }
  if (values.count("archetype")) {
    if (auto a = canonical(kArchetypes, values["archetype"])) {
      values["archetype"] = *a;
    } else {
      problems.push_back("archetype \"" + values["archetype"] + "\" is not one of the 12 allowed archetypes");
    }
  }
  if (values.count("tone")) {
    if (auto t = canonical(kTones, values["tone"])) {
      values["tone"] = *t;
    } else {
      problems.push_back("tone \"" + values["tone"] + "\" is not one of the 6 allowed tones");
    }
  }
  if (!problems.empty()) {
    std::string msg;
    for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
    throw std::invalid_argument(msg);
  }
  r.product = values["product"];
  r.advertised_offer = values["advertised_offer"];
  r.human_need = values["human_need"];
  r.human_insight = values["human_insight"];
  r.archetype = values["archetype"];
  r.tone = values["tone"];
  r.target_audience = values["target_audience"];
  r.topical_category = values["topical_category"];
  r.call_to_action = values["call_to_action"];
  return r;
}

/// ExtractionFailed with every raw completion attached.
class ExtractionFailedError : public Error {
 public:
  ExtractionFailedError(const std::string& ad_id, std::vector<std::string> attempts, const std::string& last_error)
      : Error(ErrorCode::ExtractionFailed,
              ad_id + " after " + std::to_string(attempts.size()) + " attempts: " + last_error),
        ad_id_(ad_id),
        attempts_(std::move(attempts)) {}

  const std::string& ad_id() const { return ad_id_; }
  const std::vector<std::string>& attempts() const { return attempts_; }

 private:
  std::string ad_id_;
  std::vector<std::string> attempts_;
};

inline std::string repair_suffix(const std::string& error) {
  return "\n\nYour previous answer was rejected: " + error + "\nReply again with only the corrected JSON object.";
}

inline std::map<std::string, std::string> insight_vars(const AdRecord& ad) {
  json context = json::object();
  for (const auto& [k, v] : ad.categorical_features) context[k] = v;
  for (const auto& [k, v] : ad.continuous_features) context[k] = v;
  const json data{{"task", "ad_insight"},
                  {"ad_id", ad.ad_id},
                  {"brand", ad.creative.brand},
                  {"objective", ad.objective},
                  {"headline", ad.creative.headline},
                  {"body", ad.creative.body},
                  {"call_to_action", ad.creative.call_to_action}};
  return {{"ad_id", ad.ad_id},
          {"brand", ad.creative.brand},
          {"objective", ad.objective},
          {"headline", ad.creative.headline},
          {"body", ad.creative.body},
          {"call_to_action", ad.creative.call_to_action},
          {"context", context.dump()},
          {"data", data.dump()}};
}

inline constexpr double kAnalysisTemperature = 0.0;
inline constexpr double kPersonaTemperature = 0.7;

inline AdInsightRecord extract_insights(const AdRecord& ad, LlmBackend& backend, const PromptTemplate& tpl,
                                        int max_retries = 2) {
  require(max_retries >= 0, ErrorCode::InvalidArgument, "max_retries must be >= 0");
  const auto prompt = render_prompt(tpl, insight_vars(ad));
  std::vector<std::string> attempts;
  std::string last_error;
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    CompletionRequest req{prompt.system_text, prompt.user_text, kAnalysisTemperature, 1024,
                          make_seed_tag("insight:" + ad.ad_id, attempt)};
    if (attempt > 0) req.user_text += repair_suffix(last_error);
    attempts.push_back(backend.complete(req));
    try {
      auto r = validate_insight(parse_json_object(attempts.back()), ad.ad_id);
      r.retry_count = attempt;
      r.backend_id = backend.backend_id();
      r.prompt_version = tpl.versioned_id();
      return r;
    } catch (const std::invalid_argument& e) {
      last_error = e.what();
    }
  }
  throw ExtractionFailedError(ad.ad_id, std::move(attempts), last_error);
}

/// Runs extract_insights over `ads` with up to `workers` threads. Results keep
/// input order. If any ad fails, the failure with the lowest index is
/// rethrown once every extraction has finished.
inline std::vector<AdInsightRecord> extract_all(const std::vector<AdRecord>& ads, LlmBackend& backend,
                                                const PromptTemplate& tpl, int max_retries = 2, int workers = 4) {
  std::vector<std::optional<AdInsightRecord>> results(ads.size());
  std::vector<std::exception_ptr> errors(ads.size());
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (std::size_t i = next.fetch_add(1); i < ads.size(); i = next.fetch_add(1)) {
      try {
        results[i] = extract_insights(ads[i], backend, tpl, max_retries);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n_workers = static_cast<std::size_t>(std::clamp<int>(workers, 1, 64));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < std::min(n_workers, ads.size()); ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<AdInsightRecord> out;
  out.reserve(ads.size());
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

// ---------------------------------------------------------------- CSV table

inline constexpr std::array<const char*, 13> kInsightColumns{
    "ad_id",         "product",         "advertised_offer", "human_need", "human_insight",
    "archetype",     "tone",            "target_audience",  "topical_category", "call_to_action",
    "retry_count",   "backend_id",      "prompt_version"};

inline std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::vector<std::string> insight_row(const AdInsightRecord& r) {
  return {r.ad_id,          r.product,          r.advertised_offer, r.human_need,
          r.human_insight,  r.archetype,        r.tone,             r.target_audience,
          r.topical_category, r.call_to_action, std::to_string(r.retry_count), r.backend_id,
          r.prompt_version};
}

/// RFC-4180 text: CRLF line ends, header first.
inline std::string insights_to_csv(const std::vector<AdInsightRecord>& records) {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + csv_cell(cells[i]);
    out += "\r\n";
  };
  line(std::vector<std::string>(kInsightColumns.begin(), kInsightColumns.end()));
  for (const auto& r : records) line(insight_row(r));
  return out;
}

/// Writes the table atomically; returns the number of data rows.
inline std::size_t insights_to_table(const std::vector<AdInsightRecord>& records, const fs::path& path) {
  const auto dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  if (!fs::is_directory(dir)) fail(ErrorCode::IoError, "directory does not exist: " + dir.string());
  write_atomic(path, insights_to_csv(records));
  return records.size();
}

/// RFC-4180 reader; accepts CRLF or LF line ends.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  bool quoted = false, any = false;
  std::size_t line = 1;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        cell += c;
      }
      continue;
    }
    if (c == '"') {
      if (!cell.empty()) throw ParseError(line, "quote inside an unquoted CSV cell");
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(cell));
      cell.clear();
      any = true;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !cell.empty()) {
        row.push_back(std::move(cell));
        rows.push_back(std::move(row));
      }
      row.clear();
      cell.clear();
      any = false;
      ++line;
    } else {
      cell += c;
      any = true;
    }
  }
  if (quoted) throw ParseError(line, "unterminated quoted CSV cell");
  if (any || !cell.empty()) {
    row.push_back(std::move(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<AdInsightRecord> insights_from_csv(const std::string& text) {
  const auto rows = parse_csv(text);
  require(!rows.empty(), ErrorCode::ParseError, "insight table has no header");
  require(rows.front() == std::vector<std::string>(kInsightColumns.begin(), kInsightColumns.end()),
          ErrorCode::SchemaMismatch, "insight table header does not match");
  std::vector<AdInsightRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& c = rows[i];
    if (c.size() != kInsightColumns.size()) throw ParseError(i + 1, "wrong number of cells");
    AdInsightRecord r{c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7], c[8], c[9], 0, c[11], c[12]};
    try {
      r.retry_count = std::stoi(c[10]);
    } catch (const std::exception&) {
      throw ParseError(i + 1, "retry_count is not an integer");
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<AdInsightRecord> read_insights_table(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorCode::NotFound, "insight table not found: " + path.string());
  return insights_from_csv(read_text(path));
}

}  // namespace soda::llm
