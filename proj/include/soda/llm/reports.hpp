#pragma once

#include <chrono>
#include <ctime>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "soda/core/image.hpp"
#include "soda/hash.hpp"
#include "soda/llm/insights.hpp"

namespace soda::llm {

/// Timestamp source for generated_at; injectable so runs can be reproduced.
using Clock = std::function<std::string()>;

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline Clock system_clock() { return utc_now; }
inline Clock fixed_clock(std::string ts) {
  return [ts = std::move(ts)] { return ts; };
}

namespace detail {

inline std::vector<std::string> string_list(const json& j, const char* field, std::vector<std::string>& problems,
                                            bool allow_empty = false) {
  std::vector<std::string> out;
  if (!j.contains(field) || !j[field].is_array()) {
    problems.push_back(std::string(field) + " must be an array of strings");
    return out;
  }
  for (const auto& v : j[field]) {
    if (!v.is_string() || trim(v.get<std::string>()).empty()) {
      problems.push_back(std::string(field) + " entries must be non-empty strings");
      return {};
    }
    out.push_back(trim(v.get<std::string>()));
  }
  if (out.empty() && !allow_empty) problems.push_back(std::string(field) + " must not be empty");
  return out;
}

inline std::string text_field(const json& j, const char* field, std::vector<std::string>& problems) {
  if (!j.contains(field) || !j[field].is_string() || trim(j[field].get<std::string>()).empty()) {
    problems.push_back(std::string(field) + " must be a non-empty string");
    return {};
  }
  return trim(j[field].get<std::string>());
}

inline std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

inline void throw_problems(const std::vector<std::string>& problems) {
  if (!problems.empty()) throw std::invalid_argument(join(problems, "; "));
}

/// A schema failure, or a reference check failure raised with its own code.
struct ReferenceProblem {
  ErrorCode code;
  std::string message;
};

/// Calls the backend, parses and validates, repairing once. `parse` throws
/// std::invalid_argument for schema problems and returns a reference problem
/// (or nullopt) through `check`.
template <class Result, class Parse, class Check>
std::pair<Result, int> run_with_repair(LlmBackend& backend, const RenderedPrompt& prompt, double temperature,
                                       const std::string& tag, int max_retries, Parse&& parse, Check&& check) {
  std::string last_error;
  std::optional<ReferenceProblem> last_ref;
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    CompletionRequest req{prompt.system_text, prompt.user_text, temperature, 1024, make_seed_tag(tag, attempt)};
    if (attempt > 0) req.user_text += repair_suffix(last_error);
    const auto completion = backend.complete(req);
    try {
      Result r = parse(completion);
      if (auto ref = check(r)) {
        last_ref = ref;
        last_error = ref->message;
        continue;
      }
      return {std::move(r), attempt};
    } catch (const std::invalid_argument& e) {
      last_ref.reset();
      last_error = e.what();
    }
  }
  if (last_ref) fail(last_ref->code, last_ref->message);
  fail(ErrorCode::AnalysisFailed, tag + ": " + last_error);
}

}  // namespace detail

/// Generation metadata common to every report.
struct Provenance {
  std::string generated_at;
  int retry_count = 0;
  double temperature = 0.0;
  std::string backend_id;
  std::string prompt_version;

  bool operator==(const Provenance&) const = default;
};

inline json to_json(const Provenance& p) {
  return {{"generated_at", p.generated_at},
          {"retry_count", p.retry_count},
          {"temperature", p.temperature},
          {"backend_id", p.backend_id},
          {"prompt_version", p.prompt_version}};
}

inline Provenance provenance_from_json(const json& j) {
  return {j.value("generated_at", ""), j.value("retry_count", 0), j.value("temperature", 0.0),
          j.value("backend_id", ""), j.value("prompt_version", "")};
}

// ---------------------------------------------------------------- brand persona

struct BrandGoal {
  std::string value;
  std::string goal;
  bool operator==(const BrandGoal&) const = default;
};

struct BrandPersona {
  std::string name;
  std::string description;
  std::vector<std::string> supporting_ad_ids;
  bool operator==(const BrandPersona&) const = default;
};

struct BrandPersonaReport {
  std::string brand;
  std::vector<std::string> brand_values;
  std::vector<BrandGoal> goals;
  BrandPersona primary_persona;
  std::vector<std::string> input_ad_ids;
  Provenance provenance;
  bool operator==(const BrandPersonaReport&) const = default;
};

inline json to_json(const BrandPersonaReport& r) {
  json goals = json::array();
  for (const auto& g : r.goals) goals.push_back({{"value", g.value}, {"goal", g.goal}});
  json j{{"brand", r.brand},
         {"brand_values", r.brand_values},
         {"goals", goals},
         {"primary_persona",
          {{"name", r.primary_persona.name},
           {"description", r.primary_persona.description},
           {"supporting_ad_ids", r.primary_persona.supporting_ad_ids}}},
         {"input_ad_ids", r.input_ad_ids}};
  j.update(to_json(r.provenance));
  return j;
}

inline BrandPersonaReport brand_persona_from_json(const json& j) {
  BrandPersonaReport r;
  r.brand = j.at("brand").get<std::string>();
  r.brand_values = j.at("brand_values").get<std::vector<std::string>>();
  for (const auto& g : j.at("goals")) r.goals.push_back({g.at("value").get<std::string>(), g.at("goal").get<std::string>()});
  const auto& p = j.at("primary_persona");
  r.primary_persona = {p.at("name").get<std::string>(), p.at("description").get<std::string>(),
                       p.at("supporting_ad_ids").get<std::vector<std::string>>()};
  r.input_ad_ids = j.at("input_ad_ids").get<std::vector<std::string>>();
  r.provenance = provenance_from_json(j);
  return r;
}

inline BrandPersonaReport brand_persona_analysis(const std::string& brand, const std::vector<AdInsightRecord>& records,
                                                 LlmBackend& backend, const PromptTemplate& tpl,
                                                 const Clock& clock = system_clock()) {
  require(!records.empty(), ErrorCode::PreconditionFailed, "brand persona analysis needs at least one record for " + brand);
  std::vector<std::string> ids;
  for (const auto& r : records) ids.push_back(r.ad_id);
  const std::set<std::string> id_set(ids.begin(), ids.end());

  std::vector<json> data_records;
  for (const auto& r : records) data_records.push_back(to_json(r));
  const json data{{"task", "brand_persona"}, {"brand", brand}, {"records", data_records}};
  const auto prompt = render_prompt(tpl, {{"brand", brand},
                                          {"insight_table", insights_to_csv(records)},
                                          {"ad_ids", detail::join(ids, ", ")},
                                          {"data", data.dump()}});

  auto parse = [&](const std::string& completion) {
    const json j = parse_json_object(completion);
    std::vector<std::string> problems;
    BrandPersonaReport r;
    r.brand = brand;
    r.brand_values = detail::string_list(j, "brand_values", problems);
    if (!j.contains("goals") || !j["goals"].is_array()) {
      problems.push_back("goals must be an array");
    } else {
      for (const auto& g : j["goals"]) {
        if (!g.is_object()) {
          problems.push_back("goals entries must be objects");
          break;
        }
        BrandGoal goal{detail::text_field(g, "value", problems), detail::text_field(g, "goal", problems)};
        if (!goal.value.empty() &&
            std::find(r.brand_values.begin(), r.brand_values.end(), goal.value) == r.brand_values.end()) {
          problems.push_back("goal value \"" + goal.value + "\" is not one of brand_values");
        }
        r.goals.push_back(std::move(goal));
      }
    }
    if (!j.contains("primary_persona") || !j["primary_persona"].is_object()) {
      problems.push_back("primary_persona must be an object");
    } else {
      const auto& p = j["primary_persona"];
      r.primary_persona.name = detail::text_field(p, "name", problems);
      r.primary_persona.description = detail::text_field(p, "description", problems);
      r.primary_persona.supporting_ad_ids = detail::string_list(p, "supporting_ad_ids", problems);
    }
    detail::throw_problems(problems);
    return r;
  };
  auto check = [&](const BrandPersonaReport& r) -> std::optional<detail::ReferenceProblem> {
    std::vector<std::string> unknown;
    for (const auto& id : r.primary_persona.supporting_ad_ids) {
      if (!id_set.count(id)) unknown.push_back(id);
    }
    if (unknown.empty()) return std::nullopt;
    return detail::ReferenceProblem{ErrorCode::UnknownAdReference,
                                    "supporting_ad_ids not in the input: " + detail::join(unknown, ", ")};
  };
  auto [report, retries] = detail::run_with_repair<BrandPersonaReport>(backend, prompt, kAnalysisTemperature,
                                                                       "brand_persona:" + brand, 1, parse, check);
  report.input_ad_ids = ids;
  report.provenance = {clock(), retries, kAnalysisTemperature, backend.backend_id(), tpl.versioned_id()};
  return report;
}

// ---------------------------------------------------------------- comparative

struct BrandPositioning {
  std::string brand;
  std::string summary;
  bool operator==(const BrandPositioning&) const = default;
};

struct DistinguishingFactor {
  std::string factor;
  std::vector<std::string> brands;
  bool operator==(const DistinguishingFactor&) const = default;
};

struct ComparativeReport {
  std::vector<std::string> brands;
  std::vector<BrandPositioning> positioning;  // input brand order
  std::vector<DistinguishingFactor> distinguishing_factors;
  std::map<std::string, int> record_counts;
  Provenance provenance;
  bool operator==(const ComparativeReport&) const = default;
};

inline json to_json(const ComparativeReport& r) {
  json pos = json::array();
  for (const auto& p : r.positioning) pos.push_back({{"brand", p.brand}, {"summary", p.summary}});
  json factors = json::array();
  for (const auto& f : r.distinguishing_factors) factors.push_back({{"factor", f.factor}, {"brands", f.brands}});
  json counts = json::object();
  for (const auto& [b, n] : r.record_counts) counts[b] = n;
  json j{{"brands", r.brands}, {"positioning", pos}, {"distinguishing_factors", factors}, {"record_counts", counts}};
  j.update(to_json(r.provenance));
  return j;
}

inline ComparativeReport comparative_from_json(const json& j) {
  ComparativeReport r;
  r.brands = j.at("brands").get<std::vector<std::string>>();
  for (const auto& p : j.at("positioning")) r.positioning.push_back({p.at("brand"), p.at("summary")});
  for (const auto& f : j.at("distinguishing_factors")) {
    r.distinguishing_factors.push_back({f.at("factor"), f.at("brands").get<std::vector<std::string>>()});
  }
  for (const auto& [b, n] : j.at("record_counts").items()) r.record_counts[b] = n.get<int>();
  r.provenance = provenance_from_json(j);
  return r;
}

/// `per_brand` maps brand to its insight records; brands keep map order.
inline ComparativeReport comparative_analysis(const std::map<std::string, std::vector<AdInsightRecord>>& per_brand,
                                              LlmBackend& backend, const PromptTemplate& tpl,
                                              const Clock& clock = system_clock()) {
  require(per_brand.size() >= 2 && per_brand.size() <= 8, ErrorCode::PreconditionFailed,
          "comparative analysis needs 2 to 8 brands, got " + std::to_string(per_brand.size()));
  std::vector<std::string> brands;
  std::string tables;
  json data_brands = json::object();
  for (const auto& [brand, recs] : per_brand) {
    require(!recs.empty(), ErrorCode::PreconditionFailed, "brand " + brand + " has no records");
    brands.push_back(brand);
    tables += "## " + brand + "\n" + insights_to_csv(recs) + "\n";
    json arr = json::array();
    for (const auto& r : recs) arr.push_back(to_json(r));
    data_brands[brand] = arr;
  }
  const std::set<std::string> brand_set(brands.begin(), brands.end());
  const json data{{"task", "comparative"}, {"brands", data_brands}};
  const auto prompt =
      render_prompt(tpl, {{"brands", detail::join(brands, ", ")}, {"brand_tables", tables}, {"data", data.dump()}});

  auto parse = [&](const std::string& completion) {
    const json j = parse_json_object(completion);
    std::vector<std::string> problems;
    ComparativeReport r;
    if (!j.contains("positioning") || !j["positioning"].is_array()) {
      problems.push_back("positioning must be an array");
    } else {
      for (const auto& p : j["positioning"]) {
        if (!p.is_object()) {
          problems.push_back("positioning entries must be objects");
          break;
        }
        r.positioning.push_back({detail::text_field(p, "brand", problems), detail::text_field(p, "summary", problems)});
      }
    }
    if (!j.contains("distinguishing_factors") || !j["distinguishing_factors"].is_array()) {
      problems.push_back("distinguishing_factors must be an array");
    } else {
      for (const auto& f : j["distinguishing_factors"]) {
        if (!f.is_object()) {
          problems.push_back("distinguishing_factors entries must be objects");
          break;
        }
        r.distinguishing_factors.push_back(
            {detail::text_field(f, "factor", problems), detail::string_list(f, "brands", problems)});
      }
    }
    detail::throw_problems(problems);
    return r;
  };
  auto check = [&](ComparativeReport& r) -> std::optional<detail::ReferenceProblem> {
    std::set<std::string> unknown;
    for (const auto& p : r.positioning) {
      if (!brand_set.count(p.brand)) unknown.insert(p.brand);
    }
    for (const auto& f : r.distinguishing_factors) {
      for (const auto& b : f.brands) {
        if (!brand_set.count(b)) unknown.insert(b);
      }
    }
    if (!unknown.empty()) {
      return detail::ReferenceProblem{ErrorCode::UnknownBrand,
                                      "brands not in the input: " +
                                          detail::join(std::vector<std::string>(unknown.begin(), unknown.end()), ", ")};
    }
    std::vector<std::string> missing;
    for (const auto& b : brands) {
      const auto n = std::count_if(r.positioning.begin(), r.positioning.end(), [&](const auto& p) { return p.brand == b; });
      if (n != 1) missing.push_back(b);
    }
    if (!missing.empty()) {
      return detail::ReferenceProblem{ErrorCode::AnalysisFailed,
                                      "need exactly one positioning entry for: " + detail::join(missing, ", ")};
    }
    return std::nullopt;
  };
  auto [report, retries] = detail::run_with_repair<ComparativeReport>(
      backend, prompt, kAnalysisTemperature, "comparative:" + detail::join(brands, "|"), 1, parse, check);
  std::vector<BrandPositioning> ordered;
  for (const auto& b : brands) {
    for (const auto& p : report.positioning) {
      if (p.brand == b) ordered.push_back(p);
    }
  }
  report.positioning = std::move(ordered);
  report.brands = brands;
  for (const auto& [brand, recs] : per_brand) report.record_counts[brand] = static_cast<int>(recs.size());
  report.provenance = {clock(), retries, kAnalysisTemperature, backend.backend_id(), tpl.versioned_id()};
  return report;
}

// ---------------------------------------------------------------- user persona

struct ImagePromptSpec {
  std::string prompt_text;
  std::optional<std::string> negative_prompt;
  std::vector<std::string> style_tags;
  std::string persona_id;
  Provenance provenance;
  bool operator==(const ImagePromptSpec&) const = default;
};

struct UserPersona {
  std::string persona_id;
  std::string name;
  std::string age_range;
  std::string occupation;
  std::vector<std::string> interests;
  std::string narrative;
  std::optional<ImagePromptSpec> image_prompt;
  std::optional<std::string> image_ref;
  Provenance provenance;
  bool operator==(const UserPersona&) const = default;
};

inline json to_json(const ImagePromptSpec& s) {
  json j{{"prompt_text", s.prompt_text},
         {"negative_prompt", s.negative_prompt ? json(*s.negative_prompt) : json(nullptr)},
         {"style_tags", s.style_tags},
         {"persona_id", s.persona_id}};
  j.update(to_json(s.provenance));
  return j;
}

inline ImagePromptSpec image_prompt_from_json(const json& j) {
  ImagePromptSpec s;
  s.prompt_text = j.at("prompt_text").get<std::string>();
  if (j.contains("negative_prompt") && j["negative_prompt"].is_string()) s.negative_prompt = j["negative_prompt"].get<std::string>();
  s.style_tags = j.value("style_tags", std::vector<std::string>{});
  s.persona_id = j.value("persona_id", "");
  s.provenance = provenance_from_json(j);
  return s;
}

inline json to_json(const UserPersona& p) {
  json j{{"persona_id", p.persona_id},
         {"name", p.name},
         {"age_range", p.age_range},
         {"occupation", p.occupation},
         {"interests", p.interests},
         {"narrative", p.narrative},
         {"image_prompt", p.image_prompt ? to_json(*p.image_prompt) : json(nullptr)},
         {"image_ref", p.image_ref ? json(*p.image_ref) : json(nullptr)}};
  j.update(to_json(p.provenance));
  return j;
}

inline UserPersona user_persona_from_json(const json& j) {
  UserPersona p;
  p.persona_id = j.at("persona_id").get<std::string>();
  p.name = j.at("name").get<std::string>();
  p.age_range = j.at("age_range").get<std::string>();
  p.occupation = j.at("occupation").get<std::string>();
  p.interests = j.at("interests").get<std::vector<std::string>>();
  p.narrative = j.at("narrative").get<std::string>();
  if (j.contains("image_prompt") && j["image_prompt"].is_object()) p.image_prompt = image_prompt_from_json(j["image_prompt"]);
  if (j.contains("image_ref") && j["image_ref"].is_string()) p.image_ref = j["image_ref"].get<std::string>();
  p.provenance = provenance_from_json(j);
  return p;
}

inline UserPersona generate_user_persona(const std::vector<std::string>& interests, LlmBackend& backend,
                                         const PromptTemplate& tpl, const Clock& clock = system_clock()) {
  require(!interests.empty(), ErrorCode::PreconditionFailed, "persona generation needs at least one interest");
  const json data{{"task", "user_persona"}, {"interests", interests}};
  const auto prompt = render_prompt(tpl, {{"interests", detail::join(interests, ", ")}, {"data", data.dump()}});
  const auto interest_key = sha256_hex(json(interests).dump()).substr(0, 16);

  auto parse = [&](const std::string& completion) {
    const json j = parse_json_object(completion);
    std::vector<std::string> problems;
    UserPersona p;
    p.name = detail::text_field(j, "name", problems);
    p.age_range = detail::text_field(j, "age_range", problems);
    p.occupation = detail::text_field(j, "occupation", problems);
    p.narrative = detail::text_field(j, "narrative", problems);
    detail::throw_problems(problems);
    return p;
  };
  auto no_check = [](const UserPersona&) -> std::optional<detail::ReferenceProblem> { return std::nullopt; };
  auto [persona, retries] = detail::run_with_repair<UserPersona>(backend, prompt, kPersonaTemperature,
                                                                 "persona:" + interest_key, 1, parse, no_check);
  persona.interests = interests;
  const json identity{{"interests", interests}, {"name", persona.name}, {"age_range", persona.age_range},
                      {"occupation", persona.occupation}, {"narrative", persona.narrative}};
  persona.persona_id = "persona-" + sha256_hex(identity.dump()).substr(0, 12);
  persona.provenance = {clock(), retries, kPersonaTemperature, backend.backend_id(), tpl.versioned_id()};
  return persona;
}

inline void validate_persona(const UserPersona& p) {
  require(!p.persona_id.empty(), ErrorCode::PreconditionFailed, "persona has no id");
  require(!p.interests.empty(), ErrorCode::PreconditionFailed, "persona has no interests");
  require(!detail::trim(p.narrative).empty(), ErrorCode::PreconditionFailed, "persona has no narrative");
}

/// Accepts either a JSON object with prompt_text or a plain-text prompt.
inline ImagePromptSpec generate_image_prompt(const UserPersona& persona, const std::vector<std::string>& few_shot_examples,
                                             LlmBackend& backend, const PromptTemplate& tpl,
                                             const Clock& clock = system_clock()) {
  validate_persona(persona);
  require(!few_shot_examples.empty(), ErrorCode::PreconditionFailed, "image prompt generation needs few-shot examples");
  std::string examples;
  for (const auto& e : few_shot_examples) examples += "- " + e + "\n";
  const json data{{"task", "image_prompt"},
                  {"persona", {{"name", persona.name}, {"age_range", persona.age_range},
                               {"occupation", persona.occupation}, {"interests", persona.interests}}},
                  {"examples", few_shot_examples}};
  const auto prompt = render_prompt(
      tpl, {{"narrative", persona.narrative}, {"examples", detail::trim(examples)}, {"data", data.dump()}});

  auto parse = [&](const std::string& completion) {
    ImagePromptSpec s;
    const auto text = detail::trim(completion);
    const bool looks_json = !text.empty() && (text.front() == '{' || text.rfind("```", 0) == 0);
    if (!looks_json) {
      if (text.empty()) throw std::invalid_argument("prompt_text must not be empty");
      s.prompt_text = text;
      return s;
    }
    const json j = parse_json_object(text);
    std::vector<std::string> problems;
    s.prompt_text = detail::text_field(j, "prompt_text", problems);
    if (j.contains("negative_prompt") && j["negative_prompt"].is_string() &&
        !detail::trim(j["negative_prompt"].get<std::string>()).empty()) {
      s.negative_prompt = detail::trim(j["negative_prompt"].get<std::string>());
    }
    if (j.contains("style_tags")) s.style_tags = detail::string_list(j, "style_tags", problems, true);
    detail::throw_problems(problems);
    return s;
  };
  auto no_check = [](const ImagePromptSpec&) -> std::optional<detail::ReferenceProblem> { return std::nullopt; };
  auto [spec, retries] = detail::run_with_repair<ImagePromptSpec>(backend, prompt, kPersonaTemperature,
                                                                  "image_prompt:" + persona.persona_id, 1, parse, no_check);
  spec.persona_id = persona.persona_id;
  spec.provenance = {clock(), retries, kPersonaTemperature, backend.backend_id(), tpl.versioned_id()};
  return spec;
}

// ---------------------------------------------------------------- images

class ImageBackend {
 public:
  virtual ~ImageBackend() = default;
  virtual ImageBuffer render(const ImagePromptSpec& spec) = 0;
  virtual std::string backend_id() const = 0;
};

/// Placeholder renderer: background tinted from the prompt hash and an 8x8
/// block pattern of the hash's first 64 bits in the top-left corner.
class MockImageBackend : public ImageBackend {
 public:
  explicit MockImageBackend(int size = 128) : size_(size) {
    require(size >= 64, ErrorCode::InvalidArgument, "mock image size must be >= 64");
  }

  static constexpr int kCell = 8;

  ImageBuffer render(const ImagePromptSpec& spec) override {
    const auto digest = sha256(spec.prompt_text);
    ImageBuffer img(size_, size_);
    const std::array<std::uint8_t, 3> bg{static_cast<std::uint8_t>(96 + digest[8] % 128),
                                         static_cast<std::uint8_t>(96 + digest[9] % 128),
                                         static_cast<std::uint8_t>(96 + digest[10] % 128)};
    for (int y = 0; y < size_; ++y) {
      for (int x = 0; x < size_; ++x) {
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = bg[static_cast<std::size_t>(c)];
      }
    }
    for (int bit = 0; bit < 64; ++bit) {
      const bool on = (digest[static_cast<std::size_t>(bit / 8)] >> (bit % 8)) & 1;
      const int y0 = (bit / 8) * kCell, x0 = (bit % 8) * kCell;
      for (int y = y0; y < y0 + kCell; ++y) {
        for (int x = x0; x < x0 + kCell; ++x) {
          for (int c = 0; c < 3; ++c) img.at(y, x, c) = on ? 255 : 0;
        }
      }
    }
    return img;
  }

  std::string backend_id() const override { return "mock-image"; }

 private:
  int size_;
};

struct StoredImage {
  std::string sha256;  // hex of the PNG bytes
  fs::path path;       // <dir>/<sha256>.png
};

/// Renders and stores the image content-addressed under `images_dir`.
inline StoredImage generate_persona_image(const ImagePromptSpec& spec, ImageBackend& backend, const fs::path& images_dir) {
  require(!detail::trim(spec.prompt_text).empty(), ErrorCode::PreconditionFailed, "image prompt is empty");
  ImageBuffer img;
  try {
    img = backend.render(spec);
  } catch (const std::exception& e) {
    fail(ErrorCode::ImageBackendError, std::string(e.what()) + " for spec " + to_json(spec).dump());
  }
  const auto bytes = encode_png(img);
  const auto hex = to_hex(sha256(bytes));
  fs::create_directories(images_dir);
  const auto path = images_dir / (hex + ".png");
  if (!fs::exists(path)) write_atomic(path, bytes);
  return {hex, path};
}

}  // namespace soda::llm
