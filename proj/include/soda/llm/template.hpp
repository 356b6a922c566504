#pragma once

#include <cctype>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "soda/error.hpp"
#include "soda/fs.hpp"

namespace soda::llm {

/// Versioned prompt template loaded from a text file:
///
///   ---
///   id: ad_insight
///   version: 1.0.0
///   required: headline, body
///   schema: ad_insight_record
///   ---
///   [system]
///   ...
///   [user]
///   ... {headline} ... {{literal braces}} ...
struct PromptTemplate {
  std::string template_id;
  std::string version;
  std::string system_text;
  std::string user_text;
  std::vector<std::string> required;
  std::string schema;

  std::string versioned_id() const { return template_id + "@" + version; }
};

struct RenderedPrompt {
  std::string system_text;
  std::string user_text;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline bool is_name_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

/// Calls on_text for literal runs and on_placeholder for {name}; doubled braces
/// are literals. A '{' that does not start a well-formed name is kept as is.
template <class Text, class Placeholder>
void scan(const std::string& s, Text&& on_text, Placeholder&& on_placeholder) {
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (c == '{' && i + 1 < s.size() && s[i + 1] == '{') {
      on_text("{");
      i += 2;
    } else if (c == '}' && i + 1 < s.size() && s[i + 1] == '}') {
      on_text("}");
      i += 2;
    } else if (c == '{') {
      std::size_t j = i + 1;
      while (j < s.size() && is_name_char(s[j])) ++j;
      if (j < s.size() && s[j] == '}' && j > i + 1) {
        on_placeholder(s.substr(i + 1, j - i - 1));
        i = j + 1;
      } else {
        on_text(std::string(1, c));
        ++i;
      }
    } else {
      on_text(std::string(1, c));
      ++i;
    }
  }
}

}  // namespace detail

inline std::set<std::string> placeholders(const std::string& text) {
  std::set<std::string> out;
  detail::scan(text, [](const std::string&) {}, [&](const std::string& n) { out.insert(n); });
  return out;
}

inline void validate_template(const PromptTemplate& t) {
  require(!t.template_id.empty(), ErrorCode::ParseError, "template has no id");
  require(!t.version.empty(), ErrorCode::ParseError, "template " + t.template_id + " has no version");
  const auto names = placeholders(t.user_text);
  for (const auto& r : t.required) {
    require(names.count(r) > 0, ErrorCode::ParseError,
            "template " + t.template_id + ": required placeholder {" + r + "} missing from user text");
  }
}

inline PromptTemplate parse_template(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  PromptTemplate t;
  auto next = [&]() {
    if (!std::getline(in, line)) return false;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  while (next() && detail::trim(line).empty()) {
  }
  if (detail::trim(line) != "---") throw ParseError(lineno, "template must start with front matter '---'");
  bool closed = false;
  while (next()) {
    if (detail::trim(line) == "---") {
      closed = true;
      break;
    }
    if (detail::trim(line).empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw ParseError(lineno, "front matter line needs 'key: value'");
    const auto key = detail::trim(line.substr(0, colon));
    const auto value = detail::trim(line.substr(colon + 1));
    if (key == "id") {
      t.template_id = value;
    } else if (key == "version") {
      t.version = value;
    } else if (key == "schema") {
      t.schema = value;
    } else if (key == "required") {
      std::istringstream parts(value);
      std::string part;
      while (std::getline(parts, part, ',')) {
        if (auto p = detail::trim(part); !p.empty()) t.required.push_back(p);
      }
    }
  }
  if (!closed) throw ParseError(lineno, "unterminated front matter");

  std::string* section = nullptr;
  std::string system, user;
  while (next()) {
    const auto trimmed = detail::trim(line);
    if (trimmed == "[system]") {
      section = &system;
      continue;
    }
    if (trimmed == "[user]") {
      section = &user;
      continue;
    }
    if (!section) {
      if (trimmed.empty()) continue;
      throw ParseError(lineno, "text outside a [system] or [user] section");
    }
    *section += line + "\n";
  }
  t.system_text = detail::trim(system);
  t.user_text = detail::trim(user);
  validate_template(t);
  return t;
}

inline PromptTemplate load_template(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorCode::NotFound, "template not found: " + path.string());
  return parse_template(read_text(path));
}

/// Substitutes {name} from vars in both texts. Extra vars are ignored; any
/// placeholder without a value (required or not) raises MissingPlaceholder.
inline RenderedPrompt render_prompt(const PromptTemplate& t, const std::map<std::string, std::string>& vars) {
  for (const auto& r : t.required) {
    if (!vars.count(r)) fail(ErrorCode::MissingPlaceholder, r);
  }
  auto render = [&](const std::string& text) {
    std::string out;
    detail::scan(
        text, [&](const std::string& s) { out += s; },
        [&](const std::string& name) {
          auto it = vars.find(name);
          if (it == vars.end()) fail(ErrorCode::MissingPlaceholder, name);
          out += it->second;
        });
    return out;
  };
  return {render(t.system_text), render(t.user_text)};
}

/// Template ids shipped in templates/.
inline constexpr const char* kAdInsightTemplate = "ad_insight";
inline constexpr const char* kBrandPersonaTemplate = "brand_persona";
inline constexpr const char* kComparativeTemplate = "comparative";
inline constexpr const char* kUserPersonaTemplate = "user_persona";
inline constexpr const char* kImagePromptTemplate = "image_prompt";

/// Directory of .txt templates: explicit path, else SODA_TEMPLATES, else the
/// source tree's templates/ baked in at build time.
inline fs::path template_dir(const fs::path& explicit_dir = {}) {
  if (!explicit_dir.empty()) return explicit_dir;
  if (const char* env = std::getenv("SODA_TEMPLATES"); env && *env) return env;
#ifdef SODA_TEMPLATE_DIR
  return SODA_TEMPLATE_DIR;
#else
  return "templates";
#endif
}

struct TemplateSet {
  PromptTemplate ad_insight;
  PromptTemplate brand_persona;
  PromptTemplate comparative;
  PromptTemplate user_persona;
  PromptTemplate image_prompt;

  static TemplateSet load(const fs::path& dir = {}) {
    const auto d = template_dir(dir);
    auto get = [&](const char* id) { return load_template(d / (std::string(id) + ".txt")); };
    return {get(kAdInsightTemplate), get(kBrandPersonaTemplate), get(kComparativeTemplate), get(kUserPersonaTemplate),
            get(kImagePromptTemplate)};
  }
};

}  // namespace soda::llm
