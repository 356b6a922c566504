#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "soda/error.hpp"
#include "soda/rng.hpp"

namespace soda::hpo {

using json = nlohmann::json;

enum class ParamKind { Uniform, LogUniform, IntegerRange, Categorical };

inline std::string to_string(ParamKind k) {
  switch (k) {
    case ParamKind::Uniform: return "uniform";
    case ParamKind::LogUniform: return "log-uniform";
    case ParamKind::IntegerRange: return "integer-range";
    case ParamKind::Categorical: return "categorical";
  }
  return "uniform";
}

inline ParamKind parse_param_kind(const std::string& s) {
  if (s == "uniform") return ParamKind::Uniform;
  if (s == "log-uniform") return ParamKind::LogUniform;
  if (s == "integer-range") return ParamKind::IntegerRange;
  if (s == "categorical") return ParamKind::Categorical;
  fail(ErrorCode::InvalidArgument, "unknown parameter kind " + s);
}

struct ParamSpec {
  std::string name;
  ParamKind kind = ParamKind::Uniform;
  double low = 0.0;
  double high = 1.0;
  std::vector<json> choices;  // categorical only

  static ParamSpec uniform(std::string n, double lo, double hi) { return {std::move(n), ParamKind::Uniform, lo, hi, {}}; }
  static ParamSpec log_uniform(std::string n, double lo, double hi) {
    return {std::move(n), ParamKind::LogUniform, lo, hi, {}};
  }
  static ParamSpec integer(std::string n, int lo, int hi) { return {std::move(n), ParamKind::IntegerRange, double(lo), double(hi), {}}; }
  static ParamSpec categorical(std::string n, std::vector<json> c) {
    return {std::move(n), ParamKind::Categorical, 0, 0, std::move(c)};
  }

  void validate() const {
    require(!name.empty(), ErrorCode::InvalidArgument, "parameter needs a name");
    if (kind == ParamKind::Categorical) {
      require(!choices.empty(), ErrorCode::InvalidArgument, name + ": categorical needs at least one choice");
      return;
    }
    require(std::isfinite(low) && std::isfinite(high) && low < high, ErrorCode::InvalidArgument,
            name + ": bounds must be finite with low < high");
    require(kind != ParamKind::LogUniform || low > 0, ErrorCode::InvalidArgument, name + ": log-uniform needs low > 0");
  }

  bool contains(const json& v) const {
    if (kind == ParamKind::Categorical) return std::find(choices.begin(), choices.end(), v) != choices.end();
    if (!v.is_number()) return false;
    const double x = v.get<double>();
    if (kind == ParamKind::IntegerRange && (!v.is_number_integer() && x != std::round(x))) return false;
    return x >= low && x <= high;
  }
};

using Config = std::map<std::string, json>;

struct Trial {
  Config config;
  double objective = std::numeric_limits<double>::infinity();
  int trial_index = 0;
  bool failed = false;
};

struct TpeConfig {
  double gamma = 0.25;
  int n_startup = 10;
  int n_candidates = 24;
  double bandwidth_floor = 1e-3;  // fraction of the range
  std::uint64_t seed = 0;

  void validate() const {
    require(gamma > 0 && gamma < 1, ErrorCode::InvalidArgument, "gamma must be in (0,1)");
    require(n_startup >= 1, ErrorCode::InvalidArgument, "n_startup must be >= 1");
    require(n_candidates >= 1, ErrorCode::InvalidArgument, "n_candidates must be >= 1");
    require(bandwidth_floor > 0, ErrorCode::InvalidArgument, "bandwidth floor must be positive");
  }
};

namespace detail {

// Numeric parameters live in an internal space: log for log-uniform, raw otherwise.
inline double to_internal(const ParamSpec& s, double v) { return s.kind == ParamKind::LogUniform ? std::log(v) : v; }
inline double internal_low(const ParamSpec& s) { return to_internal(s, s.low); }
inline double internal_high(const ParamSpec& s) { return to_internal(s, s.high); }

inline json from_internal(const ParamSpec& s, double u) {
  u = std::clamp(u, internal_low(s), internal_high(s));
  switch (s.kind) {
    case ParamKind::LogUniform: return std::clamp(std::exp(u), s.low, s.high);
    case ParamKind::IntegerRange: return static_cast<long long>(std::clamp(std::round(u), s.low, s.high));
    default: return u;
  }
}

inline json sample_uniform(const ParamSpec& s, Rng& rng) {
  if (s.kind == ParamKind::Categorical) return s.choices[rng.below(s.choices.size())];
  if (s.kind == ParamKind::IntegerRange) {
    const auto lo = static_cast<long long>(std::ceil(s.low));
    const auto hi = static_cast<long long>(std::floor(s.high));
    return lo + static_cast<long long>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
  }
  return from_internal(s, rng.uniform(internal_low(s), internal_high(s)));
}

/// Gaussian mixture in internal space. Observed centers share one Scott
/// bandwidth, floored at both floor_frac * range and range / min(100, n + 1);
/// one extra prior kernel sits mid-range with sigma = range. Without the
/// second floor and the prior the search collapses onto tight clusters.
struct Kde {
  std::vector<double> centers;
  double bandwidth = 1.0;
  double low = 0.0, high = 1.0;

  Kde(std::vector<double> xs, double lo, double hi, double floor_frac) : centers(std::move(xs)), low(lo), high(hi) {
    const double range = hi - lo;
    const double n = static_cast<double>(centers.size());
    double sd = 0.0;
    if (centers.size() > 1) {
      double mean = 0.0;
      for (double x : centers) mean += x;
      mean /= n;
      for (double x : centers) sd += (x - mean) * (x - mean);
      sd = std::sqrt(sd / (n - 1));
    }
    bandwidth = centers.empty() ? range : std::max({sd * std::pow(n, -0.2), floor_frac * range, range / std::min(100.0, n + 1.0)});
  }

  double prior_center() const { return 0.5 * (low + high); }
  double prior_sigma() const { return high - low; }

  double log_density(double x) const {
    std::vector<double> terms;
    terms.reserve(centers.size() + 1);
    auto add = [&](double c, double sigma) {
      const double z = (x - c) / sigma;
      terms.push_back(-0.5 * z * z - std::log(sigma));
    };
    for (double c : centers) add(c, bandwidth);
    add(prior_center(), prior_sigma());
    const double mx = *std::max_element(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += std::exp(t - mx);
    return mx + std::log(s) - std::log(static_cast<double>(terms.size()) * std::sqrt(2 * std::numbers::pi));
  }

  double sample(Rng& rng) const {
    const std::size_t k = rng.below(centers.size() + 1);
    const bool prior = k == centers.size();
    const double c = prior ? prior_center() : centers[k];
    const double sigma = prior ? prior_sigma() : bandwidth;
    for (int attempt = 0; attempt < 16; ++attempt) {
      const double x = rng.normal(c, sigma);
      if (x >= low && x <= high) return x;
    }
    return std::clamp(c, low, high);
  }
};

inline double categorical_log_prob(const ParamSpec& s, const std::vector<json>& values, const json& v) {
  const auto count = std::count(values.begin(), values.end(), v);
  return std::log((static_cast<double>(count) + 1.0) / (static_cast<double>(values.size()) + static_cast<double>(s.choices.size())));
}

inline json sample_categorical(const ParamSpec& s, const std::vector<json>& values, Rng& rng) {
  const double total = static_cast<double>(values.size() + s.choices.size());
  double u = rng.uniform() * total;
  for (const auto& c : s.choices) {
    u -= static_cast<double>(std::count(values.begin(), values.end(), c)) + 1.0;
    if (u < 0) return c;
  }
  return s.choices.back();
}

}  // namespace detail

/// Number of trials in the good set for a history of n.
inline std::size_t good_set_size(std::size_t n, double gamma) {
  return static_cast<std::size_t>(std::ceil(gamma * static_cast<double>(n) - 1e-12));
}

inline Config suggest(const std::vector<ParamSpec>& space, const std::vector<Trial>& history, const TpeConfig& cfg) {
  require(!space.empty(), ErrorCode::EmptySpace, "search space is empty");
  cfg.validate();
  for (const auto& s : space) s.validate();
  Rng rng(mix_seed(cfg.seed, history.size()));

  std::vector<const Trial*> ok;
  for (const auto& t : history) {
    if (!t.failed && std::isfinite(t.objective)) ok.push_back(&t);
  }
  Config out;
  if (history.size() < static_cast<std::size_t>(cfg.n_startup) || ok.empty()) {
    for (const auto& s : space) out[s.name] = detail::sample_uniform(s, rng);
    return out;
  }

  std::stable_sort(ok.begin(), ok.end(), [](const Trial* a, const Trial* b) { return a->objective < b->objective; });
  const std::size_t n_good = std::min(ok.size(), std::max<std::size_t>(1, good_set_size(history.size(), cfg.gamma)));
  std::vector<const Trial*> good(ok.begin(), ok.begin() + static_cast<std::ptrdiff_t>(n_good));
  std::vector<const Trial*> bad;
  for (const auto& t : history) {
    if (std::find(good.begin(), good.end(), &t) == good.end()) bad.push_back(&t);
  }

  std::vector<Config> candidates(static_cast<std::size_t>(cfg.n_candidates));
  std::vector<double> score(candidates.size(), 0.0);
  for (const auto& s : space) {
    auto collect = [&](const std::vector<const Trial*>& ts) {
      std::vector<json> v;
      for (const auto* t : ts) {
        auto it = t->config.find(s.name);
        if (it != t->config.end() && s.contains(it->second)) v.push_back(it->second);
      }
      return v;
    };
    const auto gv = collect(good);
    const auto bv = collect(bad);
    if (s.kind == ParamKind::Categorical) {
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        const json x = detail::sample_categorical(s, gv, rng);
        score[c] += detail::categorical_log_prob(s, gv, x) - detail::categorical_log_prob(s, bv, x);
        candidates[c][s.name] = x;
      }
      continue;
    }
    auto internal = [&](const std::vector<json>& v) {
      std::vector<double> xs;
      for (const auto& j : v) xs.push_back(detail::to_internal(s, j.get<double>()));
      return xs;
    };
    const double lo = detail::internal_low(s), hi = detail::internal_high(s);
    const detail::Kde l(internal(gv), lo, hi, cfg.bandwidth_floor);
    const detail::Kde g(internal(bv), lo, hi, cfg.bandwidth_floor);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const json x = detail::from_internal(s, l.sample(rng));
      const double u = detail::to_internal(s, x.get<double>());
      score[c] += l.log_density(u) - g.log_density(u);
      candidates[c][s.name] = x;
    }
  }
  const auto best = std::max_element(score.begin(), score.end()) - score.begin();
  return candidates[static_cast<std::size_t>(best)];
}

/// Objective returns a value to minimize; throwing or returning a
/// non-finite value marks the trial as failed.
using Objective = std::function<double(const Config&)>;

struct OptimizeResult {
  Trial best;
  std::vector<Trial> history;
};

/// Runs n_trials more trials on top of `history` (empty for a fresh search).
inline OptimizeResult optimize(const Objective& objective, const std::vector<ParamSpec>& space, int n_trials,
                               const TpeConfig& cfg, std::vector<Trial> history = {}) {
  require(n_trials >= 1, ErrorCode::InvalidArgument, "n_trials must be >= 1");
  for (int i = 0; i < n_trials; ++i) {
    Trial t;
    t.trial_index = static_cast<int>(history.size());
    t.config = suggest(space, history, cfg);
    try {
      t.objective = objective(t.config);
      t.failed = !std::isfinite(t.objective);
    } catch (const std::exception&) {
      t.failed = true;
    }
    if (t.failed) t.objective = std::numeric_limits<double>::infinity();
    history.push_back(std::move(t));
  }
  const Trial* best = nullptr;
  for (const auto& t : history) {
    if (!t.failed && (!best || t.objective < best->objective)) best = &t;
  }
  require(best != nullptr, ErrorCode::AllTrialsFailed, "every trial failed");
  return {*best, std::move(history)};
}

// ---------------------------------------------------------------- history I/O

inline json to_json(const Trial& t) {
  json cfg = json::object();
  for (const auto& [k, v] : t.config) cfg[k] = v;
  return {{"trial_index", t.trial_index},
          {"config", cfg},
          {"objective", t.failed ? json(nullptr) : json(t.objective)},
          {"failed", t.failed}};
}

inline Trial trial_from_json(const json& j) {
  Trial t;
  t.trial_index = j.at("trial_index").get<int>();
  for (const auto& [k, v] : j.at("config").items()) t.config[k] = v;
  t.failed = j.value("failed", false);
  t.objective = t.failed || j.at("objective").is_null() ? std::numeric_limits<double>::infinity()
                                                          : j.at("objective").get<double>();
  if (!std::isfinite(t.objective)) t.failed = true;
  return t;
}

inline std::string history_to_jsonl(const std::vector<Trial>& history) {
  std::string out;
  for (const auto& t : history) out += to_json(t).dump() + "\n";
  return out;
}

inline std::vector<Trial> history_from_jsonl(const std::string& text) {
  std::vector<Trial> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(trial_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError(lineno, std::string("trial history: ") + e.what());
    }
  }
  return out;
}

inline json to_json(const ParamSpec& s) {
  json j{{"name", s.name}, {"kind", to_string(s.kind)}};
  if (s.kind == ParamKind::Categorical) {
    j["choices"] = s.choices;
  } else {
    j["low"] = s.low;
    j["high"] = s.high;
  }
  return j;
}

inline ParamSpec param_from_json(const json& j) {
  ParamSpec s;
  s.name = j.at("name").get<std::string>();
  s.kind = parse_param_kind(j.at("kind").get<std::string>());
  if (s.kind == ParamKind::Categorical) {
    s.choices = j.at("choices").get<std::vector<json>>();
  } else {
    s.low = j.at("low").get<double>();
    s.high = j.at("high").get<double>();
  }
  s.validate();
  return s;
}

/// learning_rate, d_proj, dropout and batch_size for the fusion trainer.
inline std::vector<ParamSpec> default_search_space() {
  return {ParamSpec::log_uniform("learning_rate", 1e-3, 0.5), ParamSpec::categorical("d_proj", {32, 64}),
          ParamSpec::uniform("dropout", 0.0, 0.3), ParamSpec::categorical("batch_size", {16, 32, 64})};
}

}  // namespace soda::hpo
