#pragma once

#include <array>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "soda/core/ctr_class.hpp"
#include "soda/error.hpp"

namespace soda {

using ConfusionMatrix = std::array<std::array<std::size_t, kNumClasses>, kNumClasses>;  // [true][pred]

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline ConfusionMatrix confusion_matrix(const std::vector<CtrClass>& y_true, const std::vector<CtrClass>& y_pred) {
  require(y_true.size() == y_pred.size(), ErrorCode::LengthMismatch,
          "y_true has " + std::to_string(y_true.size()) + " entries, y_pred " + std::to_string(y_pred.size()));
  ConfusionMatrix m{};
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    ++m[static_cast<std::size_t>(index_of(y_true[i]))][static_cast<std::size_t>(index_of(y_pred[i]))];
  }
  return m;
}

/// Per-class scores; any 0/0 ratio counts as 0.
inline std::array<ClassScores, kNumClasses> class_scores(const ConfusionMatrix& m) {
  std::array<ClassScores, kNumClasses> out{};
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    double tp = static_cast<double>(m[k][k]);
    double pred = 0, actual = 0;
    for (std::size_t j = 0; j < kNumClasses; ++j) {
      pred += static_cast<double>(m[j][k]);
      actual += static_cast<double>(m[k][j]);
    }
    auto& s = out[k];
    s.precision = pred > 0 ? tp / pred : 0.0;
    s.recall = actual > 0 ? tp / actual : 0.0;
    s.f1 = (s.precision + s.recall) > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  }
  return out;
}

/// Unweighted mean of the three per-class F1 scores; absent classes score 0.
inline double macro_f1(const std::vector<CtrClass>& y_true, const std::vector<CtrClass>& y_pred) {
  require(!y_true.empty(), ErrorCode::LengthMismatch, "macro_f1 needs at least one label");
  const auto scores = class_scores(confusion_matrix(y_true, y_pred));
  double sum = 0;
  for (const auto& s : scores) sum += s.f1;
  return sum / static_cast<double>(kNumClasses);
}

struct EvalReport {
  double macro_f1_all = 0.0;
  std::optional<double> macro_f1_conversion;
  std::array<ClassScores, kNumClasses> per_class{};
  ConfusionMatrix confusion{};
  std::size_t n_eval = 0;
  std::size_t n_conversion = 0;
};

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json per_class = nlohmann::json::object();
  for (auto c : kAllClasses) {
    const auto& s = r.per_class[static_cast<std::size_t>(index_of(c))];
    per_class[std::string(to_string(c))] = {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
  }
  nlohmann::json cm = nlohmann::json::array();
  for (const auto& row : r.confusion) cm.push_back(row);
  return {{"macro_f1_all", r.macro_f1_all},
          {"macro_f1_conversion", r.macro_f1_conversion ? nlohmann::json(*r.macro_f1_conversion) : nlohmann::json(nullptr)},
          {"per_class", per_class},
          {"confusion_matrix", cm},
          {"class_order", {"below_average", "average", "above_average"}},
          {"n_eval", r.n_eval},
          {"n_conversion", r.n_conversion}};
}

}  // namespace soda
