#pragma once

#include <map>
#include <string>
#include <vector>

#include "soda/core/predictor.hpp"
#include "soda/metrics/f1.hpp"
#include "soda/nn/fusion.hpp"

namespace soda {

inline constexpr const char* kConversionObjective = "Conversion";

struct AdPrediction {
  std::string ad_id;
  std::string objective;
  CtrClass label = CtrClass::Average;
  ClassProbabilities probabilities{};
  CtrClass predicted = CtrClass::Average;
};

/// Per-ad predictions: frame-level probabilities are averaged before argmax.
/// Ads keep their first-appearance order.
inline std::vector<AdPrediction> predict_ads(const Predictor& model, const std::vector<TrainingRow>& rows) {
  std::vector<AdPrediction> ads;
  std::map<std::string, std::size_t> index;
  std::vector<std::size_t> frames;
  for (const auto& row : rows) {
    auto [it, inserted] = index.try_emplace(row.source_ad_id, ads.size());
    if (inserted) {
      ads.push_back({row.source_ad_id, row.objective, row.label, {}, CtrClass::Average});
      frames.push_back(0);
    }
    const auto p = model.predict_proba(row.bundle);
    auto& ad = ads[it->second];
    for (std::size_t k = 0; k < kNumClasses; ++k) ad.probabilities[k] += p[k];
    ++frames[it->second];
  }
  for (std::size_t i = 0; i < ads.size(); ++i) {
    for (auto& p : ads[i].probabilities) p /= static_cast<double>(frames[i]);
    ads[i].predicted = nn::argmax_class(ads[i].probabilities);
  }
  return ads;
}

inline EvalReport evaluate_predictions(const std::vector<AdPrediction>& ads) {
  require(!ads.empty(), ErrorCode::EmptyTestSet, "no test rows");
  std::vector<CtrClass> y_true, y_pred, conv_true, conv_pred;
  for (const auto& ad : ads) {
    y_true.push_back(ad.label);
    y_pred.push_back(ad.predicted);
    if (ad.objective == kConversionObjective) {
      conv_true.push_back(ad.label);
      conv_pred.push_back(ad.predicted);
    }
  }
  EvalReport r;
  r.confusion = confusion_matrix(y_true, y_pred);
  r.per_class = class_scores(r.confusion);
  r.macro_f1_all = macro_f1(y_true, y_pred);
  if (!conv_true.empty()) r.macro_f1_conversion = macro_f1(conv_true, conv_pred);
  r.n_eval = ads.size();
  r.n_conversion = conv_true.size();
  return r;
}

/// Labels come from the rows (already bucketed with the model's thresholds).
inline EvalReport evaluate_model(const Predictor& model, const std::vector<TrainingRow>& test_rows) {
  require(!test_rows.empty(), ErrorCode::EmptyTestSet, "no test rows");
  return evaluate_predictions(predict_ads(model, test_rows));
}

}  // namespace soda
