#pragma once

#include <optional>
#include <string>
#include <vector>

#include "soda/core/expand.hpp"
#include "soda/core/predictor.hpp"
#include "soda/ingestion/vocab.hpp"
#include "soda/metrics/bucketing.hpp"
#include "soda/nn/fusion.hpp"
#include "soda/nn/trainer.hpp"

namespace soda::nn {

struct PredictionResult {
  ClassProbabilities probabilities{};
  CtrClass predicted_class = CtrClass::Average;
  BranchEmbeddings branches;
  std::optional<AttentionTrace> attention;
};

/// Trained fusion network plus everything needed to score raw records:
/// vocabulary, feature schema, normalization statistics and the bucket
/// thresholds the labels were derived from.
class CtrModel : public Predictor {
 public:
  FusionConfig config;
  FusionParams<float> weights;
  NormalizationStats stats;
  Vocabulary vocab;
  FeatureSchema schema;
  BucketThresholds thresholds;
  std::uint64_t seed = 0;
  nlohmann::json training;  // train config, split and history metadata

  PredictionResult forward(const FeatureBundle& bundle, bool capture_attention) const {
    const auto in = prepare_input<float>(bundle, stats, config.encoder);
    PredictionResult r;
    std::vector<std::vector<Mat<float>>> attn;
    Mat<float> logits = fusion_logits(weights, in, 0.0, nullptr, nullptr,
                                      capture_attention ? &attn : nullptr, &r.branches);
    r.probabilities = softmax3(logits);
    r.predicted_class = argmax_class(r.probabilities);
    if (capture_attention) {
      AttentionTrace trace;
      for (auto& layer : attn) {
        std::vector<Mat<double>> heads;
        for (auto& h : layer) heads.push_back(h.cast<double>());
        trace.layers.push_back(std::move(heads));
      }
      r.attention = std::move(trace);
    }
    return r;
  }

  ClassProbabilities predict_proba(const FeatureBundle& bundle) const override {
    return forward(bundle, false).probabilities;
  }

  PreprocessContext preprocess_context(fs::path image_root = {}) const {
    PreprocessContext ctx;
    ctx.schema = schema;
    ctx.vocab = vocab;
    ctx.max_len = config.encoder.max_len;
    ctx.image_size = config.encoder.image_size;
    ctx.image_root = std::move(image_root);
    return ctx;
  }

  /// Frame-averaged prediction for one record.
  PredictionResult predict_ad(const AdRecord& record, const PreprocessContext& ctx) const {
    const auto rows = expand_creative(record, CtrClass::Average, ctx);
    PredictionResult avg;
    for (const auto& row : rows) {
      const auto r = forward(row.bundle, false);
      for (std::size_t k = 0; k < kNumClasses; ++k) avg.probabilities[k] += r.probabilities[k];
      if (avg.branches.tabular.empty()) avg.branches = r.branches;
    }
    for (auto& p : avg.probabilities) p /= static_cast<double>(rows.size());
    avg.predicted_class = argmax_class(avg.probabilities);
    return avg;
  }
};

/// Derives the encoder vocabulary sizes from the schema and vocabulary.
inline FusionConfig complete_config(FusionConfig cfg, const FeatureSchema& schema, const Vocabulary& vocab) {
  cfg.encoder.categorical_vocab_sizes = schema.categorical_vocab_sizes();
  cfg.encoder.n_continuous = static_cast<int>(schema.continuous.size());
  cfg.encoder.text_vocab_size = vocab.size();
  cfg.validate();
  return cfg;
}

struct ModelSetup {
  FusionConfig config;
  Vocabulary vocab;
  FeatureSchema schema;
  BucketThresholds thresholds;
};

struct TrainResult {
  CtrModel model;
  std::vector<double> history;
};

/// Fits normalization statistics on the rows, initializes the network from
/// train_cfg.seed and runs SGD on mean cross-entropy.
inline TrainResult train_fusion(const std::vector<TrainingRow>& rows, const ModelSetup& setup,
                                const TrainConfig& train_cfg) {
  require(!rows.empty(), ErrorCode::EmptyDataset, "no training rows");
  train_cfg.validate();
  TrainResult out;
  CtrModel& m = out.model;
  m.config = complete_config(setup.config, setup.schema, setup.vocab);
  m.vocab = setup.vocab;
  m.schema = setup.schema;
  m.thresholds = setup.thresholds;
  m.seed = train_cfg.seed;
  m.stats = fit_stats(rows, m.config.encoder.image_size);
  m.weights = FusionParams<float>(m.config);
  Rng init_rng(train_cfg.seed);
  m.weights.init(init_rng);

  std::vector<PreparedInput<float>> inputs;
  inputs.reserve(rows.size());
  for (const auto& r : rows) inputs.push_back(prepare_input<float>(r.bundle, m.stats, m.config.encoder));

  const double dropout = m.config.encoder.dropout;
  std::vector<const PreparedInput<float>*> batch;
  std::vector<CtrClass> labels;
  out.history = sgd_train(m.weights, rows.size(), train_cfg,
                          [&](const FusionParams<float>& p, std::span<const std::size_t> idx,
                              FusionParams<float>& grad, Rng& drop_rng) {
                            batch.clear();
                            labels.clear();
                            for (auto i : idx) {
                              batch.push_back(&inputs[i]);
                              labels.push_back(rows[i].label);
                            }
                            return fusion_batch_loss(p, batch, labels, dropout, &drop_rng, &grad);
                          });
  m.training = {{"train_config", train_cfg}, {"history", out.history}, {"n_rows", rows.size()}};
  return out;
}

}  // namespace soda::nn
