#pragma once

#include <array>
#include <map>
#include <vector>

#include "soda/core/expand.hpp"
#include "soda/ingestion/corpus.hpp"
#include "soda/ingestion/vocab.hpp"
#include "soda/metrics/bucketing.hpp"

namespace soda {

struct DatasetOptions {
  int vocab_max_size = 2000;
  int max_len = 64;
  int image_size = 64;
  std::array<double, 3> split_ratios{0.7, 0.1, 0.2};
  std::uint64_t split_seed = 0;
};

/// Labelled, expanded and split corpus ready for training.
struct PreparedDataset {
  Vocabulary vocab;
  BucketThresholds thresholds;
  std::map<std::string, CtrClass> labels;  // by ad id
  DatasetSplit split;
  std::vector<AdRecord> records;
};

/// Thresholds are fitted on every record with an observed CTR; the
/// vocabulary is built from the training split's ads only.
inline PreparedDataset prepare_dataset(const CorpusManifest& manifest, std::vector<AdRecord> records,
                                       const DatasetOptions& opt) {
  std::vector<double> ctrs;
  for (const auto& r : records) {
    if (r.observed_ctr) ctrs.push_back(*r.observed_ctr);
  }
  PreparedDataset ds;
  ds.thresholds = fit_thresholds(ctrs, manifest.corpus_id);

  std::vector<AdRecord> labelled;
  for (const auto& r : records) {
    if (!r.observed_ctr) continue;
    ds.labels[r.ad_id] = bucketize(*r.observed_ctr, ds.thresholds);
    labelled.push_back(r);
  }

  // Split at the ad level first (one placeholder row per ad), so the
  // vocabulary can be restricted to training ads before tokenizing.
  std::vector<TrainingRow> placeholders;
  for (const auto& r : labelled) placeholders.push_back({{}, ds.labels[r.ad_id], r.ad_id, 0, r.objective});
  const auto ad_split = split_dataset(placeholders, opt.split_ratios, opt.split_seed);
  std::map<std::string, int> part;
  for (const auto& r : ad_split.train) part[r.source_ad_id] = 0;
  for (const auto& r : ad_split.val) part[r.source_ad_id] = 1;
  for (const auto& r : ad_split.test) part[r.source_ad_id] = 2;

  std::vector<AdRecord> train_ads;
  for (const auto& r : labelled) {
    if (part[r.ad_id] == 0) train_ads.push_back(r);
  }
  ds.vocab = build_vocab(train_ads, opt.vocab_max_size);

  PreprocessContext ctx;
  ctx.schema = manifest.schema;
  ctx.vocab = ds.vocab;
  ctx.max_len = opt.max_len;
  ctx.image_size = opt.image_size;
  ctx.image_root = manifest.resolved_images();
  for (const auto& r : labelled) {
    auto rows = expand_creative(r, ds.labels[r.ad_id], ctx);
    auto& dst = part[r.ad_id] == 0 ? ds.split.train : part[r.ad_id] == 1 ? ds.split.val : ds.split.test;
    for (auto& row : rows) dst.push_back(std::move(row));
  }
  ds.records = std::move(records);
  return ds;
}

}  // namespace soda
