#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "soda/ingestion/corpus.hpp"
#include "soda/ingestion/dataset.hpp"
#include "soda/ingestion/synthetic.hpp"
#include "soda/ingestion/vocab.hpp"
#include "test_util.hpp"

using namespace soda;
using soda::testing::small_ad;
using soda::testing::small_schema;
using soda::testing::TempDir;

namespace {

/// Independent tertile labelling: sort, interpolate at (n-1)/3 and 2(n-1)/3.
std::vector<CtrClass> oracle_tertiles(const std::vector<double>& v) {
  std::vector<double> s = v;
  std::sort(s.begin(), s.end());
  auto q = [&](double num, double den) {
    const double h = (static_cast<double>(s.size()) - 1.0) * num / den;
    const std::size_t lo = static_cast<std::size_t>(h);
    const std::size_t hi = lo + 1 < s.size() ? lo + 1 : lo;
    return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
  };
  const double t1 = q(1, 3), t2 = q(2, 3);
  std::vector<CtrClass> out;
  for (double x : v) {
    if (t1 == t2) out.push_back(CtrClass::Average);
    else out.push_back(x < t1 ? CtrClass::BelowAverage : x < t2 ? CtrClass::Average : CtrClass::AboveAverage);
  }
  return out;
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = read_text(e.path());
  }
  return out;
}

fs::path write_manifest(const fs::path& dir, const FeatureSchema& schema) {
  CorpusManifest m;
  m.corpus_id = "tiny";
  m.records_path = "records.jsonl";
  m.images_dir = "images";
  m.schema = schema;
  m.objectives = {"Conversion"};
  fs::create_directories(dir / "images");
  write_atomic(dir / "manifest.json", m.to_json().dump());
  return dir / "manifest.json";
}

std::vector<TrainingRow> rows_for(const std::vector<std::pair<std::string, int>>& ads) {
  std::vector<TrainingRow> rows;
  for (const auto& [id, frames] : ads) {
    for (int f = 0; f < frames; ++f) rows.push_back({{}, CtrClass::Average, id, f, ""});
  }
  return rows;
}

std::set<std::string> ad_ids(const std::vector<TrainingRow>& rows) {
  std::set<std::string> s;
  for (const auto& r : rows) s.insert(r.source_ad_id);
  return s;
}

}  // namespace

// ---------------------------------------------------------------- load_corpus

TEST(LoadCorpus, TwoWellFormedLinesInOrder) {
  TempDir dir;
  const auto manifest_path = write_manifest(dir.path(), small_schema());
  write_atomic(dir / "records.jsonl", to_json(small_ad("b")).dump() + "\n" + to_json(small_ad("a")).dump() + "\n");
  const auto recs = load_corpus(read_manifest(manifest_path));
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].ad_id, "b");
  EXPECT_EQ(recs[1].ad_id, "a");
  EXPECT_EQ(recs[0], small_ad("b"));
}

TEST(LoadCorpus, MalformedLineThreeCitesLine) {
  TempDir dir;
  const auto manifest_path = write_manifest(dir.path(), small_schema());
  write_atomic(dir / "records.jsonl",
               to_json(small_ad("a")).dump() + "\n" + to_json(small_ad("b")).dump() + "\n{not json\n");
  try {
    load_corpus(read_manifest(manifest_path));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(LoadCorpus, MissingImageIsUnresolvable) {
  TempDir dir;
  const auto manifest_path = write_manifest(dir.path(), small_schema());
  write_atomic(dir / "records.jsonl", to_json(small_ad("a", {"gone.png"})).dump() + "\n");
  try {
    load_corpus(read_manifest(manifest_path));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnresolvableImage);
    EXPECT_NE(std::string(e.what()).find("gone.png"), std::string::npos);
  }
}

TEST(LoadCorpus, DuplicateAdIdIsRejected) {
  TempDir dir;
  const auto manifest_path = write_manifest(dir.path(), small_schema());
  write_atomic(dir / "records.jsonl", to_json(small_ad("a")).dump() + "\n" + to_json(small_ad("a")).dump() + "\n");
  EXPECT_THROW(load_corpus(read_manifest(manifest_path)), ParseError);
}

TEST(LoadCorpus, ManifestRoundTrip) {
  TempDir dir;
  const auto manifest_path = write_manifest(dir.path(), small_schema());
  const auto m = read_manifest(manifest_path);
  EXPECT_EQ(m.corpus_id, "tiny");
  EXPECT_EQ(m.schema, small_schema());
  EXPECT_EQ(m.resolved_images(), dir / "images");
  EXPECT_THROW(read_manifest(dir / "nope.json"), Error);
}

// ---------------------------------------------------------------- synthetic

TEST(Synthetic, SameSeedGivesByteIdenticalCorpora) {
  TempDir a, b;
  SyntheticSpec spec;
  spec.n_ads = 300;
  spec.seed = 7;
  write_corpus(generate_synthetic(spec), a.path());
  write_corpus(generate_synthetic(spec), b.path());
  const auto ta = tree_bytes(a.path()), tb = tree_bytes(b.path());
  EXPECT_GT(ta.size(), 300u);
  EXPECT_EQ(ta, tb);
}

TEST(Synthetic, DifferentSeedsDiffer) {
  SyntheticSpec spec;
  spec.n_ads = 30;
  spec.seed = 1;
  const auto a = generate_synthetic(spec);
  spec.seed = 2;
  EXPECT_NE(a.records, generate_synthetic(spec).records);
}

TEST(Synthetic, ExactlyOneThirdPerClass) {
  SyntheticSpec spec;
  spec.n_ads = 300;
  spec.seed = 7;
  const auto c = generate_synthetic(spec);
  std::map<CtrClass, int> counts;
  for (auto cls : c.latent) ++counts[cls];
  for (auto cls : kAllClasses) EXPECT_EQ(counts[cls], 100);
}

TEST(Synthetic, TertilesRecoverLatentClassesExactly) {
  SyntheticSpec spec;
  spec.n_ads = 300;
  spec.seed = 7;
  const auto c = generate_synthetic(spec);
  std::vector<double> ctrs;
  for (const auto& r : c.records) ctrs.push_back(*r.observed_ctr);
  const auto oracle = oracle_tertiles(ctrs);
  int errors = 0;
  for (std::size_t i = 0; i < c.records.size(); ++i) errors += oracle[i] != c.latent[i];
  EXPECT_EQ(errors, 0);
  const auto t = fit_thresholds(ctrs);
  for (std::size_t i = 0; i < c.records.size(); ++i) EXPECT_EQ(bucketize(ctrs[i], t), c.latent[i]);
}

TEST(Synthetic, PlantedSignalsMatchClass) {
  SyntheticSpec spec;
  spec.n_ads = 90;
  spec.seed = 3;
  const auto c = generate_synthetic(spec);
  auto has_any = [](const std::string& text, const std::vector<std::string>& words) {
    const auto tokens = split_words(text);
    return std::any_of(words.begin(), words.end(),
                       [&](const std::string& w) { return std::find(tokens.begin(), tokens.end(), w) != tokens.end(); });
  };
  double bright_above = 0, bright_below = 0;
  int n_above = 0, n_below = 0;
  for (std::size_t i = 0; i < c.records.size(); ++i) {
    const auto& r = c.records[i];
    const bool pos = has_any(r.creative.headline, synth::kPositiveKeywords);
    const bool neg = has_any(r.creative.headline, synth::kNegativeKeywords);
    EXPECT_EQ(pos, c.latent[i] == CtrClass::AboveAverage) << r.ad_id;
    EXPECT_EQ(neg, c.latent[i] == CtrClass::BelowAverage) << r.ad_id;
    ASSERT_FALSE(r.creative.frames.empty());
    const auto& img = c.images.at(r.creative.frames[0]);
    double mean = 0;
    const int q = img.height() / 2;
    for (int y = 0; y < q; ++y)
      for (int x = 0; x < q; ++x)
        for (int ch = 0; ch < 3; ++ch) mean += img.at(y, x, ch);
    mean /= q * q * 3.0;
    if (c.latent[i] == CtrClass::AboveAverage) bright_above += mean, ++n_above;
    if (c.latent[i] == CtrClass::BelowAverage) bright_below += mean, ++n_below;
  }
  EXPECT_GT(bright_above / n_above, bright_below / n_below + 100.0);
}

TEST(Synthetic, RecordsValidateAgainstManifest) {
  TempDir dir;
  SyntheticSpec spec;
  spec.n_ads = 30;
  const auto path = write_corpus(generate_synthetic(spec), dir.path());
  const auto recs = load_corpus(read_manifest(path));
  EXPECT_EQ(recs.size(), 30u);
}

TEST(Synthetic, InvalidSpecRejected) {
  SyntheticSpec spec;
  spec.tabular_signal_strength = 1.5;
  EXPECT_THROW(generate_synthetic(spec), Error);
  spec = {};
  spec.n_ads = 0;
  EXPECT_THROW(generate_synthetic(spec), Error);
}

// ---------------------------------------------------------------- split_dataset

TEST(SplitDataset, TenAdsEightOneOne) {
  std::vector<std::pair<std::string, int>> ads;
  for (int i = 0; i < 10; ++i) ads.push_back({"ad" + std::to_string(i), 1});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = split_dataset(rows_for(ads), {0.8, 0.1, 0.1}, seed);
    EXPECT_EQ(s.train.size(), 8u);
    EXPECT_EQ(s.val.size(), 1u);
    EXPECT_EQ(s.test.size(), 1u);
  }
}

TEST(SplitDataset, FramesOfOneAdStayTogether) {
  const auto rows = rows_for({{"a", 3}, {"b", 1}, {"c", 2}, {"d", 1}, {"e", 1}});
  const auto s = split_dataset(rows, {0.6, 0.2, 0.2}, 4);
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    for (const auto& r : *part) {
      const auto n = std::count_if(part->begin(), part->end(),
                                   [&](const TrainingRow& o) { return o.source_ad_id == r.source_ad_id; });
      const auto total = std::count_if(rows.begin(), rows.end(),
                                       [&](const TrainingRow& o) { return o.source_ad_id == r.source_ad_id; });
      EXPECT_EQ(n, total);
    }
  }
}

TEST(SplitDataset, DeterministicInSeed) {
  std::vector<std::pair<std::string, int>> ads;
  for (int i = 0; i < 50; ++i) ads.push_back({"ad" + std::to_string(i), 1 + i % 3});
  const auto a = split_dataset(rows_for(ads), {0.7, 0.1, 0.2}, 9);
  const auto b = split_dataset(rows_for(ads), {0.7, 0.1, 0.2}, 9);
  EXPECT_EQ(ad_ids(a.train), ad_ids(b.train));
  EXPECT_EQ(ad_ids(a.test), ad_ids(b.test));
}

TEST(SplitDataset, PartitionPropertyOverRandomInputs) {
  Rng rng(17);
  for (int t = 0; t < 100; ++t) {
    std::vector<std::pair<std::string, int>> ads;
    const int n = 1 + static_cast<int>(rng.below(60));
    for (int i = 0; i < n; ++i) ads.push_back({"ad" + std::to_string(i), 1 + static_cast<int>(rng.below(3))});
    double a = rng.uniform(0.1, 1), b = rng.uniform(0.1, 1), c = rng.uniform(0.1, 1);
    const double sum = a + b + c;
    const std::array<double, 3> ratios{a / sum, b / sum, 1.0 - a / sum - b / sum};
    const auto rows = rows_for(ads);
    const auto s = split_dataset(rows, ratios, rng());
    EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), rows.size());
    const auto tr = ad_ids(s.train), va = ad_ids(s.val), te = ad_ids(s.test);
    for (const auto& id : tr) EXPECT_FALSE(va.count(id) || te.count(id));
    for (const auto& id : va) EXPECT_FALSE(te.count(id));
    EXPECT_EQ(tr.size() + va.size() + te.size(), static_cast<std::size_t>(n));
    EXPECT_LE(std::abs(static_cast<double>(tr.size()) - ratios[0] * n), 1.0);
  }
}

TEST(SplitDataset, EmptyInputAndBadRatios) {
  try {
    split_dataset({}, {0.7, 0.1, 0.2}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
  EXPECT_THROW(split_dataset(rows_for({{"a", 1}}), {0.5, 0.1, 0.1}, 0), Error);
  EXPECT_THROW(split_dataset(rows_for({{"a", 1}}), {1.0, 0.0, 0.0}, 0), Error);
}

// ---------------------------------------------------------------- vocabulary

TEST(Vocab, FrequencyThenLexicographic) {
  auto a = small_ad("a"), b = small_ad("b");
  a.creative.headline = "fast net";
  b.creative.headline = "fast game";
  for (auto* r : {&a, &b}) r->creative.body = r->creative.call_to_action = "";
  const auto v = build_vocab({a, b}, 100);
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"[PAD]", "[UNK]", "[CLS]", "fast", "game", "net"}));
  EXPECT_EQ(tokenize("fast net", v, 4), (std::vector<int>{2, 3, 5, 0}));
  EXPECT_EQ(tokenize("Fast, unknown!", v, 3), (std::vector<int>{2, 3, 1}));
}

TEST(Vocab, EmptyCorpusHasOnlyReserved) {
  const auto v = build_vocab({}, 10);
  EXPECT_EQ(v.size(), 3);
}

TEST(Vocab, MaxSizeFourKeepsTopWord) {
  auto a = small_ad("a"), b = small_ad("b");
  a.creative.headline = "fast net";
  b.creative.headline = "fast game";
  for (auto* r : {&a, &b}) r->creative.body = r->creative.call_to_action = "";
  const auto v = build_vocab({a, b}, 4);
  EXPECT_EQ(v.size(), 4);
  EXPECT_EQ(v.token(3), "fast");
  EXPECT_THROW(build_vocab({a}, 3), Error);
}

TEST(Vocab, IdsAreBijectionAndSurviveJson) {
  SyntheticSpec spec;
  spec.n_ads = 60;
  const auto c = generate_synthetic(spec);
  const auto v = build_vocab(c.records, 50);
  std::set<std::string> seen;
  for (int i = 0; i < v.size(); ++i) {
    EXPECT_EQ(v.id(v.token(i)), i);
    seen.insert(v.token(i));
  }
  EXPECT_EQ(seen.size(), static_cast<std::size_t>(v.size()));
  EXPECT_EQ(Vocabulary::from_json(v.to_json()), v);
}

TEST(Vocab, SplitWordsLowercasesAndSplitsPunctuation) {
  EXPECT_EQ(split_words("Hello,World! it's"), (std::vector<std::string>{"hello", "world", "it", "s"}));
}

// ---------------------------------------------------------------- prepare_dataset

TEST(PrepareDataset, VocabularyComesFromTrainingAdsOnly) {
  TempDir dir;
  SyntheticSpec spec;
  spec.n_ads = 60;
  spec.seed = 4;
  const auto path = write_corpus(generate_synthetic(spec), dir.path());
  const auto m = read_manifest(path);
  const auto recs = load_corpus(m);
  const auto ds = prepare_dataset(m, recs, {});
  std::set<std::string> train_ads = ad_ids(ds.split.train);
  std::vector<AdRecord> train_recs;
  for (const auto& r : recs) {
    if (train_ads.count(r.ad_id)) train_recs.push_back(r);
  }
  EXPECT_EQ(ds.vocab, build_vocab(train_recs, 2000));
  std::vector<double> ctrs;
  for (const auto& r : recs) ctrs.push_back(*r.observed_ctr);
  EXPECT_EQ(ds.thresholds.t1, fit_thresholds(ctrs).t1);
  EXPECT_EQ(ad_ids(ds.split.train).size() + ad_ids(ds.split.val).size() + ad_ids(ds.split.test).size(), 60u);
}
