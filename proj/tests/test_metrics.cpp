#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "soda/metrics/baselines.hpp"
#include "soda/metrics/bucketing.hpp"
#include "soda/metrics/eval.hpp"
#include "soda/metrics/f1.hpp"
#include "test_util.hpp"

using namespace soda;

namespace {

constexpr auto B = CtrClass::BelowAverage;
constexpr auto A = CtrClass::Average;
constexpr auto H = CtrClass::AboveAverage;

// Order-statistic quantile written out by hand for the oracle side.
double oracle_quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1) * p;
  const double lo = std::floor(h);
  const double hi = std::ceil(h);
  return v[static_cast<std::size_t>(lo)] + (h - lo) * (v[static_cast<std::size_t>(hi)] - v[static_cast<std::size_t>(lo)]);
}

// Macro F1 from per-class tp/fp/fn tallies.
double oracle_macro_f1(const std::vector<CtrClass>& t, const std::vector<CtrClass>& p) {
  double sum = 0;
  for (auto c : kAllClasses) {
    int tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (p[i] == c && t[i] == c) ++tp;
      if (p[i] == c && t[i] != c) ++fp;
      if (p[i] != c && t[i] == c) ++fn;
    }
    const double denom = 2.0 * tp + fp + fn;
    sum += denom > 0 ? 2.0 * tp / denom : 0.0;
  }
  return sum / 3.0;
}

std::vector<CtrClass> random_labels(Rng& rng, std::size_t n) {
  std::vector<CtrClass> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(class_from_index(static_cast<int>(rng.below(3))));
  return out;
}

TrainingRow point(double x, double y, CtrClass label, const std::string& id = "", std::string objective = "Awareness") {
  TrainingRow r;
  r.bundle.continuous = {x, y};
  r.bundle.token_ids = {Vocabulary::kCls, 0};
  r.label = label;
  r.source_ad_id = id;
  r.objective = std::move(objective);
  return r;
}

KnnPredictor knn(const std::vector<TrainingRow>& rows, int k) {
  return KnnPredictor(rows, k, FlatFeatures::fit(rows, 4, {}));
}

// Returns fixed probabilities keyed by the first continuous value.
class TablePredictor : public Predictor {
 public:
  ClassProbabilities predict_proba(const FeatureBundle& b) const override {
    const double x = b.continuous.at(0);
    if (x < 0.5) return {0.7, 0.2, 0.1};
    if (x < 1.5) return {0.1, 0.6, 0.3};
    return {0.1, 0.1, 0.8};
  }
};

}  // namespace

// ---------------------------------------------------------------- thresholds

TEST(FitThresholds, SixValueExample) {
  const std::vector<double> v = {0.01, 0.02, 0.03, 0.04, 0.05, 0.06};
  const auto t = fit_thresholds(v, "c1");
  EXPECT_NEAR(t.t1, 0.02 + (5.0 / 3.0 - 1.0) * 0.01, 1e-12);
  EXPECT_NEAR(t.t1, 2.667e-2, 1e-5);
  EXPECT_NEAR(t.t2, 4.333e-2, 1e-5);
  EXPECT_EQ(t.fitted_on, "c1");
  EXPECT_EQ(t.n_fitted, 6u);
  std::vector<CtrClass> labels;
  for (double x : v) labels.push_back(bucketize(x, t));
  EXPECT_EQ(labels, (std::vector<CtrClass>{B, B, A, A, H, H}));
}

TEST(FitThresholds, ConstantSample) {
  const auto t = fit_thresholds({0.02, 0.02, 0.02, 0.02});
  EXPECT_DOUBLE_EQ(t.t1, 0.02);
  EXPECT_DOUBLE_EQ(t.t2, 0.02);
  for (double x : {0.0, 0.02, 0.5}) EXPECT_EQ(bucketize(x, t), A);
}

TEST(FitThresholds, SymmetricSample) {
  const auto t = fit_thresholds({0.0, 0.5, 1.0});
  EXPECT_NEAR(0.5 - t.t1, t.t2 - 0.5, 1e-12);
  EXPECT_LT(t.t1, 0.5);
}

TEST(FitThresholds, TooFewValues) {
  try {
    fit_thresholds({0.1, 0.2});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewValues);
  }
}

TEST(FitThresholds, OutOfRangeValuesRejected) { EXPECT_THROW(fit_thresholds({0.1, 0.2, 1.5}), Error); }

TEST(FitThresholds, MatchesOracleOnRandomSamples) {
  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> v(3 + rng.below(40));
    for (auto& x : v) x = rng.uniform(0.0, 0.2);
    const auto th = fit_thresholds(v);
    EXPECT_DOUBLE_EQ(th.t1, oracle_quantile(v, 1.0 / 3.0));
    EXPECT_DOUBLE_EQ(th.t2, oracle_quantile(v, 2.0 / 3.0));
    EXPECT_LE(th.t1, th.t2);
  }
}

TEST(Bucketize, BoundaryRule) {
  const BucketThresholds t{0.02, 0.04, "", 0};
  EXPECT_EQ(bucketize(0.0199999, t), B);
  EXPECT_EQ(bucketize(0.02, t), A);
  EXPECT_EQ(bucketize(0.0399999, t), A);
  EXPECT_EQ(bucketize(0.04, t), H);
}

TEST(Bucketize, AffineInvariance) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(3 + rng.below(60));
    for (auto& x : v) x = rng.uniform(0.0, 0.1);
    const double a = rng.uniform(0.5, 5.0);
    const double b = rng.uniform(0.0, 0.4);
    std::vector<double> w;
    for (double x : v) w.push_back(a * x + b);
    const auto tv = fit_thresholds(v);
    const auto tw = fit_thresholds(w);
    for (std::size_t i = 0; i < v.size(); ++i) ASSERT_EQ(bucketize(v[i], tv), bucketize(w[i], tw)) << trial;
  }
}

TEST(Bucketize, DistinctSamplesSplitIntoEqualThirds) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 * (1 + rng.below(30));
    std::vector<double> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(static_cast<double>(i + 1) * 1e-3);
    rng.shuffle(v);
    const auto t = fit_thresholds(v);
    std::array<std::size_t, 3> counts{};
    for (double x : v) ++counts[static_cast<std::size_t>(index_of(bucketize(x, t)))];
    EXPECT_EQ(counts[0], n / 3);
    EXPECT_EQ(counts[1], n / 3);
    EXPECT_EQ(counts[2], n / 3);
  }
}

TEST(Bucketize, ThresholdsJsonRoundTrip) {
  const BucketThresholds t{0.01, 0.03, "corp", 99};
  EXPECT_EQ(nlohmann::json(t).get<BucketThresholds>(), t);
}

// ---------------------------------------------------------------- macro F1

TEST(MacroF1, PerfectPrediction) {
  const std::vector<CtrClass> y = {B, A, H, A};
  EXPECT_DOUBLE_EQ(macro_f1(y, y), 1.0);
}

TEST(MacroF1, WorkedExample) {
  const std::vector<CtrClass> t = {B, B, A, A, H, H};
  const std::vector<CtrClass> p = {B, A, A, A, H, B};
  EXPECT_NEAR(oracle_macro_f1(t, p), 0.6556, 1e-4);
  EXPECT_NEAR(macro_f1(t, p), 0.6556, 1e-4);
}

TEST(MacroF1, ZeroSupportClassesScoreZero) { EXPECT_NEAR(macro_f1({B, B}, {B, B}), 1.0 / 3.0, 1e-12); }

TEST(MacroF1, LengthMismatch) {
  try {
    macro_f1({B, A}, {B});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
  }
}

TEST(MacroF1, MatchesOracleAndStaysInUnitInterval) {
  Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.below(30);
    const auto t = random_labels(rng, n);
    const auto p = random_labels(rng, n);
    const double f = macro_f1(t, p);
    EXPECT_NEAR(f, oracle_macro_f1(t, p), 1e-12);
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, 1.0);
  }
}

TEST(MacroF1, PermutationInvariant) {
  Rng rng(22);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(30);
    auto t = random_labels(rng, n);
    auto p = random_labels(rng, n);
    const double before = macro_f1(t, p);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    std::vector<CtrClass> t2, p2;
    for (auto i : perm) {
      t2.push_back(t[i]);
      p2.push_back(p[i]);
    }
    EXPECT_DOUBLE_EQ(macro_f1(t2, p2), before);
  }
}

TEST(MacroF1, OneIffPerfectWhenAllClassesPresent) {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    auto t = random_labels(rng, 3 + rng.below(20));
    t[0] = B;
    t[1] = A;
    t[2] = H;
    auto p = t;
    EXPECT_DOUBLE_EQ(macro_f1(t, p), 1.0);
    const auto i = rng.below(t.size());
    p[i] = class_from_index((index_of(p[i]) + 1 + static_cast<int>(rng.below(2))) % 3);
    EXPECT_LT(macro_f1(t, p), 1.0);
  }
}

TEST(ConfusionMatrix, RowSumsAreTrueCounts) {
  Rng rng(24);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(50);
    const auto t = random_labels(rng, n);
    const auto m = confusion_matrix(t, random_labels(rng, n));
    std::size_t total = 0;
    for (auto c : kAllClasses) {
      const auto k = static_cast<std::size_t>(index_of(c));
      const auto row = m[k][0] + m[k][1] + m[k][2];
      EXPECT_EQ(row, static_cast<std::size_t>(std::count(t.begin(), t.end(), c)));
      total += row;
    }
    EXPECT_EQ(total, n);
  }
}

// ---------------------------------------------------------------- evaluation

TEST(Evaluate, NoConversionAdsLeavesSubsetAbsent) {
  const std::vector<TrainingRow> rows = {point(0, 0, B, "a"), point(1, 0, A, "b"), point(2, 0, H, "c")};
  const auto r = evaluate_model(TablePredictor(), rows);
  EXPECT_FALSE(r.macro_f1_conversion.has_value());
  EXPECT_DOUBLE_EQ(r.macro_f1_all, 1.0);
  EXPECT_TRUE(to_json(r).at("macro_f1_conversion").is_null());
}

TEST(Evaluate, ConversionSubset) {
  const std::vector<TrainingRow> rows = {point(0, 0, B, "a", "Conversion"), point(1, 0, H, "b", "Conversion"),
                                         point(2, 0, H, "c")};
  const auto r = evaluate_model(TablePredictor(), rows);
  ASSERT_TRUE(r.macro_f1_conversion.has_value());
  EXPECT_NEAR(*r.macro_f1_conversion, oracle_macro_f1({B, H}, {B, A}), 1e-12);
  EXPECT_EQ(r.n_conversion, 2u);
}

TEST(Evaluate, FramesAveragedPerAd) {
  // Frame probabilities (0.7,.2,.1) and (.1,.1,.8) average to Above.
  const std::vector<TrainingRow> rows = {point(0, 0, H, "a"), point(2, 0, H, "a"), point(1, 0, A, "b")};
  const auto preds = predict_ads(TablePredictor(), rows);
  ASSERT_EQ(preds.size(), 2u);
  EXPECT_NEAR(preds[0].probabilities[0], 0.4, 1e-12);
  EXPECT_NEAR(preds[0].probabilities[2], 0.45, 1e-12);
  EXPECT_EQ(preds[0].predicted, H);
  EXPECT_EQ(evaluate_model(TablePredictor(), rows).n_eval, 2u);
}

TEST(Evaluate, SingleFrameAdMatchesFramePrediction) {
  const auto preds = predict_ads(TablePredictor(), {point(1, 0, A, "x")});
  EXPECT_EQ(preds[0].probabilities, TablePredictor().predict_proba(point(1, 0, A).bundle));
}

TEST(Evaluate, EmptyTestSet) {
  try {
    evaluate_model(TablePredictor(), {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyTestSet);
  }
}

TEST(Evaluate, ReportJsonShape) {
  const std::vector<TrainingRow> rows = {point(0, 0, B, "a", "Conversion"), point(1, 0, B, "b")};
  const auto j = to_json(evaluate_model(TablePredictor(), rows));
  EXPECT_EQ(j.at("confusion_matrix").size(), 3u);
  EXPECT_EQ(j.at("confusion_matrix")[0], (nlohmann::json{1, 1, 0}));
  EXPECT_EQ(j.at("n_eval"), 2);
  EXPECT_TRUE(j.at("per_class").contains("below_average"));
}

// ---------------------------------------------------------------- kNN

TEST(Knn, ExactMatchWithKOne) {
  const std::vector<TrainingRow> rows = {point(0, 0, B), point(5, 5, H), point(2, 1, A)};
  EXPECT_EQ(knn(rows, 1).predict(point(2, 1, B).bundle), A);
}

TEST(Knn, MajorityVote) {
  const std::vector<TrainingRow> rows = {point(0, 0, A), point(1, 0, A), point(2, 0, H), point(10, 0, B)};
  EXPECT_EQ(knn(rows, 3).predict(point(0.5, 0, B).bundle), A);
}

TEST(Knn, VoteTieGoesToNearest) {
  const std::vector<TrainingRow> rows = {point(0, 0, A), point(3, 0, H), point(10, 0, B)};
  EXPECT_EQ(knn(rows, 2).predict(point(2.5, 0, B).bundle), H);
  EXPECT_EQ(knn(rows, 2).predict(point(0.5, 0, B).bundle), A);
}

TEST(Knn, DistanceTieKeepsRowOrder) {
  const std::vector<TrainingRow> rows = {point(-1, 0, H), point(1, 0, B)};
  EXPECT_EQ(knn(rows, 1).predict(point(0, 0, A).bundle), H);
}

TEST(Knn, KOneIsIdempotentOnTrainingPoints) {
  Rng rng(31);
  std::vector<TrainingRow> rows;
  for (int i = 0; i < 60; ++i) rows.push_back(point(rng.normal(), rng.normal(), class_from_index(static_cast<int>(rng.below(3)))));
  const auto model = knn(rows, 1);
  for (const auto& r : rows) EXPECT_EQ(model.predict(r.bundle), r.label);
}

TEST(Knn, ArgumentErrors) {
  try {
    knn({}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyTrainSet);
  }
  EXPECT_THROW(knn({point(0, 0, A)}, 2), Error);
  EXPECT_EQ(knn_predict({point(0, 0, A), point(4, 4, H)}, point(3.9, 4, B).bundle, 1, 4, {}), H);
}

TEST(FlatFeatures, Layout) {
  TrainingRow r = point(1, 2, A);
  r.bundle.categorical_ids = {1};
  r.bundle.token_ids = {Vocabulary::kCls, 3, 3, 1, 0};
  r.bundle.image = ImageBuffer(2, 2, 255);
  const auto ff = FlatFeatures::fit({r, point(3, 2, A)}, 5, {2});
  EXPECT_EQ(ff.dim(), 2u + 2u + 5u + 24u);
  const auto v = ff(r.bundle);
  ASSERT_EQ(v.size(), ff.dim());
  EXPECT_DOUBLE_EQ(v[0], -1.0);  // (1 - 2) / 1
  EXPECT_DOUBLE_EQ(v[2], 0.0);
  EXPECT_DOUBLE_EQ(v[3], 1.0);
  EXPECT_DOUBLE_EQ(v[4 + 3], 2.0);  // token 3 twice
  EXPECT_DOUBLE_EQ(v[4 + 1], 1.0);  // UNK counted
  EXPECT_DOUBLE_EQ(v[4 + 2], 0.0);  // CLS skipped
  EXPECT_DOUBLE_EQ(v[9 + 7], 1.0);  // red channel, top bin
  EXPECT_DOUBLE_EQ(v[9 + 8 + 7], 1.0);
}

TEST(Mlp, LearnsSeparableSet) {
  std::vector<TrainingRow> rows;
  for (int i = 0; i < 30; ++i) rows.push_back(point(static_cast<double>(i % 3), 0.0, class_from_index(i % 3), "ad" + std::to_string(i)));
  nn::TrainConfig tc;
  tc.epochs = 200;
  tc.batch_size = 5;
  tc.learning_rate = 0.1;
  const MlpPredictor mlp(rows, FlatFeatures::fit(rows, 4, {}), tc, 16);
  EXPECT_EQ(mlp.history().size(), 200u);
  EXPECT_DOUBLE_EQ(evaluate_model(mlp, rows).macro_f1_all, 1.0);
}
