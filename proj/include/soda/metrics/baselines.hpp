#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "soda/core/predictor.hpp"
#include "soda/ingestion/vocab.hpp"
#include "soda/nn/fusion.hpp"
#include "soda/nn/trainer.hpp"

namespace soda {

/// Low-level flat features shared by the kNN and MLP baselines:
/// standardized continuous values, one-hot categoricals, token counts over the
/// vocabulary and an 8-bin-per-channel color histogram.
class FlatFeatures {
 public:
  static constexpr int kBins = 8;

  FlatFeatures() = default;

  static FlatFeatures fit(const std::vector<TrainingRow>& rows, int vocab_size,
                          std::vector<int> categorical_sizes) {
    FlatFeatures f;
    f.vocab_size_ = vocab_size;
    f.categorical_sizes_ = std::move(categorical_sizes);
    if (!rows.empty()) {
      const std::size_t n = rows.front().bundle.continuous.size();
      f.mean_.assign(n, 0.0);
      f.std_.assign(n, 0.0);
      for (const auto& r : rows) {
        for (std::size_t i = 0; i < n; ++i) f.mean_[i] += r.bundle.continuous[i];
      }
      for (auto& m : f.mean_) m /= static_cast<double>(rows.size());
      for (const auto& r : rows) {
        for (std::size_t i = 0; i < n; ++i) f.std_[i] += std::pow(r.bundle.continuous[i] - f.mean_[i], 2);
      }
      for (auto& s : f.std_) s = std::max(1e-6, std::sqrt(s / static_cast<double>(rows.size())));
    }
    return f;
  }

  std::size_t dim() const {
    return mean_.size() +
           static_cast<std::size_t>(std::accumulate(categorical_sizes_.begin(), categorical_sizes_.end(), 0)) +
           static_cast<std::size_t>(vocab_size_) + 3 * kBins;
  }

  std::vector<double> operator()(const FeatureBundle& b) const {
    std::vector<double> out;
    out.reserve(dim());
    for (std::size_t i = 0; i < mean_.size(); ++i) out.push_back((b.continuous.at(i) - mean_[i]) / std_[i]);
    for (std::size_t f = 0; f < categorical_sizes_.size(); ++f) {
      for (int v = 0; v < categorical_sizes_[f]; ++v) out.push_back(b.categorical_ids.at(f) == v ? 1.0 : 0.0);
    }
    const std::size_t counts = out.size();
    out.resize(counts + static_cast<std::size_t>(vocab_size_), 0.0);
    for (int id : b.token_ids) {
      if (id != Vocabulary::kPad && id != Vocabulary::kCls && id >= 0 && id < vocab_size_) {
        out[counts + static_cast<std::size_t>(id)] += 1.0;
      }
    }
    std::array<double, 3 * kBins> hist{};
    const auto px = b.image.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) {
      hist[(i % 3) * kBins + static_cast<std::size_t>(px[i] >> 5)] += 1.0;
    }
    const double n_pixels = px.empty() ? 1.0 : static_cast<double>(px.size() / 3);
    for (double h : hist) out.push_back(h / n_pixels);
    return out;
  }

 private:
  std::vector<double> mean_, std_;
  std::vector<int> categorical_sizes_;
  int vocab_size_ = 0;
};

/// Euclidean kNN over flat features. Majority vote; a vote tie goes to the
/// tied class whose member is nearest; equal distances keep row order.
class KnnPredictor : public Predictor {
 public:
  KnnPredictor(const std::vector<TrainingRow>& train, int k, FlatFeatures features)
      : k_(k), features_(std::move(features)) {
    require(!train.empty(), ErrorCode::EmptyTrainSet, "kNN needs training rows");
    require(k >= 1 && static_cast<std::size_t>(k) <= train.size(), ErrorCode::InvalidArgument,
            "k must be in [1, training size]");
    for (const auto& r : train) {
      points_.push_back(features_(r.bundle));
      labels_.push_back(r.label);
    }
  }

  CtrClass predict(const FeatureBundle& query) const {
    const auto q = features_(query);
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) {
      double d = 0;
      for (std::size_t j = 0; j < q.size(); ++j) d += (points_[i][j] - q[j]) * (points_[i][j] - q[j]);
      dist.emplace_back(d, i);
    }
    const auto k = static_cast<std::size_t>(k_);
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    std::array<int, kNumClasses> votes{};
    for (std::size_t i = 0; i < k; ++i) ++votes[static_cast<std::size_t>(index_of(labels_[dist[i].second]))];
    const int top = *std::max_element(votes.begin(), votes.end());
    for (std::size_t i = 0; i < k; ++i) {
      const CtrClass c = labels_[dist[i].second];
      if (votes[static_cast<std::size_t>(index_of(c))] == top) return c;
    }
    return labels_[dist.front().second];
  }

  ClassProbabilities predict_proba(const FeatureBundle& bundle) const override { return one_hot(predict(bundle)); }

 private:
  int k_;
  FlatFeatures features_;
  std::vector<std::vector<double>> points_;
  std::vector<CtrClass> labels_;
};

inline CtrClass knn_predict(const std::vector<TrainingRow>& train_rows, const FeatureBundle& query, int k,
                            int vocab_size, const std::vector<int>& categorical_sizes) {
  require(!train_rows.empty(), ErrorCode::EmptyTrainSet, "kNN needs training rows");
  return KnnPredictor(train_rows, k, FlatFeatures::fit(train_rows, vocab_size, categorical_sizes)).predict(query);
}

// ---------------------------------------------------------------- MLP baseline

template <class T>
struct MlpParams {
  using Scalar = T;
  nn::Linear<T> hidden;
  nn::Linear<T> out;

  MlpParams() = default;
  MlpParams(int in, int width) : hidden(in, width), out(width, static_cast<int>(kNumClasses)) {}

  void init(Rng& rng) {
    hidden.init(rng);
    out.init(rng);
  }

  template <class F>
  void for_each(const std::string& prefix, F&& f) {
    hidden.for_each(prefix + "hidden.", f);
    out.for_each(prefix + "out.", f);
  }

  nn::Mat<T> logits(const nn::Mat<T>& x, nn::Mat<T>* z = nullptr) const {
    nn::Mat<T> pre = hidden.forward(x);
    nn::Mat<T> y = out.forward(nn::gelu(pre));
    if (z) *z = std::move(pre);
    return y;
  }
};

/// Single-hidden-layer perceptron on the flat features, trained with the same
/// SGD loop and loss as the fusion network.
class MlpPredictor : public Predictor {
 public:
  MlpPredictor(const std::vector<TrainingRow>& train, FlatFeatures features, const nn::TrainConfig& cfg,
               int width = 128)
      : features_(std::move(features)) {
    require(!train.empty(), ErrorCode::EmptyTrainSet, "MLP needs training rows");
    std::vector<nn::Mat<float>> xs;
    for (const auto& r : train) xs.push_back(to_row(features_(r.bundle)));
    params_ = MlpParams<float>(static_cast<int>(features_.dim()), width);
    Rng init_rng(cfg.seed);
    params_.init(init_rng);
    history_ = nn::sgd_train(params_, train.size(), cfg,
                             [&](const MlpParams<float>& p, std::span<const std::size_t> idx, MlpParams<float>& g, Rng&) {
                               double total = 0;
                               const double inv_b = 1.0 / static_cast<double>(idx.size());
                               for (auto i : idx) {
                                 nn::Mat<float> z;
                                 const auto logits = p.logits(xs[i], &z);
                                 const auto probs = nn::softmax3(logits);
                                 total += nn::cross_entropy(probs, train[i].label);
                                 nn::Mat<float> d(1, static_cast<Eigen::Index>(kNumClasses));
                                 for (std::size_t k = 0; k < kNumClasses; ++k) {
                                   const double y = k == static_cast<std::size_t>(index_of(train[i].label)) ? 1.0 : 0.0;
                                   d(0, static_cast<Eigen::Index>(k)) = static_cast<float>((probs[k] - y) * inv_b);
                                 }
                                 const auto dg = p.out.backward(g.out, nn::gelu(z), d);
                                 p.hidden.backward(g.hidden, xs[i], nn::gelu_backward(z, dg));
                               }
                               return total * inv_b;
                             });
  }

  ClassProbabilities predict_proba(const FeatureBundle& bundle) const override {
    return nn::softmax3(params_.logits(to_row(features_(bundle))));
  }

  const std::vector<double>& history() const { return history_; }

 private:
  static nn::Mat<float> to_row(const std::vector<double>& v) {
    nn::Mat<float> m(1, static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = static_cast<float>(v[i]);
    return m;
  }

  FlatFeatures features_;
  MlpParams<float> params_;
  std::vector<double> history_;
};

}  // namespace soda
