#pragma once

#include <algorithm>
#include <array>
#include <type_traits>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "soda/core/ctr_class.hpp"
#include "soda/core/domain.hpp"
#include "soda/nn/encoders.hpp"

namespace soda::nn {

struct FusionConfig {
  EncoderConfig encoder;
  int d_proj = 64;
  int hidden = 128;

  void validate() const {
    encoder.validate();
    require(d_proj > 0 && hidden > 0, ErrorCode::InvalidArgument, "d_proj and hidden must be positive");
  }

  friend bool operator==(const FusionConfig&, const FusionConfig&) = default;
};

inline void to_json(nlohmann::json& j, const FusionConfig& c) {
  j = {{"encoder", c.encoder}, {"d_proj", c.d_proj}, {"hidden", c.hidden}};
}

inline void from_json(const nlohmann::json& j, FusionConfig& c) {
  j.at("encoder").get_to(c.encoder);
  j.at("d_proj").get_to(c.d_proj);
  j.at("hidden").get_to(c.hidden);
}

/// Per-layer post-softmax image attention, each entry heads x (tokens x tokens).
struct AttentionTrace {
  std::vector<std::vector<Mat<double>>> layers;

  int n_layers() const { return static_cast<int>(layers.size()); }
  int n_heads() const { return layers.empty() ? 0 : static_cast<int>(layers.front().size()); }
  int tokens() const {
    return layers.empty() || layers.front().empty() ? 0 : static_cast<int>(layers.front().front().rows());
  }
};

/// Corpus-fit standardization applied before the encoders.
struct NormalizationStats {
  std::vector<double> continuous_mean;
  std::vector<double> continuous_std;
  std::array<double, 3> channel_mean{0.0, 0.0, 0.0};
  std::array<double, 3> channel_std{1.0, 1.0, 1.0};

  friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

inline void to_json(nlohmann::json& j, const NormalizationStats& s) {
  j = {{"continuous_mean", s.continuous_mean},
       {"continuous_std", s.continuous_std},
       {"channel_mean", s.channel_mean},
       {"channel_std", s.channel_std}};
}

inline void from_json(const nlohmann::json& j, NormalizationStats& s) {
  j.at("continuous_mean").get_to(s.continuous_mean);
  j.at("continuous_std").get_to(s.continuous_std);
  j.at("channel_mean").get_to(s.channel_mean);
  j.at("channel_std").get_to(s.channel_std);
}

inline NormalizationStats fit_stats(const std::vector<TrainingRow>& rows, int image_size) {
  NormalizationStats s;
  if (rows.empty()) return s;
  const std::size_t n_cont = rows.front().bundle.continuous.size();
  s.continuous_mean.assign(n_cont, 0.0);
  s.continuous_std.assign(n_cont, 0.0);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < n_cont; ++i) s.continuous_mean[i] += r.bundle.continuous[i];
  }
  for (auto& m : s.continuous_mean) m /= static_cast<double>(rows.size());
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < n_cont; ++i) {
      const double d = r.bundle.continuous[i] - s.continuous_mean[i];
      s.continuous_std[i] += d * d;
    }
  }
  for (auto& v : s.continuous_std) v = std::max(1e-6, std::sqrt(v / static_cast<double>(rows.size())));

  std::array<double, 3> sum{}, sq{};
  double count = 0;
  for (const auto& r : rows) {
    const auto px = r.bundle.image.pixels();
    for (std::size_t i = 0; i < px.size(); i += 3) {
      for (int c = 0; c < 3; ++c) {
        const double v = px[i + static_cast<std::size_t>(c)] / 255.0;
        sum[c] += v;
        sq[c] += v * v;
      }
    }
    count += static_cast<double>(image_size) * image_size;
  }
  for (int c = 0; c < 3; ++c) {
    s.channel_mean[c] = sum[c] / count;
    s.channel_std[c] = std::max(1e-6, std::sqrt(std::max(0.0, sq[c] / count - s.channel_mean[c] * s.channel_mean[c])));
  }
  return s;
}

/// Encoder-ready inputs: standardized continuous values and image patches.
template <class T>
struct PreparedInput {
  std::vector<T> continuous;
  std::vector<int> categorical;
  std::vector<int> tokens;
  Mat<T> patches;
};

template <class T>
PreparedInput<T> prepare_input(const FeatureBundle& b, const NormalizationStats& stats,
                               const EncoderConfig& cfg) {
  require(b.continuous.size() == static_cast<std::size_t>(cfg.n_continuous), ErrorCode::ShapeMismatch,
          "bundle has " + std::to_string(b.continuous.size()) + " continuous features, model expects " +
              std::to_string(cfg.n_continuous));
  require(b.categorical_ids.size() == cfg.categorical_vocab_sizes.size(), ErrorCode::ShapeMismatch,
          "categorical field count mismatch");
  require(b.token_ids.size() == static_cast<std::size_t>(cfg.max_len), ErrorCode::ShapeMismatch,
          "token sequence length mismatch");
  require(b.image.height() == cfg.image_size && b.image.width() == cfg.image_size,
          ErrorCode::ShapeMismatch, "image not at model input size");
  PreparedInput<T> in;
  for (std::size_t i = 0; i < b.continuous.size(); ++i) {
    const double mean = i < stats.continuous_mean.size() ? stats.continuous_mean[i] : 0.0;
    const double sd = i < stats.continuous_std.size() ? stats.continuous_std[i] : 1.0;
    in.continuous.push_back(static_cast<T>((b.continuous[i] - mean) / sd));
  }
  in.categorical = b.categorical_ids;
  in.tokens = b.token_ids;
  in.patches = patchify<T>(b.image, cfg.patch_size);
  for (Eigen::Index j = 0; j < in.patches.cols(); ++j) {
    const auto c = static_cast<std::size_t>(j % 3);
    in.patches.col(j) = (in.patches.col(j).array() - static_cast<T>(stats.channel_mean[c])) /
                        static_cast<T>(stats.channel_std[c]);
  }
  return in;
}

template <class T>
struct FusionParams {
  using Scalar = T;
  TabularEncoder<T> tabular;
  TextEncoder<T> text;
  ImageEncoder<T> image;
  Linear<T> proj_tabular;
  Linear<T> proj_text;
  Linear<T> proj_image;
  Linear<T> hidden;
  Linear<T> out;

  FusionParams() = default;
  explicit FusionParams(const FusionConfig& cfg)
      : tabular(cfg.encoder),
        text(cfg.encoder),
        image(cfg.encoder),
        proj_tabular(cfg.encoder.d_model, cfg.d_proj),
        proj_text(cfg.encoder.d_model, cfg.d_proj),
        proj_image(cfg.encoder.d_model, cfg.d_proj),
        hidden(3 * cfg.d_proj, cfg.hidden),
        out(cfg.hidden, static_cast<int>(kNumClasses)) {}

  void init(Rng& rng) {
    tabular.init(rng);
    text.init(rng);
    image.init(rng);
    proj_tabular.init(rng);
    proj_text.init(rng);
    proj_image.init(rng);
    hidden.init(rng);
    out.init(rng);
  }

  template <class F>
  void for_each(const std::string& prefix, F&& f) {
    tabular.for_each(prefix + "tabular.", f);
    text.for_each(prefix + "text.", f);
    image.for_each(prefix + "image.", f);
    proj_tabular.for_each(prefix + "proj_tabular.", f);
    proj_text.for_each(prefix + "proj_text.", f);
    proj_image.for_each(prefix + "proj_image.", f);
    hidden.for_each(prefix + "hidden.", f);
    out.for_each(prefix + "out.", f);
  }
};

template <class T>
struct FusionCache {
  typename TabularEncoder<T>::Cache tabular;
  typename TextEncoder<T>::Cache text;
  typename ImageEncoder<T>::Cache image;
  Mat<T> e_tabular, e_text, e_image;
  Mat<T> concat, z, g, drop;
};

struct BranchEmbeddings {
  std::vector<double> tabular, text, image;
};

/// Logits (1 x 3). Concatenation order: tabular, text, image.
template <class T>
Mat<T> fusion_logits(const FusionParams<T>& p, const PreparedInput<T>& in, double dropout, Rng* rng,
                     std::type_identity_t<FusionCache<T>>* cache,
                     std::type_identity_t<std::vector<std::vector<Mat<T>>>>* attention = nullptr,
                     BranchEmbeddings* branches = nullptr) {
  Mat<T> e_tab = p.tabular.forward(in.continuous, in.categorical, dropout, rng, cache ? &cache->tabular : nullptr);
  Mat<T> e_txt = p.text.forward(in.tokens, dropout, rng, cache ? &cache->text : nullptr);
  Mat<T> e_img = p.image.forward(in.patches, dropout, rng, cache ? &cache->image : nullptr, attention);
  const auto dp = p.proj_tabular.out();
  Mat<T> concat(1, 3 * dp);
  concat.leftCols(dp) = p.proj_tabular.forward(e_tab);
  concat.middleCols(dp, dp) = p.proj_text.forward(e_txt);
  concat.rightCols(dp) = p.proj_image.forward(e_img);
  Mat<T> z = p.hidden.forward(concat);
  Mat<T> g = gelu(z);
  Mat<T> drop = dropout_mask<T>(g.rows(), g.cols(), dropout, rng);
  Mat<T> logits = p.out.forward(apply_mask(g, drop));
  if (branches) {
    auto to_vec = [](const Mat<T>& m) {
      std::vector<double> v(static_cast<std::size_t>(m.size()));
      for (Eigen::Index i = 0; i < m.size(); ++i) v[static_cast<std::size_t>(i)] = static_cast<double>(m(i));
      return v;
    };
    branches->tabular = to_vec(e_tab);
    branches->text = to_vec(e_txt);
    branches->image = to_vec(e_img);
  }
  if (cache) {
    cache->e_tabular = std::move(e_tab);
    cache->e_text = std::move(e_txt);
    cache->e_image = std::move(e_img);
    cache->concat = std::move(concat);
    cache->z = std::move(z);
    cache->g = std::move(g);
    cache->drop = std::move(drop);
  }
  return logits;
}

template <class T>
void fusion_backward(const FusionParams<T>& p, FusionParams<T>& grad, const FusionCache<T>& c,
                     const Mat<T>& dlogits) {
  Mat<T> dg = apply_mask(p.out.backward(grad.out, apply_mask(c.g, c.drop), dlogits), c.drop);
  Mat<T> dconcat = p.hidden.backward(grad.hidden, c.concat, gelu_backward(c.z, dg));
  const auto dp = p.proj_tabular.out();
  p.tabular.backward(grad.tabular, c.tabular,
                     p.proj_tabular.backward(grad.proj_tabular, c.e_tabular, dconcat.leftCols(dp)));
  p.text.backward(grad.text, c.text, p.proj_text.backward(grad.proj_text, c.e_text, dconcat.middleCols(dp, dp)));
  p.image.backward(grad.image, c.image,
                   p.proj_image.backward(grad.proj_image, c.e_image, dconcat.rightCols(dp)));
}

/// Numerically stable softmax over a logit row.
template <class T>
std::array<double, kNumClasses> softmax3(const Mat<T>& logits) {
  std::array<double, kNumClasses> p{};
  double mx = static_cast<double>(logits(0, 0));
  for (std::size_t k = 1; k < kNumClasses; ++k) mx = std::max(mx, static_cast<double>(logits(0, static_cast<Eigen::Index>(k))));
  double sum = 0;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    p[k] = std::exp(static_cast<double>(logits(0, static_cast<Eigen::Index>(k))) - mx);
    sum += p[k];
  }
  for (auto& v : p) v /= sum;
  return p;
}

/// Argmax with lowest-index tie-break.
inline CtrClass argmax_class(const std::array<double, kNumClasses>& p) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < kNumClasses; ++k) {
    if (p[k] > p[best]) best = k;
  }
  return class_from_index(static_cast<int>(best));
}

inline constexpr double kProbabilityFloor = 1e-12;

/// Cross-entropy: -ln p(label), with p floored at 1e-12.
inline double cross_entropy(const std::array<double, kNumClasses>& p, CtrClass label) {
  return -std::log(std::max(p[static_cast<std::size_t>(index_of(label))], kProbabilityFloor));
}

/// Mean cross-entropy over a batch; when grad is non-null, accumulates the
/// gradient of that mean. dropout_rng non-null enables dropout.
template <class T>
double fusion_batch_loss(const FusionParams<T>& p, const std::vector<const PreparedInput<T>*>& inputs,
                         const std::vector<CtrClass>& labels, double dropout, Rng* dropout_rng,
                         std::type_identity_t<FusionParams<T>>* grad) {
  double total = 0;
  const double inv_b = 1.0 / static_cast<double>(inputs.size());
  FusionCache<T> cache;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Mat<T> logits = fusion_logits(p, *inputs[i], dropout, dropout_rng, grad ? &cache : nullptr);
    const auto probs = softmax3(logits);
    total += cross_entropy(probs, labels[i]);
    if (grad) {
      Mat<T> dlogits(1, static_cast<Eigen::Index>(kNumClasses));
      const auto li = static_cast<std::size_t>(index_of(labels[i]));
      for (std::size_t k = 0; k < kNumClasses; ++k) {
        // Below the floor the clamped loss is flat in p(label).
        const double onehot = (k == li && probs[li] >= kProbabilityFloor) ? 1.0 : 0.0;
        const double pk = (probs[li] >= kProbabilityFloor) ? probs[k] : 0.0;
        dlogits(0, static_cast<Eigen::Index>(k)) = static_cast<T>((pk - onehot) * inv_b);
      }
      fusion_backward(p, *grad, cache, dlogits);
    }
  }
  return total * inv_b;
}

}  // namespace soda::nn
