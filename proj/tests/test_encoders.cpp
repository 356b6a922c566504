#include <gtest/gtest.h>

#include "soda/nn/fusion.hpp"
#include "test_util.hpp"

using namespace soda;
using namespace soda::nn;

namespace {

EncoderConfig small_config() {
  EncoderConfig c;
  c.d_model = 16;
  c.n_layers = 2;
  c.n_heads = 2;
  c.ffn_dim = 32;
  c.max_len = 12;
  c.patch_size = 8;
  c.image_size = 32;
  c.categorical_vocab_sizes = {3, 4};
  c.n_continuous = 2;
  c.text_vocab_size = 20;
  return c;
}

template <class E>
E initialized(const EncoderConfig& cfg, std::uint64_t seed = 0) {
  E e(cfg);
  Rng rng(seed);
  e.init(rng);
  return e;
}

}  // namespace

// ---------------------------------------------------------------- config

TEST(EncoderConfig, Defaults) {
  const EncoderConfig c;
  EXPECT_EQ(c.d_model, 64);
  EXPECT_EQ(c.n_layers, 2);
  EXPECT_EQ(c.n_heads, 2);
  EXPECT_EQ(c.ffn_dim, 128);
  EXPECT_DOUBLE_EQ(c.dropout, 0.1);
  EXPECT_EQ(c.max_len, 64);
  EXPECT_EQ(c.patch_size, 8);
  EXPECT_EQ(c.image_size, 64);
  EXPECT_EQ(c.n_patches(), 64);
}

TEST(EncoderConfig, RejectsIndivisibleShapes) {
  auto c = small_config();
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), Error);
  c = small_config();
  c.patch_size = 5;
  EXPECT_THROW(c.validate(), Error);
}

TEST(EncoderConfig, JsonRoundTrip) {
  const auto c = small_config();
  const nlohmann::json j = c;
  EXPECT_EQ(j.get<EncoderConfig>().categorical_vocab_sizes, c.categorical_vocab_sizes);
  EXPECT_EQ(j.get<EncoderConfig>().d_model, c.d_model);
}

// ---------------------------------------------------------------- tabular

TEST(TabularEncoder, OneRowOfWidthDModelPerInput) {
  const auto cfg = small_config();
  const auto enc = initialized<TabularEncoder<float>>(cfg);
  Rng rng(1);
  for (int b = 0; b < 5; ++b) {
    const auto out = enc.forward({static_cast<float>(rng.normal()), static_cast<float>(rng.normal())},
                                 {static_cast<int>(rng.below(3)), static_cast<int>(rng.below(4))}, 0.0, nullptr,
                                 nullptr);
    EXPECT_EQ(out.rows(), 1);
    EXPECT_EQ(out.cols(), cfg.d_model);
    EXPECT_TRUE(out.allFinite());
  }
}

TEST(TabularEncoder, IdOutOfRange) {
  const auto enc = initialized<TabularEncoder<float>>(small_config());
  try {
    enc.forward({0.f, 0.f}, {3, 0}, 0.0, nullptr, nullptr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IdOutOfRange);
  }
  EXPECT_THROW(enc.forward({0.f, 0.f}, {-1, 0}, 0.0, nullptr, nullptr), Error);
}

TEST(TabularEncoder, DeterministicAtInference) {
  const auto enc = initialized<TabularEncoder<float>>(small_config());
  const auto a = enc.forward({0.3f, -1.f}, {1, 2}, 0.0, nullptr, nullptr);
  const auto b = enc.forward({0.3f, -1.f}, {1, 2}, 0.0, nullptr, nullptr);
  EXPECT_EQ(a, b);
}

TEST(TabularEncoder, CategoricalIdsMatter) {
  const auto enc = initialized<TabularEncoder<float>>(small_config());
  EXPECT_NE(enc.forward({0.f, 0.f}, {1, 2}, 0.0, nullptr, nullptr),
            enc.forward({0.f, 0.f}, {2, 2}, 0.0, nullptr, nullptr));
}

// ---------------------------------------------------------------- text

TEST(Tokenize, EmptyTextIsClsThenPad) {
  EXPECT_EQ(tokenize("", Vocabulary(), 4), (std::vector<int>{2, 0, 0, 0}));
}

TEST(Tokenize, LongTextTruncatesToMaxLen) {
  std::string text;
  for (int i = 0; i < 100; ++i) text += "word" + std::to_string(i) + " ";
  const auto ids = tokenize(text, Vocabulary({"word1"}), 64);
  EXPECT_EQ(ids.size(), 64u);
  EXPECT_EQ(ids[0], Vocabulary::kCls);
  EXPECT_EQ(ids[2], 3);
}

TEST(TextEncoder, OutputWidthIsDModel) {
  const auto cfg = small_config();
  const auto enc = initialized<TextEncoder<float>>(cfg);
  Rng rng(2);
  for (int t = 0; t < 10; ++t) {
    std::vector<int> ids(12, 0);
    ids[0] = 2;
    const int n = static_cast<int>(rng.below(12));
    for (int i = 1; i <= n && i < 12; ++i) ids[static_cast<std::size_t>(i)] = 1 + static_cast<int>(rng.below(19));
    const auto out = enc.forward(ids, 0.0, nullptr, nullptr);
    EXPECT_EQ(out.cols(), cfg.d_model);
    EXPECT_TRUE(out.allFinite());
  }
}

TEST(TextEncoder, PadTailLengthDoesNotChangeEmbedding) {
  const auto enc = initialized<TextEncoder<float>>(small_config());
  const std::vector<int> short_ids = {2, 5, 7, 1, 0};
  const std::vector<int> long_ids = {2, 5, 7, 1, 0, 0, 0, 0, 0, 0, 0, 0};
  EXPECT_EQ(enc.forward(short_ids, 0.0, nullptr, nullptr), enc.forward(long_ids, 0.0, nullptr, nullptr));
}

TEST(TextEncoder, InteriorPadIsMasked) {
  // A PAD between words must not be attended to, whatever its embedding row holds.
  auto enc = initialized<TextEncoder<double>>(small_config());
  const std::vector<int> ids = {2, 5, 0, 7};
  const auto before = enc.forward(ids, 0.0, nullptr, nullptr);
  enc.token.row(0).setConstant(50.0);
  const auto after = enc.forward(ids, 0.0, nullptr, nullptr);
  EXPECT_LT((before - after).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(TextEncoder, IdOutOfRange) {
  const auto enc = initialized<TextEncoder<float>>(small_config());
  try {
    enc.forward({2, 20, 0}, 0.0, nullptr, nullptr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IdOutOfRange);
  }
}

TEST(TextEncoder, DeterministicAtInference) {
  const auto enc = initialized<TextEncoder<float>>(small_config());
  const std::vector<int> ids = {2, 3, 4, 5, 0, 0};
  EXPECT_EQ(enc.forward(ids, 0.0, nullptr, nullptr), enc.forward(ids, 0.0, nullptr, nullptr));
}

// ---------------------------------------------------------------- patchify

TEST(Patchify, DefaultGrid) {
  const ImageBuffer img(64, 64, 10);
  const auto p8 = patchify<float>(img, 8);
  EXPECT_EQ(p8.rows(), 64);
  EXPECT_EQ(p8.cols(), 192);
  EXPECT_EQ(patchify<float>(img, 16).rows(), 16);
}

TEST(Patchify, ConstantImageGivesIdenticalPatches) {
  const auto p = patchify<double>(ImageBuffer(64, 64, 128), 8);
  for (Eigen::Index r = 1; r < p.rows(); ++r) EXPECT_EQ(p.row(r), p.row(0));
  EXPECT_DOUBLE_EQ(p(0, 0), 128.0 / 255.0);
}

TEST(Patchify, RowMajorPatchOrder) {
  ImageBuffer img(16, 16, 0);
  img.at(0, 8, 1) = 255;   // first pixel of patch (0,1), green
  img.at(8, 0, 2) = 255;   // first pixel of patch (1,0), blue
  const auto p = patchify<double>(img, 8);
  EXPECT_DOUBLE_EQ(p(1, 1), 1.0);
  EXPECT_DOUBLE_EQ(p(2, 2), 1.0);
  EXPECT_DOUBLE_EQ(p.sum(), 2.0);
}

TEST(Patchify, IndivisibleImageIsDimensionMismatch) {
  try {
    patchify<float>(ImageBuffer(30, 32), 8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

// ---------------------------------------------------------------- image

TEST(ImageEncoder, DefaultTraceShape) {
  EncoderConfig cfg;
  const auto enc = initialized<ImageEncoder<float>>(cfg);
  Rng rng(3);
  const auto patches = patchify<float>(soda::testing::random_image(rng, 64, 64), 8);
  std::vector<std::vector<Mat<float>>> attn;
  const auto out = enc.forward(patches, 0.0, nullptr, nullptr, &attn);
  EXPECT_EQ(out.cols(), 64);
  ASSERT_EQ(attn.size(), 2u);
  for (const auto& layer : attn) {
    ASSERT_EQ(layer.size(), 2u);
    for (const auto& head : layer) {
      EXPECT_EQ(head.rows(), 65);
      EXPECT_EQ(head.cols(), 65);
    }
  }
}

TEST(ImageEncoder, AttentionRowsAreDistributions) {
  const auto cfg = small_config();
  Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    const auto enc = initialized<ImageEncoder<float>>(cfg, rng());
    const auto patches = patchify<float>(soda::testing::random_image(rng, 32, 32), 8);
    std::vector<std::vector<Mat<float>>> attn;
    enc.forward(patches, 0.0, nullptr, nullptr, &attn);
    for (const auto& layer : attn) {
      for (const auto& head : layer) {
        EXPECT_GE(head.minCoeff(), 0.0f);
        for (Eigen::Index r = 0; r < head.rows(); ++r) EXPECT_NEAR(head.row(r).sum(), 1.0f, 1e-5f);
      }
    }
  }
}

TEST(ImageEncoder, CaptureDoesNotChangeEmbedding) {
  const auto cfg = small_config();
  const auto enc = initialized<ImageEncoder<float>>(cfg);
  Rng rng(5);
  const auto patches = patchify<float>(soda::testing::random_image(rng, 32, 32), 8);
  std::vector<std::vector<Mat<float>>> attn;
  EXPECT_EQ(enc.forward(patches, 0.0, nullptr, nullptr, &attn), enc.forward(patches, 0.0, nullptr, nullptr));
  EXPECT_FALSE(attn.empty());
}

TEST(ImageEncoder, WrongPatchCountIsDimensionMismatch) {
  const auto enc = initialized<ImageEncoder<float>>(small_config());
  const auto patches = patchify<float>(ImageBuffer(64, 64), 8);
  try {
    enc.forward(patches, 0.0, nullptr, nullptr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

// ---------------------------------------------------------------- layers

TEST(Layers, SoftmaxRowsRespectKeyMask) {
  Mat<double> s(2, 3);
  s << 1, 2, 3, 0, 0, 0;
  const std::vector<bool> mask = {true, false, true};
  const auto p = softmax_rows(s, &mask);
  EXPECT_DOUBLE_EQ(p(0, 1), 0.0);
  EXPECT_NEAR(p(0, 0), 1.0 / (1.0 + std::exp(2.0)), 1e-12);
  EXPECT_NEAR(p(1, 0), 0.5, 1e-12);
}

TEST(Layers, LinearInitWithinFanInBound) {
  Linear<double> l(25, 4);
  Rng rng(0);
  l.init(rng);
  EXPECT_LE(l.W.cwiseAbs().maxCoeff(), 1.0 / 5.0);
  EXPECT_GT(l.W.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Layers, GeluKnownValues) {
  Mat<double> z(1, 3);
  z << 0.0, 1.0, -1.0;
  const auto g = gelu(z);
  EXPECT_DOUBLE_EQ(g(0, 0), 0.0);
  EXPECT_NEAR(g(0, 1), 0.8412, 1e-3);
  EXPECT_NEAR(g(0, 2), -0.1588, 1e-3);
}
