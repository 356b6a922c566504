#include <gtest/gtest.h>

#include "soda/core/expand.hpp"
#include "soda/core/predictor.hpp"
#include "soda/hash.hpp"
#include "test_util.hpp"

using namespace soda;
using soda::testing::small_ad;
using soda::testing::small_schema;
using soda::testing::TempDir;

// ---------------------------------------------------------------- CtrClass

TEST(CtrClass, ThreeMembersInOrdinalOrder) {
  ASSERT_EQ(kAllClasses.size(), 3u);
  EXPECT_LT(index_of(CtrClass::BelowAverage), index_of(CtrClass::Average));
  EXPECT_LT(index_of(CtrClass::Average), index_of(CtrClass::AboveAverage));
  EXPECT_TRUE(CtrClass::BelowAverage < CtrClass::AboveAverage);
}

TEST(CtrClass, StringRoundTrip) {
  for (auto c : kAllClasses) EXPECT_EQ(parse_ctr_class(to_string(c)), c);
  EXPECT_FALSE(parse_ctr_class("great").has_value());
  EXPECT_EQ(to_string(CtrClass::AboveAverage), "above_average");
}

TEST(Predictor, OneHot) {
  const auto p = one_hot(CtrClass::Average);
  EXPECT_EQ(p[0], 0.0);
  EXPECT_EQ(p[1], 1.0);
  EXPECT_EQ(p[2], 0.0);
}

// ---------------------------------------------------------------- validate_ad

TEST(ValidateAd, CtrAboveOneIsRejected) {
  auto r = small_ad();
  r.observed_ctr = 1.2;
  try {
    validate_ad(r, small_schema());
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.code(), ErrorCode::CtrOutOfRange);
    EXPECT_TRUE(e.has(ErrorCode::CtrOutOfRange));
  }
}

TEST(ValidateAd, MissingContinuousFeatureIsSchemaMismatch) {
  auto r = small_ad();
  r.continuous_features.erase("reach");
  try {
    validate_ad(r, small_schema());
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_TRUE(e.has(ErrorCode::SchemaMismatch));
    EXPECT_NE(std::string(e.what()).find("continuous.reach"), std::string::npos);
  }
}

TEST(ValidateAd, ValidRecordReturnedUnchanged) {
  const auto r = small_ad();
  const AdRecord& out = validate_ad(r, small_schema());
  EXPECT_EQ(out, r);
  EXPECT_EQ(&out, &r);
}

TEST(ValidateAd, NamesEveryViolatedField) {
  auto r = small_ad();
  r.ad_id.clear();
  r.adset_id.clear();
  r.observed_ctr = -0.1;
  r.categorical_features["extra"] = "x";
  try {
    validate_ad(r, small_schema());
    FAIL();
  } catch (const ValidationError& e) {
    std::set<std::string> fields;
    for (const auto& v : e.violations()) fields.insert(v.field);
    EXPECT_TRUE(fields.count("ad_id"));
    EXPECT_TRUE(fields.count("adset_id"));
    EXPECT_TRUE(fields.count("observed_ctr"));
    EXPECT_TRUE(fields.count("categorical.extra"));
    EXPECT_EQ(e.violations().size(), 4u);
  }
}

TEST(ValidateAd, UnresolvableFrame) {
  TempDir dir;
  auto r = small_ad("ad_1", {"missing.png"});
  try {
    validate_ad(r, small_schema(), dir.path());
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnresolvableImage);
  }
  write_png(dir / "missing.png", ImageBuffer(4, 4, 9));
  EXPECT_NO_THROW(validate_ad(r, small_schema(), dir.path()));
}

TEST(ValidateAd, AbsentCtrIsAllowed) {
  auto r = small_ad();
  r.observed_ctr.reset();
  EXPECT_NO_THROW(validate_ad(r, small_schema()));
}

TEST(ValidateAd, IdempotentOverRandomRecords) {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    auto r = small_ad("ad_" + std::to_string(i));
    r.observed_ctr = rng.uniform(-0.5, 1.5);
    if (rng.bernoulli(0.3)) r.continuous_features.erase("budget");
    bool first_ok = true;
    try {
      validate_ad(r, small_schema());
    } catch (const ValidationError&) {
      first_ok = false;
    }
    if (first_ok) {
      const AdRecord once = validate_ad(r, small_schema());
      EXPECT_EQ(validate_ad(once, small_schema()), once);
    } else {
      EXPECT_THROW(validate_ad(r, small_schema()), ValidationError);
    }
  }
}

TEST(AdRecordJson, RoundTripUsesFlatFieldNames) {
  auto r = small_ad("ad_9", {"a.png", "b.png"});
  const auto j = to_json(r);
  for (const char* k : {"ad_id", "campaign_id", "adset_id", "objective", "brand", "headline", "body",
                        "call_to_action", "frames", "continuous", "categorical", "observed_ctr"}) {
    EXPECT_TRUE(j.contains(k)) << k;
  }
  EXPECT_EQ(ad_from_json(j), r);
  r.observed_ctr.reset();
  EXPECT_TRUE(to_json(r)["observed_ctr"].is_null());
  EXPECT_EQ(ad_from_json(to_json(r)), r);
}

TEST(AdRecordJson, TypeErrorsThrow) {
  auto j = to_json(small_ad());
  j["headline"] = 42;
  EXPECT_THROW(ad_from_json(j), Error);
  EXPECT_THROW(ad_from_json(json::array()), Error);
}

// ---------------------------------------------------------------- ImageBuffer

TEST(ImageBuffer, RejectsNonPositiveDimensions) {
  EXPECT_THROW(ImageBuffer(0, 4), Error);
  EXPECT_THROW(ImageBuffer(4, -1), Error);
  EXPECT_THROW(ImageBuffer(2, 2, std::vector<std::uint8_t>(11)), Error);
}

TEST(ImageBuffer, PngRoundTripIsLossless) {
  Rng rng(3);
  for (int i = 0; i < 10; ++i) {
    const int h = 1 + static_cast<int>(rng.below(20)), w = 1 + static_cast<int>(rng.below(20));
    const auto img = soda::testing::random_image(rng, h, w);
    EXPECT_EQ(decode_png(encode_png(img)), img);
  }
}

TEST(ImageBuffer, DecodeGarbageFails) {
  const std::vector<std::uint8_t> junk = {1, 2, 3, 4, 5};
  EXPECT_THROW(decode_png(junk), Error);
}

TEST(ImageBuffer, ResizeConstantStaysConstant) {
  const ImageBuffer img(7, 5, 77);
  const auto out = resize_bilinear(img, 13, 3);
  EXPECT_EQ(out.height(), 13);
  EXPECT_EQ(out.width(), 3);
  for (auto p : out.pixels()) EXPECT_EQ(p, 77);
}

TEST(ImageBuffer, ResizeSameSizeIsIdentity) {
  Rng rng(1);
  const auto img = soda::testing::random_image(rng, 9, 6);
  EXPECT_EQ(resize_bilinear(img, 9, 6), img);
}

TEST(ImageBuffer, ClampChannel) {
  EXPECT_EQ(clamp_channel(-4.0), 0);
  EXPECT_EQ(clamp_channel(300.0), 255);
  EXPECT_EQ(clamp_channel(127.6), 128);
}

// ---------------------------------------------------------------- expand_creative

namespace {

PreprocessContext memory_context(int image_size = 8) {
  PreprocessContext ctx;
  ctx.schema = small_schema();
  ctx.vocab = Vocabulary({"fast", "net", "deals"});
  ctx.max_len = 10;
  ctx.image_size = image_size;
  ctx.load_frame = [](const std::string& ref) {
    return ImageBuffer(4, 4, static_cast<std::uint8_t>(ref.size() * 10));
  };
  return ctx;
}

}  // namespace

TEST(ExpandCreative, ThreeFramesGiveThreeRows) {
  const auto rows = expand_creative(small_ad("a", {"f1.png", "f22.png", "f333.png"}), CtrClass::AboveAverage,
                                    memory_context());
  ASSERT_EQ(rows.size(), 3u);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(rows[i].frame_index, i);
    EXPECT_EQ(rows[i].label, CtrClass::AboveAverage);
    EXPECT_EQ(rows[i].bundle.token_ids, rows[0].bundle.token_ids);
    EXPECT_EQ(rows[i].source_ad_id, "a");
  }
  EXPECT_NE(rows[0].bundle.image, rows[1].bundle.image);
}

TEST(ExpandCreative, ZeroFramesGiveBlankSentinel) {
  const auto rows = expand_creative(small_ad("a"), CtrClass::Average, memory_context(8));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].frame_index, 0);
  EXPECT_EQ(rows[0].bundle.image, ImageBuffer(8, 8, 0));
}

TEST(ExpandCreative, CorpusExpansionIsAdditive) {
  const auto ctx = memory_context();
  const auto a = expand_creative(small_ad("a", {"x.png", "y.png"}), CtrClass::Average, ctx);
  const auto b = expand_creative(small_ad("b", {"z.png"}), CtrClass::Average, ctx);
  EXPECT_EQ(a.size() + b.size(), 3u);
}

TEST(ExpandCreative, SharedFeaturesAcrossRows) {
  Rng rng(11);
  const auto ctx = memory_context();
  for (int t = 0; t < 50; ++t) {
    std::vector<std::string> frames;
    const auto n = rng.below(5);
    for (std::uint64_t k = 0; k < n; ++k) frames.push_back(std::string(1 + k, 'f'));
    auto ad = small_ad("ad", frames);
    ad.continuous_features["budget"] = rng.uniform(0, 1000);
    const auto rows = expand_creative(ad, CtrClass::BelowAverage, ctx);
    ASSERT_EQ(rows.size(), std::max<std::size_t>(1, frames.size()));
    for (const auto& r : rows) {
      EXPECT_EQ(r.label, rows[0].label);
      EXPECT_EQ(r.bundle.continuous, rows[0].bundle.continuous);
      EXPECT_EQ(r.bundle.categorical_ids, rows[0].bundle.categorical_ids);
      EXPECT_EQ(r.bundle.token_ids, rows[0].bundle.token_ids);
    }
  }
}

TEST(ExpandCreative, BundleFollowsSchemaOrderAndVocabulary) {
  const auto rows = expand_creative(small_ad(), CtrClass::Average, memory_context());
  const auto& b = rows[0].bundle;
  EXPECT_EQ(b.continuous, (std::vector<double>{120.0, 0.4}));
  // instagram is entry 2 of the declared list, story entry 2; id 0 is reserved.
  EXPECT_EQ(b.categorical_ids, (std::vector<int>{2, 2}));
  ASSERT_EQ(b.token_ids.size(), 10u);
  EXPECT_EQ(b.token_ids[0], Vocabulary::kCls);
  EXPECT_EQ(b.token_ids[1], 3);  // fast
  EXPECT_EQ(b.token_ids[2], 4);  // net
  EXPECT_EQ(b.token_ids[3], 5);  // deals
  EXPECT_EQ(b.token_ids[4], Vocabulary::kUnk);
}

TEST(ExpandCreative, UnknownCategoryMapsToReservedId) {
  auto ad = small_ad();
  ad.categorical_features["platform"] = "tiktok";
  const auto rows = expand_creative(ad, CtrClass::Average, memory_context());
  EXPECT_EQ(rows[0].bundle.categorical_ids[0], 0);
}

TEST(ExpandCreative, UnreadableImageIsPreprocessFailure) {
  TempDir dir;
  write_atomic(dir / "bad.png", std::string_view("not a png"));
  auto ctx = memory_context();
  ctx.load_frame = nullptr;
  ctx.image_root = dir.path();
  try {
    expand_creative(small_ad("a", {"bad.png"}), CtrClass::Average, ctx);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PreprocessFailure);
  }
}

// ---------------------------------------------------------------- plumbing

TEST(Hash, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex(std::string_view("abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Hash, Base64RoundTrip) {
  Rng rng(2);
  for (int n = 0; n < 40; ++n) {
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n));
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng.below(256));
    EXPECT_EQ(base64_decode(base64_encode(bytes)), bytes);
  }
  const std::string hello = "hello";
  EXPECT_EQ(base64_encode(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(hello.data()), 5)),
            "aGVsbG8=");
}

TEST(Rng, DeterministicAndSeedSensitive) {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = a();
    EXPECT_EQ(x, b());
    (void)c();
  }
  EXPECT_NE(Rng(42)(), Rng(43)());
  EXPECT_NE(mix_seed(1, 2), mix_seed(1, 3));
}

TEST(Rng, BelowStaysInRange) {
  Rng rng(9);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(rng.below(7), 7u);
}

TEST(WriteAtomic, FaultLeavesOldContent) {
  TempDir dir;
  const auto path = dir / "file.txt";
  write_atomic(path, std::string_view("old"));
  atomic_write_fault_hook() = [](const fs::path&) { throw std::runtime_error("crash"); };
  EXPECT_THROW(write_atomic(path, std::string_view("new content")), std::runtime_error);
  atomic_write_fault_hook() = nullptr;
  EXPECT_EQ(read_text(path), "old");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.path())) ++files;
  EXPECT_EQ(files, 1u);
}

TEST(WriteAtomic, MissingDirectoryIsIoError) {
  TempDir dir;
  try {
    write_atomic(dir / "nope/file.txt", std::string_view("x"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoError);
  }
}
