#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "soda/hpo/tpe.hpp"

using namespace soda;
using namespace soda::hpo;

namespace {

double quadratic(const Config& c) {
  const double x = c.at("x").get<double>();
  return (x - 0.3) * (x - 0.3);
}

const std::vector<ParamSpec> kLine = {ParamSpec::uniform("x", 0.0, 1.0)};

TpeConfig with_seed(std::uint64_t seed) {
  TpeConfig c;
  c.seed = seed;
  return c;
}

// Pure random search: startup phase longer than the budget.
TpeConfig random_arm(std::uint64_t seed, int n_trials) {
  auto c = with_seed(seed);
  c.n_startup = n_trials + 1;
  return c;
}

std::vector<ParamSpec> random_space(Rng& rng) {
  std::vector<ParamSpec> space;
  const int n = 1 + static_cast<int>(rng.below(4));
  for (int i = 0; i < n; ++i) {
    const std::string name = "p" + std::to_string(i);
    switch (rng.below(4)) {
      case 0: {
        const double lo = rng.uniform(-5, 5);
        space.push_back(ParamSpec::uniform(name, lo, lo + rng.uniform(0.01, 10)));
        break;
      }
      case 1: {
        const double lo = std::exp(rng.uniform(-8, 0));
        space.push_back(ParamSpec::log_uniform(name, lo, lo * std::exp(rng.uniform(0.1, 6))));
        break;
      }
      case 2: {
        const int lo = static_cast<int>(rng.below(10)) - 5;
        space.push_back(ParamSpec::integer(name, lo, lo + 1 + static_cast<int>(rng.below(6))));
        break;
      }
      default: {
        std::vector<json> choices;
        const int k = 1 + static_cast<int>(rng.below(4));
        for (int j = 0; j < k; ++j) choices.push_back("c" + std::to_string(j));
        space.push_back(ParamSpec::categorical(name, choices));
      }
    }
  }
  return space;
}

}  // namespace

TEST(ParamSpec, Validation) {
  EXPECT_THROW(ParamSpec::uniform("a", 1.0, 1.0).validate(), Error);
  EXPECT_THROW(ParamSpec::log_uniform("a", 0.0, 1.0).validate(), Error);
  EXPECT_THROW(ParamSpec::categorical("a", {}).validate(), Error);
  EXPECT_NO_THROW(ParamSpec::integer("a", 1, 3).validate());
}

TEST(TpeConfig, Validation) {
  TpeConfig c;
  c.gamma = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.n_candidates = 0;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_NO_THROW(TpeConfig{}.validate());
}

TEST(Suggest, GoodSetSize) {
  EXPECT_EQ(good_set_size(8, 0.25), 2u);
  EXPECT_EQ(good_set_size(9, 0.25), 3u);
  EXPECT_EQ(good_set_size(40, 0.25), 10u);
}

TEST(Suggest, EmptySpace) {
  try {
    suggest({}, {}, TpeConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptySpace);
  }
}

TEST(Suggest, StartupPhaseSamplesWithinBounds) {
  std::vector<Trial> history(3);
  for (int i = 0; i < 3; ++i) {
    history[static_cast<std::size_t>(i)].config = {{"x", 0.5}};
    history[static_cast<std::size_t>(i)].objective = i;
  }
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto c = suggest(kLine, history, with_seed(s));
    const double x = c.at("x").get<double>();
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, 1.0);
  }
}

TEST(Suggest, Deterministic) {
  const auto a = optimize(quadratic, kLine, 15, with_seed(4)).history;
  const auto b = optimize(quadratic, kLine, 15, with_seed(4)).history;
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].config, b[i].config);
    EXPECT_EQ(a[i].objective, b[i].objective);
  }
}

TEST(Suggest, FeasibleOverRandomSpaces) {
  Rng rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    const auto space = random_space(rng);
    auto cfg = with_seed(rng());
    cfg.n_startup = 1 + static_cast<int>(rng.below(6));
    const Objective f = [&](const Config& c) {
      double v = 0;
      for (const auto& s : space) {
        EXPECT_TRUE(s.contains(c.at(s.name))) << to_json(s).dump() << " got " << c.at(s.name).dump();
        if (s.kind != ParamKind::Categorical) v += std::abs(c.at(s.name).get<double>());
      }
      return v;
    };
    const auto r = optimize(f, space, 15, cfg);
    for (const auto& t : r.history) {
      for (const auto& s : space) {
        ASSERT_TRUE(s.contains(t.config.at(s.name)));
        if (s.kind == ParamKind::IntegerRange) {
          const double v = t.config.at(s.name).get<double>();
          EXPECT_EQ(v, std::round(v));
        }
      }
    }
  }
}

TEST(Optimize, QuadraticSeedEleven) {
  const auto tpe = optimize(quadratic, kLine, 40, with_seed(11));
  EXPECT_EQ(tpe.history.size(), 40u);
  EXPECT_LE(std::abs(tpe.best.config.at("x").get<double>() - 0.3), 0.05);
  const auto rnd = optimize(quadratic, kLine, 40, random_arm(11, 40));
  EXPECT_LE(tpe.best.objective, rnd.best.objective);
}

TEST(Optimize, BeatsRandomSearchInMostSeeds) {
  int wins = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const double tpe = optimize(quadratic, kLine, 40, with_seed(s)).best.objective;
    const double rnd = optimize(quadratic, kLine, 40, random_arm(s, 40)).best.objective;
    if (tpe <= rnd) ++wins;
  }
  EXPECT_GE(wins, 15);
}

TEST(Optimize, SingleTrial) {
  const auto r = optimize(quadratic, kLine, 1, with_seed(0));
  ASSERT_EQ(r.history.size(), 1u);
  EXPECT_EQ(r.best.config, r.history[0].config);
  EXPECT_EQ(r.best.trial_index, 0);
}

TEST(Optimize, AllTrialsFailed) {
  try {
    optimize([](const Config&) -> double { throw std::runtime_error("boom"); }, kLine, 5, TpeConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AllTrialsFailed);
  }
}

TEST(Optimize, FailedTrialsRecordedAsInfinityAndSkipped) {
  int calls = 0;
  const Objective f = [&](const Config& c) {
    if (++calls % 3 == 0) return std::numeric_limits<double>::quiet_NaN();
    return quadratic(c);
  };
  const auto r = optimize(f, kLine, 30, with_seed(2));
  int failed = 0;
  for (const auto& t : r.history) {
    if (t.failed) {
      ++failed;
      EXPECT_TRUE(std::isinf(t.objective));
    }
  }
  EXPECT_EQ(failed, 10);
  EXPECT_FALSE(r.best.failed);
  EXPECT_TRUE(std::isfinite(r.best.objective));
}

TEST(Optimize, RejectsZeroTrials) { EXPECT_THROW(optimize(quadratic, kLine, 0, TpeConfig{}), Error); }

TEST(History, JsonlRoundTripAndResume) {
  const auto space = default_search_space();
  const Objective f = [](const Config& c) {
    return std::abs(std::log(c.at("learning_rate").get<double>() / 0.05)) + c.at("dropout").get<double>();
  };
  const auto first = optimize(f, space, 6, with_seed(3));
  const auto text = history_to_jsonl(first.history);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 6);
  const auto back = history_from_jsonl(text);
  ASSERT_EQ(back.size(), 6u);
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].config, first.history[i].config);
    EXPECT_EQ(back[i].objective, first.history[i].objective);
    EXPECT_EQ(back[i].trial_index, first.history[i].trial_index);
  }
  // Resuming from the serialized history matches an uninterrupted run.
  const auto resumed = optimize(f, space, 10, with_seed(3), back);
  const auto straight = optimize(f, space, 16, with_seed(3));
  ASSERT_EQ(resumed.history.size(), 16u);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(resumed.history[i].config, straight.history[i].config);
}

TEST(History, FailedTrialSurvivesJsonl) {
  Trial t;
  t.config = {{"x", 0.1}};
  t.failed = true;
  t.trial_index = 4;
  const auto back = history_from_jsonl(history_to_jsonl({t}));
  ASSERT_EQ(back.size(), 1u);
  EXPECT_TRUE(back[0].failed);
  EXPECT_TRUE(std::isinf(back[0].objective));
}

TEST(History, ParamSpecJsonRoundTrip) {
  for (const auto& s : default_search_space()) {
    const auto back = param_from_json(to_json(s));
    EXPECT_EQ(back.name, s.name);
    EXPECT_EQ(back.kind, s.kind);
    EXPECT_EQ(back.choices, s.choices);
  }
}

TEST(History, DefaultSpaceShape) {
  const auto s = default_search_space();
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s[0].kind, ParamKind::LogUniform);
  EXPECT_DOUBLE_EQ(s[0].low, 1e-3);
  EXPECT_DOUBLE_EQ(s[0].high, 0.5);
}
