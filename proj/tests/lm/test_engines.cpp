#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <thread>

#include "slab/lm/engine.hpp"
#include "support/engines.hpp"

using namespace slab;
using lm::Family;
using lm::TokenId;

namespace {

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double scale = std::max(1.0, std::abs(b[i]));
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

class EngineFamily : public ::testing::TestWithParam<Family> {};

}  // namespace

TEST_P(EngineFamily, ZeroWeightsGiveUniformRows) {
  auto engine = fixtures::uniform_engine(GetParam(), 37);
  std::vector<TokenId> prefix = {1, 2, 3, 30};
  for (std::size_t n = 0; n <= prefix.size(); ++n) {
    auto row = engine.next_token_logprobs(std::span(prefix).first(n));
    ASSERT_EQ(row.size(), 37u);
    for (double v : row.values) EXPECT_NEAR(v, -std::log(37.0), 1e-12);
  }
}

TEST_P(EngineFamily, RowsAreNormalized) {
  std::mt19937_64 rng(5);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto engine = fixtures::random_engine(GetParam(), seed, 16, 16, 2);
    auto ids = fixtures::random_ids(rng, 12, 16);
    for (const auto& row : engine.sequence_logprobs(ids)) {
      // direct summation oracle
      double total = 0.0;
      for (double v : row.values) total += std::exp(v);
      EXPECT_NEAR(std::log(total), 0.0, 1e-6);
      EXPECT_NEAR(row.log_sum_exp(), 0.0, 1e-6);
    }
  }
}

TEST_P(EngineFamily, FullPassMatchesTruncatedPrefixes) {
  std::mt19937_64 rng(9);
  auto engine = fixtures::random_engine(GetParam(), 21, 32, 16, 2);
  auto ids = fixtures::random_ids(rng, 16, 32);
  auto full = engine.sequence_logprobs(ids);
  ASSERT_EQ(full.size(), ids.size() + 1);
  for (std::size_t t = 0; t <= ids.size(); ++t) {
    auto row = engine.next_token_logprobs(std::span(ids).first(t));
    EXPECT_LT(max_rel_diff(row.values, full[t].values), 1e-5) << "position " << t;
  }
}

TEST_P(EngineFamily, LaterTokensDoNotAffectEarlierRows) {
  std::mt19937_64 rng(10);
  auto engine = fixtures::random_engine(GetParam(), 22, 32, 16, 2);
  auto ids = fixtures::random_ids(rng, 16, 32);
  auto base = engine.sequence_logprobs(ids);
  auto changed = ids;
  for (std::size_t t = 8; t < changed.size(); ++t) changed[t] = (changed[t] + 7) % 31;
  auto other = engine.sequence_logprobs(changed);
  for (std::size_t t = 0; t <= 8; ++t)
    EXPECT_LT(max_rel_diff(base[t].values, other[t].values), 1e-5) << "position " << t;
  EXPECT_GT(max_rel_diff(base[10].values, other[10].values), 1e-9);
}

TEST_P(EngineFamily, IncrementalMatchesWholeSequence) {
  std::mt19937_64 rng(11);
  auto engine = fixtures::random_engine(GetParam(), 23, 64, 32, 2);
  auto ids = fixtures::random_ids(rng, 32, 64);
  auto full = engine.sequence_logprobs(ids);
  auto inc = engine.incremental_logprobs(ids);
  ASSERT_EQ(full.size(), inc.size());
  for (std::size_t t = 0; t < full.size(); ++t)
    EXPECT_LT(max_rel_diff(inc[t].values, full[t].values), 1e-5) << "position " << t;
}

TEST_P(EngineFamily, RejectsOutOfRangeToken) {
  auto engine = fixtures::random_engine(GetParam(), 1, 16, 16, 1);
  std::vector<TokenId> bad = {1, 16};
  EXPECT_THROW(engine.next_token_logprobs(bad), ValidationError);
  EXPECT_THROW(engine.sequence_logprobs(bad), ValidationError);
}

TEST_P(EngineFamily, TokenSurprisalsGatherFromRows) {
  std::mt19937_64 rng(12);
  auto engine = fixtures::random_engine(GetParam(), 24, 32, 16, 2);
  auto ids = fixtures::random_ids(rng, 10, 32);
  std::vector<lm::Token> tokens;
  for (std::size_t i = 0; i < ids.size(); ++i) tokens.push_back({ids[i], {i, i + 1}});
  auto s = engine.token_surprisals(tokens);
  ASSERT_EQ(s.size(), ids.size());
  double chain = 0.0;
  for (std::size_t t = 0; t < ids.size(); ++t) {
    double gathered = -engine.next_token_logprobs(std::span(ids).first(t))[ids[t]];
    EXPECT_NEAR(s[t], gathered, 1e-9);
    EXPECT_GE(s[t], 0.0);
    chain += gathered;
  }
  double total = 0.0;
  for (double v : s) total += v;
  EXPECT_NEAR(total, chain, 1e-8);
}

TEST_P(EngineFamily, UniformEngineSurprisalIsLogVocab) {
  auto engine = fixtures::uniform_engine(GetParam(), 50);
  std::vector<lm::Token> tokens = {{3, {0, 1}}, {7, {1, 2}}, {3, {2, 3}}};
  for (double s : engine.token_surprisals(tokens)) EXPECT_NEAR(s, std::log(50.0), 1e-12);
  EXPECT_THROW(engine.token_surprisals({}), ValidationError);
}

TEST_P(EngineFamily, ParallelEvaluationIsSchedulingIndependent) {
  auto engine = fixtures::random_engine(GetParam(), 25, 32, 16, 2);
  std::mt19937_64 rng(13);
  std::vector<std::vector<TokenId>> seqs;
  for (int i = 0; i < 8; ++i) seqs.push_back(fixtures::random_ids(rng, 12, 32));
  std::vector<std::vector<lm::LogProbRow>> serial, parallel(seqs.size());
  for (const auto& s : seqs) serial.push_back(engine.sequence_logprobs(s));
  std::vector<std::thread> workers;
  for (std::size_t i = 0; i < seqs.size(); ++i)
    workers.emplace_back([&, i] { parallel[i] = engine.sequence_logprobs(seqs[i]); });
  for (auto& w : workers) w.join();
  for (std::size_t i = 0; i < seqs.size(); ++i)
    for (std::size_t t = 0; t < serial[i].size(); ++t)
      EXPECT_EQ(serial[i][t].values, parallel[i][t].values);
}

INSTANTIATE_TEST_SUITE_P(AllFamilies, EngineFamily,
                         ::testing::Values(Family::transformer, Family::rwkv, Family::mamba),
                         [](const auto& info) { return std::string(lm::to_string(info.param)); });

class RecurrentFamily : public ::testing::TestWithParam<Family> {};

TEST_P(RecurrentFamily, StepIsDeterministic) {
  auto engine = fixtures::random_engine(GetParam(), 31, 32, 16, 2);
  auto state = engine.initial_state();
  std::tie(state, std::ignore) = engine.step(state, engine.bos());
  auto [s1, r1] = engine.step(state, 5);
  auto [s2, r2] = engine.step(state, 5);
  EXPECT_EQ(s1.serialize(), s2.serialize());
  EXPECT_EQ(r1.values, r2.values);
  EXPECT_EQ(s1.step_index, 2u);
}

TEST_P(RecurrentFamily, StateSizeIsConstant) {
  auto engine = fixtures::random_engine(GetParam(), 32, 32, 16, 2);
  std::mt19937_64 rng(3);
  auto ids = fixtures::random_ids(rng, 100, 32);
  auto state = engine.initial_state();
  const auto initial = state.serialize().size();
  std::size_t after_one = 0;
  for (std::size_t t = 0; t < ids.size(); ++t) {
    std::tie(state, std::ignore) = engine.step(state, ids[t]);
    if (t == 0) after_one = state.serialize().size();
    ASSERT_EQ(state.serialize().size(), initial);
  }
  EXPECT_EQ(after_one, state.serialize().size());
  EXPECT_EQ(state.step_index, 100u);
}

TEST_P(RecurrentFamily, StepRowsMatchWholeSequence) {
  std::mt19937_64 rng(17);
  auto engine = fixtures::random_engine(GetParam(), 33, 64, 32, 2);
  auto ids = fixtures::random_ids(rng, 32, 64);
  auto full = engine.sequence_logprobs(ids);
  auto state = engine.initial_state();
  lm::LogProbRow row;
  std::tie(state, row) = engine.step(state, engine.bos());
  EXPECT_LT(max_rel_diff(row.values, full[0].values), 1e-5);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    std::tie(state, row) = engine.step(state, ids[t]);
    EXPECT_LT(max_rel_diff(row.values, full[t + 1].values), 1e-5) << "position " << t;
  }
}

TEST_P(RecurrentFamily, RejectsForeignState) {
  auto engine = fixtures::random_engine(GetParam(), 34, 32, 16, 2);
  auto other = fixtures::random_engine(GetParam(), 34, 32, 16, 1);
  EXPECT_THROW(engine.step(other.initial_state(), 1), FamilyError);
}

INSTANTIATE_TEST_SUITE_P(Recurrent, RecurrentFamily, ::testing::Values(Family::rwkv, Family::mamba),
                         [](const auto& info) { return std::string(lm::to_string(info.param)); });

TEST(Transformer, RejectsRecurrentStep) {
  auto engine = fixtures::random_engine(Family::transformer, 1, 16, 16, 1);
  EXPECT_THROW(engine.initial_state(), FamilyError);
  lm::RecurrentState fake{Family::rwkv, {}, 0};
  EXPECT_THROW(engine.step(fake, 1), FamilyError);
}

TEST(Transformer, CachedContextGrowsLinearly) {
  auto engine = fixtures::random_engine(Family::transformer, 2, 32, 16, 2);
  auto cache = engine.kv_cache();
  EXPECT_EQ(cache.byte_size(), 0u);
  engine.decode(cache, engine.bos());
  const auto per_token = cache.byte_size();
  EXPECT_EQ(per_token, 2u * 2u * 16u * sizeof(double));
  for (TokenId t = 0; t < 20; ++t) {
    engine.decode(cache, t);
    EXPECT_EQ(cache.byte_size(), per_token * (t + 2));
  }
}

TEST(Transformer, RecurrentEnginesHaveNoKvCache) {
  auto engine = fixtures::random_engine(Family::mamba, 2, 32, 16, 1);
  EXPECT_THROW(engine.kv_cache(), FamilyError);
}
