#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "notescore/batching.hpp"
#include "notescore/errors.hpp"
#include "notescore/model.hpp"
#include "notescore/rng.hpp"
#include "support/oracles.hpp"

using namespace notescore;

namespace {

std::vector<std::vector<std::size_t>> groups(const BatchPlan& plan) {
  std::vector<std::vector<std::size_t>> out;
  for (const auto& b : plan.batches) out.push_back(b.indices);
  return out;
}

std::vector<std::size_t> random_lengths(Rng& rng, std::size_t n, std::size_t max_len) {
  std::vector<std::size_t> out(n);
  for (auto& x : out) x = 1 + rng.below(max_len);
  return out;
}

}  // namespace

TEST(PaddingCost, SmallWorkedCase) {
  const std::vector<std::size_t> lengths{3, 5, 5};
  const BatchPlan plan = plan_naive(lengths, 3);
  EXPECT_EQ(plan.padding_tokens(), 2u);
  EXPECT_DOUBLE_EQ(padding_cost(lengths, plan, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(padding_cost(lengths, plan, 2.5), 5.0);
  EXPECT_EQ(plan.padded_tokens(), 15u);
}

TEST(PaddingCost, BucketingRemovesPaddingOfTwoLengthGroups) {
  const std::vector<std::size_t> lengths{3, 5, 3, 5};
  EXPECT_EQ(plan_naive(lengths, 4).padding_tokens(), 4u);
  const BatchPlan bucketed = plan_bucketed(lengths, 2, 4);
  EXPECT_EQ(bucketed.padding_tokens(), 0u);
  EXPECT_EQ(bucketed.batches.size(), 2u);
}

TEST(PaddingCost, SingleSequenceAndConstantLengthsHaveNoPadding) {
  const std::vector<std::size_t> one{17};
  for (auto s : {BatchStrategy::naive, BatchStrategy::dynamic, BatchStrategy::bucketed})
    EXPECT_EQ(make_plan(s, one, {}).padding_tokens(), 0u);
  const std::vector<std::size_t> flat(50, 9);
  for (auto s : {BatchStrategy::naive, BatchStrategy::dynamic, BatchStrategy::bucketed})
    EXPECT_EQ(make_plan(s, flat, {}).padding_tokens(), 0u);
}

TEST(PaddingCost, ErrorCases) {
  const std::vector<std::size_t> lengths{3, 4};
  EXPECT_THROW(padding_cost(lengths, BatchPlan{}, 1.0), ContractError);
  EXPECT_THROW(padding_cost(lengths, plan_naive(lengths, 2), 0.0), ConfigError);
  BatchPlan partial = plan_naive(lengths, 1);
  partial.batches.pop_back();
  EXPECT_THROW(padding_cost(lengths, partial, 1.0), ContractError);
  EXPECT_THROW(plan_naive(lengths, 0), ConfigError);
}

TEST(PaddingCost, MatchesSlotCountingOracleForEveryStrategy) {
  Rng rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const auto lengths = random_lengths(rng, 1 + rng.below(60), 40);
    BenchmarkOptions o;
    o.batch_size = 1 + rng.below(9);
    o.bucket_width = 1 + rng.below(10);
    for (auto s : {BatchStrategy::naive, BatchStrategy::dynamic, BatchStrategy::bucketed}) {
      const BatchPlan plan = make_plan(s, lengths, o);
      EXPECT_NO_THROW(plan.validate(lengths));
      EXPECT_EQ(plan.padding_tokens(), oracle::count_padding(lengths, groups(plan)));
    }
  }
}

TEST(Dynamic, RespectsBudgetAndSortsDescending) {
  Rng rng(32);
  for (int trial = 0; trial < 100; ++trial) {
    const auto lengths = random_lengths(rng, 1 + rng.below(80), 50);
    const std::size_t longest = *std::max_element(lengths.begin(), lengths.end());
    const std::size_t budget = longest * (1 + rng.below(6));
    const BatchPlan plan = plan_dynamic(lengths, budget);
    std::size_t prev_max = std::numeric_limits<std::size_t>::max();
    for (const auto& b : plan.batches) {
      EXPECT_LE(b.indices.size() * b.max_length, budget);
      EXPECT_LE(b.max_length, prev_max);
      prev_max = b.max_length;
    }
  }
}

TEST(Dynamic, NeverPadsMoreThanNaive) {
  Rng rng(33);
  for (std::size_t n : {1, 2, 7, 50, 333, 1000}) {
    for (int trial = 0; trial < 5; ++trial) {
      const auto lengths = random_lengths(rng, n, 100);
      for (std::size_t bs : {1, 3, 8, 32}) {
        BenchmarkOptions o;
        o.batch_size = bs;
        EXPECT_LE(make_plan(BatchStrategy::dynamic, lengths, o).padding_tokens(),
                  plan_naive(lengths, bs).padding_tokens())
            << n << " " << bs;
      }
    }
  }
}

TEST(Dynamic, MatchesExhaustiveOptimumOnSmallInputs) {
  Rng rng(34);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    const auto lengths = random_lengths(rng, n, 12);
    const std::size_t bs = 1 + rng.below(4);
    const std::size_t longest = *std::max_element(lengths.begin(), lengths.end());
    const std::size_t budget = bs * longest;
    const std::size_t max_batches = (n + bs - 1) / bs;
    const auto [want_pad, want_blocks] = oracle::min_padding_partition(lengths, max_batches, budget);
    const PartitionOptimum lib = exhaustive_min_padding(lengths, max_batches, budget);
    EXPECT_EQ(lib.padding_tokens, want_pad);
    EXPECT_EQ(lib.batches, want_blocks);
    EXPECT_EQ(plan_dynamic(lengths, budget).padding_tokens(), want_pad);
  }
}

TEST(Dynamic, InfeasibleBudgetThrows) {
  const std::vector<std::size_t> lengths{4, 9};
  EXPECT_THROW(plan_dynamic(lengths, 8), InfeasibleError);
  EXPECT_NO_THROW(plan_dynamic(lengths, 9));
}

TEST(Bucketed, CostInvariantUnderPermutation) {
  Rng rng(35);
  for (int trial = 0; trial < 100; ++trial) {
    auto lengths = random_lengths(rng, 1 + rng.below(70), 60);
    const std::size_t width = 1 + rng.below(8), bs = 1 + rng.below(8);
    const std::size_t before = plan_bucketed(lengths, width, bs).padding_tokens();
    rng.shuffle(lengths);
    EXPECT_EQ(plan_bucketed(lengths, width, bs).padding_tokens(), before);
  }
}

TEST(Bucketed, BatchesNeverMixBuckets) {
  Rng rng(36);
  const auto lengths = random_lengths(rng, 200, 64);
  for (const auto& b : plan_bucketed(lengths, 8, 16).batches) {
    EXPECT_LE(b.indices.size(), 16u);
    for (std::size_t i : b.indices) EXPECT_EQ(lengths[i] / 8, lengths[b.indices[0]] / 8);
  }
}

TEST(Speedup, RatioAndReciprocal) {
  SpeedupRatio r = speedup_ratio(4, 2, 10, 8);
  EXPECT_DOUBLE_EQ(*r.ratio, 2.0);
  EXPECT_DOUBLE_EQ(*r.reciprocal, 0.5);
  r = speedup_ratio(56, 97, 100, 100);
  EXPECT_NEAR(*r.ratio, 0.577, 5e-4);
  EXPECT_FALSE(r.used_fallback);
}

TEST(Speedup, ZeroOptimizedCostFallsBackToTotalTokens) {
  const SpeedupRatio r = speedup_ratio(6, 0, 30, 24);
  EXPECT_TRUE(r.used_fallback);
  EXPECT_FALSE(r.ratio.has_value());
  EXPECT_DOUBLE_EQ(r.total_token_ratio, 30.0 / 24.0);
  EXPECT_THROW(speedup_ratio(-1, 1, 1, 1), ContractError);
}

TEST(Benchmark, ReportRowsAndFootnote) {
  const std::vector<std::size_t> lengths{3, 5, 3, 5, 7, 2};
  BenchmarkOptions o;
  o.batch_size = 2;
  o.bucket_width = 1;
  const CostReport r = benchmark(lengths, o);
  ASSERT_EQ(r.rows.size(), 3u);
  EXPECT_EQ(r.rows[0].strategy, BatchStrategy::naive);
  ASSERT_TRUE(r.exhaustive.has_value());
  // The optimum is over partitions with at most ceil(n / batch_size) batches,
  // which is the space dynamic searches; bucketed may use more batches.
  EXPECT_EQ(r.rows[1].padding_tokens, r.exhaustive->padding_tokens);
  EXPECT_GE(r.rows[0].padding_tokens, r.exhaustive->padding_tokens);
  const std::string table = r.table();
  EXPECT_NE(table.find("bucketed"), std::string::npos);
  const std::string lines = r.jsonl();
  EXPECT_EQ(std::count(lines.begin(), lines.end(), '\n'), 3);

  const std::vector<std::size_t> flat{4, 4, 4, 4};
  const CostReport zero = benchmark(flat, o);
  EXPECT_TRUE(zero.rows[1].versus_naive.used_fallback);
  EXPECT_NE(zero.table().find("padding cost is zero"), std::string::npos);
  o.bucket_width = 8;
  EXPECT_EQ(benchmark(lengths, o).table().find("padding cost is zero"), std::string::npos);
}

TEST(Benchmark, LognormalLengthsAreSeededAndClipped) {
  const auto a = lognormal_lengths(1000, 24, 0.6, 4, 128, 5);
  EXPECT_EQ(a, lognormal_lengths(1000, 24, 0.6, 4, 128, 5));
  EXPECT_TRUE(std::all_of(a.begin(), a.end(), [](std::size_t x) { return x >= 4 && x <= 128; }));
  std::vector<std::size_t> sorted = a;
  std::nth_element(sorted.begin(), sorted.begin() + 500, sorted.end());
  EXPECT_NEAR(static_cast<double>(sorted[500]), 24.0, 3.0);
}

TEST(Inference, RunsEveryPlanOverPaddedBatches) {
  ModelConfig c;
  c.vocab_size = 12;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = 1;
  c.max_seq_len = 16;
  const EncoderModel m = EncoderModel::initialize(c, 1);
  std::vector<std::vector<int>> seqs{{4, 5, 6}, {7, 8}, {9, 10, 11, 4, 5}};
  const std::vector<std::size_t> lengths{3, 2, 5};
  for (auto s : {BatchStrategy::naive, BatchStrategy::dynamic, BatchStrategy::bucketed}) {
    BenchmarkOptions o;
    o.batch_size = 2;
    EXPECT_NO_THROW(run_batched_inference(m, seqs, make_plan(s, lengths, o)));
  }

  BenchmarkOptions o;
  o.repeats = 1;
  const CostReport r = benchmark(lengths, o, &m, seqs);
  for (const auto& row : r.rows) EXPECT_TRUE(row.wall_ms.has_value());
}
