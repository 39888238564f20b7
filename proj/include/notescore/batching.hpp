#pragma once

// Padding cost model and batch planners.
//
// A batch is padded to its own longest sequence L; sequence i contributes
// P_i = L - l_i padding tokens and the batch costs sum(P_i) * C. A plan's
// cost is the sum over its batches.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace notescore {

class EncoderModel;

enum class BatchStrategy { naive, dynamic, bucketed };

std::string_view to_string(BatchStrategy s);
BatchStrategy parse_batch_strategy(std::string_view text);

struct Batch {
  std::vector<std::size_t> indices;
  std::size_t max_length = 0;
  std::size_t padding_tokens = 0;
};

struct BatchPlan {
  BatchStrategy strategy = BatchStrategy::naive;
  std::vector<Batch> batches;

  std::size_t padding_tokens() const;
  // Sum over batches of (batch size * batch max length).
  std::size_t padded_tokens() const;
  // Throws ContractError unless every index in [0, n) appears exactly once
  // and the per-batch bookkeeping matches `lengths`.
  void validate(std::span<const std::size_t> lengths) const;
};

// C * sum over batches of (L_max * size - sum of lengths). Throws
// ContractError on an empty plan or one that does not cover `lengths`.
double padding_cost(std::span<const std::size_t> lengths, const BatchPlan& plan, double cost_per_token);

// Arrival order, fixed batch size.
BatchPlan plan_naive(std::span<const std::size_t> lengths, std::size_t batch_size);

// Sorts by length descending (ties by index) and splits the sorted order
// into contiguous batches with (batch count * batch max) <= token_budget.
// Among such splits with at most ceil(n / floor(token_budget / longest))
// batches, the one with the least padding (then fewest batches) is chosen,
// so the plan never pads more than plan_naive at that nominal batch size.
// Throws InfeasibleError when token_budget < longest sequence.
BatchPlan plan_dynamic(std::span<const std::size_t> lengths, std::size_t token_budget);

// Bucket floor(length / bucket_width); inside a bucket sequences are sorted
// by length descending (ties by index) and cut into batches of batch_size.
BatchPlan plan_bucketed(std::span<const std::size_t> lengths, std::size_t bucket_width, std::size_t batch_size);

// Least padding over every set partition into at most max_batches batches,
// each with (count * max) <= token_budget. Exponential; n <= 10.
struct PartitionOptimum {
  std::size_t padding_tokens = 0;
  std::size_t batches = 0;
};
PartitionOptimum exhaustive_min_padding(std::span<const std::size_t> lengths, std::size_t max_batches,
                                        std::size_t token_budget);

// T = Cost(B) / Cost(B'). When Cost(B') is zero the ratio is unavailable and
// the total-token ratio (padding plus real tokens) is reported instead.
struct SpeedupRatio {
  std::optional<double> ratio;
  std::optional<double> reciprocal;
  double total_token_ratio = 0.0;
  bool used_fallback = false;
};
SpeedupRatio speedup_ratio(double cost_baseline, double cost_optimized, double total_baseline,
                           double total_optimized);

struct StrategyRow {
  BatchStrategy strategy = BatchStrategy::naive;
  std::size_t batches = 0;
  std::size_t padding_tokens = 0;
  double padding_cost = 0.0;
  double total_token_cost = 0.0;
  SpeedupRatio versus_naive;
  std::optional<double> wall_ms;
};

struct CostReport {
  std::vector<StrategyRow> rows;
  std::optional<PartitionOptimum> exhaustive;  // only for small inputs

  std::string table() const;
  std::string jsonl() const;
};

struct BenchmarkOptions {
  std::vector<BatchStrategy> strategies{BatchStrategy::naive, BatchStrategy::dynamic, BatchStrategy::bucketed};
  std::size_t batch_size = 32;
  std::size_t token_budget = 0;  // 0: batch_size * longest
  std::size_t bucket_width = 8;
  double cost_per_token = 1.0;
  double optimized_cost_per_token = 1.0;  // C' for the non-naive plans
  std::size_t repeats = 3;                // wall time is the fastest repeat
};

BatchPlan make_plan(BatchStrategy strategy, std::span<const std::size_t> lengths, const BenchmarkOptions& options);

// Runs the frozen model over every batch of the plan, padding each sequence
// to its batch maximum with the pad token and masking the padding.
void run_batched_inference(const EncoderModel& model, std::span<const std::vector<int>> sequences,
                           const BatchPlan& plan);

// Analytic costs for each strategy; wall times when `model` and `sequences`
// are supplied (sequence lengths must equal `lengths`).
CostReport benchmark(std::span<const std::size_t> lengths, const BenchmarkOptions& options,
                     const EncoderModel* model = nullptr, std::span<const std::vector<int>> sequences = {});

// Seeded log-normal lengths clipped to [min_len, max_len].
std::vector<std::size_t> lognormal_lengths(std::size_t count, double median, double sigma, std::size_t min_len,
                                           std::size_t max_len, std::uint64_t seed);

}  // namespace notescore
