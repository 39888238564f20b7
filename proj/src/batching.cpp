#include "notescore/batching.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "notescore/errors.hpp"
#include "notescore/model.hpp"
#include "notescore/rng.hpp"
#include "notescore/tokenizer.hpp"

namespace notescore {

std::string_view to_string(BatchStrategy s) {
  switch (s) {
    case BatchStrategy::naive: return "naive";
    case BatchStrategy::dynamic: return "dynamic";
    case BatchStrategy::bucketed: return "bucketed";
  }
  return "?";
}

BatchStrategy parse_batch_strategy(std::string_view text) {
  if (text == "naive") return BatchStrategy::naive;
  if (text == "dynamic") return BatchStrategy::dynamic;
  if (text == "bucketed") return BatchStrategy::bucketed;
  throw ConfigError("unknown batching strategy '" + std::string(text) + "'");
}

std::size_t BatchPlan::padding_tokens() const {
  std::size_t n = 0;
  for (const auto& b : batches) n += b.padding_tokens;
  return n;
}

std::size_t BatchPlan::padded_tokens() const {
  std::size_t n = 0;
  for (const auto& b : batches) n += b.indices.size() * b.max_length;
  return n;
}

void BatchPlan::validate(std::span<const std::size_t> lengths) const {
  std::vector<int> seen(lengths.size(), 0);
  for (const auto& b : batches) {
    if (b.indices.empty()) throw ContractError("batch plan contains an empty batch");
    std::size_t mx = 0, pad = 0;
    for (std::size_t i : b.indices) {
      if (i >= lengths.size()) throw ContractError("batch plan index " + std::to_string(i) + " out of range");
      if (seen[i]++ != 0) throw ContractError("batch plan lists sequence " + std::to_string(i) + " twice");
      mx = std::max(mx, lengths[i]);
    }
    for (std::size_t i : b.indices) pad += mx - lengths[i];
    if (mx != b.max_length || pad != b.padding_tokens) throw ContractError("batch plan bookkeeping is inconsistent");
  }
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (seen[i] == 0) throw ContractError("batch plan misses sequence " + std::to_string(i));
}

namespace {

Batch make_batch(std::span<const std::size_t> lengths, std::vector<std::size_t> indices) {
  Batch b;
  for (std::size_t i : indices) b.max_length = std::max(b.max_length, lengths[i]);
  for (std::size_t i : indices) b.padding_tokens += b.max_length - lengths[i];
  b.indices = std::move(indices);
  return b;
}

void require_positive(std::size_t v, std::string_view what) {
  if (v == 0) throw ConfigError(std::string(what) + " must be positive");
}

// Indices ordered by length descending, ties by index ascending.
std::vector<std::size_t> longest_first(std::span<const std::size_t> lengths) {
  std::vector<std::size_t> order(lengths.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lengths[a] > lengths[b]; });
  return order;
}

}  // namespace

double padding_cost(std::span<const std::size_t> lengths, const BatchPlan& plan, double cost_per_token) {
  if (plan.batches.empty()) throw ContractError("padding_cost: empty plan");
  if (!(cost_per_token > 0.0)) throw ConfigError("cost per token must be positive");
  plan.validate(lengths);
  double cost = 0.0;
  for (const auto& b : plan.batches) {
    double batch_cost = 0.0;
    for (std::size_t i : b.indices) batch_cost += static_cast<double>(b.max_length - lengths[i]) * cost_per_token;
    cost += batch_cost;
  }
  return cost;
}

BatchPlan plan_naive(std::span<const std::size_t> lengths, std::size_t batch_size) {
  require_positive(batch_size, "batch_size");
  BatchPlan plan{BatchStrategy::naive, {}};
  for (std::size_t start = 0; start < lengths.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(lengths.size(), start + batch_size); ++i) idx.push_back(i);
    plan.batches.push_back(make_batch(lengths, std::move(idx)));
  }
  return plan;
}

BatchPlan plan_dynamic(std::span<const std::size_t> lengths, std::size_t token_budget) {
  require_positive(token_budget, "token_budget");
  BatchPlan plan{BatchStrategy::dynamic, {}};
  const std::size_t n = lengths.size();
  if (n == 0) return plan;
  const auto order = longest_first(lengths);
  const std::size_t longest = lengths[order.front()];
  if (token_budget < std::max<std::size_t>(longest, 1)) {
    throw InfeasibleError("token_budget " + std::to_string(token_budget) + " is smaller than the longest sequence (" +
                          std::to_string(longest) + ")");
  }
  const std::size_t nominal = longest == 0 ? n : std::max<std::size_t>(1, token_budget / longest);
  const std::size_t max_batches = (n + nominal - 1) / nominal;

  std::vector<std::size_t> sorted(n), prefix(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    sorted[i] = lengths[order[i]];
    prefix[i + 1] = prefix[i] + sorted[i];
  }
  // best[i] = (padding, batches) covering the first i sorted sequences using
  // at most j batches, updated in place for j = 1..max_batches. parent[j][i]
  // holds the start of the last batch, or n+1 when inherited from j-1.
  using Score = std::pair<std::size_t, std::size_t>;
  constexpr std::size_t kInf = std::numeric_limits<std::size_t>::max();
  std::vector<Score> prev(n + 1, {kInf, kInf});
  prev[0] = {0, 0};
  std::vector<std::vector<std::size_t>> parent(max_batches + 1, std::vector<std::size_t>(n + 1, n + 1));
  for (std::size_t j = 1; j <= max_batches; ++j) {
    std::vector<Score> cur = prev;
    for (std::size_t a = 0; a < n; ++a) {
      if (prev[a].first == kInf) continue;
      const std::size_t head = sorted[a];
      for (std::size_t b = a + 1; b <= n; ++b) {
        if ((b - a) * head > token_budget) break;
        const std::size_t pad = (b - a) * head - (prefix[b] - prefix[a]);
        const Score cand{prev[a].first + pad, prev[a].second + 1};
        if (cand < cur[b]) {
          cur[b] = cand;
          parent[j][b] = a;
        }
      }
    }
    prev = std::move(cur);
  }
  if (prev[n].first == kInf) throw InfeasibleError("no batching fits the token budget");
  std::vector<std::pair<std::size_t, std::size_t>> cuts;
  std::size_t end = n, j = max_batches;
  while (end > 0) {
    while (parent[j][end] == n + 1) --j;
    const std::size_t start = parent[j][end];
    cuts.emplace_back(start, end);
    end = start;
    --j;
  }
  std::reverse(cuts.begin(), cuts.end());
  for (auto [a, b] : cuts) {
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(a), order.begin() + static_cast<std::ptrdiff_t>(b));
    plan.batches.push_back(make_batch(lengths, std::move(idx)));
  }
  return plan;
}

BatchPlan plan_bucketed(std::span<const std::size_t> lengths, std::size_t bucket_width, std::size_t batch_size) {
  require_positive(bucket_width, "bucket_width");
  require_positive(batch_size, "batch_size");
  BatchPlan plan{BatchStrategy::bucketed, {}};
  auto order = longest_first(lengths);
  // Buckets ascending; inside a bucket the longest-first order is kept.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return lengths[a] / bucket_width < lengths[b] / bucket_width;
  });
  std::size_t i = 0;
  while (i < order.size()) {
    const std::size_t bucket = lengths[order[i]] / bucket_width;
    std::vector<std::size_t> idx;
    while (i < order.size() && lengths[order[i]] / bucket_width == bucket && idx.size() < batch_size) {
      idx.push_back(order[i++]);
    }
    plan.batches.push_back(make_batch(lengths, std::move(idx)));
  }
  return plan;
}

namespace {

struct PartitionSearch {
  std::span<const std::size_t> lengths;
  std::size_t max_batches;
  std::size_t budget;
  std::vector<std::size_t> group_max, group_count, group_sum;
  PartitionOptimum best{std::numeric_limits<std::size_t>::max(), std::numeric_limits<std::size_t>::max()};

  void score() {
    std::size_t pad = 0;
    for (std::size_t g = 0; g < group_max.size(); ++g) pad += group_count[g] * group_max[g] - group_sum[g];
    const PartitionOptimum cand{pad, group_max.size()};
    if (std::pair(cand.padding_tokens, cand.batches) < std::pair(best.padding_tokens, best.batches)) best = cand;
  }

  void place(std::size_t i) {
    if (i == lengths.size()) {
      score();
      return;
    }
    const std::size_t len = lengths[i];
    for (std::size_t g = 0; g < group_max.size(); ++g) {
      const std::size_t mx = std::max(group_max[g], len);
      if ((group_count[g] + 1) * mx > budget) continue;
      const std::size_t old = group_max[g];
      group_max[g] = mx;
      ++group_count[g];
      group_sum[g] += len;
      place(i + 1);
      group_max[g] = old;
      --group_count[g];
      group_sum[g] -= len;
    }
    if (group_max.size() < max_batches && len <= budget) {
      group_max.push_back(len);
      group_count.push_back(1);
      group_sum.push_back(len);
      place(i + 1);
      group_max.pop_back();
      group_count.pop_back();
      group_sum.pop_back();
    }
  }
};

}  // namespace

PartitionOptimum exhaustive_min_padding(std::span<const std::size_t> lengths, std::size_t max_batches,
                                        std::size_t token_budget) {
  if (lengths.size() > 10) throw ContractError("exhaustive_min_padding is limited to 10 sequences");
  PartitionSearch search{lengths, max_batches, token_budget, {}, {}, {}};
  search.place(0);
  if (search.best.batches == std::numeric_limits<std::size_t>::max()) {
    if (lengths.empty()) return {0, 0};
    throw InfeasibleError("no partition satisfies the constraints");
  }
  return search.best;
}

SpeedupRatio speedup_ratio(double cost_baseline, double cost_optimized, double total_baseline,
                           double total_optimized) {
  if (cost_baseline < 0.0 || cost_optimized < 0.0) throw ContractError("costs must be nonnegative");
  SpeedupRatio r;
  r.total_token_ratio = total_optimized > 0.0 ? total_baseline / total_optimized : 0.0;
  if (cost_optimized > 0.0) {
    r.ratio = cost_baseline / cost_optimized;
    if (cost_baseline > 0.0) r.reciprocal = cost_optimized / cost_baseline;
  } else {
    r.used_fallback = true;
  }
  return r;
}

BatchPlan make_plan(BatchStrategy strategy, std::span<const std::size_t> lengths, const BenchmarkOptions& options) {
  switch (strategy) {
    case BatchStrategy::naive: return plan_naive(lengths, options.batch_size);
    case BatchStrategy::dynamic: {
      std::size_t budget = options.token_budget;
      if (budget == 0) {
        const std::size_t longest = lengths.empty() ? 1 : *std::max_element(lengths.begin(), lengths.end());
        budget = options.batch_size * std::max<std::size_t>(longest, 1);
      }
      return plan_dynamic(lengths, budget);
    }
    case BatchStrategy::bucketed: return plan_bucketed(lengths, options.bucket_width, options.batch_size);
  }
  throw ConfigError("unknown strategy");
}

void run_batched_inference(const EncoderModel& model, std::span<const std::vector<int>> sequences,
                           const BatchPlan& plan) {
  const int pad = model.config().pad_token_id;
  std::vector<int> ids;
  std::vector<std::uint8_t> mask;
  for (const auto& batch : plan.batches) {
    for (std::size_t i : batch.indices) {
      const auto& seq = sequences[i];
      ids.assign(batch.max_length, pad);
      mask.assign(batch.max_length, 1);
      std::copy(seq.begin(), seq.end(), ids.begin());
      std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(seq.size()), 0);
      const Tensor logits = model.span_logits(model.encode(ids, mask));
      if (!logits.all_finite()) throw DivergenceError("non-finite logits during batched inference");
    }
  }
}

CostReport benchmark(std::span<const std::size_t> lengths, const BenchmarkOptions& options, const EncoderModel* model,
                     std::span<const std::vector<int>> sequences) {
  if (options.strategies.empty()) throw ConfigError("benchmark needs at least one strategy");
  if (lengths.empty()) throw ContractError("benchmark needs at least one sequence");
  if (model != nullptr) {
    if (sequences.size() != lengths.size()) throw ContractError("benchmark: sequence count differs from lengths");
    for (std::size_t i = 0; i < lengths.size(); ++i)
      if (sequences[i].size() != lengths[i]) throw ContractError("benchmark: sequence length differs from lengths");
  }
  const std::size_t real_tokens = std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});
  const BatchPlan baseline = plan_naive(lengths, options.batch_size);
  const double base_cost = padding_cost(lengths, baseline, options.cost_per_token);
  const double base_total = static_cast<double>(baseline.padding_tokens() + real_tokens) * options.cost_per_token;

  std::vector<BatchPlan> plans;
  CostReport report;
  for (auto s : options.strategies) {
    BatchPlan plan = make_plan(s, lengths, options);
    const double c = s == BatchStrategy::naive ? options.cost_per_token : options.optimized_cost_per_token;
    StrategyRow row;
    row.strategy = s;
    row.batches = plan.batches.size();
    row.padding_tokens = plan.padding_tokens();
    row.padding_cost = padding_cost(lengths, plan, c);
    row.total_token_cost = static_cast<double>(row.padding_tokens + real_tokens) * c;
    row.versus_naive = speedup_ratio(base_cost, row.padding_cost, base_total, row.total_token_cost);
    report.rows.push_back(row);
    plans.push_back(std::move(plan));
  }
  if (lengths.size() <= 8) {
    const std::size_t longest = *std::max_element(lengths.begin(), lengths.end());
    const std::size_t budget =
        options.token_budget != 0 ? options.token_budget : options.batch_size * std::max<std::size_t>(longest, 1);
    const std::size_t nominal = std::max<std::size_t>(1, budget / std::max<std::size_t>(longest, 1));
    report.exhaustive = exhaustive_min_padding(lengths, (lengths.size() + nominal - 1) / nominal, budget);
  }
  if (model != nullptr) {
    std::vector<double> best(plans.size(), std::numeric_limits<double>::infinity());
    for (std::size_t rep = 0; rep < std::max<std::size_t>(1, options.repeats); ++rep) {
      for (std::size_t k = 0; k < plans.size(); ++k) {
        const auto start = std::chrono::steady_clock::now();
        run_batched_inference(*model, sequences, plans[k]);
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        best[k] = std::min(best[k], ms);
      }
    }
    for (std::size_t k = 0; k < plans.size(); ++k) report.rows[k].wall_ms = best[k];
  }
  return report;
}

std::string CostReport::table() const {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %8s %14s %14s %14s %12s %12s %10s\n", "strategy", "batches", "padding_tokens",
                "padding_cost", "total_cost", "T=B/B'", "B'/B", "wall_ms");
  out += line;
  for (const auto& r : rows) {
    char ratio[32], recip[32], wall[32];
    if (r.versus_naive.ratio) {
      std::snprintf(ratio, sizeof ratio, "%.4f", *r.versus_naive.ratio);
    } else {
      std::snprintf(ratio, sizeof ratio, "n/a(%.3f*)", r.versus_naive.total_token_ratio);
    }
    if (r.versus_naive.reciprocal) {
      std::snprintf(recip, sizeof recip, "%.4f", *r.versus_naive.reciprocal);
    } else {
      std::snprintf(recip, sizeof recip, "n/a");
    }
    if (r.wall_ms) {
      std::snprintf(wall, sizeof wall, "%.2f", *r.wall_ms);
    } else {
      std::snprintf(wall, sizeof wall, "-");
    }
    std::snprintf(line, sizeof line, "%-10s %8zu %14zu %14.2f %14.2f %12s %12s %10s\n",
                  std::string(to_string(r.strategy)).c_str(), r.batches, r.padding_tokens, r.padding_cost,
                  r.total_token_cost, ratio, recip, wall);
    out += line;
  }
  if (exhaustive) {
    std::snprintf(line, sizeof line, "exhaustive optimum: padding_tokens=%zu batches=%zu\n", exhaustive->padding_tokens,
                  exhaustive->batches);
    out += line;
  }
  const bool any_fallback =
      std::any_of(rows.begin(), rows.end(), [](const StrategyRow& r) { return r.versus_naive.used_fallback; });
  if (any_fallback) out += "* padding cost is zero; total token cost ratio shown instead\n";
  return out;
}

std::string CostReport::jsonl() const {
  std::string out;
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["strategy"] = to_string(r.strategy);
    j["batches"] = r.batches;
    j["padding_tokens"] = r.padding_tokens;
    j["padding_cost"] = r.padding_cost;
    j["total_token_cost"] = r.total_token_cost;
    j["ratio"] = r.versus_naive.ratio ? nlohmann::ordered_json(*r.versus_naive.ratio) : nlohmann::ordered_json(nullptr);
    j["reciprocal"] =
        r.versus_naive.reciprocal ? nlohmann::ordered_json(*r.versus_naive.reciprocal) : nlohmann::ordered_json(nullptr);
    j["total_token_ratio"] = r.versus_naive.total_token_ratio;
    j["ratio_fallback"] = r.versus_naive.used_fallback;
    j["wall_ms"] = r.wall_ms ? nlohmann::ordered_json(*r.wall_ms) : nlohmann::ordered_json(nullptr);
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<std::size_t> lognormal_lengths(std::size_t count, double median, double sigma, std::size_t min_len,
                                           std::size_t max_len, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> out(count);
  const double mu = std::log(median);
  for (auto& len : out) {
    const double v = std::exp(mu + sigma * rng.normal());
    len = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(v)), min_len, max_len);
  }
  return out;
}

}  // namespace notescore
