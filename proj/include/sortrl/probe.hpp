#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sortrl/env.hpp"
#include "sortrl/error.hpp"
#include "sortrl/model.hpp"

namespace sortrl {

// Which last-row vector the order metrics read. Both induce the same
// weight ordering (softmax is strictly monotone), so non-inversion results
// match; post-softmax is the default reported in metrics.
enum class WeightSource { post_softmax, pre_softmax };

// Whether an agent encodes "swap here" as the most negative or the most
// positive adjacent difference in its last attention row. Chosen per agent
// by maximizing the top-1 hit rate.
enum class SignConvention { most_negative, most_positive };

inline const char* to_string(WeightSource s) {
  return s == WeightSource::post_softmax ? "post_softmax" : "pre_softmax";
}
inline const char* to_string(SignConvention s) {
  return s == SignConvention::most_negative ? "most_negative" : "most_positive";
}

inline WeightSource parse_weight_source(const std::string& s) {
  if (s == "post_softmax" || s == "post") return WeightSource::post_softmax;
  if (s == "pre_softmax" || s == "pre") return WeightSource::pre_softmax;
  throw ContractViolation("unknown weight source: " + s);
}

struct ProbeConfig {
  WeightSource source = WeightSource::post_softmax;
  // Evaluation set: every permutation for length <= 8; otherwise a seeded,
  // duplicate-free uniform sample of this size (8! keeps the cost of the
  // longest exhaustive case).
  int sample_size = 40320;
  std::uint64_t sample_seed = 0;
};

struct MetricsReport {
  int length = 0;
  double accuracy = 0.0;
  double non_inversion_proportion = 0.0;
  std::vector<double> top_k_hit_rates;  // index k-1 holds the rate for rank <= k
  SignConvention sign_convention = SignConvention::most_negative;
  double greedy_trap_rate = 0.0;
  long long n_permutations_evaluated = 0;
};

inline std::vector<Permutation> enumerate_eval_set(int length, const ProbeConfig& cfg) {
  std::vector<Permutation> out;
  if (length <= 8) {
    std::vector<int> tokens(static_cast<std::size_t>(length));
    std::iota(tokens.begin(), tokens.end(), 1);
    do {
      out.emplace_back(tokens);
    } while (std::next_permutation(tokens.begin(), tokens.end()));
    return out;
  }
  require(cfg.sample_size >= 1, "probe sample_size must be positive");
  Rng rng(cfg.sample_seed);
  std::set<std::vector<int>> seen;
  std::vector<int> tokens(static_cast<std::size_t>(length));
  std::iota(tokens.begin(), tokens.end(), 1);
  while (static_cast<int>(out.size()) < cfg.sample_size) {
    rng.shuffle(tokens);
    if (seen.insert(tokens).second) out.emplace_back(tokens);
  }
  return out;
}

// A swap is correct iff it strictly reduces the inversion count, which for
// adjacent transpositions is the same as picking a descending pair. Both
// characterizations are computed and must agree.
inline bool is_correct_swap(const Permutation& p, SwapAction action) {
  const bool descending_pair = p.token(action.index) > p.token(action.index + 1);
  const bool fewer_inversions = inversion_count(apply_swap(p, action)) < inversion_count(p);
  require(descending_pair == fewer_inversions,
          "inversion-reduction characterizations disagree");
  return descending_pair;
}

// Fraction of position pairs (i, j), i < j, whose weight order strictly
// agrees with the token order. Exact weight ties count as inversions.
inline double non_inversion_proportion(std::span<const double> w, const Permutation& p) {
  const int l = p.length();
  require(static_cast<int>(w.size()) == l, "weight row length does not match permutation");
  int agree = 0, pairs = 0;
  for (int i = 0; i < l; ++i)
    for (int j = i + 1; j < l; ++j) {
      ++pairs;
      const bool tokens_ascending = p.token(j) > p.token(i);
      const bool weights_ascending = w[static_cast<std::size_t>(j)] > w[static_cast<std::size_t>(i)];
      const bool weights_descending = w[static_cast<std::size_t>(j)] < w[static_cast<std::size_t>(i)];
      if (tokens_ascending ? weights_ascending : weights_descending) ++agree;
    }
  return static_cast<double>(agree) / static_cast<double>(pairs);
}

// 1-based rank of `chosen` among all actions ordered by signed adjacent
// weight difference d_i = w[i+1] - w[i]: ascending d for the most-negative
// convention, descending for most-positive. Ties rank the lower index first.
inline int swap_rank(std::span<const double> w, SwapAction chosen, SignConvention sign) {
  const int actions = static_cast<int>(w.size()) - 1;
  require(actions >= 1, "need at least two weights");
  require(chosen.index >= 0 && chosen.index < actions, "chosen action out of range");
  const double s = sign == SignConvention::most_negative ? 1.0 : -1.0;
  const double chosen_key = s * (w[static_cast<std::size_t>(chosen.index) + 1] -
                                 w[static_cast<std::size_t>(chosen.index)]);
  int rank = 1;
  for (int i = 0; i < actions; ++i) {
    if (i == chosen.index) continue;
    const double key = s * (w[static_cast<std::size_t>(i) + 1] - w[static_cast<std::size_t>(i)]);
    if (key < chosen_key || (key == chosen_key && i < chosen.index)) ++rank;
  }
  return rank;
}

// Local greedy trap: an incorrect greedy swap aimed at the adjacent pair
// with the largest absolute token gap. (The gap is taken in absolute value:
// incorrect swaps always sit on ascending pairs, so a signed maximal-descent
// reading would be unsatisfiable.)
inline bool is_greedy_trap(const Permutation& p, SwapAction action) {
  if (is_correct_swap(p, action)) return false;
  int max_gap = 0;
  for (int i = 0; i + 1 < p.length(); ++i)
    max_gap = std::max(max_gap, std::abs(p.token(i) - p.token(i + 1)));
  return std::abs(p.token(action.index) - p.token(action.index + 1)) == max_gap;
}

// One evaluated state: the greedy action and the last attention row under
// the configured weight source.
struct EvalRecord {
  Permutation state;
  SwapAction greedy;
  std::vector<double> row;
};

inline std::vector<double> select_last_row(const PolicyOutputT<float>& out, WeightSource source) {
  const auto& v = source == WeightSource::post_softmax ? out.trace.last_row_weights
                                                       : out.trace.last_row_scores;
  return {v.begin(), v.end()};
}

inline std::vector<EvalRecord> evaluate_agent(const ModelParams& params, const ProbeConfig& cfg) {
  params.cfg.validate();
  Tape scratch;
  std::vector<EvalRecord> records;
  for (const auto& p : enumerate_eval_set(params.cfg.length, cfg)) {
    const auto out = forward_eval(params, p.tokens(), &scratch);
    records.push_back(
        {p, act_greedy<float>(out.action_logits), select_last_row(out, cfg.source)});
  }
  return records;
}

// Aggregates the report. Order metrics (non-inversion) average over every
// evaluated state; action metrics (accuracy, top-k, trap rate) are over the
// unsorted states only — the sorted state has no correct action, and a
// perfect sorter must still show trap rate zero.
inline MetricsReport aggregate_metrics(std::span<const EvalRecord> records, int length) {
  require(!records.empty(), "no evaluation records");
  const int actions = length - 1;
  MetricsReport report;
  report.length = length;
  report.n_permutations_evaluated = static_cast<long long>(records.size());

  long long unsorted = 0, correct = 0, traps = 0;
  double noninv_sum = 0.0;
  std::vector<long long> ranks_neg(static_cast<std::size_t>(actions), 0);
  std::vector<long long> ranks_pos(static_cast<std::size_t>(actions), 0);
  for (const auto& rec : records) {
    noninv_sum += non_inversion_proportion(rec.row, rec.state);
    if (is_sorted(rec.state)) continue;
    ++unsorted;
    if (is_correct_swap(rec.state, rec.greedy)) ++correct;
    if (is_greedy_trap(rec.state, rec.greedy)) ++traps;
    ++ranks_neg[static_cast<std::size_t>(
        swap_rank(rec.row, rec.greedy, SignConvention::most_negative) - 1)];
    ++ranks_pos[static_cast<std::size_t>(
        swap_rank(rec.row, rec.greedy, SignConvention::most_positive) - 1)];
  }
  require(unsorted > 0, "evaluation set has no unsorted states");

  report.non_inversion_proportion = noninv_sum / static_cast<double>(records.size());
  report.accuracy = static_cast<double>(correct) / static_cast<double>(unsorted);
  report.greedy_trap_rate = static_cast<double>(traps) / static_cast<double>(unsorted);
  // Per-agent convention: whichever maximizes top-1; ties keep most-negative.
  report.sign_convention = ranks_pos[0] > ranks_neg[0] ? SignConvention::most_positive
                                                       : SignConvention::most_negative;
  const auto& ranks =
      report.sign_convention == SignConvention::most_positive ? ranks_pos : ranks_neg;
  report.top_k_hit_rates.resize(static_cast<std::size_t>(actions));
  long long cumulative = 0;
  for (int k = 0; k < actions; ++k) {
    cumulative += ranks[static_cast<std::size_t>(k)];
    report.top_k_hit_rates[static_cast<std::size_t>(k)] =
        static_cast<double>(cumulative) / static_cast<double>(unsorted);
  }
  return report;
}

inline MetricsReport probe_agent(const ModelParams& params, const ProbeConfig& cfg) {
  return aggregate_metrics(evaluate_agent(params, cfg), params.cfg.length);
}

// Plot-ready attention data: the full final-layer post-softmax matrix on the
// sorted input (heatmap), and per token id the last-row weight observed at
// that token's column for every evaluated permutation (violins).
struct TraceExport {
  int length = 0;
  Tensor heatmap;                           // [length, length]
  std::vector<std::vector<double>> violin;  // violin[token_id - 1]
};

inline TraceExport extract_trace_data(const ModelParams& params, const ProbeConfig& cfg) {
  params.cfg.validate();
  const int l = params.cfg.length;
  Tape scratch;
  TraceExport ex;
  ex.length = l;
  const auto on_sorted = forward_eval(params, Permutation::identity(l).tokens(), &scratch);
  ex.heatmap = on_sorted.trace.layers.back().weights;
  ex.violin.assign(static_cast<std::size_t>(l), {});
  for (const auto& p : enumerate_eval_set(l, cfg)) {
    const auto out = forward_eval(params, p.tokens(), &scratch);
    const auto& w = out.trace.last_row_weights;
    for (int col = 0; col < l; ++col)
      ex.violin[static_cast<std::size_t>(p.token(col)) - 1].push_back(
          static_cast<double>(w[static_cast<std::size_t>(col)]));
  }
  return ex;
}

}  // namespace sortrl
