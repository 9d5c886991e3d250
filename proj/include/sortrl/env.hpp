#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sortrl/error.hpp"
#include "sortrl/rng.hpp"

namespace sortrl {

inline constexpr int kMinLength = 3;
inline constexpr int kMaxLength = 10;

// Reward is +1 exactly when the episode ends sorted, and a small constant
// penalty for every other transposition.
inline constexpr float kRewardSorted = 1.0f;
inline constexpr float kRewardStep = -0.001f;

// An ordering of the tokens 1..length. Lengths below 3 are rejected: with
// two tokens there is a single action and nothing to learn.
class Permutation {
 public:
  explicit Permutation(std::vector<int> tokens) : tokens_(std::move(tokens)) {
    const int n = static_cast<int>(tokens_.size());
    require(n >= kMinLength && n <= kMaxLength,
            "permutation length must be in [3, 10], got " + std::to_string(n));
    std::vector<bool> seen(static_cast<std::size_t>(n) + 1, false);
    for (int t : tokens_) {
      require(t >= 1 && t <= n && !seen[static_cast<std::size_t>(t)],
              "permutation must contain each of 1..length exactly once");
      seen[static_cast<std::size_t>(t)] = true;
    }
  }

  static Permutation identity(int length) {
    std::vector<int> tokens(static_cast<std::size_t>(length));
    std::iota(tokens.begin(), tokens.end(), 1);
    return Permutation(std::move(tokens));
  }

  int length() const { return static_cast<int>(tokens_.size()); }
  std::span<const int> tokens() const { return tokens_; }
  int token(int pos) const { return tokens_[static_cast<std::size_t>(pos)]; }

  bool operator==(const Permutation& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<int> tokens_;
};

// Swap of the adjacent pair (index, index + 1); valid indices are
// 0..length-2.
struct SwapAction {
  int index = 0;
};

inline bool is_sorted(const Permutation& p) {
  const auto t = p.tokens();
  return std::is_sorted(t.begin(), t.end());
}

// Number of out-of-order pairs (i < j with token(i) > token(j)). Zero exactly
// for the identity; at most length*(length-1)/2.
inline int inversion_count(const Permutation& p) {
  const auto t = p.tokens();
  int count = 0;
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = i + 1; j < t.size(); ++j)
      if (t[i] > t[j]) ++count;
  return count;
}

inline Permutation apply_swap(const Permutation& p, SwapAction action) {
  require(action.index >= 0 && action.index < p.length() - 1,
          "swap index out of range: " + std::to_string(action.index));
  std::vector<int> tokens(p.tokens().begin(), p.tokens().end());
  std::swap(tokens[static_cast<std::size_t>(action.index)],
            tokens[static_cast<std::size_t>(action.index) + 1]);
  return Permutation(std::move(tokens));
}

// Uniform over the length! - 1 non-sorted permutations (resamples the
// identity). Episodes never start solved.
inline Permutation random_unsorted_permutation(int length, Rng& rng) {
  std::vector<int> tokens(static_cast<std::size_t>(length));
  std::iota(tokens.begin(), tokens.end(), 1);
  do {
    rng.shuffle(tokens);
  } while (std::is_sorted(tokens.begin(), tokens.end()));
  return Permutation(tokens);
}

struct EnvConfig {
  int length = 6;
  int max_steps = 1000;
  std::uint64_t seed = 0;

  void validate() const {
    require(length >= kMinLength && length <= kMaxLength,
            "env length must be in [3, 10], got " + std::to_string(length));
    require(max_steps >= 1, "max_steps must be positive");
  }
};

struct StepOutcome {
  Permutation next_state;
  float reward = 0.0f;
  bool terminated = false;  // reached the sorted state
  bool truncated = false;   // hit the step limit while still unsorted
};

// Episodic sorting environment: the state is a permutation, actions are
// adjacent transpositions, and the episode ends when the state is sorted
// (terminated) or after max_steps swaps (truncated).
class SortEnv {
 public:
  explicit SortEnv(EnvConfig cfg)
      : cfg_(cfg), rng_(cfg.seed), state_(Permutation::identity(cfg.length)) {
    cfg_.validate();
    reset();
  }

  SortEnv(EnvConfig cfg, Rng rng)
      : cfg_(cfg), rng_(rng), state_(Permutation::identity(cfg.length)) {
    cfg_.validate();
    reset();
  }

  const Permutation& reset() {
    state_ = random_unsorted_permutation(cfg_.length, rng_);
    episode_steps_ = 0;
    done_ = false;
    return state_;
  }

  StepOutcome step(SwapAction action) {
    require(!done_, "step called on a finished episode; call reset first");
    state_ = apply_swap(state_, action);
    ++episode_steps_;
    StepOutcome outcome{state_, kRewardStep, false, false};
    if (is_sorted(state_)) {
      outcome.reward = kRewardSorted;
      outcome.terminated = true;
    } else if (episode_steps_ >= cfg_.max_steps) {
      outcome.truncated = true;
    }
    done_ = outcome.terminated || outcome.truncated;
    return outcome;
  }

  const Permutation& state() const { return state_; }
  int episode_steps() const { return episode_steps_; }
  bool done() const { return done_; }
  const EnvConfig& config() const { return cfg_; }

 private:
  EnvConfig cfg_;
  Rng rng_;
  Permutation state_;
  int episode_steps_ = 0;
  bool done_ = false;
};

}  // namespace sortrl
