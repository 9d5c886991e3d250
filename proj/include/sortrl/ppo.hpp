#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sortrl/adam.hpp"
#include "sortrl/autodiff.hpp"
#include "sortrl/env.hpp"
#include "sortrl/error.hpp"
#include "sortrl/model.hpp"
#include "sortrl/rng.hpp"

namespace sortrl {

struct PPOConfig {
  long long total_timesteps = 1'000'000;
  int num_envs = 8;
  int rollout_steps = 128;
  float learning_rate = 2.5e-4f;
  float gamma = 0.99f;
  float gae_lambda = 0.95f;
  int num_minibatches = 4;
  int update_epochs = 4;
  float clip_coef = 0.1f;
  float entropy_coef = 0.01f;
  float value_coef = 0.5f;
  float max_grad_norm = 0.5f;
  std::uint64_t seed = 0;

  int batch_size() const { return num_envs * rollout_steps; }
  int minibatch_size() const { return batch_size() / num_minibatches; }
  long long num_updates() const {
    return (total_timesteps + batch_size() - 1) / batch_size();
  }

  void validate() const {
    require(total_timesteps >= 1, "total_timesteps must be positive");
    require(num_envs >= 1, "num_envs must be positive");
    require(rollout_steps >= 1, "rollout_steps must be positive");
    require(num_minibatches >= 1 && batch_size() % num_minibatches == 0,
            "num_minibatches must evenly divide num_envs * rollout_steps");
    require(update_epochs >= 1, "update_epochs must be positive");
    require(learning_rate > 0.0f, "learning_rate must be positive");
    require(gamma > 0.0f && gamma <= 1.0f, "gamma must be in (0, 1]");
    require(gae_lambda >= 0.0f && gae_lambda <= 1.0f, "gae_lambda must be in [0, 1]");
    require(clip_coef > 0.0f && clip_coef < 1.0f, "clip_coef must be in (0, 1)");
    require(entropy_coef >= 0.0f && value_coef >= 0.0f, "loss coefficients must be non-negative");
    require(max_grad_norm > 0.0f, "max_grad_norm must be positive");
  }
};

// Fixed set of environments stepped in lockstep. Episodes that end are reset
// immediately, but the outcome handed back still carries the pre-reset state
// so truncated episodes can be bootstrapped.
class VecEnv {
 public:
  VecEnv(EnvConfig cfg, int num_envs) {
    cfg.validate();
    require(num_envs >= 1, "need at least one environment");
    envs_.reserve(static_cast<std::size_t>(num_envs));
    for (int i = 0; i < num_envs; ++i)
      envs_.emplace_back(cfg, Rng::substream(cfg.seed, static_cast<std::uint64_t>(i)));
  }

  int size() const { return static_cast<int>(envs_.size()); }
  int length() const { return envs_.front().config().length; }
  const Permutation& state(int i) const { return envs_[static_cast<std::size_t>(i)].state(); }

  StepOutcome step(int i, SwapAction action) {
    auto& env = envs_[static_cast<std::size_t>(i)];
    StepOutcome out = env.step(action);
    if (out.terminated || out.truncated) env.reset();
    return out;
  }

 private:
  std::vector<SortEnv> envs_;
};

// Flat storage for one rollout window; index (t, env) maps to
// t * num_envs + env.
struct RolloutBuffer {
  int steps = 0, num_envs = 0, length = 0;
  std::vector<int> obs;
  std::vector<int> actions;
  std::vector<float> log_probs, rewards, values;
  // Value used to bootstrap past a stored transition where values[t + 1] is
  // unavailable or wrong: 0 after termination, V(pre-reset next state) after
  // truncation, V(current state) for the final row of a running episode.
  std::vector<float> bootstrap_values;
  std::vector<std::uint8_t> terminated, truncated;
  std::vector<float> advantages, returns;

  static RolloutBuffer make(int steps, int num_envs, int length) {
    RolloutBuffer b;
    b.steps = steps;
    b.num_envs = num_envs;
    b.length = length;
    const std::size_t n = static_cast<std::size_t>(steps) * num_envs;
    b.obs.assign(n * static_cast<std::size_t>(length), 0);
    b.actions.assign(n, 0);
    b.log_probs.assign(n, 0.0f);
    b.rewards.assign(n, 0.0f);
    b.values.assign(n, 0.0f);
    b.bootstrap_values.assign(n, 0.0f);
    b.terminated.assign(n, 0);
    b.truncated.assign(n, 0);
    b.advantages.assign(n, 0.0f);
    b.returns.assign(n, 0.0f);
    return b;
  }

  int batch() const { return steps * num_envs; }

  std::span<const int> obs_at(int flat) const {
    return {obs.data() + static_cast<std::size_t>(flat) * length,
            static_cast<std::size_t>(length)};
  }
};

// Per-env episode accounting aggregated per logging window.
class EpisodeTracker {
 public:
  explicit EpisodeTracker(int num_envs)
      : returns_(static_cast<std::size_t>(num_envs), 0.0),
        lengths_(static_cast<std::size_t>(num_envs), 0) {}

  void on_step(int i, float reward, bool done) {
    returns_[static_cast<std::size_t>(i)] += reward;
    lengths_[static_cast<std::size_t>(i)] += 1;
    if (done) {
      ++episodes_;
      return_sum_ += returns_[static_cast<std::size_t>(i)];
      length_sum_ += lengths_[static_cast<std::size_t>(i)];
      returns_[static_cast<std::size_t>(i)] = 0.0;
      lengths_[static_cast<std::size_t>(i)] = 0;
    }
  }

  struct Window {
    long long episodes = 0;
    double mean_return = 0.0;
    double mean_length = 0.0;
  };

  Window drain() {
    Window w;
    w.episodes = episodes_;
    if (episodes_ > 0) {
      w.mean_return = return_sum_ / static_cast<double>(episodes_);
      w.mean_length = length_sum_ / static_cast<double>(episodes_);
    }
    episodes_ = 0;
    return_sum_ = 0.0;
    length_sum_ = 0.0;
    return w;
  }

 private:
  std::vector<double> returns_;
  std::vector<long long> lengths_;
  long long episodes_ = 0;
  double return_sum_ = 0.0;
  double length_sum_ = 0.0;
};

// Fills the buffer with one window of experience. Policy must provide
// act(const Permutation&) -> SampleResultT<float> and
// value(const Permutation&) -> float.
template <class Policy>
void collect_rollout(VecEnv& envs, Policy& policy, RolloutBuffer& buf, EpisodeTracker& tracker) {
  require(buf.num_envs == envs.size() && buf.length == envs.length(),
          "rollout buffer does not match the vectorized env");
  for (int t = 0; t < buf.steps; ++t) {
    for (int i = 0; i < buf.num_envs; ++i) {
      const int f = t * buf.num_envs + i;
      const Permutation& state = envs.state(i);
      std::copy(state.tokens().begin(), state.tokens().end(),
                buf.obs.begin() + static_cast<std::size_t>(f) * buf.length);
      const auto sampled = policy.act(state);
      const StepOutcome out = envs.step(i, sampled.action);
      buf.actions[static_cast<std::size_t>(f)] = sampled.action.index;
      buf.log_probs[static_cast<std::size_t>(f)] = sampled.log_prob;
      buf.values[static_cast<std::size_t>(f)] = sampled.value;
      buf.rewards[static_cast<std::size_t>(f)] = out.reward;
      buf.terminated[static_cast<std::size_t>(f)] = out.terminated ? 1 : 0;
      buf.truncated[static_cast<std::size_t>(f)] = out.truncated ? 1 : 0;
      float bootstrap = 0.0f;
      if (out.truncated) bootstrap = policy.value(out.next_state);
      buf.bootstrap_values[static_cast<std::size_t>(f)] = bootstrap;
      tracker.on_step(i, out.reward, out.terminated || out.truncated);
    }
  }
  // Episodes still running at the window edge bootstrap from their current
  // (already advanced) state.
  for (int i = 0; i < buf.num_envs; ++i) {
    const int f = (buf.steps - 1) * buf.num_envs + i;
    if (!buf.terminated[static_cast<std::size_t>(f)] && !buf.truncated[static_cast<std::size_t>(f)])
      buf.bootstrap_values[static_cast<std::size_t>(f)] = policy.value(envs.state(i));
  }
}

// Generalized advantage estimation. Termination cuts the bootstrap entirely;
// truncation bootstraps from the stored pre-reset state value. Accumulation
// runs in double, per environment, from the end of the window backwards.
inline void compute_gae(RolloutBuffer& buf, float gamma, float gae_lambda) {
  for (int i = 0; i < buf.num_envs; ++i) {
    double adv = 0.0;
    for (int t = buf.steps - 1; t >= 0; --t) {
      const std::size_t f = static_cast<std::size_t>(t) * buf.num_envs + i;
      const bool done = buf.terminated[f] || buf.truncated[f];
      const double next_value =
          (done || t == buf.steps - 1)
              ? static_cast<double>(buf.bootstrap_values[f])
              : static_cast<double>(buf.values[f + static_cast<std::size_t>(buf.num_envs)]);
      const double not_terminated = buf.terminated[f] ? 0.0 : 1.0;
      const double delta = static_cast<double>(buf.rewards[f]) +
                           static_cast<double>(gamma) * next_value * not_terminated -
                           static_cast<double>(buf.values[f]);
      adv = delta + static_cast<double>(gamma) * static_cast<double>(gae_lambda) *
                        (done ? 0.0 : 1.0) * adv;
      buf.advantages[f] = static_cast<float>(adv);
      buf.returns[f] = static_cast<float>(adv + static_cast<double>(buf.values[f]));
    }
  }
}

// Batch-wide normalization to zero mean and unit (population) variance,
// applied once per update before the epochs run.
inline void normalize_advantages(RolloutBuffer& buf) {
  const std::size_t n = buf.advantages.size();
  double mean = 0.0;
  for (float a : buf.advantages) mean += a;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (float a : buf.advantages) var += (a - mean) * (a - mean);
  var /= static_cast<double>(n);
  const double denom = std::sqrt(var) + 1e-8;
  for (float& a : buf.advantages) a = static_cast<float>((a - mean) / denom);
}

struct LossStats {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;

  LossStats& operator+=(const LossStats& o) {
    total += o.total;
    policy += o.policy;
    value += o.value;
    entropy += o.entropy;
    approx_kl += o.approx_kl;
    clip_fraction += o.clip_fraction;
    return *this;
  }
  void scale(double s) {
    total *= s;
    policy *= s;
    value *= s;
    entropy *= s;
    approx_kl *= s;
    clip_fraction *= s;
  }
};

// Builds the clipped-surrogate PPO loss for one minibatch on the given tape:
//   L = -mean(min(r A, clip(r) A))
//     + value_coef * 0.5 * mean(max((V - R)^2, (clip_v(V) - R)^2))
//     - entropy_coef * mean(H(pi))
// where clip_v limits the value prediction to +-clip_coef around its rollout
// value. Advantages are taken from the buffer as-is (already normalized).
template <class F>
std::pair<typename TapeT<F>::Var, LossStats> ppo_loss(TapeT<F>& tape, const ModelVarsT<F>& mv,
                                                      const ModelConfig& cfg, const PPOConfig& ppo,
                                                      const RolloutBuffer& buf,
                                                      std::span<const int> indices) {
  using Var = typename TapeT<F>::Var;
  require(!indices.empty(), "empty minibatch");
  Var policy_sum = tape.scalar(F(0));
  Var value_sum = tape.scalar(F(0));
  Var entropy_sum = tape.scalar(F(0));
  double kl_acc = 0.0;
  double clipped = 0.0;
  for (int f : indices) {
    const auto fwd = forward(tape, mv, cfg, buf.obs_at(f));
    const Var logp = tape.pick(fwd.log_probs, buf.actions[static_cast<std::size_t>(f)]);
    const Var ratio =
        tape.exp(tape.sub(logp, tape.scalar(buf.log_probs[static_cast<std::size_t>(f)])));
    const F adv = static_cast<F>(buf.advantages[static_cast<std::size_t>(f)]);
    const Var surr1 = tape.scale(ratio, adv);
    const Var surr2 =
        tape.scale(tape.clamp(ratio, F(1) - F(ppo.clip_coef), F(1) + F(ppo.clip_coef)), adv);
    policy_sum = tape.add(policy_sum, tape.minimum(surr1, surr2));

    const Var old_value = tape.scalar(static_cast<F>(buf.values[static_cast<std::size_t>(f)]));
    const Var target = tape.scalar(static_cast<F>(buf.returns[static_cast<std::size_t>(f)]));
    const Var v_err = tape.sub(fwd.value, target);
    const Var v_clipped = tape.add(
        old_value,
        tape.clamp(tape.sub(fwd.value, old_value), -F(ppo.clip_coef), F(ppo.clip_coef)));
    const Var v_err_clipped = tape.sub(v_clipped, target);
    value_sum = tape.add(
        value_sum, tape.maximum(tape.mul(v_err, v_err), tape.mul(v_err_clipped, v_err_clipped)));

    const Var probs = tape.exp(fwd.log_probs);
    entropy_sum = tape.sub(entropy_sum, tape.sum(tape.mul(probs, fwd.log_probs)));

    const double r = static_cast<double>(tape.value(ratio).data[0]);
    const double log_ratio = static_cast<double>(tape.value(logp).data[0]) -
                             static_cast<double>(buf.log_probs[static_cast<std::size_t>(f)]);
    kl_acc += (r - 1.0) - log_ratio;
    if (std::abs(r - 1.0) > static_cast<double>(ppo.clip_coef)) clipped += 1.0;
  }
  const F inv_n = F(1) / static_cast<F>(indices.size());
  const Var policy_loss = tape.scale(policy_sum, -inv_n);
  const Var value_loss = tape.scale(value_sum, F(0.5) * inv_n);
  const Var entropy = tape.scale(entropy_sum, inv_n);
  const Var total =
      tape.add(policy_loss, tape.sub(tape.scale(value_loss, F(ppo.value_coef)),
                                     tape.scale(entropy, F(ppo.entropy_coef))));
  LossStats stats;
  stats.total = tape.value(total).data[0];
  stats.policy = tape.value(policy_loss).data[0];
  stats.value = tape.value(value_loss).data[0];
  stats.entropy = tape.value(entropy).data[0];
  stats.approx_kl = kl_acc / static_cast<double>(indices.size());
  stats.clip_fraction = clipped / static_cast<double>(indices.size());
  return {total, stats};
}

// Policy adapter over live model parameters; sampling consumes the rng it
// owns so rollouts are deterministic per seed.
class ModelPolicy {
 public:
  ModelPolicy(const ModelParams& params, Rng rng) : params_(params), rng_(rng) {}

  SampleResultT<float> act(const Permutation& state) {
    return act_sample(params_, state, rng_, &tape_);
  }

  float value(const Permutation& state) {
    return forward_eval(params_, state.tokens(), &tape_).value;
  }

 private:
  const ModelParams& params_;
  Rng rng_;
  Tape tape_;
};

// One jsonl record per update (rollout window + optimization epochs).
struct TrainLogRecord {
  long long update = 0;       // 1-based
  long long global_step = 0;  // environment steps consumed so far
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  long long episodes = 0;  // episodes finished inside this window
  double mean_episode_return = 0.0;
  double mean_episode_length = 0.0;
};

struct TrainHooks {
  std::function<void(const TrainLogRecord&)> on_update;
  // Fired at every 10% mark of total_timesteps (the final update always
  // lands on the last mark).
  std::function<void(long long global_step, const ModelParams&)> on_checkpoint;
};

struct TrainResult {
  ModelParams params;
  std::vector<TrainLogRecord> log;
  long long global_steps = 0;
};

// Full PPO run from freshly initialized parameters. All randomness derives
// from ppo.seed (init, action sampling, minibatch shuffling) and
// env_cfg.seed (resets), so identical configs yield identical parameters.
inline TrainResult train(const PPOConfig& ppo, const ModelConfig& model_cfg,
                         const EnvConfig& env_cfg, const TrainHooks& hooks = {}) {
  ppo.validate();
  model_cfg.validate();
  env_cfg.validate();
  require(model_cfg.length == env_cfg.length, "model and environment lengths differ");

  Rng init_rng = Rng::substream(ppo.seed, 0x1001);
  TrainResult result;
  result.params = init_params<float>(model_cfg, init_rng);
  ModelParams& params = result.params;

  VecEnv envs(env_cfg, ppo.num_envs);
  ModelPolicy policy(params, Rng::substream(ppo.seed, 0x2002));
  Rng shuffle_rng = Rng::substream(ppo.seed, 0x3003);
  auto buf = RolloutBuffer::make(ppo.rollout_steps, ppo.num_envs, model_cfg.length);
  EpisodeTracker tracker(ppo.num_envs);

  OptimizerConfig<float> opt_cfg;
  opt_cfg.learning_rate = ppo.learning_rate;
  opt_cfg.clip_norm = ppo.max_grad_norm;
  AdamOptimizer<float> optimizer(opt_cfg, params.values(), params.grads());

  Tape tape;
  std::vector<int> order(static_cast<std::size_t>(buf.batch()));
  std::iota(order.begin(), order.end(), 0);

  int next_checkpoint_decile = 1;
  for (long long update = 1; update <= ppo.num_updates(); ++update) {
    collect_rollout(envs, policy, buf, tracker);
    compute_gae(buf, ppo.gamma, ppo.gae_lambda);
    normalize_advantages(buf);

    LossStats agg;
    int minibatches_done = 0;
    for (int epoch = 0; epoch < ppo.update_epochs; ++epoch) {
      shuffle_rng.shuffle(order);
      for (int mb = 0; mb < ppo.num_minibatches; ++mb) {
        const std::span<const int> idx(order.data() + static_cast<std::size_t>(mb) *
                                                          ppo.minibatch_size(),
                                       static_cast<std::size_t>(ppo.minibatch_size()));
        tape.reset();
        const auto mv = register_params(tape, params);
        params.zero_grads();
        auto [loss, stats] = ppo_loss<float>(tape, mv, model_cfg, ppo, buf, idx);
        tape.backward(loss);
        optimizer.step();
        agg += stats;
        ++minibatches_done;
      }
    }
    agg.scale(1.0 / minibatches_done);

    result.global_steps = update * static_cast<long long>(ppo.batch_size());
    TrainLogRecord rec;
    rec.update = update;
    rec.global_step = result.global_steps;
    rec.policy_loss = agg.policy;
    rec.value_loss = agg.value;
    rec.entropy = agg.entropy;
    rec.approx_kl = agg.approx_kl;
    rec.clip_fraction = agg.clip_fraction;
    const auto window = tracker.drain();
    rec.episodes = window.episodes;
    rec.mean_episode_return = window.mean_return;
    rec.mean_episode_length = window.mean_length;
    result.log.push_back(rec);
    if (hooks.on_update) hooks.on_update(rec);

    bool hit_decile = false;
    while (next_checkpoint_decile <= 10 &&
           result.global_steps * 10 >= ppo.total_timesteps * next_checkpoint_decile) {
      hit_decile = true;
      ++next_checkpoint_decile;
    }
    if (hit_decile && hooks.on_checkpoint) hooks.on_checkpoint(result.global_steps, params);
  }
  return result;
}

}  // namespace sortrl
