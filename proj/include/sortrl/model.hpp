#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sortrl/autodiff.hpp"
#include "sortrl/env.hpp"
#include "sortrl/error.hpp"
#include "sortrl/rng.hpp"
#include "sortrl/tensor.hpp"

namespace sortrl {

struct ModelConfig {
  int length = 6;      // sequence length; must equal the environment length
  int embed_dim = 16;  // token/position embedding width, also d_k
  int num_layers = 1;  // attention-only blocks stacked

  int num_actions() const { return length - 1; }

  void validate() const {
    require(length >= kMinLength && length <= kMaxLength,
            "model length must be in [3, 10], got " + std::to_string(length));
    require(embed_dim >= 1 && embed_dim <= 256,
            "embed_dim must be in [1, 256], got " + std::to_string(embed_dim));
    require(num_layers == 1 || num_layers == 2,
            "num_layers must be 1 or 2, got " + std::to_string(num_layers));
  }
};

template <class F>
struct ParamT {
  TensorT<F> value;
  TensorT<F> grad;

  void init(std::vector<int> shape) {
    value = TensorT<F>::zeros(shape);
    grad = TensorT<F>::zeros(std::move(shape));
  }
};

// All learnable state of the agent. The order returned by values()/grads()
// is the canonical serialization order used by checkpoints.
template <class F>
struct ModelParamsT {
  ModelConfig cfg;
  ParamT<F> tok_emb;  // [length, embed_dim]
  ParamT<F> pos_emb;  // [length, embed_dim]
  struct AttnLayer {
    ParamT<F> wq, wk, wv;  // each [embed_dim, embed_dim]
  };
  std::vector<AttnLayer> layers;
  ParamT<F> actor_w;   // [embed_dim, length - 1]
  ParamT<F> actor_b;   // [1, length - 1]
  ParamT<F> critic_w;  // [embed_dim, 1]
  ParamT<F> critic_b;  // [1, 1]

  std::vector<TensorT<F>*> values() {
    std::vector<TensorT<F>*> out{&tok_emb.value, &pos_emb.value};
    for (auto& l : layers) {
      out.push_back(&l.wq.value);
      out.push_back(&l.wk.value);
      out.push_back(&l.wv.value);
    }
    out.push_back(&actor_w.value);
    out.push_back(&actor_b.value);
    out.push_back(&critic_w.value);
    out.push_back(&critic_b.value);
    return out;
  }

  std::vector<const TensorT<F>*> values() const {
    auto* self = const_cast<ModelParamsT*>(this);
    std::vector<TensorT<F>*> mut = self->values();
    return {mut.begin(), mut.end()};
  }

  std::vector<TensorT<F>*> grads() {
    std::vector<TensorT<F>*> out{&tok_emb.grad, &pos_emb.grad};
    for (auto& l : layers) {
      out.push_back(&l.wq.grad);
      out.push_back(&l.wk.grad);
      out.push_back(&l.wv.grad);
    }
    out.push_back(&actor_w.grad);
    out.push_back(&actor_b.grad);
    out.push_back(&critic_w.grad);
    out.push_back(&critic_b.grad);
    return out;
  }

  void zero_grads() {
    for (auto* g : grads()) g->fill(F(0));
  }

  long long param_count() const {
    long long n = 0;
    for (const auto* v : values()) n += v->numel();
    return n;
  }

  template <class G>
  ModelParamsT<G> cast() const {
    ModelParamsT<G> out;
    out.cfg = cfg;
    out.tok_emb = {tok_emb.value.template cast<G>(), tok_emb.grad.template cast<G>()};
    out.pos_emb = {pos_emb.value.template cast<G>(), pos_emb.grad.template cast<G>()};
    for (const auto& l : layers)
      out.layers.push_back({{l.wq.value.template cast<G>(), l.wq.grad.template cast<G>()},
                            {l.wk.value.template cast<G>(), l.wk.grad.template cast<G>()},
                            {l.wv.value.template cast<G>(), l.wv.grad.template cast<G>()}});
    out.actor_w = {actor_w.value.template cast<G>(), actor_w.grad.template cast<G>()};
    out.actor_b = {actor_b.value.template cast<G>(), actor_b.grad.template cast<G>()};
    out.critic_w = {critic_w.value.template cast<G>(), critic_w.grad.template cast<G>()};
    out.critic_b = {critic_b.value.template cast<G>(), critic_b.grad.template cast<G>()};
    return out;
  }
};

using ModelParams = ModelParamsT<float>;

// Random matrix with orthonormal rows (if wide) or columns (if tall),
// scaled by gain. Built in double via Gram-Schmidt for stability.
template <class F>
TensorT<F> orthogonal_init(int rows, int cols, F gain, Rng& rng) {
  const bool wide = cols > rows;
  const int count = wide ? rows : cols;  // number of orthonormal vectors
  const int dim = wide ? cols : rows;    // their length
  std::vector<std::vector<double>> vecs(static_cast<std::size_t>(count),
                                        std::vector<double>(static_cast<std::size_t>(dim)));
  for (auto& v : vecs)
    for (double& x : v) x = rng.normal();
  for (int i = 0; i < count; ++i) {
    auto& vi = vecs[static_cast<std::size_t>(i)];
    for (int j = 0; j < i; ++j) {
      const auto& vj = vecs[static_cast<std::size_t>(j)];
      double dot = 0.0;
      for (int k = 0; k < dim; ++k) dot += vi[static_cast<std::size_t>(k)] * vj[static_cast<std::size_t>(k)];
      for (int k = 0; k < dim; ++k) vi[static_cast<std::size_t>(k)] -= dot * vj[static_cast<std::size_t>(k)];
    }
    double norm = 0.0;
    for (double x : vi) norm += x * x;
    norm = std::sqrt(norm);
    require(norm > 1e-12, "degenerate draw during orthogonal init");
    for (double& x : vi) x /= norm;
  }
  auto out = TensorT<F>::zeros({rows, cols});
  for (int i = 0; i < count; ++i)
    for (int k = 0; k < dim; ++k) {
      const double v = static_cast<double>(gain) * vecs[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
      if (wide)
        out.at(i, k) = static_cast<F>(v);
      else
        out.at(k, i) = static_cast<F>(v);
    }
  return out;
}

// Embeddings and projections ~ N(0, 1/sqrt(embed_dim)); heads orthogonal
// (actor gain 0.01 so the initial policy is near-uniform, critic gain 1),
// biases zero.
template <class F>
ModelParamsT<F> init_params(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  const int l = cfg.length, d = cfg.embed_dim;
  const F stddev = F(1) / std::sqrt(static_cast<F>(d));
  ModelParamsT<F> p;
  p.cfg = cfg;
  auto gaussian = [&](int r, int c) {
    auto t = TensorT<F>::zeros({r, c});
    for (F& v : t.data) v = static_cast<F>(rng.normal()) * stddev;
    return t;
  };
  p.tok_emb.init({l, d});
  p.pos_emb.init({l, d});
  p.tok_emb.value = gaussian(l, d);
  p.pos_emb.value = gaussian(l, d);
  p.layers.resize(static_cast<std::size_t>(cfg.num_layers));
  for (auto& layer : p.layers) {
    layer.wq.init({d, d});
    layer.wk.init({d, d});
    layer.wv.init({d, d});
    layer.wq.value = gaussian(d, d);
    layer.wk.value = gaussian(d, d);
    layer.wv.value = gaussian(d, d);
  }
  p.actor_w.init({d, cfg.num_actions()});
  p.actor_b.init({1, cfg.num_actions()});
  p.critic_w.init({d, 1});
  p.critic_b.init({1, 1});
  p.actor_w.value = orthogonal_init<F>(d, cfg.num_actions(), F(0.01), rng);
  p.critic_w.value = orthogonal_init<F>(d, 1, F(1), rng);
  return p;
}

// Attention internals captured during a forward pass. Masked score entries
// are reported as -infinity; masked weights are exactly zero. The last-row
// vectors come from the final layer's final query position, which attends to
// every position.
template <class F>
struct AttentionTraceT {
  struct Layer {
    TensorT<F> scores;   // [length, length]
    TensorT<F> weights;  // [length, length]
  };
  std::vector<Layer> layers;
  std::vector<F> last_row_scores;
  std::vector<F> last_row_weights;
};

template <class F>
struct ModelVarsT {
  using Var = typename TapeT<F>::Var;
  Var tok_emb, pos_emb;
  struct AttnLayer {
    Var wq, wk, wv;
  };
  std::vector<AttnLayer> layers;
  Var actor_w, actor_b, critic_w, critic_b;
};

// Registers parameters as trainable leaves; gradients flow into the params'
// grad tensors on backward().
template <class F>
ModelVarsT<F> register_params(TapeT<F>& tape, ModelParamsT<F>& p) {
  ModelVarsT<F> mv;
  mv.tok_emb = tape.param(&p.tok_emb.value, &p.tok_emb.grad);
  mv.pos_emb = tape.param(&p.pos_emb.value, &p.pos_emb.grad);
  for (auto& l : p.layers)
    mv.layers.push_back({tape.param(&l.wq.value, &l.wq.grad),
                         tape.param(&l.wk.value, &l.wk.grad),
                         tape.param(&l.wv.value, &l.wv.grad)});
  mv.actor_w = tape.param(&p.actor_w.value, &p.actor_w.grad);
  mv.actor_b = tape.param(&p.actor_b.value, &p.actor_b.grad);
  mv.critic_w = tape.param(&p.critic_w.value, &p.critic_w.grad);
  mv.critic_b = tape.param(&p.critic_b.value, &p.critic_b.grad);
  return mv;
}

// Read-only registration for rollouts and probes; no gradient sinks.
template <class F>
ModelVarsT<F> register_frozen(TapeT<F>& tape, const ModelParamsT<F>& p) {
  ModelVarsT<F> mv;
  mv.tok_emb = tape.frozen(&p.tok_emb.value);
  mv.pos_emb = tape.frozen(&p.pos_emb.value);
  for (const auto& l : p.layers)
    mv.layers.push_back({tape.frozen(&l.wq.value), tape.frozen(&l.wk.value),
                         tape.frozen(&l.wv.value)});
  mv.actor_w = tape.frozen(&p.actor_w.value);
  mv.actor_b = tape.frozen(&p.actor_b.value);
  mv.critic_w = tape.frozen(&p.critic_w.value);
  mv.critic_b = tape.frozen(&p.critic_b.value);
  return mv;
}

template <class F>
struct ForwardVars {
  using Var = typename TapeT<F>::Var;
  Var logits;     // [1, num_actions]
  Var log_probs;  // [1, num_actions]
  Var value;      // [1, 1]
};

// One forward pass: embed tokens (as ids, never as magnitudes) + positions,
// run the attention stack (x <- softmax(QK^T / sqrt(d_k), causal) V with no
// residual path, no normalization, no MLP), then read the final position
// into linear actor and critic heads.
template <class F>
ForwardVars<F> forward(TapeT<F>& tape, const ModelVarsT<F>& mv, const ModelConfig& cfg,
                       std::span<const int> tokens, AttentionTraceT<F>* trace = nullptr) {
  const int l = cfg.length;
  require(static_cast<int>(tokens.size()) == l, "token count does not match model length");
  std::vector<int> ids(static_cast<std::size_t>(l));
  for (int i = 0; i < l; ++i) {
    require(tokens[static_cast<std::size_t>(i)] >= 1 && tokens[static_cast<std::size_t>(i)] <= l,
            "token out of range");
    ids[static_cast<std::size_t>(i)] = tokens[static_cast<std::size_t>(i)] - 1;
  }
  const auto mask = causal_mask(l);
  const F inv_sqrt_dk = F(1) / std::sqrt(static_cast<F>(cfg.embed_dim));

  auto x = tape.add(tape.embedding_rows(mv.tok_emb, std::move(ids)), mv.pos_emb);
  if (trace) trace->layers.clear();
  for (const auto& layer : mv.layers) {
    auto q = tape.matmul(x, layer.wq);
    auto k = tape.matmul(x, layer.wk);
    auto v = tape.matmul(x, layer.wv);
    auto scores = tape.scale(tape.matmul_nt(q, k), inv_sqrt_dk);
    auto weights = tape.masked_softmax_rows(scores, mask);
    x = tape.matmul(weights, v);
    if (trace) {
      typename AttentionTraceT<F>::Layer rec{tape.value(scores), tape.value(weights)};
      for (int i = 0; i < l; ++i)
        for (int j = i + 1; j < l; ++j)
          rec.scores.at(i, j) = -std::numeric_limits<F>::infinity();
      trace->layers.push_back(std::move(rec));
    }
  }
  auto readout = tape.row(x, l - 1);
  ForwardVars<F> out;
  out.logits = tape.add(tape.matmul(readout, mv.actor_w), mv.actor_b);
  out.log_probs = tape.log_softmax_row(out.logits);
  out.value = tape.add(tape.matmul(readout, mv.critic_w), mv.critic_b);
  if (trace) {
    const auto& last = trace->layers.back();
    trace->last_row_scores.assign(last.scores.data.end() - l, last.scores.data.end());
    trace->last_row_weights.assign(last.weights.data.end() - l, last.weights.data.end());
  }
  return out;
}

template <class F>
struct PolicyOutputT {
  std::vector<F> action_logits;
  std::vector<F> action_log_probs;
  F value = F(0);
  AttentionTraceT<F> trace;
};

// Convenience single-state evaluation. Callers in hot loops should pass a
// scratch tape to reuse its storage.
template <class F>
PolicyOutputT<F> forward_eval(const ModelParamsT<F>& params, std::span<const int> tokens,
                              TapeT<F>* scratch = nullptr) {
  TapeT<F> local;
  TapeT<F>& tape = scratch ? *scratch : local;
  tape.reset();
  const auto mv = register_frozen(tape, params);
  PolicyOutputT<F> out;
  const auto fwd = forward(tape, mv, params.cfg, tokens, &out.trace);
  out.action_logits = tape.value(fwd.logits).data;
  out.action_log_probs = tape.value(fwd.log_probs).data;
  out.value = tape.value(fwd.value).data[0];
  return out;
}

// Argmax action; ties break toward the lower index so greedy evaluation is
// fully deterministic.
template <class F>
SwapAction act_greedy(std::span<const F> logits) {
  require(!logits.empty(), "empty logits");
  int best = 0;
  for (int i = 1; i < static_cast<int>(logits.size()); ++i)
    if (logits[static_cast<std::size_t>(i)] > logits[static_cast<std::size_t>(best)]) best = i;
  return SwapAction{best};
}

template <class F>
SwapAction act_greedy(const ModelParamsT<F>& params, const Permutation& state,
                      TapeT<F>* scratch = nullptr) {
  const auto out = forward_eval(params, state.tokens(), scratch);
  return act_greedy<F>(out.action_logits);
}

template <class F>
struct SampleResultT {
  SwapAction action;
  F log_prob = F(0);
  F value = F(0);
};

// Samples from the categorical policy. The returned log-probability is read
// from the same log-softmax the training loss recomputes, so a pre-update
// loss pass reproduces it bit for bit.
template <class F>
SampleResultT<F> act_sample(const ModelParamsT<F>& params, const Permutation& state, Rng& rng,
                            TapeT<F>* scratch = nullptr) {
  const auto out = forward_eval(params, state.tokens(), scratch);
  std::vector<double> probs(out.action_log_probs.size());
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    probs[i] = std::exp(static_cast<double>(out.action_log_probs[i]));
    total += probs[i];
  }
  const double u = rng.uniform() * total;
  double cum = 0.0;
  int action = static_cast<int>(probs.size()) - 1;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cum += probs[i];
    if (u < cum) {
      action = static_cast<int>(i);
      break;
    }
  }
  return {SwapAction{action}, out.action_log_probs[static_cast<std::size_t>(action)], out.value};
}

}  // namespace sortrl
