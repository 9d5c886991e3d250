#pragma once

// Hand-constructed perfect sorter at length 3, embed_dim 4, built so every
// piece of the mechanism is analytically known:
//
//   axis 0 carries token magnitude, axes 1..3 one-hot the position.
//   tok_emb[v-1] = v * e0,  pos_emb[i] = e_{1+i}
//   W_K = e0 e0^T      -> K_j = token_j * e0
//   W_Q = gamma e3 e0^T -> only the final position (which has an e3
//                          component) emits a query, gamma * e0
//   W_V = I
//
// Final-row scores are gamma * token_j / sqrt(4): softmax weights strictly
// increase with token value, so non-inversion is 1.0 on every permutation.
// The attended output's e_{1+j} coefficient is exactly the attention weight
// w_j, and the actor head reads differences of those coefficients:
//
//   actor column i = M (e_{1+i} - e_{2+i})  =>  logit_i = M (w_i - w_{i+1})
//
// so greedy picks the most descending adjacent pair: always a correct swap,
// and always the rank-1 action under the most-negative convention.

#include "sortrl/model.hpp"

namespace oracle {

inline sortrl::ModelParams params(float gamma = 4.0f, float head_scale = 100.0f) {
  sortrl::ModelConfig cfg;
  cfg.length = 3;
  cfg.embed_dim = 4;
  cfg.num_layers = 1;

  sortrl::ModelParams p;
  p.cfg = cfg;
  p.tok_emb.init({3, 4});
  p.pos_emb.init({3, 4});
  p.layers.resize(1);
  p.layers[0].wq.init({4, 4});
  p.layers[0].wk.init({4, 4});
  p.layers[0].wv.init({4, 4});
  p.actor_w.init({4, 2});
  p.actor_b.init({1, 2});
  p.critic_w.init({4, 1});
  p.critic_b.init({1, 1});

  for (int v = 1; v <= 3; ++v) p.tok_emb.value.at(v - 1, 0) = static_cast<float>(v);
  for (int i = 0; i < 3; ++i) p.pos_emb.value.at(i, 1 + i) = 1.0f;
  p.layers[0].wq.value.at(3, 0) = gamma;
  p.layers[0].wk.value.at(0, 0) = 1.0f;
  for (int i = 0; i < 4; ++i) p.layers[0].wv.value.at(i, i) = 1.0f;
  p.actor_w.value.at(1, 0) = head_scale;
  p.actor_w.value.at(2, 0) = -head_scale;
  p.actor_w.value.at(2, 1) = head_scale;
  p.actor_w.value.at(3, 1) = -head_scale;
  return p;
}

// Same circuit with the actor head negated: greedy swaps the most ascending
// pair instead, which is always incorrect on an unsorted state.
inline sortrl::ModelParams anti_params() {
  sortrl::ModelParams p = params();
  for (float& v : p.actor_w.value.data) v = -v;
  return p;
}

}  // namespace oracle
