#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "sortrl/error.hpp"
#include "sortrl/tensor.hpp"

namespace sortrl {

template <class F>
struct OptimizerConfig {
  F learning_rate = F(2.5e-4);
  F beta1 = F(0.9);
  F beta2 = F(0.999);
  F eps = F(1e-8);
  F clip_norm = F(0.5);  // global gradient norm ceiling applied before each update
};

// Rescales all gradients so their joint L2 norm is at most max_norm.
// Returns the factor applied (1 when already within bounds). The norm is
// accumulated in double so large parameter counts do not lose precision.
template <class F>
double clip_global_norm(std::span<TensorT<F>* const> grads, F max_norm) {
  double sq = 0.0;
  for (const auto* g : grads)
    for (F v : g->data) sq += static_cast<double>(v) * static_cast<double>(v);
  const double norm = std::sqrt(sq);
  if (norm <= static_cast<double>(max_norm) || norm == 0.0) return 1.0;
  const double factor = static_cast<double>(max_norm) / norm;
  for (auto* g : grads)
    for (F& v : g->data) v = static_cast<F>(v * factor);
  return factor;
}

// Adam with bias correction. step() applies global-norm clipping first and
// refuses to fold NaN/Inf into the moments: a non-finite gradient (or a
// parameter pushed non-finite) raises NumericalDivergence so the caller can
// abort with the previous checkpoint intact.
template <class F>
class AdamOptimizer {
 public:
  AdamOptimizer(OptimizerConfig<F> cfg, std::vector<TensorT<F>*> params,
                std::vector<TensorT<F>*> grads)
      : cfg_(cfg), params_(std::move(params)), grads_(std::move(grads)) {
    require(params_.size() == grads_.size() && !params_.empty(),
            "optimizer needs matching parameter and gradient lists");
    for (std::size_t i = 0; i < params_.size(); ++i) {
      require(params_[i]->same_shape(*grads_[i]), "parameter/gradient shape mismatch");
      m_.push_back(TensorT<F>::zeros(params_[i]->shape));
      v_.push_back(TensorT<F>::zeros(params_[i]->shape));
    }
  }

  void step() {
    for (const auto* g : grads_)
      if (!g->all_finite())
        throw NumericalDivergence("non-finite gradient at optimizer step " +
                                  std::to_string(step_count_ + 1));
    clip_global_norm<F>(grads_, cfg_.clip_norm);
    ++step_count_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), step_count_);
    const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), step_count_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i]->data;
      const auto& g = grads_[i]->data;
      auto& m = m_[i].data;
      auto& v = v_[i].data;
      for (std::size_t j = 0; j < p.size(); ++j) {
        m[j] = cfg_.beta1 * m[j] + (F(1) - cfg_.beta1) * g[j];
        v[j] = cfg_.beta2 * v[j] + (F(1) - cfg_.beta2) * g[j] * g[j];
        const F m_hat = static_cast<F>(m[j] / bc1);
        const F v_hat = static_cast<F>(v[j] / bc2);
        p[j] -= cfg_.learning_rate * m_hat / (std::sqrt(v_hat) + cfg_.eps);
      }
    }
    for (const auto* p : params_)
      if (!p->all_finite())
        throw NumericalDivergence("parameters non-finite after optimizer step " +
                                  std::to_string(step_count_));
  }

  long long step_count() const { return step_count_; }

 private:
  OptimizerConfig<F> cfg_;
  std::vector<TensorT<F>*> params_;
  std::vector<TensorT<F>*> grads_;
  std::vector<TensorT<F>> m_, v_;
  long long step_count_ = 0;
};

}  // namespace sortrl
