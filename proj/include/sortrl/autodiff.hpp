#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "sortrl/error.hpp"
#include "sortrl/tensor.hpp"

namespace sortrl {

// Row-major causal visibility pattern: position i attends to positions
// j <= i. Stored flat, 1 = visible.
inline std::vector<std::uint8_t> causal_mask(int n) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(n) * n, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) mask[static_cast<std::size_t>(i) * n + j] = 1;
  return mask;
}

// Reverse-mode autodiff over tensor-valued nodes. A tape records the forward
// pass; backward() replays it in reverse, accumulating gradients and adding
// the result into the gradient sinks registered via param().
//
// The tape is rebuilt every step (reset + forward + backward); parameters are
// referenced by pointer so re-registering them is cheap.
template <class F>
class TapeT {
 public:
  struct Var {
    int id = -1;
  };

  void reset() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  // Leaf owned by the tape; receives no gradient.
  Var constant(TensorT<F> value) { return push(std::move(value), nullptr, nullptr, {}); }

  Var scalar(F v) { return constant(TensorT<F>::from({1, 1}, {v})); }

  // Leaf referencing caller-owned storage. Gradients accumulate into
  // *grad_sink, which must already have the value's shape.
  Var param(const TensorT<F>* value, TensorT<F>* grad_sink) {
    require(value != nullptr && grad_sink != nullptr, "param requires value and grad storage");
    require(value->same_shape(*grad_sink), "param grad storage has mismatched shape");
    return push(TensorT<F>{}, value, grad_sink, {});
  }

  // Leaf referencing caller-owned storage without a gradient sink; used for
  // rollouts and probes where no update will follow.
  Var frozen(const TensorT<F>* value) {
    require(value != nullptr, "frozen requires a value");
    return push(TensorT<F>{}, value, nullptr, {});
  }

  const TensorT<F>& value(Var v) const { return val(check(v)); }

  // out = a . b, with a [m,k] and b [k,n].
  Var matmul(Var a, Var b) {
    const auto& va = val(check(a));
    const auto& vb = val(check(b));
    require(va.cols() == vb.rows(), "matmul inner dimensions differ: " + shape_string(va) +
                                        " vs " + shape_string(vb));
    const int m = va.rows(), k = va.cols(), n = vb.cols();
    auto out = TensorT<F>::zeros({m, n});
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p) {
        const F aip = va.at(i, p);
        for (int j = 0; j < n; ++j) out.at(i, j) += aip * vb.at(p, j);
      }
    return push(std::move(out), nullptr, nullptr, [ai = a.id, bi = b.id](TapeT& t, Node& self) {
      const auto& va = t.val(ai);
      const auto& vb = t.val(bi);
      const int m = va.rows(), k = va.cols(), n = vb.cols();
      auto& ga = t.grad_ref(ai);
      auto& gb = t.grad_ref(bi);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const F d = self.grad.at(i, j);
          if (d == F(0)) continue;
          for (int p = 0; p < k; ++p) {
            ga.at(i, p) += d * vb.at(p, j);
            gb.at(p, j) += va.at(i, p) * d;
          }
        }
    });
  }

  // out = a . b^T, with a [m,k] and b [n,k]; the attention score kernel.
  Var matmul_nt(Var a, Var b) {
    const auto& va = val(check(a));
    const auto& vb = val(check(b));
    require(va.cols() == vb.cols(), "matmul_nt requires matching inner dimensions");
    const int m = va.rows(), k = va.cols(), n = vb.rows();
    auto out = TensorT<F>::zeros({m, n});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        F acc = F(0);
        for (int p = 0; p < k; ++p) acc += va.at(i, p) * vb.at(j, p);
        out.at(i, j) = acc;
      }
    return push(std::move(out), nullptr, nullptr, [ai = a.id, bi = b.id](TapeT& t, Node& self) {
      const auto& va = t.val(ai);
      const auto& vb = t.val(bi);
      const int m = va.rows(), k = va.cols(), n = vb.rows();
      auto& ga = t.grad_ref(ai);
      auto& gb = t.grad_ref(bi);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          const F d = self.grad.at(i, j);
          if (d == F(0)) continue;
          for (int p = 0; p < k; ++p) {
            ga.at(i, p) += d * vb.at(j, p);
            gb.at(j, p) += d * va.at(i, p);
          }
        }
    });
  }

  Var add(Var a, Var b) { return elementwise(a, b, /*subtract=*/false); }
  Var sub(Var a, Var b) { return elementwise(a, b, /*subtract=*/true); }

  Var mul(Var a, Var b) {
    const auto& va = val(check(a));
    const auto& vb = val(check(b));
    require(va.same_shape(vb), "mul requires matching shapes");
    TensorT<F> out = va;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= vb.data[i];
    return push(std::move(out), nullptr, nullptr, [ai = a.id, bi = b.id](TapeT& t, Node& self) {
      const auto& va = t.val(ai);
      const auto& vb = t.val(bi);
      auto& ga = t.grad_ref(ai);
      auto& gb = t.grad_ref(bi);
      for (std::size_t i = 0; i < self.grad.data.size(); ++i) {
        ga.data[i] += self.grad.data[i] * vb.data[i];
        gb.data[i] += self.grad.data[i] * va.data[i];
      }
    });
  }

  Var scale(Var a, F c) {
    TensorT<F> out = val(check(a));
    for (F& v : out.data) v *= c;
    return push(std::move(out), nullptr, nullptr, [ai = a.id, c](TapeT& t, Node& self) {
      auto& ga = t.grad_ref(ai);
      for (std::size_t i = 0; i < self.grad.data.size(); ++i) ga.data[i] += c * self.grad.data[i];
    });
  }

  Var exp(Var a) {
    TensorT<F> out = val(check(a));
    for (F& v : out.data) v = std::exp(v);
    return push(std::move(out), nullptr, nullptr, [ai = a.id](TapeT& t, Node& self) {
      auto& ga = t.grad_ref(ai);
      for (std::size_t i = 0; i < self.grad.data.size(); ++i)
        ga.data[i] += self.grad.data[i] * self.value.data[i];
    });
  }

  Var clamp(Var a, F lo, F hi) {
    require(lo <= hi, "clamp bounds are inverted");
    TensorT<F> out = val(check(a));
    for (F& v : out.data) v = v < lo ? lo : (v > hi ? hi : v);
    return push(std::move(out), nullptr, nullptr, [ai = a.id, lo, hi](TapeT& t, Node& self) {
      const auto& va = t.val(ai);
      auto& ga = t.grad_ref(ai);
      for (std::size_t i = 0; i < self.grad.data.size(); ++i)
        if (va.data[i] >= lo && va.data[i] <= hi) ga.data[i] += self.grad.data[i];
    });
  }

  Var minimum(Var a, Var b) { return extremum(a, b, /*take_min=*/true); }
  Var maximum(Var a, Var b) { return extremum(a, b, /*take_min=*/false); }

  // Row r of a 2-D tensor, as a [1, cols] tensor.
  Var row(Var a, int r) {
    const auto& va = val(check(a));
    require(r >= 0 && r < va.rows(), "row index out of range");
    const int n = va.cols();
    auto out = TensorT<F>::zeros({1, n});
    for (int j = 0; j < n; ++j) out.at(0, j) = va.at(r, j);
    return push(std::move(out), nullptr, nullptr, [ai = a.id, r](TapeT& t, Node& self) {
      auto& ga = t.grad_ref(ai);
      for (int j = 0; j < self.grad.cols(); ++j) ga.at(r, j) += self.grad.at(0, j);
    });
  }

  // Single entry of a row vector, as a [1, 1] tensor.
  Var pick(Var a, int col) {
    const auto& va = val(check(a));
    require(va.rows() == 1, "pick expects a row vector");
    require(col >= 0 && col < va.cols(), "pick index out of range");
    auto out = TensorT<F>::from({1, 1}, {va.at(0, col)});
    return push(std::move(out), nullptr, nullptr, [ai = a.id, col](TapeT& t, Node& self) {
      t.grad_ref(ai).at(0, col) += self.grad.at(0, 0);
    });
  }

  // Gathers table rows by id; duplicate ids accumulate gradient.
  Var embedding_rows(Var table, std::vector<int> ids) {
    const auto& vt = val(check(table));
    const int n = static_cast<int>(ids.size()), d = vt.cols();
    require(n >= 1, "embedding_rows requires at least one id");
    for (int id : ids) require(id >= 0 && id < vt.rows(), "embedding id out of range");
    auto out = TensorT<F>::zeros({n, d});
    for (int r = 0; r < n; ++r)
      for (int j = 0; j < d; ++j) out.at(r, j) = vt.at(ids[static_cast<std::size_t>(r)], j);
    return push(std::move(out), nullptr, nullptr,
                [ti = table.id, ids = std::move(ids)](TapeT& t, Node& self) {
                  auto& gt = t.grad_ref(ti);
                  for (int r = 0; r < self.grad.rows(); ++r)
                    for (int j = 0; j < self.grad.cols(); ++j)
                      gt.at(ids[static_cast<std::size_t>(r)], j) += self.grad.at(r, j);
                });
  }

  // Row-wise softmax restricted to visible entries; masked entries are
  // exactly zero in the output. Rows with nothing visible are a contract
  // violation (cannot happen under a causal mask, which includes self).
  //
  // Backward never needs the mask: masked outputs are 0 and every gradient
  // term carries a factor of the output.
  Var masked_softmax_rows(Var scores, const std::vector<std::uint8_t>& mask) {
    const auto& vs = val(check(scores));
    const int n = vs.rows(), m = vs.cols();
    require(static_cast<int>(mask.size()) == n * m, "mask size does not match scores");
    auto out = TensorT<F>::zeros({n, m});
    for (int i = 0; i < n; ++i) {
      F max_v = -std::numeric_limits<F>::infinity();
      for (int j = 0; j < m; ++j)
        if (mask[static_cast<std::size_t>(i) * m + j] && vs.at(i, j) > max_v) max_v = vs.at(i, j);
      require(max_v > -std::numeric_limits<F>::infinity(),
              "softmax row has no visible entries");
      F denom = F(0);
      for (int j = 0; j < m; ++j)
        if (mask[static_cast<std::size_t>(i) * m + j]) {
          out.at(i, j) = std::exp(vs.at(i, j) - max_v);
          denom += out.at(i, j);
        }
      for (int j = 0; j < m; ++j) out.at(i, j) /= denom;
    }
    return push(std::move(out), nullptr, nullptr, [si = scores.id](TapeT& t, Node& self) {
      auto& gs = t.grad_ref(si);
      const int n = self.grad.rows(), m = self.grad.cols();
      for (int i = 0; i < n; ++i) {
        F dot = F(0);
        for (int j = 0; j < m; ++j) dot += self.grad.at(i, j) * self.value.at(i, j);
        for (int j = 0; j < m; ++j)
          gs.at(i, j) += self.value.at(i, j) * (self.grad.at(i, j) - dot);
      }
    });
  }

  // Log-softmax of a [1, n] row, numerically shifted by the row max.
  Var log_softmax_row(Var a) {
    const auto& va = val(check(a));
    require(va.rows() == 1, "log_softmax_row expects a row vector");
    TensorT<F> out = va;
    F max_v = out.data[0];
    for (F v : out.data) max_v = v > max_v ? v : max_v;
    F denom = F(0);
    for (F v : out.data) denom += std::exp(v - max_v);
    const F lse = max_v + std::log(denom);
    for (F& v : out.data) v -= lse;
    return push(std::move(out), nullptr, nullptr, [ai = a.id](TapeT& t, Node& self) {
      auto& ga = t.grad_ref(ai);
      F total = F(0);
      for (F d : self.grad.data) total += d;
      for (std::size_t j = 0; j < self.grad.data.size(); ++j)
        ga.data[j] += self.grad.data[j] - std::exp(self.value.data[j]) * total;
    });
  }

  Var sum(Var a) {
    const auto& va = val(check(a));
    F acc = F(0);
    for (F v : va.data) acc += v;
    return push(TensorT<F>::from({1, 1}, {acc}), nullptr, nullptr,
                [ai = a.id](TapeT& t, Node& self) {
                  auto& ga = t.grad_ref(ai);
                  const F d = self.grad.at(0, 0);
                  for (F& g : ga.data) g += d;
                });
  }

  Var mean(Var a) {
    const int n = val(check(a)).numel();
    return scale(sum(a), F(1) / static_cast<F>(n));
  }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. Every gradient
  // sink touched by the forward pass receives its accumulated gradient.
  void backward(Var loss) {
    require(val(check(loss)).numel() == 1, "backward requires a scalar loss");
    grad_ref(loss.id).fill(F(1));
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.grad.data.empty()) continue;  // nothing flowed here
      if (n.backprop) n.backprop(*this, n);
      if (n.grad_sink)
        for (std::size_t j = 0; j < n.grad.data.size(); ++j)
          n.grad_sink->data[j] += n.grad.data[j];
    }
  }

 private:
  struct Node {
    TensorT<F> value;                       // owned (computed and constant nodes)
    const TensorT<F>* external = nullptr;   // borrowed (parameters)
    TensorT<F>* grad_sink = nullptr;
    TensorT<F> grad;                        // allocated on first contribution
    std::function<void(TapeT&, Node&)> backprop;
  };

  Var push(TensorT<F> value, const TensorT<F>* external, TensorT<F>* grad_sink,
           std::function<void(TapeT&, Node&)> backprop) {
    Node n;
    n.value = std::move(value);
    n.external = external;
    n.grad_sink = grad_sink;
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  int check(Var v) const {
    require(v.id >= 0 && v.id < static_cast<int>(nodes_.size()), "variable not on this tape");
    return v.id;
  }

  const TensorT<F>& val(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.external ? *n.external : n.value;
  }

  TensorT<F>& grad_ref(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.data.empty()) n.grad = TensorT<F>::zeros(val(id).shape);
    return n.grad;
  }

  Var elementwise(Var a, Var b, bool subtract) {
    const auto& va = val(check(a));
    const auto& vb = val(check(b));
    require(va.same_shape(vb), "elementwise op requires matching shapes: " + shape_string(va) +
                                   " vs " + shape_string(vb));
    TensorT<F> out = va;
    for (std::size_t i = 0; i < out.data.size(); ++i)
      out.data[i] = subtract ? out.data[i] - vb.data[i] : out.data[i] + vb.data[i];
    return push(std::move(out), nullptr, nullptr,
                [ai = a.id, bi = b.id, subtract](TapeT& t, Node& self) {
                  auto& ga = t.grad_ref(ai);
                  auto& gb = t.grad_ref(bi);
                  for (std::size_t i = 0; i < self.grad.data.size(); ++i) {
                    ga.data[i] += self.grad.data[i];
                    gb.data[i] += subtract ? -self.grad.data[i] : self.grad.data[i];
                  }
                });
  }

  Var extremum(Var a, Var b, bool take_min) {
    const auto& va = val(check(a));
    const auto& vb = val(check(b));
    require(va.same_shape(vb), "extremum requires matching shapes");
    TensorT<F> out = va;
    for (std::size_t i = 0; i < out.data.size(); ++i)
      out.data[i] = take_min ? std::min(va.data[i], vb.data[i]) : std::max(va.data[i], vb.data[i]);
    return push(std::move(out), nullptr, nullptr,
                [ai = a.id, bi = b.id, take_min](TapeT& t, Node& self) {
                  const auto& va = t.val(ai);
                  const auto& vb = t.val(bi);
                  auto& ga = t.grad_ref(ai);
                  auto& gb = t.grad_ref(bi);
                  for (std::size_t i = 0; i < self.grad.data.size(); ++i) {
                    // Ties route to the first argument.
                    const bool from_a = take_min ? va.data[i] <= vb.data[i] : va.data[i] >= vb.data[i];
                    (from_a ? ga : gb).data[i] += self.grad.data[i];
                  }
                });
  }

  std::vector<Node> nodes_;
};

using Tape = TapeT<float>;

}  // namespace sortrl
