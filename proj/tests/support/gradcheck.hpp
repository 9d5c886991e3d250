#pragma once

// Central-difference gradient checking against the tape.
//
// Comparison rule (shared with the acceptance gate): an element passes if
// the relative error |fd - analytic| / max(|fd|, |analytic|) is within tol
// when max(|fd|, |analytic|) exceeds abs_floor, and if |fd - analytic| is
// within abs_floor otherwise. The floor keeps float32 finite-difference
// noise from dominating near-zero gradients.

#include <cmath>
#include <cstddef>
#include <vector>

#include "sortrl/tensor.hpp"

namespace gradcheck {

struct Result {
  double max_err = 0.0;      // worst relative error above the floor
  long long checked = 0;     // elements compared
  long long failed = 0;      // elements beyond tol
};

template <class F, class LossFn>
Result compare(std::vector<sortrl::TensorT<F>*> params, std::vector<sortrl::TensorT<F>*> grads,
               LossFn&& loss, F h, double tol, double abs_floor) {
  Result result;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& p = *params[t];
    const auto& g = *grads[t];
    for (std::size_t j = 0; j < p.data.size(); ++j) {
      const F original = p.data[j];
      p.data[j] = original + h;
      const double up = static_cast<double>(loss());
      p.data[j] = original - h;
      const double down = static_cast<double>(loss());
      p.data[j] = original;
      const double fd = (up - down) / (2.0 * static_cast<double>(h));
      const double an = static_cast<double>(g.data[j]);
      const double scale = std::max(std::abs(fd), std::abs(an));
      ++result.checked;
      if (scale > abs_floor) {
        const double err = std::abs(fd - an) / scale;
        result.max_err = std::max(result.max_err, err);
        if (err > tol) ++result.failed;
      } else if (std::abs(fd - an) > abs_floor) {
        ++result.failed;
      }
    }
  }
  return result;
}

}  // namespace gradcheck
