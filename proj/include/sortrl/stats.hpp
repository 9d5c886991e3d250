#pragma once

#include <cmath>
#include <span>

#include "sortrl/error.hpp"

namespace sortrl {

inline double mean(std::span<const double> xs) {
  require(!xs.empty(), "mean of empty sample");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

// Sample (n-1) standard deviation.
inline double sample_std(std::span<const double> xs) {
  require(xs.size() >= 2, "sample std needs at least two points");
  const double m = mean(xs);
  double sq = 0.0;
  for (double x : xs) sq += (x - m) * (x - m);
  return std::sqrt(sq / static_cast<double>(xs.size() - 1));
}

// Half-width of the normal-approximation 95% confidence interval for the
// mean: 1.96 * s / sqrt(n).
inline double ci95_halfwidth(std::span<const double> xs) {
  return 1.96 * sample_std(xs) / std::sqrt(static_cast<double>(xs.size()));
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  long long n = 0;
};

// Ordinary least squares of y on x; r2 = 1 - SS_res / SS_tot. A degenerate
// x (all equal) is a contract violation; a degenerate y reports r2 = 1 when
// residuals vanish, else 0.
inline LinearFit least_squares(std::span<const double> xs, std::span<const double> ys) {
  require(xs.size() == ys.size(), "x/y size mismatch");
  require(xs.size() >= 2, "least squares needs at least two points");
  const double mx = mean(xs), my = mean(ys);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  require(sxx > 0.0, "least squares needs variation in x");
  LinearFit fit;
  fit.n = static_cast<long long>(xs.size());
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double pred = fit.intercept + fit.slope * xs[i];
    ss_res += (ys[i] - pred) * (ys[i] - pred);
    ss_tot += (ys[i] - my) * (ys[i] - my);
  }
  fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  return fit;
}

}  // namespace sortrl
