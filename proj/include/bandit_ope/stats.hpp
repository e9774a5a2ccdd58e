#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "bandit_ope/errors.hpp"
#include "bandit_ope/rng.hpp"

namespace bandit_ope {

struct SummaryRow {
  std::size_t count = 0;
  double mean = 0.0;
  double rmse = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double bias = 0.0;   // |mean - truth|
  double stdev = 0.0;  // sample standard deviation (n - 1)
};

// Linear interpolation between order statistics (R type 7).
inline double percentile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw NoDataError("percentile of an empty sample");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

// rmse, bias and stdev of a set of estimates against a known truth, with a
// 95% percentile-bootstrap interval for the rmse (resampling squared errors,
// square-rooting the endpoints).
inline SummaryRow summarize(std::span<const double> estimates, double truth, std::uint64_t seed,
                            std::size_t resamples = 10000) {
  const std::size_t n = estimates.size();
  if (n < 2) throw NoDataError("summary statistics need at least two estimates");
  SummaryRow row;
  row.count = n;
  const double nn = static_cast<double>(n);

  double sum = 0.0;
  for (double e : estimates) sum += e;
  row.mean = sum / nn;
  row.bias = std::abs(row.mean - truth);

  std::vector<double> sq(n);
  double sse = 0.0, ss_dev = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sq[i] = (estimates[i] - truth) * (estimates[i] - truth);
    sse += sq[i];
    ss_dev += (estimates[i] - row.mean) * (estimates[i] - row.mean);
  }
  row.rmse = std::sqrt(sse / nn);
  row.stdev = std::sqrt(ss_dev / (nn - 1.0));

  CounterRng rng(seed);
  std::vector<double> boot(resamples);
  for (auto& b : boot) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += sq[rng.uniform_index(n)];
    b = s / nn;
  }
  std::sort(boot.begin(), boot.end());
  row.ci_lo = std::sqrt(percentile_sorted(boot, 0.025));
  row.ci_hi = std::sqrt(percentile_sorted(boot, 0.975));
  return row;
}

// Rounds to `digits` significant digits.
inline double round_significant(double v, int digits = 6) {
  if (v == 0.0 || !std::isfinite(v)) return v;
  const double scale = std::pow(10.0, digits - 1 - static_cast<int>(std::floor(std::log10(std::abs(v)))));
  return std::round(v * scale) / scale;
}

}  // namespace bandit_ope
