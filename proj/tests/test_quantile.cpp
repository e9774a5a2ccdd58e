#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "bandit_ope/quantile_tracker.hpp"
#include "bandit_ope/rng.hpp"

using bandit_ope::CounterRng;
using bandit_ope::QuantileTracker;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

// Nearest-rank reference on a sorted copy.
double reference_quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  return v[static_cast<std::size_t>(std::floor(q * static_cast<double>(v.size() - 1)))];
}
}  // namespace

TEST(QuantileTracker, Singleton) {
  QuantileTracker t(0.0);
  t.insert(0.5);
  EXPECT_EQ(t.quantile(), 0.5);
}

TEST(QuantileTracker, NearestRankMedian) {
  QuantileTracker t(0.5);
  for (double v : {3.0, 1.0, 4.0, 2.0}) t.insert(v);
  EXPECT_EQ(t.quantile(), 2.0);
}

TEST(QuantileTracker, InfinitySortsLast) {
  QuantileTracker t(1.0);
  t.insert(kInf);
  t.insert(0.2);
  EXPECT_EQ(t.quantile(), kInf);
  EXPECT_EQ(t.quantile(0.0), 0.2);
}

TEST(QuantileTracker, KeepsDuplicates) {
  QuantileTracker t;
  for (int i = 0; i < 5; ++i) t.insert(1.0);
  t.insert(2.0);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.quantile(0.8), 1.0);
  EXPECT_EQ(t.max(), 2.0);
}

TEST(QuantileTracker, RejectsBadInput) {
  EXPECT_THROW(QuantileTracker(1.5), bandit_ope::InvalidArgument);
  QuantileTracker t;
  EXPECT_THROW(t.quantile(), bandit_ope::InvalidArgument);
  EXPECT_THROW(t.insert(-1.0), bandit_ope::InvalidArgument);
  EXPECT_THROW(t.insert(std::nan("")), bandit_ope::InvalidArgument);
}

TEST(QuantileTracker, MatchesSortedReferenceUnderStreaming) {
  CounterRng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    QuantileTracker t;
    std::vector<double> seen;
    const int n = 1 + static_cast<int>(rng.uniform_index(300));
    for (int i = 0; i < n; ++i) {
      // Coarse values force ties.
      const double v = rng.uniform() < 0.05 ? kInf : std::floor(rng.uniform() * 20.0) / 4.0;
      t.insert(v);
      seen.push_back(v);
      for (double q : {0.0, 0.01, 0.05, 0.1, 0.5, 0.9, 1.0}) {
        ASSERT_EQ(t.quantile(q), reference_quantile(seen, q)) << "n=" << seen.size() << " q=" << q;
      }
    }
  }
}
