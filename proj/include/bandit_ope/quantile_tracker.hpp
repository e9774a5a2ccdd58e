#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>

#include <ext/pb_ds/assoc_container.hpp>
#include <ext/pb_ds/tree_policy.hpp>

#include "bandit_ope/errors.hpp"

namespace bandit_ope {

// Multiset of nonnegative extended reals with nearest-rank quantile queries.
//
// quantile(q) returns sorted[floor(q * (n - 1))] of the ascending order, with
// +inf entries sorting last. Backed by an order-statistics red-black tree so
// both insert and query are O(log n); ties are kept distinct by an insertion
// sequence number.
class QuantileTracker {
 public:
  explicit QuantileTracker(double level = 0.0) : level_(level) {
    if (!(level >= 0.0 && level <= 1.0)) throw InvalidArgument("quantile level must lie in [0, 1]");
  }

  void insert(double value) {
    if (std::isnan(value) || value < 0.0) throw InvalidArgument("tracker accepts nonnegative values only");
    tree_.insert({value, next_seq_++});
  }

  std::size_t size() const noexcept { return tree_.size(); }
  bool empty() const noexcept { return tree_.empty(); }
  double level() const noexcept { return level_; }

  double quantile() const { return quantile(level_); }

  double quantile(double q) const {
    if (tree_.empty()) throw InvalidArgument("quantile query on an empty tracker");
    if (!(q >= 0.0 && q <= 1.0)) throw InvalidArgument("quantile level must lie in [0, 1]");
    const auto n = tree_.size();
    auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(n - 1)));
    if (idx >= n) idx = n - 1;
    return tree_.find_by_order(idx)->first;
  }

  double min() const { return quantile(0.0); }
  double max() const { return quantile(1.0); }

 private:
  using Key = std::pair<double, std::uint64_t>;
  using Tree = __gnu_pbds::tree<Key, __gnu_pbds::null_type, std::less<Key>, __gnu_pbds::rb_tree_tag,
                                __gnu_pbds::tree_order_statistics_node_update>;

  double level_;
  Tree tree_;
  std::uint64_t next_seq_ = 0;
};

}  // namespace bandit_ope
