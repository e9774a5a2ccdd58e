#pragma once

// Domain types shared by every module: contexts, logged exploration events,
// target-policy histories, action distributions and the Policy /
// RewardEstimator interfaces.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bandit_ope/errors.hpp"
#include "bandit_ope/rng.hpp"

namespace bandit_ope {

struct Feature {
  std::uint32_t id = 0;
  double value = 0.0;

  friend bool operator==(const Feature&, const Feature&) = default;
};

// Sparse feature vector, sorted by id with unique ids. Dense vectors are
// stored through the same representation.
class SparseVector {
 public:
  SparseVector() = default;

  // Duplicate ids are summed.
  explicit SparseVector(std::vector<Feature> features) : features_(std::move(features)) {
    std::stable_sort(features_.begin(), features_.end(),
                     [](const Feature& a, const Feature& b) { return a.id < b.id; });
    std::size_t out = 0;
    for (std::size_t i = 0; i < features_.size(); ++i) {
      if (out > 0 && features_[out - 1].id == features_[i].id) {
        features_[out - 1].value += features_[i].value;
      } else {
        features_[out++] = features_[i];
      }
    }
    features_.resize(out);
  }

  static SparseVector dense(std::span<const double> values) {
    std::vector<Feature> f;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i] != 0.0) f.push_back({static_cast<std::uint32_t>(i), values[i]});
    }
    return SparseVector(std::move(f));
  }

  static SparseVector one_hot(std::uint32_t id, double value = 1.0) {
    return SparseVector(std::vector<Feature>{{id, value}});
  }

  std::span<const Feature> features() const noexcept { return features_; }
  std::size_t nnz() const noexcept { return features_.size(); }
  bool empty() const noexcept { return features_.empty(); }

  // Ids at or beyond weights.size() contribute nothing.
  double dot(std::span<const double> weights) const noexcept {
    double s = 0.0;
    for (const auto& f : features_) {
      if (f.id < weights.size()) s += weights[f.id] * f.value;
    }
    return s;
  }

  double squared_norm() const noexcept {
    double s = 0.0;
    for (const auto& f : features_) s += f.value * f.value;
    return s;
  }

  // One past the largest id, i.e. the dense dimension needed to hold it.
  std::uint32_t dimension() const noexcept { return features_.empty() ? 0 : features_.back().id + 1; }

  std::uint64_t hash() const noexcept {
    std::uint64_t h = 0x243f6a8885a308d3ULL;
    for (const auto& f : features_) {
      h = mix64(h ^ f.id);
      h = mix64(h ^ std::bit_cast<std::uint64_t>(f.value));
    }
    return h;
  }

  friend bool operator==(const SparseVector&, const SparseVector&) = default;

 private:
  std::vector<Feature> features_;
};

using Context = SparseVector;

// One logged tuple (x_k, a_k, r_k, p_k).
struct ExplorationEvent {
  Context context;
  int action = 0;
  double reward = 0.0;
  double propensity = 1.0;

  friend bool operator==(const ExplorationEvent&, const ExplorationEvent&) = default;
};

inline void validate_event(const ExplorationEvent& e, int num_actions = -1) {
  if (!(e.propensity > 0.0) || e.propensity > 1.0) {
    throw InvalidArgument("propensity must lie in (0, 1], got " + std::to_string(e.propensity));
  }
  if (!(e.reward >= 0.0 && e.reward <= 1.0)) {
    throw InvalidArgument("reward must lie in [0, 1], got " + std::to_string(e.reward));
  }
  if (e.action < 0 || (num_actions > 0 && e.action >= num_actions)) {
    throw InvalidArgument("action " + std::to_string(e.action) + " out of range");
  }
}

struct HistoryEntry {
  Context context;
  int action = 0;
  double reward = 0.0;

  std::uint64_t hash() const noexcept {
    std::uint64_t h = mix64(context.hash() ^ static_cast<std::uint64_t>(action));
    return mix64(h ^ std::bit_cast<std::uint64_t>(reward));
  }
};

inline constexpr std::uint64_t kEmptyHistoryFingerprint = 0x13198a2e03707344ULL;

// Non-owning view of a history prefix h_t. The fingerprint identifies the
// prefix content so policies can cache per-history state safely.
class HistoryView {
 public:
  HistoryView() = default;
  HistoryView(std::span<const HistoryEntry> entries, std::span<const std::uint64_t> prefix_hashes)
      : entries_(entries), prefix_hashes_(prefix_hashes) {}

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const HistoryEntry& operator[](std::size_t i) const { return entries_[i]; }
  std::span<const HistoryEntry> entries() const noexcept { return entries_; }

  std::uint64_t fingerprint() const noexcept {
    return prefix_hashes_.empty() ? kEmptyHistoryFingerprint : prefix_hashes_.back();
  }

  HistoryView prefix(std::size_t m) const {
    m = std::min(m, entries_.size());
    return {entries_.first(m), prefix_hashes_.first(m)};
  }

 private:
  std::span<const HistoryEntry> entries_;
  std::span<const std::uint64_t> prefix_hashes_;
};

// Append-only target history h_t.
class TargetHistory {
 public:
  void append(HistoryEntry entry) {
    const std::uint64_t prev = prefix_hashes_.empty() ? kEmptyHistoryFingerprint : prefix_hashes_.back();
    prefix_hashes_.push_back(mix64(prev ^ entry.hash()));
    entries_.push_back(std::move(entry));
  }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const HistoryEntry& operator[](std::size_t i) const { return entries_[i]; }

  HistoryView view() const noexcept { return {entries_, prefix_hashes_}; }
  HistoryView prefix(std::size_t m) const { return view().prefix(m); }

 private:
  std::vector<HistoryEntry> entries_;
  std::vector<std::uint64_t> prefix_hashes_;
};

// pi(.|x, h): nonnegative, sums to one.
class ActionDistribution {
 public:
  static constexpr double kSumTolerance = 1e-9;

  ActionDistribution() = default;
  explicit ActionDistribution(std::vector<double> probs) : probs_(std::move(probs)) {}

  static ActionDistribution uniform(int num_actions) {
    if (num_actions < 1) throw InvalidArgument("uniform distribution needs at least one action");
    return ActionDistribution(std::vector<double>(num_actions, 1.0 / num_actions));
  }

  static ActionDistribution point_mass(int num_actions, int action) {
    std::vector<double> p(num_actions, 0.0);
    p.at(action) = 1.0;
    return ActionDistribution(std::move(p));
  }

  int size() const noexcept { return static_cast<int>(probs_.size()); }
  double operator[](int a) const { return probs_[static_cast<std::size_t>(a)]; }
  std::span<const double> probs() const noexcept { return probs_; }

  bool is_valid() const noexcept {
    if (probs_.empty()) return false;
    double s = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0)) return false;
      s += p;
    }
    return std::abs(s - 1.0) <= kSumTolerance;
  }

  void validate() const {
    if (!is_valid()) throw InvalidArgument("action distribution is not a probability vector");
  }

  // Inverse-CDF sampling from a uniform draw in [0, 1).
  int sample(double u) const noexcept {
    double acc = 0.0;
    for (int a = 0; a < size(); ++a) {
      acc += probs_[a];
      if (u < acc) return a;
    }
    for (int a = size() - 1; a >= 0; --a) {
      if (probs_[a] > 0.0) return a;
    }
    return 0;
  }

  friend bool operator==(const ActionDistribution&, const ActionDistribution&) = default;

 private:
  std::vector<double> probs_;
};

// A (possibly nonstationary) target or logging policy. Implementations must be
// pure in (context, history) and safe for concurrent const calls.
class Policy {
 public:
  virtual ~Policy() = default;

  virtual ActionDistribution distribution(const Context& x, HistoryView history) const = 0;
  virtual int num_actions() const noexcept = 0;
  virtual bool is_stationary() const noexcept { return true; }

  ActionDistribution distribution(const Context& x) const { return distribution(x, HistoryView{}); }
};

// r̂(x, a) in [0, 1], fixed before evaluation starts.
class RewardEstimator {
 public:
  virtual ~RewardEstimator() = default;
  virtual double estimate(const Context& x, int action) const = 0;
};

class ConstantEstimator final : public RewardEstimator {
 public:
  explicit ConstantEstimator(double value) : value_(value) {
    if (!(value >= 0.0 && value <= 1.0)) {
      throw InvalidArgument("constant reward estimate must lie in [0, 1]");
    }
  }

  double estimate(const Context&, int) const override { return value_; }
  double value() const noexcept { return value_; }

 private:
  double value_;
};

inline ConstantEstimator constant_estimator(double value) { return ConstantEstimator(value); }

inline double clip_unit(double v) noexcept { return std::clamp(v, 0.0, 1.0); }

}  // namespace bandit_ope
