#pragma once

// Offline evaluators: DR-ns with quantile-adapted acceptance caps, its
// constant-cap variant (WC), plain rejection-sampling replay (RS), and the
// stationary direct-method / IPS / doubly-robust baselines.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "bandit_ope/core.hpp"
#include "bandit_ope/quantile_tracker.hpp"
#include "bandit_ope/rng.hpp"

namespace bandit_ope {

// u_k for event k (1-based) of a run seeded with `seed`.
inline double acceptance_draw(std::uint64_t seed, std::size_t k) noexcept {
  return CounterRng::uniform_at(seed, k - 1);
}

// Doubly robust per-event estimate using the target's full action distribution:
//   sum_a' pi(a'|x) r̂(x, a') + pi(a|x) / p * (r - r̂(x, a)).
// The correction term is exactly zero when pi(a|x) = 0.
inline double dr_term(const ExplorationEvent& event, const ActionDistribution& dist, const RewardEstimator& rhat) {
  double model_term = 0.0;
  for (int a = 0; a < dist.size(); ++a) {
    if (dist[a] != 0.0) model_term += dist[a] * rhat.estimate(event.context, a);
  }
  const double pi_a = dist[event.action];
  if (pi_a == 0.0) return model_term;
  return model_term + pi_a / event.propensity * (event.reward - rhat.estimate(event.context, event.action));
}

struct TraceRecord {
  std::size_t index = 0;  // k, 1-based
  std::size_t block = 0;  // tau(k)
  double cap = 0.0;       // c_t in force while processing k
  double estimate = 0.0;  // R_k
  double ratio = 0.0;     // p_k / pi(a_k | x_k, h_{t-1}); +inf when pi = 0
  bool accepted = false;
  double uniform = 0.0;   // u_k
};

class RunTrace {
 public:
  std::vector<TraceRecord> records;

  // kappa(1..T): 1-based event indices of the acceptances.
  std::vector<std::size_t> acceptance_indices() const {
    std::vector<std::size_t> out;
    for (const auto& r : records) {
      if (r.accepted) out.push_back(r.index);
    }
    return out;
  }

  std::size_t completed_blocks() const noexcept {
    std::size_t n = 0;
    for (const auto& r : records) n += r.accepted ? 1 : 0;
    return n;
  }

  // |B(1)|, ..., |B(T)| for the completed blocks only.
  std::vector<std::size_t> block_sizes() const {
    std::vector<std::size_t> out;
    std::size_t prev = 0;
    for (std::size_t k : acceptance_indices()) {
      out.push_back(k - prev);
      prev = k;
    }
    return out;
  }

  // c_t for each completed block.
  std::vector<double> block_caps() const {
    std::vector<double> out;
    for (const auto& r : records) {
      if (r.accepted) out.push_back(r.cap);
    }
    return out;
  }

  // Events after the last acceptance.
  std::size_t trailing_events() const noexcept {
    std::size_t n = 0;
    for (auto it = records.rbegin(); it != records.rend() && !it->accepted; ++it) ++n;
    return n;
  }
};

struct EvalResult {
  double estimate = 0.0;
  std::size_t accepted_count = 0;
  std::size_t completed_blocks = 0;
  std::size_t events_used = 0;
  double numerator = 0.0;  // R
  double weight = 0.0;     // C
  std::optional<RunTrace> trace;
  std::optional<TargetHistory> history;
};

// Sequential DR-ns state machine. One instance is one run; feed events in
// order with their uniform draws.
class DrnsEvaluator {
 public:
  enum class CapRule { kQuantile, kConstant };

  DrnsEvaluator(const Policy& policy, const RewardEstimator& rhat, double q, double c_max, bool record_trace = false)
      : DrnsEvaluator(policy, rhat, q, c_max, CapRule::kQuantile, record_trace) {}

  // WC: cap fixed at c for the whole run. The tracker is still filled.
  static DrnsEvaluator constant_cap(const Policy& policy, const RewardEstimator& rhat, double c,
                                    bool record_trace = false) {
    return DrnsEvaluator(policy, rhat, 0.0, c, CapRule::kConstant, record_trace);
  }

  TraceRecord step(const ExplorationEvent& event, double u) {
    const ActionDistribution dist = policy_->distribution(event.context, history_.view());
    const double pi_a = dist[event.action];

    TraceRecord rec;
    rec.index = ++events_;
    rec.block = history_.size() + 1;
    rec.cap = cap_;
    rec.estimate = dr_term(event, dist, *rhat_);
    rec.uniform = u;

    numerator_ += cap_ * rec.estimate;
    weight_ += cap_;

    rec.ratio = pi_a > 0.0 ? event.propensity / pi_a : std::numeric_limits<double>::infinity();
    tracker_.insert(rec.ratio);

    rec.accepted = pi_a > 0.0 && u <= cap_ * pi_a / event.propensity;
    if (rec.accepted) {
      history_.append({event.context, event.action, event.reward});
      if (rule_ == CapRule::kQuantile) cap_ = std::min(c_max_, tracker_.quantile());
    }
    if (trace_) trace_->records.push_back(rec);
    return rec;
  }

  // Begins a new trajectory from an empty history. The observed ratios and
  // the current cap carry over.
  void start_trajectory() {
    history_ = TargetHistory{};
    numerator_ = 0.0;
    weight_ = 0.0;
  }

  std::size_t block_index() const noexcept { return history_.size() + 1; }
  double cap() const noexcept { return cap_; }
  double c_max() const noexcept { return c_max_; }
  double numerator() const noexcept { return numerator_; }
  double weight() const noexcept { return weight_; }
  std::size_t events_processed() const noexcept { return events_; }
  std::size_t accepted_count() const noexcept { return history_.size(); }
  const TargetHistory& history() const noexcept { return history_; }
  const QuantileTracker& tracker() const noexcept { return tracker_; }

  EvalResult result() const {
    if (events_ == 0) throw NoDataError("DR-ns processed no events");
    EvalResult r;
    r.estimate = numerator_ / weight_;
    r.accepted_count = history_.size();
    r.completed_blocks = history_.size();
    r.events_used = events_;
    r.numerator = numerator_;
    r.weight = weight_;
    if (trace_) {
      r.trace = *trace_;
      r.history = history_;
    }
    return r;
  }

 private:
  DrnsEvaluator(const Policy& policy, const RewardEstimator& rhat, double q, double c_max, CapRule rule,
                bool record_trace)
      : policy_(&policy), rhat_(&rhat), rule_(rule), c_max_(c_max), cap_(c_max), tracker_(q) {
    if (!(c_max > 0.0 && c_max <= 1.0)) throw InvalidArgument("cap must lie in (0, 1]");
    if (record_trace) trace_.emplace();
  }

  const Policy* policy_;
  const RewardEstimator* rhat_;
  CapRule rule_;
  double c_max_;
  double cap_;
  QuantileTracker tracker_;
  TargetHistory history_;
  double numerator_ = 0.0;
  double weight_ = 0.0;
  std::size_t events_ = 0;
  std::optional<RunTrace> trace_;
};

inline EvalResult drns_evaluate(std::span<const ExplorationEvent> events, const Policy& policy,
                                const RewardEstimator& rhat, double q, double c_max, std::uint64_t seed,
                                bool record_trace = false) {
  if (events.empty()) throw NoDataError("no exploration events");
  DrnsEvaluator ev(policy, rhat, q, c_max, record_trace);
  for (std::size_t k = 0; k < events.size(); ++k) ev.step(events[k], acceptance_draw(seed, k + 1));
  return ev.result();
}

inline EvalResult wc_evaluate(std::span<const ExplorationEvent> events, const Policy& policy,
                              const RewardEstimator& rhat, double c, std::uint64_t seed, bool record_trace = false) {
  if (events.empty()) throw NoDataError("no exploration events");
  auto ev = DrnsEvaluator::constant_cap(policy, rhat, c, record_trace);
  for (std::size_t k = 0; k < events.size(); ++k) ev.step(events[k], acceptance_draw(seed, k + 1));
  return ev.result();
}

inline double min_propensity(std::span<const ExplorationEvent> events) {
  if (events.empty()) throw NoDataError("no exploration events");
  double m = events.front().propensity;
  for (const auto& e : events) m = std::min(m, e.propensity);
  return m;
}

// Rejection-sampling replay: accept event k with probability c * pi / p and
// average the observed rewards of accepted events.
class RejectionSampler {
 public:
  RejectionSampler(const Policy& policy, double c, bool record_trace = false) : policy_(&policy), c_(c) {
    if (!(c > 0.0 && c <= 1.0)) throw InvalidArgument("rejection constant must lie in (0, 1]");
    if (record_trace) trace_.emplace();
  }

  TraceRecord step(const ExplorationEvent& event, double u) {
    const ActionDistribution dist = policy_->distribution(event.context, history_.view());
    const double pi_a = dist[event.action];
    TraceRecord rec;
    rec.index = ++events_;
    rec.block = history_.size() + 1;
    rec.cap = c_;
    rec.ratio = pi_a > 0.0 ? event.propensity / pi_a : std::numeric_limits<double>::infinity();
    rec.uniform = u;
    rec.accepted = pi_a > 0.0 && u <= c_ * pi_a / event.propensity;
    if (rec.accepted) {
      rec.estimate = event.reward;
      reward_sum_ += event.reward;
      history_.append({event.context, event.action, event.reward});
    }
    if (trace_) trace_->records.push_back(rec);
    return rec;
  }

  void start_trajectory() {
    history_ = TargetHistory{};
    reward_sum_ = 0.0;
  }

  std::size_t accepted_count() const noexcept { return history_.size(); }
  std::size_t events_processed() const noexcept { return events_; }
  double reward_sum() const noexcept { return reward_sum_; }
  const TargetHistory& history() const noexcept { return history_; }

  EvalResult result() const {
    if (events_ == 0) throw NoDataError("rejection sampling processed no events");
    if (history_.empty()) throw NoAcceptedSamples("rejection sampling accepted no events");
    EvalResult r;
    r.accepted_count = history_.size();
    r.completed_blocks = history_.size();
    r.events_used = events_;
    r.numerator = reward_sum_;
    r.weight = static_cast<double>(history_.size());
    r.estimate = reward_sum_ / r.weight;
    if (trace_) {
      r.trace = *trace_;
      r.history = history_;
    }
    return r;
  }

 private:
  const Policy* policy_;
  double c_;
  TargetHistory history_;
  double reward_sum_ = 0.0;
  std::size_t events_ = 0;
  std::optional<RunTrace> trace_;
};

inline EvalResult rs_evaluate(std::span<const ExplorationEvent> events, const Policy& policy, double c,
                              std::uint64_t seed, bool record_trace = false) {
  if (events.empty()) throw NoDataError("no exploration events");
  RejectionSampler rs(policy, c, record_trace);
  for (std::size_t k = 0; k < events.size(); ++k) rs.step(events[k], acceptance_draw(seed, k + 1));
  return rs.result();
}

// Stationary baselines: the policy is queried with the empty history.

inline double dm_evaluate(std::span<const ExplorationEvent> events, const Policy& policy,
                          const RewardEstimator& rhat) {
  if (events.empty()) throw NoDataError("no exploration events");
  double sum = 0.0;
  for (const auto& e : events) {
    const auto dist = policy.distribution(e.context);
    double v = 0.0;
    for (int a = 0; a < dist.size(); ++a) {
      if (dist[a] != 0.0) v += dist[a] * rhat.estimate(e.context, a);
    }
    sum += v;
  }
  return sum / static_cast<double>(events.size());
}

inline double ips_evaluate(std::span<const ExplorationEvent> events, const Policy& policy) {
  if (events.empty()) throw NoDataError("no exploration events");
  double sum = 0.0;
  for (const auto& e : events) {
    const auto dist = policy.distribution(e.context);
    const double pi_a = dist[e.action];
    if (pi_a != 0.0) sum += pi_a / e.propensity * e.reward;
  }
  return sum / static_cast<double>(events.size());
}

inline double dr_evaluate(std::span<const ExplorationEvent> events, const Policy& policy,
                          const RewardEstimator& rhat) {
  if (events.empty()) throw NoDataError("no exploration events");
  double sum = 0.0;
  for (const auto& e : events) sum += dr_term(e, policy.distribution(e.context), rhat);
  return sum / static_cast<double>(events.size());
}

}  // namespace bandit_ope
