#pragma once

// Exact computations on enumerable tiny worlds, used as ground truth for the
// evaluators: stationary and trajectory values, the bias mass of a capped
// rejection step, the finite-sample bias and deviation bounds, the
// progressive-validation mixture policy, and exhaustive checks of the per-event
// DR estimate's mean, range and second moment.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "bandit_ope/core.hpp"
#include "bandit_ope/datagen.hpp"
#include "bandit_ope/evaluators.hpp"
#include "bandit_ope/policies.hpp"

namespace bandit_ope {

inline constexpr double kEnumerationBudget = 1e6;

// sum_x D(x) sum_a dist(x)[a] P(r=1|x,a)
inline double exact_stationary_value(const TinyWorld& world,
                                     const std::function<ActionDistribution(std::size_t)>& dist_fn) {
  double v = 0.0;
  for (int x = 0; x < world.num_contexts(); ++x) {
    if (world.context_probs[x] == 0.0) continue;
    const auto dist = dist_fn(static_cast<std::size_t>(x));
    double inner = 0.0;
    for (int a = 0; a < dist.size(); ++a) inner += dist[a] * world.reward_probs[x][a];
    v += world.context_probs[x] * inner;
  }
  return v;
}

inline double exact_stationary_value(const TinyWorld& world, const Policy& policy, HistoryView history = {}) {
  return exact_stationary_value(
      world, [&](std::size_t x) { return policy.distribution(TinyWorld::context(x), history); });
}

namespace detail {

inline double trajectory_value(const TinyWorld& world, const Policy& policy, const TargetHistory& history,
                               std::size_t remaining) {
  if (remaining == 0) return 0.0;
  double total = 0.0;
  for (int x = 0; x < world.num_contexts(); ++x) {
    const double px = world.context_probs[x];
    if (px == 0.0) continue;
    const Context ctx = TinyWorld::context(static_cast<std::size_t>(x));
    const auto dist = policy.distribution(ctx, history.view());
    for (int a = 0; a < dist.size(); ++a) {
      if (dist[a] == 0.0) continue;
      const double p1 = world.reward_probs[x][a];
      for (int r = 0; r <= 1; ++r) {
        const double pr = r ? p1 : 1.0 - p1;
        if (pr == 0.0) continue;
        TargetHistory next = history;
        next.append({ctx, a, static_cast<double>(r)});
        total += px * dist[a] * pr * (r + trajectory_value(world, policy, next, remaining - 1));
      }
    }
  }
  return total;
}

}  // namespace detail

// E_pi[sum_{t=1}^T r_t] by enumerating every (x, a, r) sequence.
inline double exact_trajectory_value(const TinyWorld& world, const Policy& policy, std::size_t horizon,
                                     double budget = kEnumerationBudget) {
  const double branching = static_cast<double>(world.num_contexts()) * world.num_actions() * 2.0;
  if (std::pow(branching, static_cast<double>(horizon)) > budget) {
    throw BudgetExceeded("trajectory enumeration needs more than " + std::to_string(budget) + " branches");
  }
  return detail::trajectory_value(world, policy, TargetHistory{}, horizon);
}

// Bias mass of one capped rejection step:
//   P_{(x,a)~pi}[E] - P_{(x,a)~mu}[E] / c,   E = {(x, a) : c pi(a|x) > mu(a|x)}.
inline double bias_mass(std::span<const ActionDistribution> pi, std::span<const ActionDistribution> mu,
                        std::span<const double> context_probs, double c) {
  if (!(c > 0.0)) throw InvalidArgument("cap must be positive");
  double mass = 0.0;
  for (std::size_t x = 0; x < context_probs.size(); ++x) {
    for (int a = 0; a < pi[x].size(); ++a) {
      if (c * pi[x][a] > mu[x][a]) mass += context_probs[x] * (pi[x][a] - mu[x][a] / c);
    }
  }
  return std::max(0.0, mass);
}

inline double bias_mass(const TinyWorld& world, const Policy& policy, HistoryView history, double c) {
  std::vector<ActionDistribution> pi;
  for (int x = 0; x < world.num_contexts(); ++x) {
    pi.push_back(policy.distribution(TinyWorld::context(static_cast<std::size_t>(x)), history));
  }
  return bias_mass(pi, world.logging, world.context_probs, c);
}

// T(T+1)/2 * eps/(1 - eps)
inline double theorem1_bound(std::size_t blocks, double eps) {
  if (blocks < 1) throw InvalidArgument("need at least one block");
  if (!(eps >= 0.0 && eps < 1.0)) throw InvalidArgument("bias mass must lie in [0, 1)");
  const double t = static_cast<double>(blocks);
  return t * (t + 1.0) / 2.0 * eps / (1.0 - eps);
}

// (n c_max / C) * 2 max{(1+M) ln(2/delta)/n, sqrt((3+M) ln(2/delta)/n)}
inline double theorem2_bound(std::size_t n, double max_ratio, double c_max, double weight, double delta) {
  if (n < 1) throw InvalidArgument("need at least one sample");
  if (!(max_ratio > 0.0) || !(c_max > 0.0) || !(weight > 0.0)) throw InvalidArgument("M, c_max and C must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("delta must lie in (0, 1)");
  const double nn = static_cast<double>(n);
  const double log_term = std::log(2.0 / delta);
  const double linear = (1.0 + max_ratio) * log_term / nn;
  const double root = std::sqrt((3.0 + max_ratio) * log_term / nn);
  return nn * c_max / weight * 2.0 * std::max(linear, root);
}

// Largest pi/mu seen in the trace. A lower bound on the true supremum.
inline double estimate_M(const RunTrace& trace) {
  if (trace.records.empty()) throw NoDataError("empty trace");
  double m = 0.0;
  for (const auto& r : trace.records) {
    if (std::isfinite(r.ratio) && r.ratio > 0.0) m = std::max(m, 1.0 / r.ratio);
  }
  return m;
}

// max over (x, a) of pi(a|x, h) / mu(a|x) for one history.
inline double state_sup_ratio(const TinyWorld& world, const Policy& policy, HistoryView history) {
  double m = 0.0;
  for (int x = 0; x < world.num_contexts(); ++x) {
    if (world.context_probs[x] == 0.0) continue;
    const auto dist = policy.distribution(TinyWorld::context(static_cast<std::size_t>(x)), history);
    for (int a = 0; a < dist.size(); ++a) m = std::max(m, dist[a] / world.logging[x][a]);
  }
  return m;
}

// Exact sup of pi/mu over all histories of length <= max_length reachable under pi.
inline double exact_sup_ratio(const TinyWorld& world, const Policy& policy, std::size_t max_length,
                              double budget = kEnumerationBudget) {
  const double branching = static_cast<double>(world.num_contexts()) * world.num_actions() * 2.0;
  double nodes = 0.0;
  for (std::size_t l = 0; l <= max_length; ++l) nodes += std::pow(branching, static_cast<double>(l));
  if (nodes > budget) throw BudgetExceeded("history enumeration over budget");

  double best = 0.0;
  std::function<void(TargetHistory&, std::size_t)> walk = [&](TargetHistory& h, std::size_t depth) {
    best = std::max(best, state_sup_ratio(world, policy, h.view()));
    if (depth == max_length) return;
    for (int x = 0; x < world.num_contexts(); ++x) {
      if (world.context_probs[x] == 0.0) continue;
      const Context ctx = TinyWorld::context(static_cast<std::size_t>(x));
      const auto dist = policy.distribution(ctx, h.view());
      for (int a = 0; a < dist.size(); ++a) {
        if (dist[a] == 0.0) continue;
        for (int r = 0; r <= 1; ++r) {
          const double pr = r ? world.reward_probs[x][a] : 1.0 - world.reward_probs[x][a];
          if (pr == 0.0) continue;
          TargetHistory next = h;
          next.append({ctx, a, static_cast<double>(r)});
          walk(next, depth + 1);
        }
      }
    }
  };
  TargetHistory root;
  walk(root, 0);
  return best;
}

// Stationary mixture sum_t (c_t |B(t)| / C) pi(.|x, h_{t-1}) over the completed
// blocks of a run. The trailing partial block (events after the last
// acceptance) is excluded unless requested, in which case it enters with
// history h_T and weight c_{T+1} * (#trailing) / C.
class PVPolicy final : public Policy {
 public:
  using Policy::distribution;
  struct Component {
    double weight;
    std::size_t history_length;
  };

  PVPolicy(const Policy& policy, std::shared_ptr<const TargetHistory> history, std::vector<Component> components,
           double trailing_mass)
      : policy_(&policy), history_(std::move(history)), components_(std::move(components)), trailing_mass_(trailing_mass) {}

  ActionDistribution distribution(const Context& x, HistoryView) const override {
    std::vector<double> p(static_cast<std::size_t>(policy_->num_actions()), 0.0);
    for (const auto& c : components_) {
      const auto d = policy_->distribution(x, history_->prefix(c.history_length));
      for (int a = 0; a < d.size(); ++a) p[a] += c.weight * d[a];
    }
    return ActionDistribution(std::move(p));
  }

  int num_actions() const noexcept override { return policy_->num_actions(); }

  const std::vector<Component>& components() const noexcept { return components_; }
  // Share of C carried by events after the last acceptance.
  double trailing_mass() const noexcept { return trailing_mass_; }

 private:
  const Policy* policy_;
  std::shared_ptr<const TargetHistory> history_;
  std::vector<Component> components_;
  double trailing_mass_;
};

inline PVPolicy pv_policy(const RunTrace& trace, const TargetHistory& history, const Policy& policy,
                          bool include_trailing = false) {
  const auto sizes = trace.block_sizes();
  const auto caps = trace.block_caps();
  if (sizes.empty()) throw NoDataError("progressive validation needs at least one completed block");
  if (history.size() < sizes.size()) throw InvalidArgument("history shorter than the trace's block count");

  double completed = 0.0;
  for (std::size_t t = 0; t < sizes.size(); ++t) completed += caps[t] * static_cast<double>(sizes[t]);
  double trailing = 0.0;
  for (auto it = trace.records.rbegin(); it != trace.records.rend() && !it->accepted; ++it) trailing += it->cap;
  const double total = completed + trailing;
  const double norm = include_trailing ? total : completed;

  std::vector<PVPolicy::Component> comps;
  for (std::size_t t = 0; t < sizes.size(); ++t) comps.push_back({caps[t] * static_cast<double>(sizes[t]) / norm, t});
  if (include_trailing && trailing > 0.0) comps.push_back({trailing / norm, sizes.size()});
  return PVPolicy(policy, std::make_shared<const TargetHistory>(history), std::move(comps), trailing / total);
}

// --- per-event estimate checks ---------------------------------------------

struct LemmaReport {
  std::size_t states = 0;
  double max_mean_error = 0.0;           // max |E[R_k] - E_{pi_t}[r]|
  double min_range_margin = kInf();      // min (1 + M) - max |R_k|
  double min_second_moment_margin = kInf();  // min (3 + M) - E[R_k^2]
  std::size_t range_violations = 0;
  std::size_t second_moment_violations = 0;
  std::size_t mean_violations = 0;
  double max_M = 0.0;

  bool passed() const noexcept { return mean_violations == 0 && range_violations == 0 && second_moment_violations == 0; }

  static constexpr double kInf() { return std::numeric_limits<double>::infinity(); }

  nlohmann::json to_json() const {
    return {{"states", states},
            {"max_mean_error", max_mean_error},
            {"min_range_margin", min_range_margin},
            {"min_second_moment_margin", min_second_moment_margin},
            {"mean_violations", mean_violations},
            {"range_violations", range_violations},
            {"second_moment_violations", second_moment_violations},
            {"max_M", max_M},
            {"passed", passed()}};
  }
};

struct StateMoments {
  double mean = 0.0;          // E[R_k] under mu
  double target_value = 0.0;  // E_{pi_t}[r]
  double second_moment = 0.0;
  double max_abs = 0.0;       // over realizable (x, a, r)
  double sup_ratio = 0.0;     // M for this state
};

// Enumerates every (x, a, r) under D(x) mu(a|x) D(r|x,a) for a fixed target
// history; R_k does not depend on the cap.
inline StateMoments enumerate_state(const TinyWorld& world, const Policy& policy, const RewardEstimator& rhat,
                                    HistoryView history) {
  StateMoments s;
  s.target_value = exact_stationary_value(world, policy, history);
  s.sup_ratio = state_sup_ratio(world, policy, history);
  for (int x = 0; x < world.num_contexts(); ++x) {
    const double px = world.context_probs[x];
    if (px == 0.0) continue;
    const Context ctx = TinyWorld::context(static_cast<std::size_t>(x));
    const auto dist = policy.distribution(ctx, history);
    for (int a = 0; a < world.num_actions(); ++a) {
      const double mu = world.logging[x][a];
      for (int r = 0; r <= 1; ++r) {
        const double pr = r ? world.reward_probs[x][a] : 1.0 - world.reward_probs[x][a];
        if (pr == 0.0) continue;
        const ExplorationEvent e{ctx, a, static_cast<double>(r), mu};
        const double rk = dr_term(e, dist, rhat);
        const double w = px * mu * pr;
        s.mean += w * rk;
        s.second_moment += w * rk * rk;
        s.max_abs = std::max(s.max_abs, std::abs(rk));
      }
    }
  }
  return s;
}

inline LemmaReport verify_lemmas(const TinyWorld& world, const Policy& policy, const RewardEstimator& rhat,
                                 std::span<const TargetHistory> states, double mean_tolerance = 1e-10) {
  LemmaReport rep;
  auto check = [&](HistoryView h) {
    const auto s = enumerate_state(world, policy, rhat, h);
    ++rep.states;
    const double err = std::abs(s.mean - s.target_value);
    rep.max_mean_error = std::max(rep.max_mean_error, err);
    if (err > mean_tolerance) ++rep.mean_violations;
    const double range_margin = 1.0 + s.sup_ratio - s.max_abs;
    const double moment_margin = 3.0 + s.sup_ratio - s.second_moment;
    rep.min_range_margin = std::min(rep.min_range_margin, range_margin);
    rep.min_second_moment_margin = std::min(rep.min_second_moment_margin, moment_margin);
    if (range_margin < -1e-12) ++rep.range_violations;
    if (moment_margin < -1e-12) ++rep.second_moment_violations;
    rep.max_M = std::max(rep.max_M, s.sup_ratio);
  };
  if (states.empty()) check(HistoryView{});
  for (const auto& h : states) check(h.view());
  return rep;
}

// Target histories visited by one DR-ns run on a world log: h_0, h_1, ...
inline std::vector<TargetHistory> visited_states(const TinyWorld& world, const Policy& policy,
                                                 const RewardEstimator& rhat, double q, double c_max, std::size_t n,
                                                 std::uint64_t seed) {
  const auto log = sample_world_log(world, n, derive_seed(seed, "log"));
  const auto res = drns_evaluate(log, policy, rhat, q, c_max, derive_seed(seed, "accept"), true);
  std::vector<TargetHistory> out;
  for (std::size_t t = 0; t <= res.history->size(); ++t) {
    TargetHistory h;
    for (std::size_t i = 0; i < t; ++i) h.append((*res.history)[i]);
    out.push_back(std::move(h));
  }
  return out;
}

// --- Monte Carlo experiments against exact values --------------------------

struct BiasReport {
  double empirical_eps = 0.0;  // max bias mass over visited states
  double mean_eps = 0.0;
  double bound = 0.0;
  double exact_value = 0.0;    // E_pi[sum_{t<=T} r_t]
  double mean_estimate = 0.0;  // mean of sum_{t<=T} c_t R_B(t)
  double measured_bias = 0.0;  // signed
  double standard_error = 0.0;
  std::size_t blocks = 0;
  std::size_t runs = 0;
  std::size_t failed_runs = 0;

  bool inconclusive() const noexcept { return failed_runs * 100 > runs; }
  bool within_bound() const noexcept { return std::abs(measured_bias) <= bound + 3.0 * standard_error; }

  nlohmann::json to_json() const {
    return {{"empirical_eps", empirical_eps},
            {"mean_eps", mean_eps},
            {"theorem1_bound", bound},
            {"exact_value", exact_value},
            {"mean_estimate", mean_estimate},
            {"measured_bias", measured_bias},
            {"standard_error", standard_error},
            {"blocks", blocks},
            {"runs", runs},
            {"failed_runs", failed_runs},
            {"inconclusive", inconclusive()},
            {"within_bound", within_bound()},
            {"caveat", "eps is the largest bias mass over visited states, a lower bound on the uniform eps"}};
  }
};

// Runs DR-ns on fresh world logs until T blocks complete (at most max_events
// each) and compares the mean unnormalized sum_{t<=T} c_t R_B(t) with the
// exact T-step value of the policy.
inline BiasReport bias_experiment(const TinyWorld& world, const Policy& policy, const RewardEstimator& rhat, double q,
                                  double c_max, std::size_t blocks, std::size_t runs, std::uint64_t seed,
                                  std::size_t max_events = 100000) {
  if (runs < 1) throw InvalidArgument("need at least one run");
  BiasReport rep;
  rep.blocks = blocks;
  rep.runs = runs;
  rep.exact_value = exact_trajectory_value(world, policy, blocks);

  double sum = 0.0, sum_sq = 0.0, eps_sum = 0.0;
  std::size_t eps_count = 0, done = 0;
  for (std::size_t run = 0; run < runs; ++run) {
    const std::uint64_t run_seed = seed + run;
    CounterRng log_rng(derive_seed(run_seed, "log"));
    const std::uint64_t accept_seed = derive_seed(run_seed, "accept");
    DrnsEvaluator ev(policy, rhat, q, c_max);
    auto record_eps = [&] {
      const double e = bias_mass(world, policy, ev.history().view(), ev.cap());
      rep.empirical_eps = std::max(rep.empirical_eps, e);
      eps_sum += e;
      ++eps_count;
    };
    record_eps();
    std::size_t k = 0;
    while (ev.accepted_count() < blocks && k < max_events) {
      ++k;
      const auto rec = ev.step(sample_world_event(world, log_rng), acceptance_draw(accept_seed, k));
      if (rec.accepted && ev.accepted_count() < blocks) record_eps();
    }
    if (ev.accepted_count() < blocks) {
      ++rep.failed_runs;
      continue;
    }
    sum += ev.numerator();
    sum_sq += ev.numerator() * ev.numerator();
    ++done;
  }
  rep.mean_eps = eps_count ? eps_sum / static_cast<double>(eps_count) : 0.0;
  if (done > 0) {
    const double n = static_cast<double>(done);
    rep.mean_estimate = sum / n;
    const double var = done > 1 ? std::max(0.0, (sum_sq - n * rep.mean_estimate * rep.mean_estimate) / (n - 1.0)) : 0.0;
    rep.standard_error = std::sqrt(var / n);
  }
  rep.measured_bias = rep.mean_estimate - rep.exact_value;
  rep.bound = theorem1_bound(blocks, std::min(rep.empirical_eps, std::nextafter(1.0, 0.0)));
  return rep;
}

// One DR-ns run on an n-event world log, compared with its own progressive
// validation policy. "truncated" uses only the completed blocks; "full" keeps
// the trailing partial block, as the returned R/C does.
struct PVRun {
  double estimate_full = 0.0;
  double pv_value_full = 0.0;
  double estimate_truncated = 0.0;
  double pv_value_truncated = 0.0;
  std::size_t n_full = 0;
  std::size_t n_truncated = 0;
  double weight_full = 0.0;
  double weight_truncated = 0.0;
  std::size_t blocks = 0;
};

inline PVRun pv_run(const TinyWorld& world, const Policy& policy, const RewardEstimator& rhat, double q, double c_max,
                    std::size_t n, std::uint64_t run_seed) {
  const auto log = sample_world_log(world, n, derive_seed(run_seed, "log"));
  const auto res = drns_evaluate(log, policy, rhat, q, c_max, derive_seed(run_seed, "accept"), true);
  PVRun out;
  out.estimate_full = res.estimate;
  out.n_full = res.events_used;
  out.weight_full = res.weight;
  out.blocks = res.completed_blocks;
  if (res.completed_blocks == 0) return out;

  const auto& recs = res.trace->records;
  const std::size_t last = res.trace->acceptance_indices().back();
  double num = 0.0, w = 0.0;
  for (std::size_t i = 0; i < last; ++i) {
    num += recs[i].cap * recs[i].estimate;
    w += recs[i].cap;
  }
  out.estimate_truncated = num / w;
  out.weight_truncated = w;
  out.n_truncated = last;
  out.pv_value_truncated = exact_stationary_value(world, pv_policy(*res.trace, *res.history, policy, false));
  out.pv_value_full = exact_stationary_value(world, pv_policy(*res.trace, *res.history, policy, true));
  return out;
}

struct CoverageReport {
  std::size_t runs = 0;
  std::size_t skipped = 0;  // runs with no completed block
  std::size_t covered_truncated = 0;
  std::size_t covered_full = 0;
  double delta = 0.05;
  double M = 0.0;
  double mean_bound = 0.0;

  double rate_truncated() const { return runs > skipped ? static_cast<double>(covered_truncated) / (runs - skipped) : 0.0; }
  double rate_full() const { return runs > skipped ? static_cast<double>(covered_full) / (runs - skipped) : 0.0; }
  // 1 - delta less a 3-sigma binomial allowance.
  double required_rate() const {
    const double p = 1.0 - delta;
    return p - 3.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(std::max<std::size_t>(runs - skipped, 1)));
  }
  bool passed() const { return rate_truncated() >= required_rate(); }

  nlohmann::json to_json() const {
    return {{"runs", runs},
            {"skipped", skipped},
            {"delta", delta},
            {"M", M},
            {"mean_bound", mean_bound},
            {"coverage_truncated", rate_truncated()},
            {"coverage_full", rate_full()},
            {"required", required_rate()},
            {"passed", passed()}};
  }
};

inline CoverageReport coverage_experiment(const TinyWorld& world, const Policy& policy, const RewardEstimator& rhat,
                                          double q, double c_max, std::size_t n, double max_ratio, std::size_t runs,
                                          std::uint64_t seed, double delta = 0.05) {
  CoverageReport rep;
  rep.runs = runs;
  rep.delta = delta;
  rep.M = max_ratio;
  double bound_sum = 0.0;
  for (std::size_t r = 0; r < runs; ++r) {
    const auto run = pv_run(world, policy, rhat, q, c_max, n, seed + r);
    if (run.blocks == 0) {
      ++rep.skipped;
      continue;
    }
    const double bt = theorem2_bound(run.n_truncated, max_ratio, c_max, run.weight_truncated, delta);
    const double bf = theorem2_bound(run.n_full, max_ratio, c_max, run.weight_full, delta);
    bound_sum += bt;
    if (std::abs(run.estimate_truncated - run.pv_value_truncated) <= bt) ++rep.covered_truncated;
    if (std::abs(run.estimate_full - run.pv_value_full) <= bf) ++rep.covered_full;
  }
  rep.mean_bound = runs > rep.skipped ? bound_sum / static_cast<double>(runs - rep.skipped) : 0.0;
  return rep;
}

}  // namespace bandit_ope
