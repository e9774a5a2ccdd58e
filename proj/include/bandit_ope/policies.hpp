#pragma once

#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

#include "bandit_ope/core.hpp"
#include "bandit_ope/logistic.hpp"

namespace bandit_ope {

class UniformPolicy final : public Policy {
 public:
  using Policy::distribution;
  explicit UniformPolicy(int num_actions) : dist_(ActionDistribution::uniform(num_actions)) {}

  ActionDistribution distribution(const Context&, HistoryView) const override { return dist_; }
  int num_actions() const noexcept override { return dist_.size(); }

 private:
  ActionDistribution dist_;
};

inline UniformPolicy uniform_policy(int num_actions) { return UniformPolicy(num_actions); }

// With probability 1 - eps play argmax of the model, otherwise a uniform
// action (which may also be the argmax).
inline ActionDistribution eps_greedy_distribution(int num_actions, int best, double eps) {
  std::vector<double> p(static_cast<std::size_t>(num_actions), eps / num_actions);
  p[static_cast<std::size_t>(best)] += 1.0 - eps;
  return ActionDistribution(std::move(p));
}

class EpsGreedyPolicy final : public Policy {
 public:
  using Policy::distribution;
  EpsGreedyPolicy(std::shared_ptr<const LinearModel> model, double eps) : model_(std::move(model)), eps_(eps) {
    if (!model_) throw InvalidArgument("eps-greedy policy needs a model");
    if (!(eps >= 0.0 && eps <= 1.0)) throw InvalidArgument("eps must lie in [0, 1]");
  }

  ActionDistribution distribution(const Context& x, HistoryView) const override {
    return eps_greedy_distribution(model_->num_classes(), model_->argmax(x), eps_);
  }
  int num_actions() const noexcept override { return model_->num_classes(); }

  const LinearModel& model() const noexcept { return *model_; }
  double eps() const noexcept { return eps_; }

 private:
  std::shared_ptr<const LinearModel> model_;
  double eps_;
};

inline EpsGreedyPolicy eps_greedy_policy(LinearModel model, double eps) {
  return EpsGreedyPolicy(std::make_shared<const LinearModel>(std::move(model)), eps);
}

// r̂(x, a) read off the per-class logistic probabilities.
class ModelRewardEstimator final : public RewardEstimator {
 public:
  explicit ModelRewardEstimator(std::shared_ptr<const LinearModel> model) : model_(std::move(model)) {
    if (!model_) throw InvalidArgument("reward estimator needs a model");
  }

  double estimate(const Context& x, int action) const override { return clip_unit(sigmoid(model_->score(x, action))); }

  const LinearModel& model() const noexcept { return *model_; }

 private:
  std::shared_ptr<const LinearModel> model_;
};

// The retraining policy: eps-greedy over a one-vs-all model trained on a fixed
// fully labeled seed set plus the target history converted to partial
// examples. The model depends on the first floor(min(|h|, horizon)/period) *
// period history entries only, so it is retrained once per period and frozen
// after the horizon.
class AdaptivePolicy final : public Policy {
 public:
  using Policy::distribution;
  AdaptivePolicy(std::shared_ptr<const std::vector<LabeledExample>> seed_examples, int num_actions, int period,
                 int horizon, double eps, LearnerConfig config = {})
      : seed_(std::move(seed_examples)),
        num_actions_(num_actions),
        period_(period),
        horizon_(horizon),
        eps_(eps),
        config_(config) {
    if (!seed_ || seed_->empty()) throw InvalidArgument("adaptive policy needs seed examples");
    if (period < 1) throw InvalidArgument("period must be at least 1");
    if (horizon < period) throw InvalidArgument("horizon must be at least the period");
    if (!(eps >= 0.0 && eps <= 1.0)) throw InvalidArgument("eps must lie in [0, 1]");
  }

  ActionDistribution distribution(const Context& x, HistoryView history) const override {
    const auto model = model_for(history);
    return eps_greedy_distribution(num_actions_, model->argmax(x), eps_);
  }

  int num_actions() const noexcept override { return num_actions_; }
  bool is_stationary() const noexcept override { return false; }

  std::size_t training_prefix(std::size_t history_length) const noexcept {
    const auto m = std::min<std::size_t>(history_length, static_cast<std::size_t>(horizon_));
    return m / static_cast<std::size_t>(period_) * static_cast<std::size_t>(period_);
  }

  std::shared_ptr<const LinearModel> model_for(HistoryView history) const {
    const HistoryView used = history.prefix(training_prefix(history.size()));
    const Key key{used.size(), used.fingerprint()};
    {
      std::lock_guard lock(mutex_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    std::shared_ptr<const LinearModel> previous;
    if (config_.warm_iterations > 0 && used.size() > 0) {
      previous = model_for(used.prefix(used.size() - static_cast<std::size_t>(period_)));
    }
    std::vector<PartialExample> partial;
    partial.reserve(used.size());
    for (const auto& e : used.entries()) partial.push_back({e.context, e.action, e.reward, 1.0});
    auto model = std::make_shared<const LinearModel>(
        train_logistic_ova(*seed_, num_actions_, config_, partial, previous.get()));

    std::lock_guard lock(mutex_);
    auto [it, inserted] = cache_.emplace(key, model);
    if (inserted) {
      order_.push_back(key);
      if (order_.size() > kCacheCapacity) {
        cache_.erase(order_.front());
        order_.pop_front();
      }
    }
    return it->second;
  }

  int period() const noexcept { return period_; }
  int horizon() const noexcept { return horizon_; }
  double eps() const noexcept { return eps_; }

 private:
  using Key = std::pair<std::size_t, std::uint64_t>;
  static constexpr std::size_t kCacheCapacity = 128;

  std::shared_ptr<const std::vector<LabeledExample>> seed_;
  int num_actions_;
  int period_;
  int horizon_;
  double eps_;
  LearnerConfig config_;

  mutable std::mutex mutex_;
  mutable std::map<Key, std::shared_ptr<const LinearModel>> cache_;
  mutable std::deque<Key> order_;
};

// Policies over enumerable worlds whose contexts are one-hot ids.

inline std::size_t context_index(const Context& x) {
  if (x.empty()) throw InvalidArgument("tabular policies need a one-hot context");
  return x.features().front().id;
}

class TablePolicy final : public Policy {
 public:
  using Policy::distribution;
  explicit TablePolicy(std::vector<ActionDistribution> table) : table_(std::move(table)) {
    if (table_.empty()) throw InvalidArgument("empty policy table");
    for (const auto& d : table_) {
      d.validate();
      if (d.size() != table_.front().size()) throw InvalidArgument("ragged policy table");
    }
  }

  ActionDistribution distribution(const Context& x, HistoryView) const override { return table_.at(context_index(x)); }
  int num_actions() const noexcept override { return table_.front().size(); }

  const std::vector<ActionDistribution>& table() const noexcept { return table_; }

 private:
  std::vector<ActionDistribution> table_;
};

// Nonstationary tabular learner: (1 - eta) * base(x) + eta * point mass on the
// action with the best smoothed success rate (s + 1) / (n + 2) for context x
// in the history. Ties go to the lowest index.
class GreedyTablePolicy final : public Policy {
 public:
  using Policy::distribution;
  GreedyTablePolicy(std::vector<ActionDistribution> base, double eta) : base_(std::move(base)), eta_(eta) {
    if (!(eta >= 0.0 && eta <= 1.0)) throw InvalidArgument("eta must lie in [0, 1]");
  }

  ActionDistribution distribution(const Context& x, HistoryView history) const override {
    const std::size_t ctx = context_index(x);
    const auto& base = base_.table().at(ctx);
    const int k = base.size();
    std::vector<double> wins(k, 0.0), trials(k, 0.0);
    for (const auto& e : history.entries()) {
      if (context_index(e.context) != ctx) continue;
      trials[e.action] += 1.0;
      wins[e.action] += e.reward;
    }
    int best = 0;
    double best_rate = -1.0;
    for (int a = 0; a < k; ++a) {
      const double rate = (wins[a] + 1.0) / (trials[a] + 2.0);
      if (rate > best_rate) {
        best = a;
        best_rate = rate;
      }
    }
    std::vector<double> p(k);
    for (int a = 0; a < k; ++a) p[a] = (1.0 - eta_) * base[a] + (a == best ? eta_ : 0.0);
    return ActionDistribution(std::move(p));
  }

  int num_actions() const noexcept override { return base_.num_actions(); }
  bool is_stationary() const noexcept override { return eta_ == 0.0; }

  // Largest probability any history can assign to (x, a).
  double max_probability(std::size_t ctx, int a) const { return (1.0 - eta_) * base_.table().at(ctx)[a] + eta_; }

  const TablePolicy& base() const noexcept { return base_; }
  double eta() const noexcept { return eta_; }

 private:
  TablePolicy base_;
  double eta_;
};

// r̂ given as an explicit |X| x K table over one-hot contexts.
class TableEstimator final : public RewardEstimator {
 public:
  explicit TableEstimator(std::vector<std::vector<double>> table) : table_(std::move(table)) {
    for (auto& row : table_) {
      for (double& v : row) v = clip_unit(v);
    }
  }

  double estimate(const Context& x, int action) const override { return table_.at(context_index(x)).at(action); }

 private:
  std::vector<std::vector<double>> table_;
};

}  // namespace bandit_ope
