#pragma once

// Experiment orchestration: the static and adaptive supervised-to-bandit
// protocols, per-trial evaluator runs, trial statistics, and report output.
// Trials are independent (trial i uses seed base + i) and run on a small
// work pool; results are merged in trial order so any thread count yields
// the same report.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "bandit_ope/core.hpp"
#include "bandit_ope/datagen.hpp"
#include "bandit_ope/evaluators.hpp"
#include "bandit_ope/logistic.hpp"
#include "bandit_ope/policies.hpp"
#include "bandit_ope/stats.hpp"

namespace bandit_ope {

// --- work pool -------------------------------------------------------------

inline std::size_t threads_from_env() {
  if (const char* env = std::getenv("BANDIT_OPE_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::logic_error&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Calls fn(i) for i in [0, n) on up to `threads` workers. The first exception
// thrown by any call is rethrown after all workers stop.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n && !stop; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        stop = true;
      }
    }
  };
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  pool.clear();
  if (error) std::rethrow_exception(error);
}

// --- configuration ---------------------------------------------------------

enum class EvaluatorKind { kDM, kIPS, kDR, kRS, kWC, kDRns };

struct EvaluatorSpec {
  EvaluatorKind kind = EvaluatorKind::kDRns;
  double q = 0.0;
  double c_max = 1.0;
  std::optional<double> c;  // WC / RS constant; default is the minimum logged propensity

  std::string name() const {
    switch (kind) {
      case EvaluatorKind::kDM: return "DM";
      case EvaluatorKind::kIPS: return "IPS";
      case EvaluatorKind::kDR: return "DR";
      case EvaluatorKind::kRS: return "RS";
      case EvaluatorKind::kWC: return "WC";
      case EvaluatorKind::kDRns: {
        std::ostringstream s;
        s << "DR-ns(q=" << q;
        if (c_max != 1.0) s << ",cmax=" << c_max;
        s << ")";
        return s.str();
      }
    }
    return "?";
  }

  bool uses_reward_model() const noexcept {
    return kind == EvaluatorKind::kDM || kind == EvaluatorKind::kDR || kind == EvaluatorKind::kWC ||
           kind == EvaluatorKind::kDRns;
  }

  static EvaluatorSpec from_json(const nlohmann::json& j) {
    EvaluatorSpec s;
    std::string type = j.at("type").get<std::string>();
    std::transform(type.begin(), type.end(), type.begin(), [](unsigned char c) { return std::tolower(c); });
    if (type == "dm") s.kind = EvaluatorKind::kDM;
    else if (type == "ips") s.kind = EvaluatorKind::kIPS;
    else if (type == "dr") s.kind = EvaluatorKind::kDR;
    else if (type == "rs") s.kind = EvaluatorKind::kRS;
    else if (type == "wc") s.kind = EvaluatorKind::kWC;
    else if (type == "drns" || type == "dr-ns") s.kind = EvaluatorKind::kDRns;
    else throw ConfigError("unknown evaluator type '" + type + "'");
    s.q = j.value("q", 0.0);
    s.c_max = j.value("c_max", 1.0);
    if (j.contains("c")) s.c = j.at("c").get<double>();
    if (!(s.q >= 0.0 && s.q <= 1.0)) throw ConfigError("q must lie in [0, 1]");
    if (!(s.c_max > 0.0 && s.c_max <= 1.0)) throw ConfigError("c_max must lie in (0, 1]");
    return s;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = {{"name", name()}};
    if (kind == EvaluatorKind::kDRns) {
      j["q"] = q;
      j["c_max"] = c_max;
    }
    if (c) j["c"] = *c;
    return j;
  }
};

enum class Task { kStatic, kAdaptive };

struct ExperimentConfig {
  Task task = Task::kStatic;
  std::uint64_t base_seed = 1;
  std::size_t trials = 50;

  // Dataset: an svmlight file, or the synthetic generator when path is empty.
  std::string dataset_path;
  int num_classes = 4;
  SyntheticSpec synthetic;
  bool synthetic_seed_explicit = false;

  // Static: train-pi0 and evaluation fractions. Adaptive: evaluation and
  // ground-truth fractions after removing the fixed seed set.
  std::vector<double> splits{0.10, 0.50};
  std::size_t seed_size = 400;
  int period = 15;
  int horizon = 300;
  std::size_t simulations = 2000;

  double eps = 0.1;
  LearnerConfig learner;
  std::vector<EvaluatorSpec> evaluators;
  std::size_t bootstrap_resamples = 10000;
  std::string output;

  static ExperimentConfig from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    const std::string task = j.value("task", std::string("static"));
    if (task == "static") c.task = Task::kStatic;
    else if (task == "adaptive") c.task = Task::kAdaptive;
    else throw ConfigError("unknown task '" + task + "'");
    c.base_seed = j.value("seed", std::uint64_t{1});
    c.trials = j.value("trials", std::size_t{50});
    if (c.trials < 2) throw ConfigError("an experiment needs at least two trials");

    if (c.task == Task::kAdaptive) c.splits = {0.80, 0.19};
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      c.dataset_path = d.value("path", std::string());
      c.num_classes = d.value("classes", 4);
      if (d.contains("synthetic")) {
        const auto& s = d.at("synthetic");
        c.synthetic.size = s.value("size", c.synthetic.size);
        c.synthetic.num_classes = s.value("classes", c.num_classes);
        c.num_classes = c.synthetic.num_classes;
        c.synthetic.dimension = s.value("dimension", c.synthetic.dimension);
        c.synthetic.active_features = s.value("active_features", c.synthetic.active_features);
        c.synthetic.noise = s.value("noise", c.synthetic.noise);
        c.synthetic.second_label_margin = s.value("second_label_margin", c.synthetic.second_label_margin);
        if (s.contains("seed")) {
          c.synthetic.seed = s.at("seed").get<std::uint64_t>();
          c.synthetic_seed_explicit = true;
        }
      }
    }
    if (j.contains("splits")) c.splits = j.at("splits").get<std::vector<double>>();
    if (c.splits.size() != 2) throw ConfigError("splits must list exactly two fractions");
    if (j.contains("adaptive")) {
      const auto& a = j.at("adaptive");
      c.seed_size = a.value("seed_size", c.seed_size);
      c.period = a.value("period", c.period);
      c.horizon = a.value("horizon", c.horizon);
      c.simulations = a.value("simulations", c.simulations);
    }
    c.eps = j.value("eps", c.eps);
    if (j.contains("learner")) {
      c.learner.lambda = j.at("learner").value("lambda", c.learner.lambda);
      c.learner.iterations = j.at("learner").value("iterations", c.learner.iterations);
      c.learner.warm_iterations = j.at("learner").value("warm_iterations", c.learner.warm_iterations);
      if (!(c.learner.lambda > 0.0) || c.learner.iterations < 1 || c.learner.warm_iterations < 0) {
        throw ConfigError("invalid learner settings");
      }
    }
    c.bootstrap_resamples = j.value("bootstrap_resamples", c.bootstrap_resamples);
    c.output = j.value("output", std::string());
    if (!j.contains("evaluators")) throw ConfigError("config lists no evaluators");
    for (const auto& e : j.at("evaluators")) c.evaluators.push_back(EvaluatorSpec::from_json(e));
    if (c.evaluators.empty()) throw ConfigError("config lists no evaluators");
    return c;
  }
};

// --- trial table -----------------------------------------------------------

struct TrialCell {
  bool failed = false;
  std::string failure;
  double estimate = 0.0;  // estimated reward
  std::size_t accepted_count = 0;
  std::size_t events_used = 0;
  std::size_t trajectories = 0;
};

struct EvaluatorColumn {
  EvaluatorSpec spec;
  std::vector<TrialCell> cells;
  std::optional<SummaryRow> summary;  // on losses; absent when < 2 cells succeeded
  std::size_t failures = 0;
  double mean_accepted = 0.0;
};

struct TrialTable {
  Task task = Task::kStatic;
  std::uint64_t base_seed = 0;
  std::size_t trials = 0;
  double truth_value = 0.0;  // reward
  std::vector<EvaluatorColumn> columns;

  double truth_loss() const noexcept { return 1.0 - truth_value; }

  const EvaluatorColumn& column(const std::string& name) const {
    for (const auto& c : columns) {
      if (c.spec.name() == name) return c;
    }
    throw InvalidArgument("no evaluator named " + name);
  }

  nlohmann::json to_json() const {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : columns) {
      nlohmann::json trials_json = nlohmann::json::array();
      for (std::size_t i = 0; i < c.cells.size(); ++i) {
        const auto& cell = c.cells[i];
        if (cell.failed) {
          trials_json.push_back({{"trial", i}, {"failed", true}, {"reason", cell.failure},
                                 {"accepted_count", cell.accepted_count}, {"events_used", cell.events_used}});
        } else {
          trials_json.push_back({{"trial", i},
                                 {"failed", false},
                                 {"estimate", cell.estimate},
                                 {"loss", 1.0 - cell.estimate},
                                 {"accepted_count", cell.accepted_count},
                                 {"events_used", cell.events_used},
                                 {"trajectories", cell.trajectories}});
        }
      }
      nlohmann::json summary = nullptr;
      if (c.summary) {
        const auto& s = *c.summary;
        summary = {{"rmse", round_significant(s.rmse)},   {"ci_lo", round_significant(s.ci_lo)},
                   {"ci_hi", round_significant(s.ci_hi)}, {"bias", round_significant(s.bias)},
                   {"stdev", round_significant(s.stdev)}, {"mean_loss", round_significant(s.mean)},
                   {"count", s.count}};
      }
      cols.push_back({{"evaluator", c.spec.to_json()},
                      {"summary", summary},
                      {"failures", c.failures},
                      {"mean_accepted", round_significant(c.mean_accepted)},
                      {"trials", trials_json}});
    }
    return {{"task", task == Task::kStatic ? "static" : "adaptive"},
            {"seed", base_seed},
            {"trials", trials},
            {"ground_truth", {{"value", round_significant(truth_value)}, {"loss", round_significant(truth_loss())}}},
            {"evaluators", cols}};
  }

  // Aligned text summary: evaluator | rmse | ci_lo | ci_hi | bias | stdev | failures
  std::string to_text() const {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"evaluator", "rmse", "ci_lo", "ci_hi", "bias", "stdev", "failures"});
    auto fmt = [](double v) {
      std::ostringstream s;
      s << std::setprecision(6) << v;
      return s.str();
    };
    for (const auto& c : columns) {
      if (c.summary) {
        const auto& s = *c.summary;
        rows.push_back({c.spec.name(), fmt(s.rmse), fmt(s.ci_lo), fmt(s.ci_hi), fmt(s.bias), fmt(s.stdev),
                        std::to_string(c.failures)});
      } else {
        rows.push_back({c.spec.name(), "-", "-", "-", "-", "-", std::to_string(c.failures)});
      }
    }
    std::vector<std::size_t> width(rows.front().size(), 0);
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
    }
    std::ostringstream out;
    out << "ground truth loss: " << fmt(truth_loss()) << "\n";
    for (std::size_t k = 0; k < rows.size(); ++k) {
      for (std::size_t i = 0; i < rows[k].size(); ++i) {
        if (i) out << " | ";
        out << std::left << std::setw(static_cast<int>(width[i])) << rows[k][i];
      }
      out << "\n";
      if (k == 0) {
        for (std::size_t i = 0; i < width.size(); ++i) out << (i ? "-+-" : "") << std::string(width[i], '-');
        out << "\n";
      }
    }
    return out.str();
  }
};

// --- shared pieces ---------------------------------------------------------

inline SupervisedDataset load_dataset(const ExperimentConfig& config) {
  SupervisedDataset ds;
  if (!config.dataset_path.empty()) {
    std::ifstream in(config.dataset_path);
    if (!in) throw ConfigError("cannot open dataset " + config.dataset_path);
    ds = read_multilabel(in, config.num_classes).dataset;
  } else {
    SyntheticSpec spec = config.synthetic;
    if (!config.synthetic_seed_explicit) spec.seed = derive_seed(config.base_seed, "dataset");
    ds = generate_synthetic(spec);
  }
  ds.validate();
  return ds;
}

// Bandit feedback (x, a, r) as a partial example for classifier a.
inline std::vector<PartialExample> to_partial(std::span<const ExplorationEvent> events) {
  std::vector<PartialExample> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back({e.context, e.action, e.reward, 1.0});
  return out;
}

struct TrialData {
  std::vector<ExplorationEvent> all;         // D'
  std::vector<ExplorationEvent> model_half;  // trains r̂
  std::vector<ExplorationEvent> eval_half;   // runs the evaluators that use r̂
};

inline TrialData split_converted(std::vector<ExplorationEvent> converted, std::uint64_t trial_seed) {
  TrialData d;
  std::vector<std::size_t> order(converted.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  CounterRng rng(derive_seed(trial_seed, "halves"));
  shuffle(order, rng);
  const std::size_t half = converted.size() / 2;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < half ? d.model_half : d.eval_half).push_back(converted[order[i]]);
  }
  d.all = std::move(converted);
  if (d.model_half.empty() || d.eval_half.empty()) throw ConfigError("evaluation set too small to halve");
  return d;
}

// Runs an evaluator in segments of `horizon` acceptances: each segment starts
// from an empty history and yields one trajectory estimate; the trailing
// incomplete segment is dropped. DR-ns keeps its ratio tracker across
// segments. horizon == 0 means a single pass.
template <class Stepper, class MakeStepper, class SegmentValue>
TrialCell run_segmented(std::span<const ExplorationEvent> events, std::size_t horizon, std::uint64_t seed,
                        MakeStepper make, SegmentValue value) {
  TrialCell cell;
  double sum = 0.0;
  std::size_t k = 0;
  Stepper s = make();
  while (k < events.size()) {
    if (k > 0) s.start_trajectory();
    while (k < events.size() && (horizon == 0 || s.accepted_count() < horizon)) {
      ++k;
      s.step(events[k - 1], acceptance_draw(seed, k));
    }
    cell.accepted_count += s.accepted_count();
    // A single-pass DR-ns estimate is defined even without acceptances.
    const bool complete = horizon == 0
                              ? s.events_processed() > 0 &&
                                    (s.accepted_count() > 0 || std::is_same_v<Stepper, DrnsEvaluator>)
                              : s.accepted_count() == horizon;
    if (complete) {
      sum += value(s);
      ++cell.trajectories;
    }
  }
  cell.events_used = k;
  if (cell.trajectories == 0) {
    cell.failed = true;
    cell.failure = horizon == 0 ? "no accepted events" : "no complete trajectory";
  } else {
    cell.estimate = sum / static_cast<double>(cell.trajectories);
  }
  return cell;
}

inline TrialCell run_evaluator(const EvaluatorSpec& spec, const TrialData& data, const Policy& policy,
                               const RewardEstimator& rhat, std::size_t horizon, std::uint64_t seed) {
  try {
    switch (spec.kind) {
      case EvaluatorKind::kDM: {
        TrialCell c;
        c.estimate = dm_evaluate(data.eval_half, policy, rhat);
        c.events_used = data.eval_half.size();
        c.trajectories = 1;
        return c;
      }
      case EvaluatorKind::kIPS: {
        TrialCell c;
        c.estimate = ips_evaluate(data.all, policy);
        c.events_used = data.all.size();
        c.trajectories = 1;
        return c;
      }
      case EvaluatorKind::kDR: {
        TrialCell c;
        c.estimate = dr_evaluate(data.eval_half, policy, rhat);
        c.events_used = data.eval_half.size();
        c.trajectories = 1;
        return c;
      }
      case EvaluatorKind::kRS: {
        const double c = spec.c.value_or(min_propensity(data.all));
        return run_segmented<RejectionSampler>(
            data.all, horizon, seed, [&] { return RejectionSampler(policy, c); },
            [](const RejectionSampler& s) { return s.reward_sum() / static_cast<double>(s.accepted_count()); });
      }
      case EvaluatorKind::kWC: {
        const double c = spec.c.value_or(min_propensity(data.eval_half));
        return run_segmented<DrnsEvaluator>(
            data.eval_half, horizon, seed, [&] { return DrnsEvaluator::constant_cap(policy, rhat, c); },
            [](const DrnsEvaluator& s) { return s.numerator() / s.weight(); });
      }
      case EvaluatorKind::kDRns:
        return run_segmented<DrnsEvaluator>(
            data.eval_half, horizon, seed, [&] { return DrnsEvaluator(policy, rhat, spec.q, spec.c_max); },
            [](const DrnsEvaluator& s) { return s.numerator() / s.weight(); });
    }
  } catch (const NoAcceptedSamples& e) {
    TrialCell c;
    c.failed = true;
    c.failure = e.what();
    return c;
  }
  throw InvalidArgument("unknown evaluator");
}

inline void summarize_columns(TrialTable& table, std::size_t resamples) {
  for (std::size_t i = 0; i < table.columns.size(); ++i) {
    auto& col = table.columns[i];
    std::vector<double> losses;
    double accepted = 0.0;
    for (const auto& cell : col.cells) {
      accepted += static_cast<double>(cell.accepted_count);
      if (cell.failed) {
        ++col.failures;
      } else {
        losses.push_back(1.0 - cell.estimate);
      }
    }
    col.mean_accepted = col.cells.empty() ? 0.0 : accepted / static_cast<double>(col.cells.size());
    if (losses.size() >= 2) {
      col.summary = summarize(losses, table.truth_loss(), derive_seed(table.base_seed, 0xb007 + i), resamples);
    }
  }
}

// --- static protocol -------------------------------------------------------

struct StaticSetup {
  SupervisedDataset evaluation;
  std::shared_ptr<const EpsGreedyPolicy> policy;
  double truth = 0.0;  // exact expected reward of pi0 on the evaluation set
};

// Exact average of sum_a pi0(a|x) I(a in c) over a fully labeled set.
inline double supervised_value(const Policy& policy, const SupervisedDataset& ds) {
  if (ds.examples.empty()) throw NoDataError("empty evaluation set");
  double total = 0.0;
  for (const auto& ex : ds.examples) {
    const auto dist = policy.distribution(ex.context);
    for (int a = 0; a < dist.size(); ++a) {
      if (ex.has_label(a)) total += dist[a];
    }
  }
  return total / static_cast<double>(ds.examples.size());
}

inline StaticSetup prepare_static(const ExperimentConfig& config) {
  const auto ds = load_dataset(config);
  const auto parts = split_dataset(ds, config.splits, derive_seed(config.base_seed, "split"));
  if (parts[0].examples.empty() || parts[1].examples.size() < 4) throw ConfigError("dataset too small for the splits");
  StaticSetup s;
  s.policy = std::make_shared<const EpsGreedyPolicy>(
      std::make_shared<const LinearModel>(train_logistic_ova(parts[0].examples, ds.num_classes, config.learner)),
      config.eps);
  s.evaluation = parts[1];
  s.truth = supervised_value(*s.policy, s.evaluation);
  return s;
}

inline TrialTable run_static_experiment(const ExperimentConfig& config, std::size_t threads = threads_from_env()) {
  const StaticSetup setup = prepare_static(config);
  TrialTable table;
  table.task = Task::kStatic;
  table.base_seed = config.base_seed;
  table.trials = config.trials;
  table.truth_value = setup.truth;
  for (const auto& spec : config.evaluators) table.columns.push_back({spec, std::vector<TrialCell>(config.trials), {}, 0, 0.0});

  parallel_for(config.trials, threads, [&](std::size_t trial) {
    const std::uint64_t trial_seed = config.base_seed + trial;
    const TrialData data =
        split_converted(convert_supervised(setup.evaluation, derive_seed(trial_seed, "convert")), trial_seed);
    const auto partial = to_partial(data.model_half);
    const ModelRewardEstimator rhat(std::make_shared<const LinearModel>(
        train_logistic_ova({}, config.num_classes, config.learner, partial)));
    for (std::size_t e = 0; e < config.evaluators.size(); ++e) {
      table.columns[e].cells[trial] =
          run_evaluator(config.evaluators[e], data, *setup.policy, rhat, 0,
                        derive_seed(trial_seed, config.evaluators[e].name()));
    }
  });
  summarize_columns(table, config.bootstrap_resamples);
  return table;
}

// --- adaptive protocol -----------------------------------------------------

struct AdaptiveSetup {
  std::shared_ptr<const std::vector<LabeledExample>> seed_examples;
  SupervisedDataset evaluation;
  SupervisedDataset truth_set;
  std::shared_ptr<const AdaptivePolicy> policy;
};

inline AdaptiveSetup prepare_adaptive(const ExperimentConfig& config) {
  const auto ds = load_dataset(config);
  if (config.seed_size < 1 || config.seed_size >= ds.size()) throw ConfigError("seed set size out of range");
  std::vector<std::size_t> order(ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  CounterRng rng(derive_seed(config.base_seed, "split"));
  shuffle(order, rng);

  const auto n = static_cast<double>(ds.size());
  const auto eval_count = static_cast<std::size_t>(std::floor(config.splits[0] * n + 1e-9));
  const auto truth_count = static_cast<std::size_t>(std::floor(config.splits[1] * n + 1e-9));
  if (config.seed_size + eval_count + truth_count > ds.size() || eval_count < 4 || truth_count < 1) {
    throw ConfigError("dataset too small for the adaptive splits");
  }
  AdaptiveSetup s;
  auto seeds = std::make_shared<std::vector<LabeledExample>>();
  s.evaluation = {{}, ds.num_classes, ds.dimension};
  s.truth_set = {{}, ds.num_classes, ds.dimension};
  std::size_t pos = 0;
  for (; pos < config.seed_size; ++pos) seeds->push_back(ds.examples[order[pos]]);
  for (std::size_t i = 0; i < eval_count; ++i) s.evaluation.examples.push_back(ds.examples[order[pos++]]);
  for (std::size_t i = 0; i < truth_count; ++i) s.truth_set.examples.push_back(ds.examples[order[pos++]]);
  s.seed_examples = seeds;
  s.policy = std::make_shared<const AdaptivePolicy>(s.seed_examples, ds.num_classes, config.period, config.horizon,
                                                    config.eps, config.learner);
  return s;
}

// Average online reward of the adaptive policy over `horizon` rounds on a
// shuffled copy of the fully labeled ground-truth set, averaged over
// `simulations` shuffles.
inline double adaptive_ground_truth(const ExperimentConfig& config, const AdaptiveSetup& setup,
                                    std::size_t threads = threads_from_env()) {
  const std::size_t sims = std::max<std::size_t>(config.simulations, 1);
  std::vector<double> values(sims);
  parallel_for(sims, threads, [&](std::size_t s) {
    const std::uint64_t sim_seed = derive_seed(config.base_seed, 0x5100000000ULL + s);
    std::vector<std::size_t> order(setup.truth_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    CounterRng rng(sim_seed);
    shuffle(order, rng);
    TargetHistory h;
    double total = 0.0;
    for (int t = 0; t < config.horizon; ++t) {
      const auto& ex = setup.truth_set.examples[order[static_cast<std::size_t>(t) % order.size()]];
      const auto dist = setup.policy->distribution(ex.context, h.view());
      const int a = dist.sample(rng.uniform());
      const double r = ex.has_label(a) ? 1.0 : 0.0;
      total += r;
      h.append({ex.context, a, r});
    }
    values[s] = total / config.horizon;
  });
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(sims);
}

inline TrialTable run_adaptive_experiment(const ExperimentConfig& config, std::size_t threads = threads_from_env()) {
  const AdaptiveSetup setup = prepare_adaptive(config);
  TrialTable table;
  table.task = Task::kAdaptive;
  table.base_seed = config.base_seed;
  table.trials = config.trials;
  table.truth_value = adaptive_ground_truth(config, setup, threads);
  for (const auto& spec : config.evaluators) table.columns.push_back({spec, std::vector<TrialCell>(config.trials), {}, 0, 0.0});

  parallel_for(config.trials, threads, [&](std::size_t trial) {
    const std::uint64_t trial_seed = config.base_seed + trial;
    SupervisedDataset permuted = setup.evaluation;
    CounterRng rng(derive_seed(trial_seed, "permute"));
    shuffle(permuted.examples, rng);
    const TrialData data = split_converted(convert_supervised(permuted, derive_seed(trial_seed, "convert")), trial_seed);
    const auto partial = to_partial(data.model_half);
    const ModelRewardEstimator rhat(std::make_shared<const LinearModel>(
        train_logistic_ova({}, config.num_classes, config.learner, partial)));
    for (std::size_t e = 0; e < config.evaluators.size(); ++e) {
      table.columns[e].cells[trial] = run_evaluator(config.evaluators[e], data, *setup.policy, rhat,
                                                    static_cast<std::size_t>(config.horizon),
                                                    derive_seed(trial_seed, config.evaluators[e].name()));
    }
  });
  summarize_columns(table, config.bootstrap_resamples);
  return table;
}

inline TrialTable run_experiment(const ExperimentConfig& config, std::size_t threads = threads_from_env()) {
  return config.task == Task::kStatic ? run_static_experiment(config, threads) : run_adaptive_experiment(config, threads);
}

}  // namespace bandit_ope
