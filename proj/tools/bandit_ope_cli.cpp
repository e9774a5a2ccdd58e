// bandit-ope: command-line front end for the evaluators, the experiment
// harness and the tiny-world diagnostics.
//
// Exit status: 0 success, 1 usage error, 2 data error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "bandit_ope/datagen.hpp"
#include "bandit_ope/evaluators.hpp"
#include "bandit_ope/harness.hpp"
#include "bandit_ope/io.hpp"
#include "bandit_ope/oracle.hpp"

namespace fs = std::filesystem;
using namespace bandit_ope;
using nlohmann::json;

namespace {

constexpr int kUsage = 1;
constexpr int kDataError = 2;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string output;
  std::string format = "json";
};

// Writes to --output when given, stdout otherwise.
void emit(const Globals& g, const std::string& text) {
  if (g.output.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(g.output);
  if (!out) throw NoDataError("cannot write " + g.output);
  out << text;
}

std::string key_values(const json& j) {
  std::ostringstream out;
  std::size_t width = 0;
  for (const auto& [k, _] : j.items()) width = std::max(width, k.size());
  for (const auto& [k, v] : j.items()) {
    out << k << std::string(width - k.size() + 2, ' ') << (v.is_string() ? v.get<std::string>() : v.dump()) << "\n";
  }
  return out.str();
}

std::vector<ExplorationEvent> load_events(const std::string& path, int k = -1) {
  std::ifstream in(path);
  if (!in) throw NoDataError("cannot open " + path);
  return read_events(in, k);
}

SupervisedDataset load_supervised(const std::string& path, int k) {
  std::ifstream in(path);
  if (!in) throw NoDataError("cannot open " + path);
  auto res = read_multilabel(in, k);
  if (res.dropped_unlabeled > 0) {
    std::cerr << "warning: dropped " << res.dropped_unlabeled << " examples without labels\n";
  }
  res.dataset.validate();
  return res.dataset;
}

std::shared_ptr<const Policy> load_policy(const std::string& path) {
  return policy_from_json(read_json_file(path), fs::path(path).parent_path());
}

// --- convert ---------------------------------------------------------------

struct ConvertArgs {
  std::string input;
  int k = 0;
  std::size_t synthetic = 0;
  std::string dataset_out;
};

int run_convert(const Globals& g, const ConvertArgs& a) {
  const std::uint64_t seed = g.seed.value_or(1);
  SupervisedDataset ds;
  if (!a.input.empty()) {
    ds = load_supervised(a.input, a.k);
  } else {
    SyntheticSpec spec;
    spec.size = a.synthetic;
    if (a.k > 0) spec.num_classes = a.k;
    spec.seed = derive_seed(seed, "dataset");
    ds = generate_synthetic(spec);
  }
  if (!a.dataset_out.empty()) {
    std::ofstream out(a.dataset_out);
    if (!out) throw NoDataError("cannot write " + a.dataset_out);
    write_multilabel(out, ds);
  }
  const auto events = convert_supervised(ds, seed);
  std::ostringstream out;
  write_events(out, events);
  emit(g, out.str());
  return 0;
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  std::string input;
  std::string events;
  int k = 0;
  double eps = 0.1;
  LearnerConfig learner;
};

int run_train(const Globals& g, const TrainArgs& a) {
  json doc;
  if (!a.input.empty()) {
    const auto ds = load_supervised(a.input, a.k);
    doc = eps_greedy_to_json(train_logistic_ova(ds.examples, ds.num_classes, a.learner), a.eps);
  } else {
    if (a.k < 1) throw ConfigError("--k is required with --events");
    const auto events = load_events(a.events, a.k);
    const auto partial = to_partial(events);
    doc = model_estimator_to_json(train_logistic_ova({}, a.k, a.learner, partial));
  }
  emit(g, doc.dump(2) + "\n");
  return 0;
}

// --- evaluate --------------------------------------------------------------

struct EvaluateArgs {
  std::string evaluator = "drns";
  double q = 0.0;
  double cmax = 1.0;
  std::optional<double> c;
  std::string events;
  std::string policy;
  std::string rhat;
};

int run_evaluate(const Globals& g, const EvaluateArgs& a) {
  const auto events = load_events(a.events);
  if (events.empty()) throw NoDataError("events file is empty");
  const auto policy = load_policy(a.policy);
  std::shared_ptr<const RewardEstimator> rhat;
  if (!a.rhat.empty()) {
    rhat = estimator_from_json(read_json_file(a.rhat));
  } else {
    rhat = std::make_shared<ConstantEstimator>(0.0);
  }
  const std::uint64_t seed = g.seed.value_or(1);

  json out = {{"evaluator", a.evaluator}, {"events", events.size()}};
  if (a.evaluator == "dm") {
    out["estimate"] = dm_evaluate(events, *policy, *rhat);
  } else if (a.evaluator == "ips") {
    out["estimate"] = ips_evaluate(events, *policy);
  } else if (a.evaluator == "dr") {
    out["estimate"] = dr_evaluate(events, *policy, *rhat);
  } else {
    EvalResult r;
    if (a.evaluator == "drns") {
      r = drns_evaluate(events, *policy, *rhat, a.q, a.cmax, seed);
      out["q"] = a.q;
      out["c_max"] = a.cmax;
    } else if (a.evaluator == "wc") {
      const double c = a.c.value_or(min_propensity(events));
      r = wc_evaluate(events, *policy, *rhat, c, seed);
      out["c"] = c;
    } else if (a.evaluator == "rs") {
      const double c = a.c.value_or(min_propensity(events));
      r = rs_evaluate(events, *policy, c, seed);
      out["c"] = c;
    } else {
      throw CLI::ValidationError("--evaluator", "unknown evaluator '" + a.evaluator + "'");
    }
    out["estimate"] = r.estimate;
    out["accepted_count"] = r.accepted_count;
    out["T"] = r.completed_blocks;
    out["events_used"] = r.events_used;
    out["acceptance_rate"] = static_cast<double>(r.accepted_count) / static_cast<double>(r.events_used);
  }
  emit(g, g.format == "table" ? key_values(out) : out.dump(2) + "\n");
  return 0;
}

// --- experiment / ground-truth ---------------------------------------------

ExperimentConfig load_config(const std::string& path, const Globals& g) {
  auto j = read_json_file(path);
  if (g.seed) j["seed"] = *g.seed;
  auto config = ExperimentConfig::from_json(j);
  if (!config.dataset_path.empty() && fs::path(config.dataset_path).is_relative()) {
    const auto candidate = fs::path(path).parent_path() / config.dataset_path;
    if (fs::exists(candidate)) config.dataset_path = candidate.string();
  }
  return config;
}

int run_experiment_cmd(const Globals& g, const std::string& config_path) {
  const auto config = load_config(config_path, g);
  const auto table = run_experiment(config);
  const std::string report = table.to_json().dump(2) + "\n";
  std::string out_path = g.output.empty() ? config.output : g.output;
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw NoDataError("cannot write " + out_path);
    out << (g.format == "table" ? table.to_text() : report);
    std::cout << table.to_text();
  } else {
    std::cout << (g.format == "table" ? table.to_text() : report);
  }
  return 0;
}

struct TruthArgs {
  std::string config;
  std::string world;
  std::string policy;
  std::size_t horizon = 0;
};

int run_ground_truth(const Globals& g, const TruthArgs& a) {
  json out;
  if (!a.config.empty()) {
    const auto config = load_config(a.config, g);
    if (config.task == Task::kStatic) {
      const auto setup = prepare_static(config);
      out = {{"task", "static"}, {"value", setup.truth}, {"loss", 1.0 - setup.truth},
             {"evaluation_examples", setup.evaluation.size()}};
    } else {
      const auto setup = prepare_adaptive(config);
      const double v = adaptive_ground_truth(config, setup);
      out = {{"task", "adaptive"}, {"value", v}, {"loss", 1.0 - v}, {"simulations", config.simulations},
             {"horizon", config.horizon}};
    }
  } else {
    if (a.world.empty() || a.policy.empty()) throw CLI::ValidationError("ground-truth", "needs --config, or --world with --policy");
    const auto world = world_from_json(read_json_file(a.world));
    const auto policy = load_policy(a.policy);
    out = {{"world", a.world}, {"stationary_value", exact_stationary_value(world, *policy)}};
    if (a.horizon > 0) {
      out["horizon"] = a.horizon;
      out["trajectory_value"] = exact_trajectory_value(world, *policy, a.horizon);
    }
  }
  emit(g, g.format == "table" ? key_values(out) : out.dump(2) + "\n");
  return 0;
}

// --- diagnose --------------------------------------------------------------

struct DiagnoseArgs {
  std::string world;
  std::string check = "all";
  std::string policy;
  std::string rhat;
  double q = 0.0;
  double cmax = 1.0;
  std::size_t runs = 1000;
  std::size_t events = 200;
  std::size_t blocks = 2;
  double delta = 0.05;
};

int run_diagnose(const Globals& g, const DiagnoseArgs& a) {
  const auto world = world_from_json(read_json_file(a.world));
  std::shared_ptr<const Policy> policy;
  if (!a.policy.empty()) {
    policy = load_policy(a.policy);
  } else {
    // Default target: a history-dependent learner over a uniform base.
    std::vector<ActionDistribution> base(static_cast<std::size_t>(world.num_contexts()),
                                         ActionDistribution::uniform(world.num_actions()));
    policy = std::make_shared<GreedyTablePolicy>(std::move(base), 0.5);
  }
  if (policy->num_actions() != world.num_actions()) throw InvalidArgument("policy and world disagree on K");
  std::shared_ptr<const RewardEstimator> rhat =
      a.rhat.empty() ? std::make_shared<ConstantEstimator>(0.5) : estimator_from_json(read_json_file(a.rhat));
  const std::uint64_t seed = g.seed.value_or(1);

  json report = {{"world", a.world}};
  bool passed = true;
  const bool all = a.check == "all";
  if (all || a.check == "lemmas") {
    auto states = visited_states(world, *policy, *rhat, a.q, a.cmax, a.events, seed);
    const auto rep = verify_lemmas(world, *policy, *rhat, states);
    report["lemmas"] = rep.to_json();
    passed = passed && rep.passed();
  }
  if (all || a.check == "bias") {
    const auto rep = bias_experiment(world, *policy, *rhat, a.q, a.cmax, a.blocks, a.runs, seed);
    report["bias"] = rep.to_json();
    passed = passed && rep.within_bound();
  }
  if (all || a.check == "coverage") {
    const double m = policy->is_stationary() ? state_sup_ratio(world, *policy, {})
                                             : exact_sup_ratio(world, *policy, std::min<std::size_t>(a.events, 3));
    const auto rep = coverage_experiment(world, *policy, *rhat, a.q, a.cmax, a.events, m, a.runs, seed, a.delta);
    report["coverage"] = rep.to_json();
    if (!policy->is_stationary()) report["coverage"]["note"] = "M enumerated over histories of length <= 3";
    passed = passed && rep.passed();
  }
  report["passed"] = passed;
  if (g.format == "table") {
    std::ostringstream out;
    for (const auto& [name, section] : report.items()) {
      if (!section.is_object()) continue;
      out << "[" << name << "]\n" << key_values(section);
    }
    out << "passed  " << (passed ? "true" : "false") << "\n";
    emit(g, out.str());
  } else {
    emit(g, report.dump(2) + "\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offline policy evaluation for contextual bandits (DR-ns and baselines)", "bandit-ope"};
  app.require_subcommand(1);

  Globals g;
  std::uint64_t seed_value = 1;
  auto* seed_opt = app.add_option("--seed", seed_value, "Base random seed")->group("Global");
  app.add_option("--output", g.output, "Write the result to this file")->group("Global");
  app.add_option("--format", g.format, "Output format")
      ->check(CLI::IsMember({"json", "table"}))
      ->group("Global");
  // Global flags may also follow the subcommand.
  app.fallthrough();

  ConvertArgs conv;
  auto* convert = app.add_subcommand("convert", "Turn a supervised multilabel file into logged bandit events");
  auto* conv_in = convert->add_option("--input", conv.input, "svmlight multilabel file");
  convert->add_option("--k", conv.k, "Number of classes (default: inferred)")->check(CLI::PositiveNumber);
  auto* conv_syn = convert->add_option("--synthetic", conv.synthetic, "Generate this many synthetic examples instead");
  convert->add_option("--dataset-out", conv.dataset_out, "Also write the supervised examples used");
  conv_in->excludes(conv_syn);

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Fit an eps-greedy target policy or a reward model");
  auto* tr_in = train->add_option("--input", tr.input, "svmlight multilabel file (policy)");
  auto* tr_ev = train->add_option("--events", tr.events, "Events file (reward model)");
  train->add_option("--k", tr.k, "Number of actions");
  train->add_option("--eps", tr.eps, "Exploration rate of the policy")->check(CLI::Range(0.0, 1.0));
  train->add_option("--lambda", tr.learner.lambda, "L2 strength")->check(CLI::PositiveNumber);
  train->add_option("--iterations", tr.learner.iterations, "Gradient steps")->check(CLI::PositiveNumber);
  tr_in->excludes(tr_ev);

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Run one evaluator on an events file");
  evaluate->add_option("--evaluator", ev.evaluator, "dm | ips | dr | rs | wc | drns")
      ->check(CLI::IsMember({"dm", "ips", "dr", "rs", "wc", "drns"}));
  evaluate->add_option("--q", ev.q, "Quantile level for DR-ns")->check(CLI::Range(0.0, 1.0));
  evaluate->add_option("--cmax", ev.cmax, "Maximum acceptance constant")->check(CLI::Range(0.0, 1.0));
  evaluate->add_option("--c", ev.c, "Fixed acceptance constant for RS and WC")->check(CLI::Range(0.0, 1.0));
  evaluate->add_option("--events", ev.events, "Events file (JSON lines)")->required();
  evaluate->add_option("--policy", ev.policy, "Target policy JSON")->required();
  evaluate->add_option("--rhat", ev.rhat, "Reward estimator JSON (default: constant 0)");

  std::string config_path;
  auto* experiment = app.add_subcommand("experiment", "Run a static or adaptive experiment from a config");
  experiment->add_option("--config", config_path, "Experiment config JSON")->required();

  TruthArgs truth;
  auto* ground = app.add_subcommand("ground-truth", "Report ground-truth values");
  ground->add_option("--config", truth.config, "Experiment config JSON");
  ground->add_option("--world", truth.world, "TinyWorld JSON");
  ground->add_option("--policy", truth.policy, "Target policy JSON");
  ground->add_option("--horizon", truth.horizon, "Also enumerate the T-step trajectory value");

  DiagnoseArgs diag;
  auto* diagnose = app.add_subcommand("diagnose", "Oracle checks on a TinyWorld");
  diagnose->add_option("--world", diag.world, "TinyWorld JSON")->required();
  diagnose->add_option("--check", diag.check, "lemmas | bias | coverage | all")
      ->check(CLI::IsMember({"lemmas", "bias", "coverage", "all"}));
  diagnose->add_option("--policy", diag.policy, "Target policy JSON (default: greedy table, eta 0.5)")
      ;
  diagnose->add_option("--rhat", diag.rhat, "Reward estimator JSON (default: constant 0.5)");
  diagnose->add_option("--q", diag.q, "Quantile level")->check(CLI::Range(0.0, 1.0));
  diagnose->add_option("--cmax", diag.cmax, "Maximum acceptance constant")->check(CLI::Range(0.0, 1.0));
  diagnose->add_option("--runs", diag.runs, "Monte Carlo runs")->check(CLI::PositiveNumber);
  diagnose->add_option("--events", diag.events, "Events per run")->check(CLI::PositiveNumber);
  diagnose->add_option("--blocks", diag.blocks, "Blocks T for the bias check")->check(CLI::PositiveNumber);
  diagnose->add_option("--delta", diag.delta, "Failure probability for the coverage check")
      ->check(CLI::Range(0.0, 1.0));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }
  if (seed_opt->count() > 0) g.seed = seed_value;

  try {
    if (*convert) {
      if (conv.input.empty() && conv.synthetic == 0) {
        throw CLI::ValidationError("convert", "needs --input or --synthetic");
      }
      return run_convert(g, conv);
    }
    if (*train) {
      if (tr.input.empty() && tr.events.empty()) throw CLI::ValidationError("train", "needs --input or --events");
      return run_train(g, tr);
    }
    if (*evaluate) return run_evaluate(g, ev);
    if (*experiment) return run_experiment_cmd(g, config_path);
    if (*ground) return run_ground_truth(g, truth);
    if (*diagnose) return run_diagnose(g, diag);
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << "\n" << app.help();
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}
