#include <gtest/gtest.h>

#include <cmath>

#include "bandit_ope/harness.hpp"
#include "bandit_ope/io.hpp"

using namespace bandit_ope;
using nlohmann::json;

namespace {

json small_static(std::size_t trials = 6) {
  return {{"task", "static"},
          {"seed", 3},
          {"trials", trials},
          {"dataset", {{"synthetic", {{"size", 1200}}}}},
          {"learner", {{"iterations", 150}}},
          {"bootstrap_resamples", 500},
          {"evaluators",
           {{{"type", "dm"}},
            {{"type", "ips"}},
            {{"type", "dr"}},
            {{"type", "rs"}},
            {{"type", "wc"}},
            {{"type", "drns"}, {"q", 0.05}}}}};
}

json small_adaptive() {
  return {{"task", "adaptive"},
          {"seed", 5},
          {"trials", 3},
          {"dataset", {{"synthetic", {{"size", 3000}}}}},
          {"adaptive", {{"seed_size", 30}, {"period", 5}, {"horizon", 20}, {"simulations", 20}}},
          {"learner", {{"iterations", 60}, {"warm_iterations", 20}}},
          {"bootstrap_resamples", 200},
          {"evaluators", {{{"type", "rs"}}, {{"type", "drns"}, {"q", 0.01}}, {{"type", "drns"}, {"q", 0.1}}}}};
}

}  // namespace

TEST(Summarize, HandArithmetic) {
  const std::vector<double> e{0.4, 0.6};
  const auto row = summarize(e, 0.5, 1, 1000);
  EXPECT_NEAR(row.bias, 0.0, 1e-15);
  EXPECT_NEAR(row.rmse, 0.1, 1e-15);
  EXPECT_NEAR(row.stdev, std::sqrt(0.02), 1e-15);
}

TEST(Summarize, AllExact) {
  const std::vector<double> e(5, 0.3);
  const auto row = summarize(e, 0.3, 1, 1000);
  EXPECT_EQ(row.rmse, 0.0);
  EXPECT_EQ(row.bias, 0.0);
  EXPECT_EQ(row.stdev, 0.0);
  EXPECT_EQ(row.ci_lo, 0.0);
  EXPECT_EQ(row.ci_hi, 0.0);
}

TEST(Summarize, BootstrapIsDeterministicAndBracketsRmse) {
  CounterRng rng(2);
  std::vector<double> e(40);
  for (double& v : e) v = 0.5 + 0.1 * rng.normal();
  const auto a = summarize(e, 0.48, 9);
  const auto b = summarize(e, 0.48, 9);
  EXPECT_EQ(a.ci_lo, b.ci_lo);
  EXPECT_EQ(a.ci_hi, b.ci_hi);
  EXPECT_LE(a.ci_lo, a.rmse);
  EXPECT_GE(a.ci_hi, a.rmse);
  // rmse^2 = bias^2 + (n-1)/n stdev^2
  const double n = 40;
  EXPECT_NEAR(a.rmse * a.rmse, a.bias * a.bias + (n - 1) / n * a.stdev * a.stdev, 1e-12);
}

TEST(Summarize, NeedsTwoEstimates) {
  const std::vector<double> one{0.1};
  EXPECT_THROW(summarize(one, 0.0, 1), NoDataError);
}

TEST(RoundSignificant, SixDigits) {
  EXPECT_EQ(round_significant(0.0123456789), 0.0123457);
  EXPECT_EQ(round_significant(123456789.0), 123457000.0);
  EXPECT_EQ(round_significant(0.0), 0.0);
}

TEST(Config, ParsesAndValidates) {
  const auto c = ExperimentConfig::from_json(small_static());
  EXPECT_EQ(c.task, Task::kStatic);
  EXPECT_EQ(c.trials, 6u);
  EXPECT_EQ(c.evaluators.size(), 6u);
  EXPECT_EQ(c.evaluators[5].name(), "DR-ns(q=0.05)");

  auto bad = small_static();
  bad["trials"] = 1;
  EXPECT_THROW(ExperimentConfig::from_json(bad), ConfigError);
  bad = small_static();
  bad["evaluators"] = json::array({{{"type", "magic"}}});
  EXPECT_THROW(ExperimentConfig::from_json(bad), ConfigError);
  bad = small_static();
  bad["evaluators"] = json::array({{{"type", "drns"}, {"q", 2}}});
  EXPECT_THROW(ExperimentConfig::from_json(bad), ConfigError);
  bad = small_static();
  bad["task"] = "other";
  EXPECT_THROW(ExperimentConfig::from_json(bad), ConfigError);
  bad = small_static();
  bad.erase("evaluators");
  EXPECT_THROW(ExperimentConfig::from_json(bad), ConfigError);
}

TEST(StaticExperiment, TableShapeAndConsistency) {
  const auto config = ExperimentConfig::from_json(small_static());
  const auto t = run_experiment(config, 2);
  EXPECT_GT(t.truth_value, 0.0);
  ASSERT_EQ(t.columns.size(), 6u);
  for (const auto& col : t.columns) {
    ASSERT_EQ(col.cells.size(), 6u);
    if (!col.summary) continue;
    const auto& s = *col.summary;
    const double n = static_cast<double>(s.count);
    EXPECT_NEAR(s.rmse * s.rmse, s.bias * s.bias + (n - 1) / n * s.stdev * s.stdev, 1e-9) << col.spec.name();
  }
  const auto text = t.to_text();
  EXPECT_NE(text.find("| rmse "), std::string::npos);
  EXPECT_NE(text.find("failures"), std::string::npos);
  EXPECT_NE(text.find("DR-ns(q=0.05)"), std::string::npos);
}

TEST(StaticExperiment, ThreadCountDoesNotChangeReport) {
  const auto config = ExperimentConfig::from_json(small_static());
  EXPECT_EQ(run_experiment(config, 1).to_json().dump(), run_experiment(config, 4).to_json().dump());
}

TEST(StaticExperiment, TrialsAreIndependent) {
  const auto six = run_experiment(ExperimentConfig::from_json(small_static(6)), 2);
  const auto three = run_experiment(ExperimentConfig::from_json(small_static(3)), 2);
  for (std::size_t c = 0; c < six.columns.size(); ++c) {
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_EQ(six.columns[c].cells[i].estimate, three.columns[c].cells[i].estimate);
      EXPECT_EQ(six.columns[c].cells[i].accepted_count, three.columns[c].cells[i].accepted_count);
    }
  }
}

TEST(StaticExperiment, ColumnsIgnoreEvaluatorOrder) {
  auto j = small_static(3);
  const auto full = run_experiment(ExperimentConfig::from_json(j), 1);
  j["evaluators"] = json::array({{{"type", "drns"}, {"q", 0.05}}, {{"type", "rs"}}});
  const auto pair = run_experiment(ExperimentConfig::from_json(j), 1);
  for (const char* name : {"RS", "DR-ns(q=0.05)"}) {
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_EQ(full.column(name).cells[i].estimate, pair.column(name).cells[i].estimate) << name;
    }
  }
}

TEST(StaticExperiment, FailuresAreNotZeros) {
  auto j = small_static(4);
  // A tiny RS constant accepts nothing.
  j["evaluators"] = json::array({{{"type", "rs"}, {"c", 1e-9}}, {{"type", "drns"}, {"q", 0.0}}});
  const auto t = run_experiment(ExperimentConfig::from_json(j), 1);
  const auto& rs = t.columns[0];
  EXPECT_EQ(rs.failures, 4u);
  EXPECT_FALSE(rs.summary.has_value());
  const auto doc = t.to_json();
  for (const auto& cell : doc["evaluators"][0]["trials"]) {
    EXPECT_TRUE(cell["failed"].get<bool>());
    EXPECT_FALSE(cell.contains("estimate"));
  }
  EXPECT_TRUE(doc["evaluators"][0]["summary"].is_null());
}

TEST(StaticExperiment, TruthIsSupervisedValue) {
  const auto config = ExperimentConfig::from_json(small_static(2));
  const auto setup = prepare_static(config);
  // Independent recount over the evaluation set.
  double total = 0.0;
  for (const auto& ex : setup.evaluation.examples) {
    const int best = setup.policy->model().argmax(ex.context);
    for (int a = 0; a < 4; ++a) {
      const double p = (a == best ? 0.9 : 0.0) + 0.1 / 4;
      if (ex.has_label(a)) total += p;
    }
  }
  EXPECT_NEAR(setup.truth, total / setup.evaluation.size(), 1e-12);
  EXPECT_EQ(setup.evaluation.size(), 600u);
}

TEST(AdaptiveExperiment, RunsAndIsDeterministic) {
  const auto config = ExperimentConfig::from_json(small_adaptive());
  const auto a = run_experiment(config, 1);
  const auto b = run_experiment(config, 3);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  EXPECT_EQ(a.task, Task::kAdaptive);
  for (const auto& col : a.columns) {
    for (const auto& cell : col.cells) {
      if (cell.failed) continue;
      EXPECT_GE(cell.trajectories, 1u);
      EXPECT_GE(cell.accepted_count, 20u * cell.trajectories);
    }
  }
}

TEST(AdaptiveExperiment, GroundTruthMatchesManualRollout) {
  auto j = small_adaptive();
  j["adaptive"]["simulations"] = 3;
  const auto config = ExperimentConfig::from_json(j);
  const auto setup = prepare_adaptive(config);
  EXPECT_EQ(setup.seed_examples->size(), 30u);
  EXPECT_EQ(setup.evaluation.size(), 2400u);
  EXPECT_EQ(setup.truth_set.size(), 570u);
  double total = 0.0;
  for (std::size_t s = 0; s < 3; ++s) {
    std::vector<std::size_t> order(setup.truth_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    CounterRng rng(derive_seed(config.base_seed, 0x5100000000ULL + s));
    shuffle(order, rng);
    TargetHistory h;
    for (int t = 0; t < config.horizon; ++t) {
      const auto& ex = setup.truth_set.examples[order[t]];
      const int a = setup.policy->distribution(ex.context, h.view()).sample(rng.uniform());
      const double r = ex.has_label(a) ? 1.0 : 0.0;
      total += r;
      h.append({ex.context, a, r});
    }
  }
  EXPECT_NEAR(adaptive_ground_truth(config, setup, 2), total / (3.0 * config.horizon), 1e-12);
}

TEST(Segmented, DrnsKeepsTrackerAcrossTrajectories) {
  const auto config = ExperimentConfig::from_json(small_adaptive());
  const auto setup = prepare_adaptive(config);
  const auto events = convert_supervised(setup.evaluation, 4);
  const ConstantEstimator rhat(0.5);
  DrnsEvaluator ev(*setup.policy, rhat, 0.05, 1.0);
  std::size_t k = 0;
  while (ev.accepted_count() < 20) {
    ++k;
    ev.step(events[k - 1], acceptance_draw(9, k));
  }
  const auto seen = ev.tracker().size();
  const double cap = ev.cap();
  ev.start_trajectory();
  EXPECT_EQ(ev.accepted_count(), 0u);
  EXPECT_EQ(ev.numerator(), 0.0);
  EXPECT_EQ(ev.weight(), 0.0);
  EXPECT_EQ(ev.tracker().size(), seen);
  EXPECT_EQ(ev.cap(), cap);
}

TEST(Io, PolicyAndEstimatorLoaders) {
  const auto u = policy_from_json({{"type", "uniform"}, {"k", 3}});
  EXPECT_EQ(u->num_actions(), 3);
  const auto g = policy_from_json({{"type", "greedy_table"}, {"eta", 0.5}, {"table", {{0.5, 0.5}}}});
  EXPECT_FALSE(g->is_stationary());
  LinearModel m(2, 2);
  m.bias(1) = 1.0;
  const auto e = policy_from_json(eps_greedy_to_json(m, 0.2));
  EXPECT_NEAR(e->distribution(SparseVector{})[1], 0.9, 1e-15);
  const auto r = estimator_from_json(model_estimator_to_json(m));
  EXPECT_NEAR(r->estimate(SparseVector{}, 1), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_EQ(estimator_from_json({{"type", "constant"}, {"value", 0.25}})->estimate(SparseVector{}, 0), 0.25);
  EXPECT_THROW(policy_from_json({{"type", "nope"}}), ConfigError);
  EXPECT_THROW(policy_from_json({{"k", 3}}), ConfigError);
  EXPECT_THROW(estimator_from_json({{"type", "constant"}}), ConfigError);
}

TEST(ParallelFor, RethrowsFirstError) {
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::size_t i) {
                              if (i == 4) throw InvalidArgument("boom");
                            }),
               InvalidArgument);
  std::vector<int> hit(100, 0);
  parallel_for(100, 4, [&](std::size_t i) { hit[i] = 1; });
  for (int h : hit) EXPECT_EQ(h, 1);
}
