// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "bandit_ope/evaluators.hpp"
#include "bandit_ope/harness.hpp"
#include "bandit_ope/io.hpp"
#include "bandit_ope/oracle.hpp"
#include "bandit_ope/quantile_tracker.hpp"
#include "worlds.hpp"

using namespace bandit_ope;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// --- 1 ---------------------------------------------------------------------

Outcome ac1() {
  const auto world = random_world(11, 4, 3);
  const auto mu = world.logging_policy();
  const auto rhat = constant_estimator(0.5);
  const auto log = sample_world_log(world, 10000, 12);
  bool ok = true;
  std::string detail;
  const auto t0 = Clock::now();
  for (double q : {0.0, 0.05, 0.5, 1.0}) {
    const auto res = drns_evaluate(log, mu, rhat, q, 1.0, 13);
    ok = ok && res.accepted_count == log.size();
    detail += fmt("q=%g accepted %zu/%zu; ", q, res.accepted_count, log.size());
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 1.0;
  return {ok, detail + fmt("%.3fs", secs)};
}

// --- 2 and 3 share one sweep ------------------------------------------------

struct LemmaSweep {
  std::size_t worlds = 0;
  std::size_t states = 0;
  double max_mean_error = 0.0;
  std::size_t mean_violations = 0;
  std::size_t range_violations = 0;
  std::size_t moment_violations = 0;
  double min_range_margin = LemmaReport::kInf();
  double min_moment_margin = LemmaReport::kInf();
  double secs = 0.0;
};

LemmaSweep lemma_sweep() {
  LemmaSweep s;
  const auto t0 = Clock::now();
  for (std::uint64_t w = 0; w < 120; ++w) {
    CounterRng rng(derive_seed(w, "lemma-world"));
    const int nx = 1 + static_cast<int>(rng.uniform() * 4);
    const int na = 2 + static_cast<int>(rng.uniform() * 3);
    const auto world = random_world(derive_seed(w, "table"), nx, na, 0.02);
    std::vector<ActionDistribution> base;
    std::vector<std::vector<double>> rtab;
    for (int x = 0; x < nx; ++x) {
      std::vector<double> p(na), r(na);
      double tot = 0.0;
      for (int a = 0; a < na; ++a) {
        p[a] = 0.05 + rng.uniform();
        tot += p[a];
        r[a] = rng.uniform();
      }
      for (double& v : p) v /= tot;
      base.emplace_back(std::move(p));
      rtab.push_back(std::move(r));
    }
    const GreedyTablePolicy pi(std::move(base), rng.uniform());
    const TableEstimator rhat(std::move(rtab));
    const double q = rng.uniform();
    const auto states = visited_states(world, pi, rhat, q, 1.0, 150, derive_seed(w, "states"));
    const auto rep = verify_lemmas(world, pi, rhat, states);
    ++s.worlds;
    s.states += rep.states;
    s.max_mean_error = std::max(s.max_mean_error, rep.max_mean_error);
    s.mean_violations += rep.mean_violations;
    s.range_violations += rep.range_violations;
    s.moment_violations += rep.second_moment_violations;
    s.min_range_margin = std::min(s.min_range_margin, rep.min_range_margin);
    s.min_moment_margin = std::min(s.min_moment_margin, rep.min_second_moment_margin);
  }
  s.secs = seconds_since(t0);
  return s;
}

Outcome ac2(const LemmaSweep& s) {
  const bool ok = s.worlds >= 100 && s.mean_violations == 0 && s.max_mean_error <= 1e-10 && s.secs < 30.0;
  return {ok, fmt("%zu worlds, %zu states, max |E[R_k]-E_pi[r]| = %.3g, %.2fs", s.worlds, s.states,
                  s.max_mean_error, s.secs)};
}

Outcome ac3(const LemmaSweep& s) {
  const bool ok = s.range_violations == 0 && s.moment_violations == 0;
  return {ok, fmt("range violations %zu (min margin %.4g), second-moment violations %zu (min margin %.4g)",
                  s.range_violations, s.min_range_margin, s.moment_violations, s.min_moment_margin)};
}

// --- 4 ---------------------------------------------------------------------

Outcome ac4() {
  const auto world = testing_worlds::w1();
  const auto pi = testing_worlds::w1_learner();
  const auto rhat = constant_estimator(0.5);
  // With q = 0 the cap is min(c_max, smallest ratio seen); every ratio is at
  // least 1/M, so c_max = 1/M keeps the cap constant and below every ratio.
  const double c_max = 1.0 / testing_worlds::greedy_sup_ratio(world, pi);
  const std::size_t runs = 10000;
  const auto t0 = Clock::now();
  double sd = 0.0, sd2 = 0.0, se_sum = 0.0, sv_sum = 0.0;
  for (std::size_t r = 0; r < runs; ++r) {
    const auto run = pv_run(world, pi, rhat, 0.0, c_max, 200, derive_seed(4000, "run") + r);
    const double d = run.estimate_full - run.pv_value_full;
    sd += d;
    sd2 += d * d;
    se_sum += run.estimate_full;
    sv_sum += run.pv_value_full;
  }
  const double secs = seconds_since(t0);
  const double n = static_cast<double>(runs);
  const double mean = sd / n;
  const double se = std::sqrt(std::max(0.0, (sd2 - n * mean * mean) / (n - 1.0)) / n);
  const bool ok = std::abs(mean) <= 3.0 * se && secs < 120.0;
  return {ok, fmt("mean R/C %.5f, mean E_PV %.5f, diff %.2e, 3SE %.2e, %.1fs", se_sum / n, sv_sum / n, mean, 3 * se,
                  secs)};
}

// --- 5 ---------------------------------------------------------------------

Outcome ac5() {
  const auto world = testing_worlds::eps_world();
  const auto pi = testing_worlds::eps_policy();
  const auto rhat = constant_estimator(0.5);
  const auto rep = bias_experiment(world, pi, rhat, 1.0, 1.0, 2, 10000, 5000);
  const double bound = theorem1_bound(2, 0.4);
  const bool ok = !rep.inconclusive() && std::abs(rep.measured_bias) <= bound + 3.0 * rep.standard_error;
  return {ok, fmt("eps %.3f, |bias| %.4f <= %.4f + 3*%.4f", rep.empirical_eps, std::abs(rep.measured_bias), bound,
                  rep.standard_error)};
}

// --- 6 ---------------------------------------------------------------------

Outcome ac6() {
  const auto world = testing_worlds::w1();
  const auto pi = testing_worlds::w1_learner();
  const auto rhat = constant_estimator(0.5);
  const double M = testing_worlds::greedy_sup_ratio(world, pi);
  const auto rep = coverage_experiment(world, pi, rhat, 0.05, 1.0, 500, M, 2000, 6000, 0.05);
  const bool ok = rep.rate_truncated() >= 0.935 && rep.skipped == 0;
  return {ok, fmt("M %.3f, coverage %.4f (full-block variant %.4f), required 0.935, mean bound %.3f",
                  M, rep.rate_truncated(), rep.rate_full(), rep.mean_bound)};
}

// --- 7 and 8 ---------------------------------------------------------------

nlohmann::json load_config(const char* name) {
  return read_json_file(fs::path(BANDIT_OPE_SOURCE_DIR) / "configs" / name);
}

const char* kDrns[] = {"DR-ns(q=0)", "DR-ns(q=0.01)", "DR-ns(q=0.05)", "DR-ns(q=0.1)"};

Outcome ac7() {
  const auto cfg = ExperimentConfig::from_json(load_config("static.json"));
  const auto t = run_experiment(cfg);
  const double rs = t.column("RS").mean_accepted;
  std::vector<double> acc;
  for (const char* n : kDrns) acc.push_back(t.column(n).mean_accepted);
  bool ok = true;
  for (std::size_t i = 1; i < acc.size(); ++i) ok = ok && acc[i] >= acc[i - 1];
  ok = ok && acc.back() >= 5.0 * rs;
  return {ok, fmt("mean accepted RS %.1f | q=0 %.1f, 0.01 %.1f, 0.05 %.1f, 0.1 %.1f (reference: 264 | 523, 3375, 4279, 4375)",
                  rs, acc[0], acc[1], acc[2], acc[3])};
}

struct Orderings {
  int first = 0;
  int second = 0;
  std::string log;
};

Orderings battery(const char* config, const std::function<bool(const TrialTable&)>& a,
                  const std::function<bool(const TrialTable&)>& b) {
  Orderings o;
  auto j = load_config(config);
  j["bootstrap_resamples"] = 200;  // intervals play no part here
  for (int s = 1; s <= 10; ++s) {
    j["seed"] = 1000 * s;
    const auto t = run_experiment(ExperimentConfig::from_json(j));
    const bool x = a(t), y = b(t);
    o.first += x;
    o.second += y;
    o.log += (x ? '+' : '-');
    o.log += (y ? '+' : '-');
    o.log += ' ';
  }
  return o;
}

double rmse_of(const TrialTable& t, const std::string& n) {
  const auto& c = t.column(n);
  return c.summary ? c.summary->rmse : std::numeric_limits<double>::infinity();
}

double bias_of(const TrialTable& t, const std::string& n) {
  const auto& c = t.column(n);
  return c.summary ? std::abs(c.summary->bias) : std::numeric_limits<double>::quiet_NaN();
}

Outcome ac8() {
  const auto st = battery(
      "static.json", [](const TrialTable& t) { return rmse_of(t, "DR-ns(q=0.05)") < rmse_of(t, "RS"); },
      [](const TrialTable& t) {
        for (const char* n : kDrns) {
          if (!(bias_of(t, "DM") > bias_of(t, n))) return false;
        }
        return true;
      });
  const auto ad = battery(
      "adaptive.json", [](const TrialTable& t) { return rmse_of(t, "DR-ns(q=0.01)") < rmse_of(t, "RS"); },
      [](const TrialTable& t) {
        for (const char* n : {"DR-ns(q=0)", "DR-ns(q=0.01)", "DR-ns(q=0.05)"}) {
          if (!(bias_of(t, "DR-ns(q=0.1)") > bias_of(t, n))) return false;
        }
        return true;
      });
  const bool ok = st.first >= 8 && st.second >= 8 && ad.first >= 8 && ad.second >= 8;
  return {ok, fmt("static rmse(q=.05)<RS %d/10, DM bias largest %d/10 [%s]; adaptive rmse(q=.01)<RS %d/10, "
                  "q=.1 bias largest %d/10 [%s]; reference: rmse .0055 vs .0191, DM bias .0150; rmse .0089 vs .0179, "
                  "q=.1 bias .0946",
                  st.first, st.second, st.log.c_str(), ad.first, ad.second, ad.log.c_str())};
}

// --- 9 ---------------------------------------------------------------------

Outcome ac9() {
  CounterRng rng(9);
  const auto world = random_world(90, 6, 4);
  const auto pi = TablePolicy({ActionDistribution({0.1, 0.2, 0.3, 0.4}), ActionDistribution({0.7, 0.1, 0.1, 0.1}),
                               ActionDistribution({0.25, 0.25, 0.25, 0.25}), ActionDistribution({0.0, 0.5, 0.5, 0.0}),
                               ActionDistribution({1.0, 0.0, 0.0, 0.0}), ActionDistribution({0.3, 0.3, 0.2, 0.2})});
  auto log = sample_world_log(world, 1000, 91);
  for (auto& e : log) e.reward = rng.uniform();  // continuous rewards exercise more rounding paths
  const double dr = dr_evaluate(log, pi, constant_estimator(0.0));
  const double ips = ips_evaluate(log, pi);
  bool same = std::memcmp(&dr, &ips, sizeof dr) == 0;

  std::size_t bad = 0;
  for (int m = 0; m < 1000; ++m) {
    QuantileTracker tr;
    const int n = 1 + static_cast<int>(rng.uniform() * 200);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int i = 0; i < n; ++i) {
      // coarse grid forces duplicates
      const double v = std::floor(rng.uniform() * 20.0) / 4.0;
      tr.insert(v);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (tr.quantile(0.0) != lo || tr.quantile(1.0) != hi) ++bad;
  }
  return {same && bad == 0, fmt("dr(r=0) %.17g vs ips %.17g (%s); quantile mismatches %zu/1000", dr, ips,
                                same ? "identical bits" : "differ", bad)};
}

// --- 10 --------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome ac10() {
  const fs::path dir = fs::temp_directory_path() / fs::path("bandit_ope_ac10_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const fs::path cfg = fs::path(BANDIT_OPE_SOURCE_DIR) / "configs" / "static.json";
  std::vector<std::string> reports;
  bool ran = true;
  for (const char* threads : {"1", "8", "1", "8"}) {
    const fs::path out = dir / (std::string("report_") + threads + "_" + std::to_string(reports.size()) + ".json");
    const std::string cmd = std::string("BANDIT_OPE_THREADS=") + threads + " \"" + BANDIT_OPE_CLI +
                            "\" experiment --config \"" + cfg.string() + "\" --output \"" + out.string() +
                            "\" > /dev/null";
    ran = ran && std::system(cmd.c_str()) == 0;
    reports.push_back(slurp(out));
  }
  bool same = ran && !reports[0].empty();
  for (const auto& r : reports) same = same && r == reports[0];
  fs::remove_all(dir);
  return {same, fmt("4 runs (threads 1, 8, 1, 8): %s, report size %zu bytes", same ? "byte-identical" : "DIFFER",
                    reports[0].size())};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](const char* id, const char* title, const std::function<Outcome()>& fn) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS " : "FAIL ") << id << " " << title << ": " << o.detail
              << fmt(" [%.1fs]", seconds_since(t0)) << std::endl;
  };

  report("AC1", "idempotent self-evaluation", ac1);
  LemmaSweep sweep;
  report("AC2", "per-event unbiasedness", [&] {
    sweep = lemma_sweep();
    return ac2(sweep);
  });
  report("AC3", "per-event range and second moment", [&] { return ac3(sweep); });
  report("AC4", "unbiased regime vs progressive validation", ac4);
  report("AC5", "bias bound", ac5);
  report("AC6", "deviation bound coverage", ac6);
  report("AC7", "acceptance-rate monotonicity", ac7);
  report("AC8", "table orderings over 10 seeds", ac8);
  report("AC9", "reduction identities", ac9);
  report("AC10", "thread-count determinism", ac10);
  std::cout << (10 - failures) << " of 10 passed" << std::endl;
  return failures ? 1 : 0;
}
