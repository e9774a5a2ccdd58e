#pragma once

// Supervised-to-bandit conversion, enumerable tiny worlds, dataset splitting,
// a synthetic multilabel generator, and the on-disk formats:
//   * supervised input: svmlight multilabel ("0,2 1:0.5 7:1.0", 1-based ids)
//   * exploration logs: JSON lines {"x": {"id": v}, "a": int, "r": real, "p": real}
//   * tiny worlds: JSON {"contexts": [...], "rewards": [[...]], "logging": [[...]]}

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "bandit_ope/core.hpp"
#include "bandit_ope/logistic.hpp"
#include "bandit_ope/policies.hpp"
#include "bandit_ope/rng.hpp"

namespace bandit_ope {

struct SupervisedDataset {
  std::vector<LabeledExample> examples;
  int num_classes = 0;
  std::uint32_t dimension = 0;

  std::size_t size() const noexcept { return examples.size(); }

  void validate() const {
    if (num_classes < 2) throw InvalidArgument("a supervised dataset needs K >= 2");
    for (const auto& e : examples) {
      for (int l : e.labels) {
        if (l < 0 || l >= num_classes) throw InvalidArgument("label out of range");
      }
    }
  }
};

// mu(.|x) for one example given its per-action scores s_a in [0.1, 1]:
// 0.3 * s_a / sum(s) + 0.7 * I(a in c) / |c|.
inline ActionDistribution conversion_distribution(std::span<const double> scores, const LabeledExample& example) {
  if (example.labels.empty()) throw InvalidArgument("example has no labels");
  double total = 0.0;
  for (double s : scores) total += s;
  const std::set<int> unique(example.labels.begin(), example.labels.end());
  std::vector<double> mu(scores.size());
  for (std::size_t a = 0; a < scores.size(); ++a) {
    mu[a] = 0.3 * scores[a] / total + (unique.count(static_cast<int>(a)) ? 0.7 / static_cast<double>(unique.size()) : 0.0);
  }
  return ActionDistribution(std::move(mu));
}

// One exploration event per example, in input order.
inline std::vector<ExplorationEvent> convert_supervised(const SupervisedDataset& dataset, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<ExplorationEvent> out;
  out.reserve(dataset.size());
  std::vector<double> scores(static_cast<std::size_t>(dataset.num_classes));
  for (const auto& ex : dataset.examples) {
    if (ex.labels.empty()) throw InvalidArgument("cannot convert an example with no labels");
    for (double& s : scores) s = rng.uniform(0.1, 1.0);
    const ActionDistribution mu = conversion_distribution(scores, ex);
    const int a = mu.sample(rng.uniform());
    out.push_back({ex.context, a, ex.has_label(a) ? 1.0 : 0.0, mu[a]});
  }
  return out;
}

// Disjoint splits of a seeded shuffle; split i takes floor(f_i * n) examples.
inline std::vector<SupervisedDataset> split_dataset(const SupervisedDataset& dataset, std::span<const double> fractions,
                                                    std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw InvalidArgument("split fractions must be positive");
    total += f;
  }
  if (total > 1.0 + 1e-9) throw InvalidArgument("split fractions sum to more than 1");

  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  CounterRng rng(seed);
  shuffle(order, rng);

  std::vector<SupervisedDataset> out;
  std::size_t pos = 0;
  for (double f : fractions) {
    const auto count = static_cast<std::size_t>(std::floor(f * static_cast<double>(dataset.size()) + 1e-9));
    SupervisedDataset part{{}, dataset.num_classes, dataset.dimension};
    for (std::size_t i = 0; i < count && pos < order.size(); ++i) part.examples.push_back(dataset.examples[order[pos++]]);
    out.push_back(std::move(part));
  }
  return out;
}

// Synthetic stand-in for a multilabel text-classification corpus: L2-normalized
// sparse features, one prototype direction per class, labels from noisy
// prototype similarity with the top class always present.
struct SyntheticSpec {
  std::size_t size = 8000;
  int num_classes = 4;
  std::uint32_t dimension = 40;
  std::uint32_t active_features = 8;
  double noise = 0.6;
  double second_label_margin = 0.15;
  std::uint64_t seed = 1;
};

inline SupervisedDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_classes < 2 || spec.dimension < 1 || spec.active_features < 1) {
    throw InvalidArgument("invalid synthetic dataset spec");
  }
  CounterRng rng(spec.seed);
  // Class prototypes: each class owns a block of preferred features.
  std::vector<std::vector<double>> proto(spec.num_classes, std::vector<double>(spec.dimension, 0.0));
  for (int c = 0; c < spec.num_classes; ++c) {
    for (std::uint32_t i = 0; i < spec.dimension; ++i) {
      const bool own = i % static_cast<std::uint32_t>(spec.num_classes) == static_cast<std::uint32_t>(c);
      proto[c][i] = (own ? 1.0 : 0.0) + 0.3 * rng.normal();
    }
  }
  SupervisedDataset ds{{}, spec.num_classes, spec.dimension};
  ds.examples.reserve(spec.size);
  const std::uint32_t active = std::min(spec.active_features, spec.dimension);
  for (std::size_t n = 0; n < spec.size; ++n) {
    const int topic = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(spec.num_classes)));
    std::vector<Feature> f;
    std::set<std::uint32_t> used;
    double sq = 0.0;
    while (used.size() < active) {
      // Half the mass on the topic's own features.
      std::uint32_t id;
      if (rng.bernoulli(0.5)) {
        const auto block = spec.dimension / static_cast<std::uint32_t>(spec.num_classes);
        id = static_cast<std::uint32_t>(rng.uniform_index(std::max<std::uint32_t>(block, 1))) *
                 static_cast<std::uint32_t>(spec.num_classes) +
             static_cast<std::uint32_t>(topic);
        if (id >= spec.dimension) id = static_cast<std::uint32_t>(topic);
      } else {
        id = static_cast<std::uint32_t>(rng.uniform_index(spec.dimension));
      }
      if (!used.insert(id).second) continue;
      const double v = 0.2 + rng.uniform();
      f.push_back({id, v});
      sq += v * v;
    }
    for (auto& x : f) x.value /= std::sqrt(sq);
    SparseVector x(std::move(f));

    std::vector<double> sim(spec.num_classes);
    int best = 0;
    for (int c = 0; c < spec.num_classes; ++c) {
      sim[c] = x.dot(proto[c]) + spec.noise * rng.normal() * 0.5;
      if (sim[c] > sim[best]) best = c;
    }
    std::vector<int> labels{best};
    for (int c = 0; c < spec.num_classes; ++c) {
      if (c != best && sim[c] > sim[best] - spec.second_label_margin) labels.push_back(c);
    }
    std::sort(labels.begin(), labels.end());
    ds.examples.push_back({std::move(x), std::move(labels), 1.0});
  }
  return ds;
}

// --- tiny worlds -----------------------------------------------------------

// Fully enumerable environment: context ids with probabilities D(x), Bernoulli
// rewards P(r = 1 | x, a), and a stationary logging table mu(a|x) > 0.
struct TinyWorld {
  std::vector<double> context_probs;
  std::vector<std::vector<double>> reward_probs;
  std::vector<ActionDistribution> logging;

  int num_contexts() const noexcept { return static_cast<int>(context_probs.size()); }
  int num_actions() const noexcept { return reward_probs.empty() ? 0 : static_cast<int>(reward_probs.front().size()); }

  static Context context(std::size_t id) { return SparseVector::one_hot(static_cast<std::uint32_t>(id)); }

  void validate() const {
    if (context_probs.empty() || context_probs.size() > 8) throw InvalidArgument("a tiny world has 1..8 contexts");
    const std::size_t k = reward_probs.empty() ? 0 : reward_probs.front().size();
    if (k < 1 || k > 4) throw InvalidArgument("a tiny world has 1..4 actions");
    if (reward_probs.size() != context_probs.size() || logging.size() != context_probs.size()) {
      throw InvalidArgument("tiny world tables disagree on the context count");
    }
    double s = 0.0;
    for (double p : context_probs) {
      if (!(p >= 0.0)) throw InvalidArgument("negative context probability");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) throw InvalidArgument("context probabilities must sum to 1");
    for (std::size_t x = 0; x < context_probs.size(); ++x) {
      if (reward_probs[x].size() != k || logging[x].size() != static_cast<int>(k)) {
        throw InvalidArgument("ragged tiny world table");
      }
      for (double r : reward_probs[x]) {
        if (!(r >= 0.0 && r <= 1.0)) throw InvalidArgument("reward probability out of [0, 1]");
      }
      logging[x].validate();
      for (double p : logging[x].probs()) {
        if (!(p > 0.0)) throw InvalidArgument("logging probabilities must be strictly positive");
      }
    }
  }

  TablePolicy logging_policy() const { return TablePolicy(logging); }

  std::vector<std::vector<double>> reward_table() const { return reward_probs; }
};

inline nlohmann::json world_to_json(const TinyWorld& w) {
  nlohmann::json logging = nlohmann::json::array();
  for (const auto& d : w.logging) logging.push_back(std::vector<double>(d.probs().begin(), d.probs().end()));
  return {{"contexts", w.context_probs}, {"rewards", w.reward_probs}, {"logging", logging}};
}

inline TinyWorld world_from_json(const nlohmann::json& j) {
  TinyWorld w;
  w.context_probs = j.at("contexts").get<std::vector<double>>();
  w.reward_probs = j.at("rewards").get<std::vector<std::vector<double>>>();
  for (const auto& row : j.at("logging")) w.logging.emplace_back(row.get<std::vector<double>>());
  w.validate();
  return w;
}

// Random valid world: Dirichlet-ish context and logging tables with entries
// bounded below by min_logging.
inline TinyWorld random_world(std::uint64_t seed, int num_contexts, int num_actions, double min_logging = 0.05) {
  CounterRng rng(seed);
  TinyWorld w;
  double total = 0.0;
  for (int x = 0; x < num_contexts; ++x) {
    w.context_probs.push_back(0.1 + rng.uniform());
    total += w.context_probs.back();
  }
  for (double& p : w.context_probs) p /= total;
  for (int x = 0; x < num_contexts; ++x) {
    std::vector<double> r(num_actions), mu(num_actions);
    double s = 0.0;
    for (int a = 0; a < num_actions; ++a) {
      r[a] = rng.uniform();
      mu[a] = 0.05 + rng.uniform();
      s += mu[a];
    }
    const double slack = 1.0 - min_logging * num_actions;
    for (double& m : mu) m = min_logging + slack * m / s;
    w.reward_probs.push_back(std::move(r));
    w.logging.emplace_back(std::move(mu));
  }
  w.validate();
  return w;
}

// One draw of (x, a, r, p); consumes three uniforms from rng.
inline ExplorationEvent sample_world_event(const TinyWorld& world, CounterRng& rng, const Policy* logging = nullptr) {
  const int x = ActionDistribution(world.context_probs).sample(rng.uniform());
  Context ctx = TinyWorld::context(static_cast<std::size_t>(x));
  const ActionDistribution mu = logging ? logging->distribution(ctx) : world.logging[x];
  const int a = mu.sample(rng.uniform());
  const double r = rng.uniform() < world.reward_probs[x][a] ? 1.0 : 0.0;
  return {std::move(ctx), a, r, mu[a]};
}

// i.i.d. log: x ~ D, a ~ mu(.|x) (world table, or `logging` queried with the
// empty history), r ~ Bernoulli(P(r=1|x,a)), p = mu(a|x).
inline std::vector<ExplorationEvent> sample_world_log(const TinyWorld& world, std::size_t n, std::uint64_t seed,
                                                      const Policy* logging = nullptr) {
  if (n < 1) throw InvalidArgument("need at least one event");
  CounterRng rng(seed);
  std::vector<ExplorationEvent> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_world_event(world, rng, logging));
  return out;
}

// --- file formats ----------------------------------------------------------

struct MultilabelReadResult {
  SupervisedDataset dataset;
  std::size_t dropped_unlabeled = 0;
};

// svmlight multilabel: "<l1,l2,...> <id:value> ..." with 1-based feature ids.
// Lines with an empty label field are dropped and counted. num_classes <= 0
// infers K from the largest label.
inline MultilabelReadResult read_multilabel(std::istream& in, int num_classes = 0) {
  MultilabelReadResult res;
  std::string line;
  std::size_t lineno = 0;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

    LabeledExample ex;
    std::size_t pos = 0;
    if (line[0] != ' ' && line[0] != '\t') {
      const std::size_t end = line.find_first_of(" \t");
      const std::string labels = line.substr(0, end);
      pos = end == std::string::npos ? line.size() : end;
      std::stringstream ls(labels);
      std::string tok;
      while (std::getline(ls, tok, ',')) {
        if (tok.empty()) continue;
        try {
          std::size_t used = 0;
          const int l = std::stoi(tok, &used);
          if (used != tok.size() || l < 0) throw std::invalid_argument(tok);
          ex.labels.push_back(l);
          max_label = std::max(max_label, l);
        } catch (const std::logic_error&) {
          throw ParseError(lineno, "bad label '" + tok + "'");
        }
      }
    }
    std::vector<Feature> feats;
    std::stringstream fs(line.substr(pos));
    std::string tok;
    while (fs >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos) throw ParseError(lineno, "feature '" + tok + "' lacks ':'");
      try {
        std::size_t used = 0;
        const long id = std::stol(tok.substr(0, colon), &used);
        if (used != colon || id < 1) throw std::invalid_argument(tok);
        const std::string val = tok.substr(colon + 1);
        const double v = std::stod(val, &used);
        if (used != val.size()) throw std::invalid_argument(tok);
        feats.push_back({static_cast<std::uint32_t>(id - 1), v});
      } catch (const std::logic_error&) {
        throw ParseError(lineno, "bad feature '" + tok + "'");
      }
    }
    if (ex.labels.empty()) {
      ++res.dropped_unlabeled;
      continue;
    }
    std::sort(ex.labels.begin(), ex.labels.end());
    ex.labels.erase(std::unique(ex.labels.begin(), ex.labels.end()), ex.labels.end());
    ex.context = SparseVector(std::move(feats));
    res.dataset.dimension = std::max(res.dataset.dimension, ex.context.dimension());
    res.dataset.examples.push_back(std::move(ex));
  }
  res.dataset.num_classes = num_classes > 0 ? num_classes : max_label + 1;
  if (num_classes > 0 && max_label >= num_classes) throw InvalidArgument("label exceeds the declared class count");
  return res;
}

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_multilabel(std::ostream& out, const SupervisedDataset& ds) {
  for (const auto& ex : ds.examples) {
    for (std::size_t i = 0; i < ex.labels.size(); ++i) out << (i ? "," : "") << ex.labels[i];
    for (const auto& f : ex.context.features()) out << ' ' << (f.id + 1) << ':' << format_real(f.value);
    out << '\n';
  }
}

inline void write_events(std::ostream& out, std::span<const ExplorationEvent> events) {
  for (const auto& e : events) {
    out << "{\"x\":{";
    bool first = true;
    for (const auto& f : e.context.features()) {
      out << (first ? "" : ",") << '"' << f.id << "\":" << format_real(f.value);
      first = false;
    }
    out << "},\"a\":" << e.action << ",\"r\":" << format_real(e.reward) << ",\"p\":" << format_real(e.propensity)
        << "}\n";
  }
}

inline std::vector<ExplorationEvent> read_events(std::istream& in, int num_actions = -1) {
  std::vector<ExplorationEvent> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ExplorationEvent e;
    try {
      const auto j = nlohmann::json::parse(line);
      std::vector<Feature> feats;
      for (const auto& [key, v] : j.at("x").items()) {
        std::size_t used = 0;
        const unsigned long id = std::stoul(key, &used);
        if (used != key.size()) throw std::invalid_argument(key);
        feats.push_back({static_cast<std::uint32_t>(id), v.get<double>()});
      }
      e.context = SparseVector(std::move(feats));
      e.action = j.at("a").get<int>();
      e.reward = j.at("r").get<double>();
      e.propensity = j.at("p").get<double>();
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError(lineno, std::string("malformed event: ") + ex.what());
    } catch (const std::logic_error& ex) {
      throw ParseError(lineno, std::string("malformed event: ") + ex.what());
    }
    try {
      validate_event(e, num_actions);
    } catch (const InvalidArgument& ex) {
      throw ParseError(lineno, std::string("rejected record: ") + ex.what());
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace bandit_ope
