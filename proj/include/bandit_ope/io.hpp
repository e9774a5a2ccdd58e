#pragma once

// JSON descriptions of target policies and reward estimators.
//
//   {"type": "uniform", "k": 4}
//   {"type": "eps_greedy", "eps": 0.1, "model": {...}}
//   {"type": "table", "table": [[...], ...]}
//   {"type": "greedy_table", "eta": 0.5, "table": [[...], ...]}
//   {"type": "adaptive", "seed_file": "seed.svm", "k": 4, "period": 15,
//    "horizon": 300, "eps": 0.1, "learner": {...}}
//
//   {"type": "constant", "value": 0.5}
//   {"type": "model", "model": {...}}
//   {"type": "table", "table": [[...], ...]}

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "bandit_ope/core.hpp"
#include "bandit_ope/datagen.hpp"
#include "bandit_ope/errors.hpp"
#include "bandit_ope/logistic.hpp"
#include "bandit_ope/policies.hpp"

namespace bandit_ope {

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NoDataError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline std::vector<ActionDistribution> table_from_json(const nlohmann::json& j) {
  std::vector<ActionDistribution> rows;
  for (const auto& r : j) rows.emplace_back(r.get<std::vector<double>>());
  return rows;
}

inline LearnerConfig learner_from_json(const nlohmann::json& j, LearnerConfig c = {}) {
  c.lambda = j.value("lambda", c.lambda);
  c.iterations = j.value("iterations", c.iterations);
  c.warm_iterations = j.value("warm_iterations", c.warm_iterations);
  if (!(c.lambda > 0.0) || c.iterations < 1 || c.warm_iterations < 0) throw ConfigError("invalid learner settings");
  return c;
}

// Relative paths inside the document resolve against base_dir.
inline std::shared_ptr<const Policy> policy_from_json(const nlohmann::json& j,
                                                      const std::filesystem::path& base_dir = {}) {
  try {
    const auto type = j.at("type").get<std::string>();
    if (type == "uniform") return std::make_shared<UniformPolicy>(j.at("k").get<int>());
    if (type == "eps_greedy") {
      auto model = std::make_shared<const LinearModel>(LinearModel::from_json(j.at("model")));
      return std::make_shared<EpsGreedyPolicy>(model, j.value("eps", 0.1));
    }
    if (type == "table") return std::make_shared<TablePolicy>(table_from_json(j.at("table")));
    if (type == "greedy_table") return std::make_shared<GreedyTablePolicy>(table_from_json(j.at("table")), j.at("eta").get<double>());
    if (type == "adaptive") {
      std::filesystem::path seed_path = j.at("seed_file").get<std::string>();
      if (seed_path.is_relative()) seed_path = base_dir / seed_path;
      std::ifstream in(seed_path);
      if (!in) throw NoDataError("cannot open " + seed_path.string());
      const int k = j.at("k").get<int>();
      auto seeds = read_multilabel(in, k).dataset;
      auto shared = std::make_shared<const std::vector<LabeledExample>>(std::move(seeds.examples));
      const LearnerConfig learner = j.contains("learner") ? learner_from_json(j.at("learner")) : LearnerConfig{};
      return std::make_shared<AdaptivePolicy>(shared, k, j.value("period", 15), j.value("horizon", 300),
                                              j.value("eps", 0.1), learner);
    }
    throw ConfigError("unknown policy type '" + type + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed policy: ") + e.what());
  }
}

inline std::shared_ptr<const RewardEstimator> estimator_from_json(const nlohmann::json& j) {
  try {
    const auto type = j.at("type").get<std::string>();
    if (type == "constant") return std::make_shared<ConstantEstimator>(j.at("value").get<double>());
    if (type == "model") {
      return std::make_shared<ModelRewardEstimator>(
          std::make_shared<const LinearModel>(LinearModel::from_json(j.at("model"))));
    }
    if (type == "table") return std::make_shared<TableEstimator>(j.at("table").get<std::vector<std::vector<double>>>());
    throw ConfigError("unknown reward estimator type '" + type + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed reward estimator: ") + e.what());
  }
}

inline nlohmann::json eps_greedy_to_json(const LinearModel& model, double eps) {
  return {{"type", "eps_greedy"}, {"eps", eps}, {"model", model.to_json()}};
}

inline nlohmann::json model_estimator_to_json(const LinearModel& model) {
  return {{"type", "model"}, {"model", model.to_json()}};
}

}  // namespace bandit_ope
