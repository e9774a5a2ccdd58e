#pragma once

// Deterministic one-vs-all logistic regression.
//
// Each class a is fit by full-batch gradient descent on
//   J(w, b) = (1/W) sum_i omega_i [softplus(s_i) - y_i s_i] + lambda/(2W) |w|^2,
// s_i = w.x_i + b, W = sum_i omega_i, with the bias left unregularized. The
// step is 1/L for L = lambda/W + 0.25 * mean_omega(|x_i|^2 + 1), an upper
// bound on the gradient's Lipschitz constant, so J never increases.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "bandit_ope/core.hpp"

namespace bandit_ope {

// Fully labeled (x, c) with an optional importance weight.
struct LabeledExample {
  Context context;
  std::vector<int> labels;
  double weight = 1.0;

  bool has_label(int a) const noexcept { return std::find(labels.begin(), labels.end(), a) != labels.end(); }
};

// Bandit feedback for a single classifier: included only in action's data set.
struct PartialExample {
  Context context;
  int action = 0;
  double target = 0.0;
  double weight = 1.0;
};

struct LearnerConfig {
  double lambda = 1.0;
  int iterations = 500;
  double gradient_tolerance = 1e-3;
  // Steps taken when training starts from an earlier model; 0 disables warm starts.
  int warm_iterations = 0;
};

inline double sigmoid(double s) noexcept {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

inline double softplus(double s) noexcept { return s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }

class LinearModel {
 public:
  LinearModel() = default;
  LinearModel(int num_classes, std::uint32_t dimension)
      : weights_(static_cast<std::size_t>(num_classes), std::vector<double>(dimension, 0.0)),
        bias_(static_cast<std::size_t>(num_classes), 0.0),
        gradient_norms_(static_cast<std::size_t>(num_classes), 0.0),
        dimension_(dimension) {}

  int num_classes() const noexcept { return static_cast<int>(bias_.size()); }
  std::uint32_t dimension() const noexcept { return dimension_; }

  double score(const Context& x, int a) const { return x.dot(weights_.at(a)) + bias_.at(a); }

  // Per-class P(a in c | x); not normalized across classes.
  std::vector<double> predict_proba(const Context& x) const {
    std::vector<double> p(bias_.size());
    for (int a = 0; a < num_classes(); ++a) p[a] = sigmoid(score(x, a));
    return p;
  }

  // Highest probability, ties to the lowest index.
  int argmax(const Context& x) const {
    int best = 0;
    double best_score = score(x, 0);
    for (int a = 1; a < num_classes(); ++a) {
      const double s = score(x, a);
      if (s > best_score) {
        best = a;
        best_score = s;
      }
    }
    return best;
  }

  std::vector<double>& weights(int a) { return weights_.at(a); }
  const std::vector<double>& weights(int a) const { return weights_.at(a); }
  double& bias(int a) { return bias_.at(a); }
  double bias(int a) const { return bias_.at(a); }
  double gradient_norm(int a) const { return gradient_norms_.at(a); }
  void set_gradient_norm(int a, double g) { gradient_norms_.at(a) = g; }

  double lambda = 1.0;
  int iterations = 0;
  std::size_t trained_on = 0;

  nlohmann::json to_json() const {
    nlohmann::json classes = nlohmann::json::array();
    for (int a = 0; a < num_classes(); ++a) {
      nlohmann::json w = nlohmann::json::object();
      for (std::uint32_t i = 0; i < dimension_; ++i) {
        if (weights_[a][i] != 0.0) w[std::to_string(i)] = weights_[a][i];
      }
      classes.push_back({{"bias", bias_[a]}, {"weights", w}});
    }
    return {{"k", num_classes()},        {"dimension", dimension_}, {"lambda", lambda},
            {"iterations", iterations},  {"trained_on", trained_on}, {"classes", classes}};
  }

  static LinearModel from_json(const nlohmann::json& j) {
    const int k = j.at("k").get<int>();
    const auto& classes = j.at("classes");
    if (k < 1 || classes.size() != static_cast<std::size_t>(k)) throw InvalidArgument("model class count mismatch");
    std::uint32_t dim = j.value("dimension", 0u);
    for (const auto& c : classes) {
      for (const auto& [key, _] : c.at("weights").items()) dim = std::max<std::uint32_t>(dim, std::stoul(key) + 1);
    }
    LinearModel m(k, dim);
    m.lambda = j.value("lambda", 1.0);
    m.iterations = j.value("iterations", 0);
    m.trained_on = j.value("trained_on", std::size_t{0});
    for (int a = 0; a < k; ++a) {
      m.bias_[a] = classes[a].at("bias").get<double>();
      for (const auto& [key, v] : classes[a].at("weights").items()) m.weights_[a][std::stoul(key)] = v.get<double>();
    }
    return m;
  }

 private:
  std::vector<std::vector<double>> weights_;
  std::vector<double> bias_;
  std::vector<double> gradient_norms_;
  std::uint32_t dimension_ = 0;
};

namespace detail {

struct BinaryRow {
  const Context* x;
  double y;
  double w;
};

struct Objective {
  double value = 0.0;
  std::vector<double> grad_w;
  double grad_b = 0.0;
};

// J and its gradient; see the header comment for the exact form.
inline Objective logistic_objective(std::span<const BinaryRow> rows, std::span<const double> w, double b,
                                    double lambda) {
  Objective out;
  out.grad_w.assign(w.size(), 0.0);
  double total_weight = 0.0;
  for (const auto& r : rows) total_weight += r.w;
  if (total_weight <= 0.0) return out;

  for (const auto& r : rows) {
    const double s = r.x->dot(w) + b;
    out.value += r.w * (softplus(s) - r.y * s);
    const double g = r.w * (sigmoid(s) - r.y);
    out.grad_b += g;
    for (const auto& f : r.x->features()) {
      if (f.id < w.size()) out.grad_w[f.id] += g * f.value;
    }
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    sq += w[i] * w[i];
    out.grad_w[i] = (out.grad_w[i] + lambda * w[i]) / total_weight;
  }
  out.value = (out.value + 0.5 * lambda * sq) / total_weight;
  out.grad_b /= total_weight;
  return out;
}

inline double gradient_norm(const Objective& o) {
  double s = o.grad_b * o.grad_b;
  for (double g : o.grad_w) s += g * g;
  return std::sqrt(s);
}

// All classes are stepped together so each row's features are read once per
// iteration. Class a only sees rows whose weight for a is positive.
struct MultiProblem {
  int k = 0;
  std::uint32_t dim = 0;                 // compact feature count
  std::vector<std::uint32_t> original;   // compact id -> feature id
  std::vector<std::int32_t> compact;     // feature id -> compact id, -1 if unused
  std::vector<std::size_t> offsets{0};
  std::vector<std::uint32_t> ids;
  std::vector<double> vals;
  std::vector<int> only;        // -1: row enters every class, else its single class
  std::vector<double> targets;  // k entries per row
  std::vector<double> weights;  // one per row
  std::vector<double> total_weight;
  std::vector<double> curvature;

  void add(const Context& x, int cls, const double* y, double w) {
    for (const auto& f : x.features()) {
      ids.push_back(static_cast<std::uint32_t>(compact[f.id]));
      vals.push_back(f.value);
    }
    offsets.push_back(ids.size());
    only.push_back(cls);
    for (int a = 0; a < k; ++a) targets.push_back(y[a]);
    weights.push_back(w);
    const double c = w * (x.squared_norm() + 1.0);
    for (int a = 0; a < k; ++a) {
      if (cls < 0 || cls == a) {
        total_weight[a] += w;
        curvature[a] += c;
      }
    }
  }

  std::size_t rows() const noexcept { return weights.size(); }

  // Per-class rows for the reference objective.
  std::vector<BinaryRow> binary_rows(int a, std::span<const Context* const> contexts) const {
    std::vector<BinaryRow> out;
    for (std::size_t i = 0; i < rows(); ++i) {
      if (only[i] < 0 || only[i] == a) out.push_back({contexts[i], targets[i * k + a], weights[i]});
    }
    return out;
  }
};

// Unnormalized loss gradient summed over rows. KC > 0 fixes the class count
// at compile time; KC = 0 reads it from the problem.
template <int KC>
void gradient_pass(const MultiProblem& p, const double* W, const double* b, double* G, double* gb) {
  constexpr int kMax = 64;
  const int k = KC > 0 ? KC : p.k;
  const std::uint32_t* ids = p.ids.data();
  const double* vals = p.vals.data();
  double s[KC > 0 ? KC : kMax];
  double g[KC > 0 ? KC : kMax];
  std::vector<double> s_heap, g_heap;
  double* sp = s;
  double* gp = g;
  if (KC == 0 && k > kMax) {
    s_heap.resize(k);
    g_heap.resize(k);
    sp = s_heap.data();
    gp = g_heap.data();
  }
  for (std::size_t i = 0; i < p.rows(); ++i) {
    const std::size_t lo = p.offsets[i], hi = p.offsets[i + 1];
    const double* y = &p.targets[i * k];
    const double wt = p.weights[i];
    const int cls = p.only[i];
    if (cls < 0) {
      for (int a = 0; a < k; ++a) sp[a] = b[a];
      for (std::size_t j = lo; j < hi; ++j) {
        const double* w = W + static_cast<std::size_t>(ids[j]) * k;
        const double v = vals[j];
        for (int a = 0; a < k; ++a) sp[a] += w[a] * v;
      }
      for (int a = 0; a < k; ++a) {
        gp[a] = wt * (sigmoid(sp[a]) - y[a]);
        gb[a] += gp[a];
      }
      for (std::size_t j = lo; j < hi; ++j) {
        double* gr = G + static_cast<std::size_t>(ids[j]) * k;
        const double v = vals[j];
        for (int a = 0; a < k; ++a) gr[a] += gp[a] * v;
      }
    } else {
      double sc = b[cls];
      for (std::size_t j = lo; j < hi; ++j) sc += W[static_cast<std::size_t>(ids[j]) * k + cls] * vals[j];
      const double gc = wt * (sigmoid(sc) - y[cls]);
      gb[cls] += gc;
      for (std::size_t j = lo; j < hi; ++j) G[static_cast<std::size_t>(ids[j]) * k + cls] += gc * vals[j];
    }
  }
}

// Gradient descent on every class of `p`. W is laid out feature-major
// (W[id * k + a]). Returns the per-class squared gradient norm at the final
// iterate.
inline std::vector<double> fit_multi(const MultiProblem& p, std::vector<double>& W, std::vector<double>& b,
                                     int iterations, double lambda,
                                     [[maybe_unused]] std::span<const Context* const> contexts = {}) {
  const int k = p.k;
  std::vector<double> step(k, 0.0);
  for (int a = 0; a < k; ++a) {
    if (p.total_weight[a] > 0.0) step[a] = 1.0 / (lambda / p.total_weight[a] + 0.25 * p.curvature[a] / p.total_weight[a]);
  }
  std::vector<double> inv_total(k, 0.0);
  for (int a = 0; a < k; ++a) inv_total[a] = p.total_weight[a] > 0.0 ? 1.0 / p.total_weight[a] : 0.0;
  std::vector<double> G(W.size()), gb(k);

  auto compute_gradient = [&] {
    std::fill(G.begin(), G.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    switch (k) {
      case 2: gradient_pass<2>(p, W.data(), b.data(), G.data(), gb.data()); break;
      case 3: gradient_pass<3>(p, W.data(), b.data(), G.data(), gb.data()); break;
      case 4: gradient_pass<4>(p, W.data(), b.data(), G.data(), gb.data()); break;
      default: gradient_pass<0>(p, W.data(), b.data(), G.data(), gb.data()); break;
    }
    for (std::size_t d = 0; d < p.dim; ++d) {
      double* g = &G[d * k];
      const double* w = &W[d * k];
      for (int a = 0; a < k; ++a) g[a] = (g[a] + lambda * w[a]) * inv_total[a];
    }
    for (int a = 0; a < k; ++a) gb[a] *= inv_total[a];
  };

#ifndef NDEBUG
  auto objective = [&](int a) {
    std::vector<double> wa(p.compact.size());
    for (std::uint32_t d = 0; d < p.dim; ++d) wa[p.original[d]] = W[static_cast<std::size_t>(d) * k + a];
    const auto rows = p.binary_rows(a, contexts);
    return logistic_objective(rows, wa, b[a], lambda).value;
  };
  std::vector<double> previous(k);
  if (!contexts.empty()) {
    for (int a = 0; a < k; ++a) previous[a] = objective(a);
  }
#endif
  for (int it = 0; it < iterations; ++it) {
    compute_gradient();
    for (std::size_t d = 0; d < p.dim; ++d) {
      for (int a = 0; a < k; ++a) W[d * k + a] -= step[a] * G[d * k + a];
    }
    for (int a = 0; a < k; ++a) b[a] -= step[a] * gb[a];
#ifndef NDEBUG
    if (!contexts.empty()) {
      for (int a = 0; a < k; ++a) {
        const double current = objective(a);
        assert(current <= previous[a] + 1e-12 * (1.0 + std::abs(previous[a])) && "objective increased");
        previous[a] = current;
      }
    }
#endif
  }
  compute_gradient();
  std::vector<double> norms(k, 0.0);
  for (std::size_t d = 0; d < p.dim; ++d) {
    for (int a = 0; a < k; ++a) norms[a] += G[d * k + a] * G[d * k + a];
  }
  for (int a = 0; a < k; ++a) norms[a] += gb[a] * gb[a];
  return norms;  // squared
}

}  // namespace detail

// Full examples enter every class with target I(a in c); partial examples
// enter only their action's class with their observed target. With
// `warm_start`, descent begins at that model's parameters instead of zero
// and runs `config.warm_iterations` steps.
inline LinearModel train_logistic_ova(std::span<const LabeledExample> examples, int num_classes,
                                      const LearnerConfig& config = {},
                                      std::span<const PartialExample> partial = {},
                                      const LinearModel* warm_start = nullptr) {
  if (examples.empty() && partial.empty()) throw NoDataError("no training examples");
  if (num_classes < 1) throw InvalidArgument("need at least one class");
  if (!(config.lambda > 0.0)) throw InvalidArgument("lambda must be positive");
  if (config.iterations < 0 || config.warm_iterations < 0) throw InvalidArgument("iteration count must be nonnegative");

  std::uint32_t dim = 0;
  for (const auto& e : examples) dim = std::max(dim, e.context.dimension());
  for (const auto& e : partial) dim = std::max(dim, e.context.dimension());
  if (warm_start) {
    if (warm_start->num_classes() != num_classes) throw InvalidArgument("warm start class count mismatch");
    dim = std::max(dim, warm_start->dimension());
  }

  // Descent runs over the features that occur in the data; the rest only
  // feel the penalty.
  detail::MultiProblem problem;
  problem.k = num_classes;
  problem.compact.assign(dim, -1);
  auto mark = [&](const Context& x) {
    for (const auto& f : x.features()) problem.compact[f.id] = 0;
  };
  for (const auto& e : examples) mark(e.context);
  for (const auto& e : partial) mark(e.context);
  for (std::uint32_t d = 0; d < dim; ++d) {
    if (problem.compact[d] == 0) {
      problem.compact[d] = static_cast<std::int32_t>(problem.original.size());
      problem.original.push_back(d);
    } else {
      problem.compact[d] = -1;
    }
  }
  problem.dim = static_cast<std::uint32_t>(problem.original.size());
  problem.total_weight.assign(num_classes, 0.0);
  problem.curvature.assign(num_classes, 0.0);
  std::vector<const Context*> contexts;
  std::vector<double> y(num_classes);
  for (const auto& e : examples) {
    if (!(e.weight > 0.0)) throw InvalidArgument("example weight must be positive");
    for (int a = 0; a < num_classes; ++a) y[a] = e.has_label(a) ? 1.0 : 0.0;
    problem.add(e.context, -1, y.data(), e.weight);
    contexts.push_back(&e.context);
  }
  for (const auto& e : partial) {
    if (e.action < 0 || e.action >= num_classes) throw InvalidArgument("partial example action out of range");
    if (!(e.weight > 0.0)) throw InvalidArgument("example weight must be positive");
    std::fill(y.begin(), y.end(), 0.0);
    y[e.action] = e.target;
    problem.add(e.context, e.action, y.data(), e.weight);
    contexts.push_back(&e.context);
  }

  const std::size_t m = problem.dim;
  std::vector<double> W(m * num_classes, 0.0), b(num_classes, 0.0);
  if (warm_start) {
    for (int a = 0; a < num_classes; ++a) {
      b[a] = warm_start->bias(a);
      const auto& wa = warm_start->weights(a);
      for (std::size_t d = 0; d < m; ++d) {
        if (problem.original[d] < wa.size()) W[d * num_classes + a] = wa[problem.original[d]];
      }
    }
  }
  const int iterations = warm_start ? config.warm_iterations : config.iterations;
  auto norms = detail::fit_multi(problem, W, b, iterations, config.lambda, contexts);

  LinearModel model(num_classes, dim);
  model.lambda = config.lambda;
  model.iterations = iterations + (warm_start ? warm_start->iterations : 0);
  model.trained_on = examples.size() + partial.size();
  for (int a = 0; a < num_classes; ++a) {
    model.bias(a) = b[a];
    auto& wa = model.weights(a);
    if (warm_start && problem.total_weight[a] > 0.0) {
      // Unused features decay geometrically under the penalty alone.
      const double tw = problem.total_weight[a];
      const double step = 1.0 / (config.lambda / tw + 0.25 * problem.curvature[a] / tw);
      const double decay = std::pow(1.0 - step * config.lambda / tw, iterations);
      const auto& prev = warm_start->weights(a);
      for (std::uint32_t d = 0; d < dim && d < prev.size(); ++d) {
        if (problem.compact[d] < 0 && prev[d] != 0.0) {
          wa[d] = prev[d] * decay;
          const double g = config.lambda * wa[d] / tw;
          norms[a] += g * g;
        }
      }
    } else if (warm_start) {
      wa = warm_start->weights(a);
      wa.resize(dim, 0.0);
    }
    for (std::size_t d = 0; d < m; ++d) wa[problem.original[d]] = W[d * num_classes + a];
    model.set_gradient_norm(a, std::sqrt(norms[a]));
  }
  return model;
}

inline std::vector<double> predict_proba(const LinearModel& model, const Context& x) { return model.predict_proba(x); }

}  // namespace bandit_ope
