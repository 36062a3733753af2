#include "fedroute/routing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "fedroute/numeric.hpp"
#include "fedroute/threading.hpp"

namespace fedroute {

std::vector<ModelEstimate> MlpEstimator::estimate(const EmbeddingVector& x) const {
  const auto pred = mlp_forward(params_, arch_, x, false, 0, clamp_cost_);
  std::vector<ModelEstimate> out(pred.accuracy.size());
  for (std::size_t m = 0; m < out.size(); ++m) {
    out[m] = {pred.accuracy[m], pred.cost_norm[m] * cost_normalizer_, true};
  }
  return out;
}

std::vector<ModelEstimate> KmeansEstimator::estimate(const EmbeddingVector& x) const {
  bool any = false;
  for (const auto& f : state_.fallback) any = any || f.count > 0;
  if (!any) throw std::runtime_error("KmeansEstimator: untrained router (no statistics)");

  const auto k = static_cast<std::size_t>(assign_cluster(state_, x));
  std::vector<ModelEstimate> out(static_cast<std::size_t>(state_.n_models));
  for (int m = 0; m < state_.n_models; ++m) {
    const auto& cell = state_.cell(k, static_cast<std::size_t>(m));
    const auto& source =
        cell.count > 0 ? cell : state_.fallback[static_cast<std::size_t>(m)];
    if (source.count == 0) continue;
    out[static_cast<std::size_t>(m)] = {source.mean_accuracy, source.mean_cost, true};
  }
  return out;
}

std::vector<ModelEstimate> OracleEstimator::estimate(const EmbeddingVector& x) const {
  std::vector<ModelEstimate> out(static_cast<std::size_t>(oracle_.n_models()));
  for (int m = 0; m < oracle_.n_models(); ++m) {
    out[static_cast<std::size_t>(m)] = {oracle_.true_accuracy(x, m), oracle_.true_cost(x, m),
                                        true};
  }
  return out;
}

int route(std::span<const ModelEstimate> estimates, double lambda) {
  int best = -1;
  double best_utility = 0.0;
  for (std::size_t m = 0; m < estimates.size(); ++m) {
    if (!estimates[m].present) continue;
    const double u = estimates[m].utility(lambda);
    if (best < 0 || u > best_utility ||
        (u == best_utility &&
         estimates[m].cost < estimates[static_cast<std::size_t>(best)].cost)) {
      best = static_cast<int>(m);
      best_utility = u;
    }
  }
  if (best < 0) throw std::runtime_error("route: no model has an estimate");
  return best;
}

std::vector<double> predict_utilities(const MlpRouterParams& params,
                                      const MlpArchitecture& arch, const EmbeddingVector& x,
                                      double lambda, double cost_normalizer) {
  if (lambda < 0.0) throw std::invalid_argument("predict_utilities: lambda must be >= 0");
  const auto pred = mlp_forward(params, arch, x, false, 0, true);
  std::vector<double> utilities(pred.accuracy.size());
  for (std::size_t m = 0; m < utilities.size(); ++m) {
    utilities[m] = pred.accuracy[m] - lambda * pred.cost_norm[m] * cost_normalizer;
  }
  return utilities;
}

namespace {

void check_ground_truth(const FullEvaluation& q, int chosen) {
  const auto m = static_cast<std::size_t>(chosen);
  if (m >= q.accuracy.size() || m >= q.cost.size() || std::isnan(q.accuracy[m]) ||
      std::isnan(q.cost[m])) {
    throw std::runtime_error("evaluate_policy: missing ground truth for routed model " +
                             std::to_string(chosen));
  }
}

std::vector<std::vector<ModelEstimate>> precompute_estimates(
    const UtilityEstimator& estimator, const std::vector<FullEvaluation>& queries,
    int threads) {
  std::vector<std::vector<ModelEstimate>> estimates(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t i) {
    estimates[i] = estimator.estimate(queries[i].embedding);
  });
  return estimates;
}

PolicyScore score_at_lambda(const std::vector<std::vector<ModelEstimate>>& estimates,
                            const std::vector<FullEvaluation>& queries, double lambda) {
  KahanSum acc;
  KahanSum cost;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const int chosen = route(estimates[i], lambda);
    check_ground_truth(queries[i], chosen);
    acc.add(queries[i].accuracy[static_cast<std::size_t>(chosen)]);
    cost.add(queries[i].cost[static_cast<std::size_t>(chosen)]);
  }
  const double n = static_cast<double>(queries.size());
  return {acc.value() / n, cost.value() / n};
}

}  // namespace

PolicyScore evaluate_policy(const UtilityEstimator& estimator,
                            const std::vector<FullEvaluation>& test_queries, double lambda,
                            int threads) {
  if (lambda < 0.0) throw std::invalid_argument("evaluate_policy: lambda must be >= 0");
  if (test_queries.empty()) throw std::invalid_argument("evaluate_policy: empty test set");
  const auto estimates = precompute_estimates(estimator, test_queries, threads);
  return score_at_lambda(estimates, test_queries, lambda);
}

FrontierCurve sweep_lambda(const UtilityEstimator& estimator,
                           const std::vector<FullEvaluation>& test_queries,
                           const LambdaGrid& grid, int threads) {
  if (grid.n_points < 2) throw std::invalid_argument("sweep_lambda: need >= 2 grid points");
  if (test_queries.empty()) throw std::invalid_argument("sweep_lambda: empty test set");
  const auto lambdas =
      logspace(grid.lambda_min, grid.lambda_max, static_cast<std::size_t>(grid.n_points));
  const auto estimates = precompute_estimates(estimator, test_queries, threads);

  FrontierCurve curve;
  curve.points.resize(lambdas.size());
  parallel_for(lambdas.size(), threads, [&](std::size_t i) {
    const auto score = score_at_lambda(estimates, test_queries, lambdas[i]);
    curve.points[i] = {lambdas[i], score.mean_cost, score.mean_accuracy};
  });
  curve.auc = normalized_auc(curve.points);
  return curve;
}

double normalized_auc(const std::vector<FrontierPoint>& points) {
  if (points.empty()) throw std::invalid_argument("normalized_auc: empty curve");
  // Collapse duplicate costs to their best accuracy (the attainable frontier).
  std::map<double, double> best_by_cost;
  for (const auto& p : points) {
    auto [it, inserted] = best_by_cost.try_emplace(p.mean_cost, p.mean_accuracy);
    if (!inserted) it->second = std::max(it->second, p.mean_accuracy);
  }
  if (best_by_cost.size() == 1) return best_by_cost.begin()->second;

  KahanSum area;
  auto prev = best_by_cost.begin();
  for (auto it = std::next(best_by_cost.begin()); it != best_by_cost.end(); ++it) {
    area.add(0.5 * (it->second + prev->second) * (it->first - prev->first));
    prev = it;
  }
  const double range = best_by_cost.rbegin()->first - best_by_cost.begin()->first;
  return area.value() / range;
}

double suboptimality(const UtilityEstimator& policy, const SyntheticOracle& oracle,
                     const std::vector<FullEvaluation>& test_queries, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("suboptimality: lambda must be >= 0");
  if (test_queries.empty()) throw std::invalid_argument("suboptimality: empty test set");
  KahanSum gap;
  for (const auto& q : test_queries) {
    const int best = oracle_best_model(oracle, q.embedding, lambda);
    const int chosen = route(policy.estimate(q.embedding), lambda);
    gap.add(oracle.true_utility(q.embedding, best, lambda) -
            oracle.true_utility(q.embedding, chosen, lambda));
  }
  return gap.value() / static_cast<double>(test_queries.size());
}

void save_curve(const std::string& path, const FrontierCurve& curve) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "lambda,mean_cost,mean_accuracy\n";
  for (const auto& p : curve.points) {
    out << format_double(p.lambda) << ',' << format_double(p.mean_cost) << ','
        << format_double(p.mean_accuracy) << '\n';
  }
  out << "# auc," << format_double(curve.auc) << '\n';
}

FrontierCurve load_curve(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "lambda,mean_cost,mean_accuracy") {
    throw std::runtime_error(path + ": not a curve file");
  }
  FrontierCurve curve;
  bool have_auc = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("# auc,", 0) == 0) {
      curve.auc = std::stod(line.substr(6));
      have_auc = true;
      continue;
    }
    std::stringstream ss(line);
    std::string cell;
    FrontierPoint p;
    std::getline(ss, cell, ',');
    p.lambda = std::stod(cell);
    std::getline(ss, cell, ',');
    p.mean_cost = std::stod(cell);
    std::getline(ss, cell, ',');
    p.mean_accuracy = std::stod(cell);
    curve.points.push_back(p);
  }
  if (!have_auc) curve.auc = normalized_auc(curve.points);
  return curve;
}

}  // namespace fedroute
