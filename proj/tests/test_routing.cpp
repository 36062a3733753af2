#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedroute/numeric.hpp"
#include "fedroute/rng.hpp"
#include "fedroute/routing.hpp"

using namespace fedroute;

namespace {

/// Fixed estimate table, for driving route/evaluate directly in tests.
class TableEstimator final : public UtilityEstimator {
 public:
  explicit TableEstimator(std::vector<ModelEstimate> row) : row_(std::move(row)) {}
  int n_models() const override { return static_cast<int>(row_.size()); }
  std::vector<ModelEstimate> estimate(const EmbeddingVector&) const override { return row_; }

 private:
  std::vector<ModelEstimate> row_;
};

std::vector<FullEvaluation> simple_test_set() {
  std::vector<FullEvaluation> queries(4);
  Rng rng(3);
  for (auto& q : queries) {
    q.embedding = {rng.normal()};
    q.accuracy = {0.2, 0.9, 0.6};
    q.cost = {0.1, 0.8, 0.4};
  }
  return queries;
}

}  // namespace

TEST_CASE("ties break toward lower estimated cost and then lower index") {
  const std::vector<ModelEstimate> estimates{
      {0.2, 0.5, true}, {0.9, 0.3, true}, {0.9, 0.1, true}};
  CHECK(route(estimates, 0.0) == 2);  // same utility 0.9, cheaper estimate wins

  const std::vector<ModelEstimate> exact_tie{{0.5, 0.2, true}, {0.5, 0.2, true}};
  CHECK(route(exact_tie, 0.0) == 0);  // full tie: lowest index
}

TEST_CASE("a single present model is always chosen") {
  std::vector<ModelEstimate> estimates(3);
  estimates[1] = {0.1, 0.9, true};
  CHECK(route(estimates, 2.0) == 1);
}

TEST_CASE("routing equals an exhaustive argmax scan on random vectors") {
  Rng rng(5);
  for (int rep = 0; rep < 500; ++rep) {
    std::vector<ModelEstimate> estimates(4);
    for (auto& e : estimates) e = {rng.uniform(), rng.uniform(0.01, 1.0), true};
    const double lambda = rng.uniform(0.0, 5.0);
    int best = 0;
    for (int m = 1; m < 4; ++m) {
      if (estimates[static_cast<std::size_t>(m)].utility(lambda) >
          estimates[static_cast<std::size_t>(best)].utility(lambda)) {
        best = m;
      }
    }
    CHECK(route(estimates, lambda) == best);
  }
}

TEST_CASE("routing with every model absent is an error") {
  CHECK_THROWS(route(std::vector<ModelEstimate>(3), 1.0));
}

TEST_CASE("a constant policy scores the chosen model's column means") {
  const auto queries = simple_test_set();
  // Pin model 0 by giving it the only huge utility.
  TableEstimator constant({{1.0, 0.0, true}, {0.0, 1.0, true}, {0.0, 1.0, true}});
  const auto score = evaluate_policy(constant, queries, 0.0);
  CHECK(score.mean_accuracy == doctest::Approx(0.2));
  CHECK(score.mean_cost == doctest::Approx(0.1));
}

TEST_CASE("the oracle policy at lambda zero attains the per-query max accuracy") {
  SyntheticSpec spec;
  spec.d_emb = 2;
  spec.n_models = 3;
  spec.n_tasks = 2;
  spec.base_costs = {0.1, 0.5, 0.9};
  const auto oracle = make_synthetic_oracle(spec, 7);
  const auto corpus = generate_synthetic(oracle, 50, 9);
  std::vector<FullEvaluation> queries;
  for (const auto& q : corpus) {
    FullEvaluation t = q;
    for (int m = 0; m < 3; ++m) {
      t.accuracy[static_cast<std::size_t>(m)] = oracle.true_accuracy(t.embedding, m);
      t.cost[static_cast<std::size_t>(m)] = oracle.true_cost(t.embedding, m);
    }
    queries.push_back(t);
  }
  const OracleEstimator policy(oracle);
  const auto score = evaluate_policy(policy, queries, 0.0);
  KahanSum best;
  for (const auto& q : queries) {
    best.add(*std::max_element(q.accuracy.begin(), q.accuracy.end()));
  }
  CHECK(score.mean_accuracy ==
        doctest::Approx(best.value() / static_cast<double>(queries.size())).epsilon(1e-12));
}

TEST_CASE("evaluate_policy matches a per-query hand summation") {
  Rng rng(11);
  std::vector<FullEvaluation> queries(20);
  for (auto& q : queries) {
    q.embedding = {rng.normal()};
    q.accuracy = {rng.uniform(), rng.uniform(), rng.uniform()};
    q.cost = {rng.uniform(), rng.uniform(), rng.uniform()};
  }
  const std::vector<ModelEstimate> row{
      {0.7, 0.2, true}, {0.5, 0.1, true}, {0.9, 0.9, true}};
  const TableEstimator policy(row);
  const double lambda = 0.8;
  const int chosen = route(row, lambda);
  double acc = 0.0;
  double cost = 0.0;
  for (const auto& q : queries) {
    acc += q.accuracy[static_cast<std::size_t>(chosen)];
    cost += q.cost[static_cast<std::size_t>(chosen)];
  }
  const auto score = evaluate_policy(policy, queries, lambda);
  CHECK(score.mean_accuracy == doctest::Approx(acc / 20.0).epsilon(1e-12));
  CHECK(score.mean_cost == doctest::Approx(cost / 20.0).epsilon(1e-12));
}

TEST_CASE("missing ground truth for the routed model is an error") {
  std::vector<FullEvaluation> queries(1);
  queries[0].embedding = {0.0};
  queries[0].accuracy = {0.5, std::numeric_limits<double>::quiet_NaN()};
  queries[0].cost = {0.5, std::numeric_limits<double>::quiet_NaN()};
  TableEstimator policy({{0.1, 0.9, true}, {0.9, 0.1, true}});
  CHECK_THROWS(evaluate_policy(policy, queries, 0.0));
}

TEST_CASE("the default grid has 100 points anchored at 1e-2 and 1e7") {
  const auto lambdas = logspace(1e-2, 1e7, 100);
  CHECK(lambdas.size() == 100);
  CHECK(lambdas.front() == 1e-2);
  CHECK(lambdas.back() == 1e7);
}

TEST_CASE("per-query estimated cost is non-increasing along the sweep") {
  // Exchange-argument property on random utility instances.
  Rng rng(13);
  const auto lambdas = logspace(1e-2, 1e7, 100);
  for (int instance = 0; instance < 200; ++instance) {
    const int m_count = 2 + static_cast<int>(rng.uniform_below(5));
    std::vector<ModelEstimate> estimates(static_cast<std::size_t>(m_count));
    for (auto& e : estimates) e = {rng.uniform(), rng.uniform(0.0, 1.0), true};
    double previous = std::numeric_limits<double>::infinity();
    for (const double lambda : lambdas) {
      const double cost = estimates[static_cast<std::size_t>(route(estimates, lambda))].cost;
      CHECK(cost <= previous + 1e-15);
      previous = cost;
    }
  }
}

TEST_CASE("frontier mean cost is non-increasing for an estimator-driven sweep") {
  SyntheticSpec spec;
  spec.d_emb = 3;
  spec.n_models = 4;
  spec.n_tasks = 3;
  spec.base_costs = {0.1, 0.4, 0.6, 0.9};
  spec.cost_noise_scale = 0.0;  // deterministic costs
  const auto oracle = make_synthetic_oracle(spec, 17);
  const auto corpus = generate_synthetic(oracle, 300, 19);
  std::vector<FullEvaluation> queries;
  for (const auto& q : corpus) {
    FullEvaluation t = q;
    for (int m = 0; m < 4; ++m) {
      t.accuracy[static_cast<std::size_t>(m)] = oracle.true_accuracy(t.embedding, m);
      t.cost[static_cast<std::size_t>(m)] = oracle.true_cost(t.embedding, m);
    }
    queries.push_back(t);
  }
  const OracleEstimator policy(oracle);
  LambdaGrid grid;
  grid.n_points = 60;
  const auto curve = sweep_lambda(policy, queries, grid, 2);
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    CHECK(curve.points[i].mean_cost <= curve.points[i - 1].mean_cost + 1e-12);
  }
  CHECK(curve.auc >= 0.0);
  CHECK(curve.auc <= 1.0);
}

TEST_CASE("normalized AUC handles flat, triangular and hand-computed curves") {
  // Constant accuracy 0.7 over any cost range.
  std::vector<FrontierPoint> flat{{1.0, 0.2, 0.7}, {0.5, 0.6, 0.7}, {0.1, 1.0, 0.7}};
  CHECK(normalized_auc(flat) == doctest::Approx(0.7).epsilon(1e-12));

  // Two points (cost 0, acc 0) and (cost 1, acc 1): a triangle of area 1/2.
  std::vector<FrontierPoint> triangle{{1.0, 0.0, 0.0}, {0.1, 1.0, 1.0}};
  CHECK(normalized_auc(triangle) == doctest::Approx(0.5).epsilon(1e-12));

  // Three points by hand: trapezoid over [0,1] then [1,3], range 3.
  std::vector<FrontierPoint> hand{{1.0, 0.0, 0.2}, {0.5, 1.0, 0.6}, {0.1, 3.0, 1.0}};
  const double expected = (0.5 * (0.2 + 0.6) * 1.0 + 0.5 * (0.6 + 1.0) * 2.0) / 3.0;
  CHECK(normalized_auc(hand) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("normalized AUC ignores point order and collapses duplicate costs") {
  std::vector<FrontierPoint> points{{1.0, 0.0, 0.1}, {0.5, 1.0, 0.9}, {0.2, 1.0, 0.4}};
  auto shuffled = points;
  std::swap(shuffled[0], shuffled[2]);
  CHECK(normalized_auc(points) == normalized_auc(shuffled));
  // Duplicate cost 1.0 collapses to accuracy 0.9.
  CHECK(normalized_auc(points) == doctest::Approx(0.5 * (0.1 + 0.9)).epsilon(1e-12));
}

TEST_CASE("degenerate zero-width cost range yields the accuracy value") {
  std::vector<FrontierPoint> degenerate{{1.0, 0.3, 0.8}, {1.0, 0.3, 0.8}};
  CHECK(normalized_auc(degenerate) == doctest::Approx(0.8));
}

TEST_CASE("suboptimality of the oracle policy is zero and never negative") {
  SyntheticSpec spec;
  spec.d_emb = 2;
  spec.n_models = 3;
  spec.n_tasks = 2;
  spec.base_costs = {0.2, 0.5, 0.8};
  const auto oracle = make_synthetic_oracle(spec, 23);
  const auto corpus = generate_synthetic(oracle, 100, 29);
  std::vector<FullEvaluation> queries(corpus.begin(), corpus.end());

  const OracleEstimator oracle_policy(oracle);
  CHECK(suboptimality(oracle_policy, oracle, queries, 1.0) ==
        doctest::Approx(0.0).epsilon(1e-12));

  Rng rng(31);
  for (int rep = 0; rep < 10; ++rep) {
    TableEstimator random_policy({{rng.uniform(), rng.uniform(), true},
                                  {rng.uniform(), rng.uniform(), true},
                                  {rng.uniform(), rng.uniform(), true}});
    CHECK(suboptimality(random_policy, oracle, queries, 1.0) >= -1e-12);
  }
}

TEST_CASE("suboptimality of a constant policy matches exhaustive summation") {
  SyntheticSpec spec;
  spec.d_emb = 2;
  spec.n_models = 3;
  spec.n_tasks = 2;
  spec.base_costs = {0.1, 0.5, 0.9};
  const auto oracle = make_synthetic_oracle(spec, 37);
  const auto corpus = generate_synthetic(oracle, 60, 41);
  std::vector<FullEvaluation> queries(corpus.begin(), corpus.end());
  // Always picks model 2 (huge accuracy estimate, zero cost estimate).
  TableEstimator policy({{0.0, 1.0, true}, {0.0, 1.0, true}, {10.0, 0.0, true}});
  const double lambda = 1.0;
  KahanSum gap;
  for (const auto& q : queries) {
    double best = -std::numeric_limits<double>::infinity();
    for (int m = 0; m < 3; ++m) best = std::max(best, oracle.true_utility(q.embedding, m, lambda));
    gap.add(best - oracle.true_utility(q.embedding, 2, lambda));
  }
  CHECK(suboptimality(policy, oracle, queries, lambda) ==
        doctest::Approx(gap.value() / 60.0).epsilon(1e-12));
}

TEST_CASE("scaling costs by s and lambda by 1/s leaves every decision unchanged") {
  Rng rng(43);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<ModelEstimate> estimates(3);
    for (auto& e : estimates) e = {rng.uniform(), rng.uniform(0.01, 1.0), true};
    const double lambda = rng.uniform(0.0, 4.0);
    const double s = rng.uniform(0.1, 10.0);
    auto scaled = estimates;
    for (auto& e : scaled) e.cost *= s;
    CHECK(route(estimates, lambda) == route(scaled, lambda / s));
  }
}
