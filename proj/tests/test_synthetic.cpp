#include <doctest.h>

#include <cmath>

#include "fedroute/numeric.hpp"
#include "fedroute/rng.hpp"
#include "fedroute/synthetic.hpp"

using namespace fedroute;

namespace {

SyntheticSpec small_spec() {
  SyntheticSpec spec;
  spec.d_emb = 4;
  spec.n_models = 2;
  spec.n_tasks = 3;
  spec.cost_noise_scale = 0.02;
  return spec;
}

}  // namespace

TEST_CASE("generation is bit-identical for equal seeds") {
  const auto oracle = make_synthetic_oracle(small_spec(), 1);
  const auto a = generate_synthetic(oracle, 200, 7);
  const auto b = generate_synthetic(oracle, 200, 7);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].embedding == b[i].embedding);
    CHECK(a[i].accuracy == b[i].accuracy);
    CHECK(a[i].cost == b[i].cost);
    CHECK(a[i].task_label == b[i].task_label);
  }
  CHECK(generate_synthetic(oracle, 200, 8).front().embedding != a.front().embedding);
}

TEST_CASE("a saturated accuracy always logs 1 for that model") {
  auto oracle = make_synthetic_oracle(small_spec(), 2);
  // Huge bias drives the logistic to 1.0 in double precision.
  oracle.accuracy_bias[0] = 1e9;
  for (auto& w : oracle.accuracy_weights[0]) w = 0.0;
  const auto corpus = generate_synthetic(oracle, 500, 3);
  for (const auto& q : corpus) CHECK(q.accuracy[0] == 1.0);
}

TEST_CASE("empirical mean cost per model is within 3 sigma of the base cost") {
  auto spec = small_spec();
  spec.base_costs = {0.1, 0.9};
  spec.cost_noise_scale = 0.02;
  const auto oracle = make_synthetic_oracle(spec, 4);
  const std::size_t n = 1000;
  const auto corpus = generate_synthetic(oracle, n, 5);
  for (int m = 0; m < 2; ++m) {
    KahanSum sum;
    for (const auto& q : corpus) sum.add(q.cost[static_cast<std::size_t>(m)]);
    const double mean = sum.value() / static_cast<double>(n);
    const double sigma = spec.cost_noise_scale / std::sqrt(static_cast<double>(n));
    // Clipping at [0, c_max] is 4+ noise sigmas away from both base costs,
    // so the unclipped mean is the right reference here.
    CHECK(std::abs(mean - spec.base_costs[static_cast<std::size_t>(m)]) < 3.0 * sigma);
  }
}

TEST_CASE("generated accuracies are unbiased for the oracle mean") {
  // E[accuracy | x, m] equals a(x,m): sample mean over 10^4 draws at a fixed
  // (x, m) within 5 sigma.
  const auto oracle = make_synthetic_oracle(small_spec(), 6);
  const EmbeddingVector x{0.3, -0.2, 0.5, 0.1};
  const double a = oracle.true_accuracy(x, 1);
  Rng rng(99);
  const int n = 10000;
  int hits = 0;
  for (int i = 0; i < n; ++i) hits += rng.bernoulli(a) ? 1 : 0;
  const double mean = static_cast<double>(hits) / n;
  const double sigma = std::sqrt(a * (1.0 - a) / n);
  CHECK(std::abs(mean - a) < 5.0 * sigma);
}

TEST_CASE("oracle_best_model matches exhaustive evaluation") {
  auto spec = small_spec();
  spec.n_models = 3;
  spec.base_costs = {0.2, 0.5, 0.8};
  const auto oracle = make_synthetic_oracle(spec, 8);
  Rng rng(13);
  for (int rep = 0; rep < 200; ++rep) {
    EmbeddingVector x(4);
    for (auto& v : x) v = rng.normal();
    const double lambda = rng.uniform(0.0, 3.0);
    int best = 0;
    double best_u = oracle.true_utility(x, 0, lambda);
    for (int m = 1; m < 3; ++m) {
      const double u = oracle.true_utility(x, m, lambda);
      if (u > best_u) {
        best = m;
        best_u = u;
      }
    }
    CHECK(oracle_best_model(oracle, x, lambda) == best);
  }
}

TEST_CASE("lambda endpoints of the oracle router") {
  auto spec = small_spec();
  spec.n_models = 3;
  spec.base_costs = {0.1, 0.5, 0.9};
  const auto oracle = make_synthetic_oracle(spec, 9);
  Rng rng(17);
  for (int rep = 0; rep < 50; ++rep) {
    EmbeddingVector x(4);
    for (auto& v : x) v = rng.normal();
    // lambda = 0: the cost term vanishes.
    int best_acc = 0;
    for (int m = 1; m < 3; ++m) {
      if (oracle.true_accuracy(x, m) > oracle.true_accuracy(x, best_acc)) best_acc = m;
    }
    CHECK(oracle_best_model(oracle, x, 0.0) == best_acc);
    // Very large lambda: the cheapest model dominates.
    CHECK(oracle_best_model(oracle, x, 1e12) == 0);
  }
}

TEST_CASE("utility argmax is invariant to a constant shift of all utilities") {
  auto spec = small_spec();
  spec.n_models = 3;
  spec.base_costs = {0.2, 0.4, 0.6};
  const auto base = make_synthetic_oracle(spec, 10);
  auto shifted = base;
  for (auto& b : shifted.accuracy_bias) b += 0.0;  // identical oracle
  // Adding a constant to all costs changes nothing only when lambda = 0.
  auto costs_shifted = base;
  for (auto& c : costs_shifted.base_costs) c += 0.3;
  Rng rng(21);
  for (int rep = 0; rep < 100; ++rep) {
    EmbeddingVector x(4);
    for (auto& v : x) v = rng.normal();
    CHECK(oracle_best_model(base, x, 0.0) == oracle_best_model(costs_shifted, x, 0.0));
  }
}

TEST_CASE("clipped_mean_cost approaches the base cost when clipping is inactive") {
  auto spec = small_spec();
  spec.base_costs = {0.5, 0.6};
  const auto oracle = make_synthetic_oracle(spec, 11);
  const double mc = oracle.clipped_mean_cost(0, 200000, 3);
  CHECK(mc == doctest::Approx(0.5).epsilon(0.001));
}
