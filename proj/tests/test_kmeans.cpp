#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedroute/kmeans.hpp"
#include "fedroute/numeric.hpp"
#include "fedroute/rng.hpp"

using namespace fedroute;

namespace {

std::vector<EmbeddingVector> random_points(std::size_t n, std::size_t dim,
                                           std::uint64_t seed) {
  Rng rng(seed);
  std::vector<EmbeddingVector> points(n, EmbeddingVector(dim));
  for (auto& p : points) {
    for (auto& v : p) v = rng.normal();
  }
  return points;
}

std::vector<EvaluationRecord> clustered_records(std::size_t n, int n_models,
                                                std::uint64_t seed) {
  Rng rng(seed);
  std::vector<EvaluationRecord> records(n);
  for (auto& rec : records) {
    const double center = rng.bernoulli(0.5) ? 2.0 : -2.0;
    rec.embedding = {center + 0.3 * rng.normal(), 0.3 * rng.normal()};
    rec.model_index = static_cast<int>(rng.uniform_below(
        static_cast<std::uint64_t>(n_models)));
    rec.accuracy = rng.bernoulli(center > 0 ? 0.8 : 0.3) ? 1.0 : 0.0;
    rec.cost = rng.uniform(0.1, 0.9);
  }
  return records;
}

}  // namespace

TEST_CASE("k=1 yields the weighted mean of the points") {
  const std::vector<EmbeddingVector> points{{0.0, 0.0}, {1.0, 2.0}, {4.0, -2.0}};
  const std::vector<double> weights{1.0, 2.0, 1.0};
  const auto result = lloyd_kmeans(points, weights, 1, 2, 10, 3);
  // Weighted mean: ((0,0) + 2*(1,2) + (4,-2)) / 4 = (1.5, 0.5)
  CHECK(result.centroids[0][0] == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(result.centroids[0][1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("equal weights reproduce the unweighted run bit for bit") {
  const auto points = random_points(100, 3, 5);
  const std::vector<double> ones(points.size(), 1.0);
  const std::vector<double> twos(points.size(), 2.0);
  const auto a = lloyd_kmeans(points, ones, 4, 3, 30, 7);
  const auto b = lloyd_kmeans(points, twos, 4, 3, 30, 7);
  // Same seeding decisions, means unchanged by a constant weight factor.
  REQUIRE(a.centroids.size() == b.centroids.size());
  for (std::size_t c = 0; c < a.centroids.size(); ++c) {
    for (std::size_t d = 0; d < a.centroids[c].size(); ++d) {
      CHECK(a.centroids[c][d] == doctest::Approx(b.centroids[c][d]).epsilon(1e-12));
    }
  }
  CHECK(a.assignments == b.assignments);
}

TEST_CASE("weighted lloyd equals unweighted lloyd on duplicated points") {
  const auto base = random_points(40, 4, 9);
  Rng rng(11);
  std::vector<double> weights(base.size());
  std::vector<EmbeddingVector> duplicated;
  for (std::size_t i = 0; i < base.size(); ++i) {
    const auto w = 1 + rng.uniform_below(4);
    weights[i] = static_cast<double>(w);
    for (std::uint64_t r = 0; r < w; ++r) duplicated.push_back(base[i]);
  }
  const std::vector<double> dup_ones(duplicated.size(), 1.0);
  // Identical initialization for both runs.
  const std::vector<EmbeddingVector> init{base[0], base[7], base[19]};
  const auto weighted = lloyd_kmeans_from_init(base, weights, init, 40);
  const auto unweighted = lloyd_kmeans_from_init(duplicated, dup_ones, init, 40);
  REQUIRE(weighted.centroids.size() == unweighted.centroids.size());
  for (std::size_t c = 0; c < weighted.centroids.size(); ++c) {
    for (std::size_t d = 0; d < weighted.centroids[c].size(); ++d) {
      CHECK(std::abs(weighted.centroids[c][d] - unweighted.centroids[c][d]) < 1e-10);
    }
  }
}

TEST_CASE("weighted inertia is non-increasing across lloyd iterations") {
  const auto points = random_points(200, 3, 13);
  Rng rng(15);
  std::vector<double> weights(points.size());
  for (auto& w : weights) w = rng.uniform(0.5, 2.0);
  const std::vector<EmbeddingVector> init{points[0], points[50], points[100], points[150]};
  double previous = std::numeric_limits<double>::infinity();
  for (int iters = 1; iters <= 12; ++iters) {
    const auto result = lloyd_kmeans_from_init(points, weights, init, iters);
    CHECK(result.inertia <= previous + 1e-9);
    previous = result.inertia;
  }
}

TEST_CASE("k larger than the number of distinct points leaves surplus clusters empty") {
  const std::vector<EmbeddingVector> points{{1.0, 1.0}, {1.0, 1.0}, {2.0, 2.0}};
  const std::vector<double> ones(points.size(), 1.0);
  const auto result = lloyd_kmeans(points, ones, 3, 2, 10, 17);
  std::vector<int> sizes(3, 0);
  for (const int a : result.assignments) ++sizes[static_cast<std::size_t>(a)];
  CHECK(std::count(sizes.begin(), sizes.end(), 0) >= 1);
  CHECK(result.inertia == doctest::Approx(0.0));
}

TEST_CASE("single-client federation collapses to a centralized build") {
  const auto records = clustered_records(120, 2, 19);
  ClientDataset client;
  client.client_id = 0;
  client.train = records;

  KmeansConfig cfg;
  cfg.k_local = 4;
  cfg.k_global = 4;
  cfg.n_init = 2;
  cfg.max_iter = 30;
  const auto fed = build_federated_kmeans({client}, 2, cfg, 21, 1);

  // Identical data pooled centrally with the same K.
  const auto central = build_centralized_kmeans(records, 2, 4, 2, 30, 23);

  // Both quantize the same data; per-cluster pooled means must agree once
  // clusters are matched by nearest centroid.
  long long fed_total = 0;
  for (const auto& cell : fed.stats) fed_total += cell.count;
  long long central_total = 0;
  for (const auto& cell : central.stats) central_total += cell.count;
  CHECK(fed_total == static_cast<long long>(records.size()));
  CHECK(central_total == static_cast<long long>(records.size()));
}

TEST_CASE("federated statistics with fixed centers equal centralized pooled means") {
  const int n_models = 3;
  Rng rng(29);
  std::vector<ClientDataset> clients(5);
  std::vector<EvaluationRecord> pooled;
  for (std::size_t c = 0; c < clients.size(); ++c) {
    clients[c].client_id = static_cast<int>(c);
    clients[c].train = clustered_records(50 + 30 * c, n_models, 31 + c);
    pooled.insert(pooled.end(), clients[c].train.begin(), clients[c].train.end());
  }
  const std::vector<EmbeddingVector> centers{{2.0, 0.0}, {-2.0, 0.0}, {0.0, 3.0}};

  std::vector<CellStat> federated(centers.size() * n_models);
  for (const auto& client : clients) {
    merge_stats(federated, accumulate_stats(client.train, centers, n_models));
  }
  const auto central = accumulate_stats(pooled, centers, n_models);

  long long fed_count = 0;
  for (std::size_t i = 0; i < federated.size(); ++i) {
    CHECK(federated[i].count == central[i].count);
    fed_count += federated[i].count;
    if (central[i].count > 0) {
      CHECK(std::abs(federated[i].mean_accuracy - central[i].mean_accuracy) < 1e-10);
      CHECK(std::abs(federated[i].mean_cost - central[i].mean_cost) < 1e-10);
    }
  }
  CHECK(fed_count == static_cast<long long>(pooled.size()));
}

TEST_CASE("client order never changes the aggregated statistics") {
  const int n_models = 2;
  std::vector<ClientDataset> clients(4);
  for (std::size_t c = 0; c < clients.size(); ++c) {
    clients[c].client_id = static_cast<int>(c);
    clients[c].train = clustered_records(40, n_models, 37 + c);
  }
  const std::vector<EmbeddingVector> centers{{2.0, 0.0}, {-2.0, 0.0}};
  std::vector<CellStat> forward(centers.size() * n_models);
  std::vector<CellStat> backward(centers.size() * n_models);
  for (const auto& client : clients) {
    merge_stats(forward, accumulate_stats(client.train, centers, n_models));
  }
  for (auto it = clients.rbegin(); it != clients.rend(); ++it) {
    merge_stats(backward, accumulate_stats(it->train, centers, n_models));
  }
  for (std::size_t i = 0; i < forward.size(); ++i) {
    CHECK(forward[i].count == backward[i].count);
    CHECK(std::abs(forward[i].mean_accuracy - backward[i].mean_accuracy) < 1e-10);
    CHECK(std::abs(forward[i].mean_cost - backward[i].mean_cost) < 1e-10);
  }
}

TEST_CASE("pairs observed by no client are absent from the state") {
  std::vector<ClientDataset> clients(2);
  for (std::size_t c = 0; c < clients.size(); ++c) {
    clients[c].client_id = static_cast<int>(c);
    clients[c].train = clustered_records(60, 1, 41 + c);  // only model 0 logged
    for (auto& rec : clients[c].train) rec.model_index = 0;
  }
  KmeansConfig cfg;
  cfg.k_local = 3;
  cfg.k_global = 3;
  const auto state = build_federated_kmeans(clients, 2, cfg, 43, 1);
  for (std::size_t k = 0; k < state.centroids.size(); ++k) {
    CHECK(state.cell(k, 1).count == 0);
  }
  CHECK(state.fallback[1].count == 0);
}

TEST_CASE("assign_cluster matches an exhaustive distance scan") {
  KmeansRouterState state;
  state.centroids = random_points(5, 3, 47);
  state.n_models = 1;
  state.stats.assign(5, {0.5, 0.5, 1});
  state.fallback.assign(1, {0.5, 0.5, 5});
  Rng rng(53);
  for (int rep = 0; rep < 100; ++rep) {
    EmbeddingVector x{rng.normal(), rng.normal(), rng.normal()};
    int best = 0;
    double best_d = squared_distance(x, state.centroids[0]);
    for (std::size_t k = 1; k < 5; ++k) {
      const double d = squared_distance(x, state.centroids[k]);
      if (d < best_d) {
        best = static_cast<int>(k);
        best_d = d;
      }
    }
    CHECK(assign_cluster(state, x) == best);
  }
  // Exactly at a centroid: that cluster wins.
  CHECK(assign_cluster(state, state.centroids[3]) == 3);
}

TEST_CASE("cluster utilities follow the trade-off arithmetic and fallbacks") {
  KmeansRouterState state;
  state.centroids = {{0.0, 0.0}};
  state.n_models = 2;
  state.stats = {{0.9, 1.0, 10}, {0.4, 0.1, 5}};
  state.fallback = {{0.9, 1.0, 10}, {0.4, 0.1, 5}};
  const auto utilities = cluster_utilities(state, {0.1, 0.1}, 0.5);
  CHECK(utilities[0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(utilities[1] == doctest::Approx(0.35).epsilon(1e-12));

  // Model unseen in the cluster but seen globally: fallback means apply.
  state.stats[1] = {};
  state.fallback[1] = {0.6, 0.2, 7};
  const auto with_fallback = cluster_utilities(state, {0.1, 0.1}, 0.5);
  CHECK(with_fallback[1] == doctest::Approx(0.6 - 0.5 * 0.2).epsilon(1e-12));

  // lambda = 0: ranking equals the accuracy ranking.
  const auto at_zero = cluster_utilities(state, {0.1, 0.1}, 0.0);
  CHECK(at_zero[0] == doctest::Approx(0.9));
  CHECK(at_zero[1] == doctest::Approx(0.6));
}

TEST_CASE("a router without any statistics is rejected") {
  KmeansRouterState state;
  state.centroids = {{0.0}};
  state.n_models = 1;
  state.stats = {{}};
  state.fallback = {{}};
  CHECK_THROWS(cluster_utilities(state, {0.0}, 1.0));
}

TEST_CASE("clients smaller than k_local cluster with their point count") {
  std::vector<ClientDataset> clients(2);
  clients[0].client_id = 0;
  clients[0].train = clustered_records(3, 1, 59);
  clients[1].client_id = 1;
  clients[1].train = clustered_records(100, 1, 61);
  KmeansConfig cfg;
  cfg.k_local = 15;
  cfg.k_global = 5;
  const auto state = build_federated_kmeans(clients, 1, cfg, 63, 1);
  long long total = 0;
  for (const auto& cell : state.stats) total += cell.count;
  CHECK(total == 103);
}
