#include "fedroute/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fedroute/numeric.hpp"
#include "fedroute/rng.hpp"
#include "fedroute/threading.hpp"

namespace fedroute {

namespace {

int nearest_centroid(const EmbeddingVector& p,
                     const std::vector<EmbeddingVector>& centroids) {
  int best = 0;
  double best_d = squared_distance(p, centroids[0]);
  for (std::size_t k = 1; k < centroids.size(); ++k) {
    const double d = squared_distance(p, centroids[k]);
    if (d < best_d) {
      best = static_cast<int>(k);
      best_d = d;
    }
  }
  return best;
}

std::vector<EmbeddingVector> seed_centroids(const std::vector<EmbeddingVector>& points,
                                            const std::vector<double>& weights, int k,
                                            Rng& rng) {
  std::vector<EmbeddingVector> centroids;
  centroids.reserve(static_cast<std::size_t>(k));

  // First center: proportional to weight.
  std::vector<double> cumulative(points.size());
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    total += weights[i];
    cumulative[i] = total;
  }
  auto pick_by_cumulative = [&](const std::vector<double>& cum, double sum) {
    const double u = rng.uniform() * sum;
    const auto it = std::upper_bound(cum.begin(), cum.end(), u);
    return static_cast<std::size_t>(std::min<std::ptrdiff_t>(
        std::distance(cum.begin(), it), static_cast<std::ptrdiff_t>(cum.size()) - 1));
  };
  centroids.push_back(points[pick_by_cumulative(cumulative, total)]);

  std::vector<double> d2(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    d2[i] = squared_distance(points[i], centroids[0]);
  }
  while (static_cast<int>(centroids.size()) < k) {
    double mass = 0.0;
    std::vector<double> cum(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      mass += weights[i] * d2[i];
      cum[i] = mass;
    }
    std::size_t pick;
    if (mass > 0.0) {
      pick = pick_by_cumulative(cum, mass);
    } else {
      // All remaining distance mass is zero (duplicate points); surplus
      // centers land on duplicates and may stay empty-prone.
      pick = pick_by_cumulative(cumulative, total);
    }
    centroids.push_back(points[pick]);
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = std::min(d2[i], squared_distance(points[i], centroids.back()));
    }
  }
  return centroids;
}

double weighted_inertia(const std::vector<EmbeddingVector>& points,
                        const std::vector<double>& weights,
                        const std::vector<EmbeddingVector>& centroids,
                        const std::vector<int>& assignments) {
  KahanSum sum;
  for (std::size_t i = 0; i < points.size(); ++i) {
    sum.add(weights[i] *
            squared_distance(points[i], centroids[static_cast<std::size_t>(assignments[i])]));
  }
  return sum.value();
}

KmeansResult lloyd_iterations(const std::vector<EmbeddingVector>& points,
                              const std::vector<double>& weights,
                              std::vector<EmbeddingVector> centroids, int max_iter) {
  const std::size_t n = points.size();
  const std::size_t dim = points.front().size();
  const std::size_t k = centroids.size();

  std::vector<int> assignments(n, -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const int a = nearest_centroid(points[i], centroids);
      if (a != assignments[i]) {
        assignments[i] = a;
        changed = true;
      }
    }

    // Re-seed emptied clusters on the heaviest-contribution point.
    std::vector<double> cluster_weight(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      cluster_weight[static_cast<std::size_t>(assignments[i])] += weights[i];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (cluster_weight[c] > 0.0) continue;
      double worst = -1.0;
      std::size_t worst_i = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (cluster_weight[static_cast<std::size_t>(assignments[i])] <= weights[i]) {
          continue;  // do not drain a cluster down to empty
        }
        const double contribution =
            weights[i] *
            squared_distance(points[i], centroids[static_cast<std::size_t>(assignments[i])]);
        if (contribution > worst) {
          worst = contribution;
          worst_i = i;
        }
      }
      if (worst <= 0.0) continue;  // duplicates everywhere; cluster stays empty
      cluster_weight[static_cast<std::size_t>(assignments[worst_i])] -= weights[worst_i];
      assignments[worst_i] = static_cast<int>(c);
      cluster_weight[c] += weights[worst_i];
      centroids[c] = points[worst_i];
      changed = true;
    }

    // Update step: weighted means.
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = sums[static_cast<std::size_t>(assignments[i])];
      for (std::size_t d = 0; d < dim; ++d) s[d] += weights[i] * points[i][d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (cluster_weight[c] <= 0.0) continue;
      for (std::size_t d = 0; d < dim; ++d) centroids[c][d] = sums[c][d] / cluster_weight[c];
    }

    if (!changed) break;
  }

  KmeansResult result;
  result.centroids = std::move(centroids);
  result.assignments = std::move(assignments);
  result.inertia = weighted_inertia(points, weights, result.centroids, result.assignments);
  return result;
}

void validate_kmeans_inputs(const std::vector<EmbeddingVector>& points,
                            const std::vector<double>& weights, int k) {
  if (points.empty()) throw std::invalid_argument("lloyd_kmeans: no points");
  if (k < 1) throw std::invalid_argument("lloyd_kmeans: k must be >= 1");
  if (points.size() != weights.size()) {
    throw std::invalid_argument("lloyd_kmeans: weights/points size mismatch");
  }
  for (const double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("lloyd_kmeans: weights must be positive");
    }
  }
}

}  // namespace

KmeansResult lloyd_kmeans(const std::vector<EmbeddingVector>& points,
                          const std::vector<double>& weights, int k, int n_init,
                          int max_iter, std::uint64_t seed) {
  validate_kmeans_inputs(points, weights, k);
  if (n_init < 1) throw std::invalid_argument("lloyd_kmeans: n_init must be >= 1");

  KmeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int restart = 0; restart < n_init; ++restart) {
    Rng rng(derive_seed(seed, "kmeans-init", static_cast<std::uint64_t>(restart)));
    auto centroids = seed_centroids(points, weights, k, rng);
    auto result = lloyd_iterations(points, weights, std::move(centroids), max_iter);
    if (result.inertia < best.inertia) best = std::move(result);
  }
  return best;
}

KmeansResult lloyd_kmeans_from_init(const std::vector<EmbeddingVector>& points,
                                    const std::vector<double>& weights,
                                    const std::vector<EmbeddingVector>& initial_centroids,
                                    int max_iter) {
  validate_kmeans_inputs(points, weights, static_cast<int>(initial_centroids.size()));
  return lloyd_iterations(points, weights, initial_centroids, max_iter);
}

std::vector<CellStat> accumulate_stats(const std::vector<EvaluationRecord>& records,
                                       const std::vector<EmbeddingVector>& centroids,
                                       int n_models) {
  std::vector<CellStat> stats(centroids.size() * static_cast<std::size_t>(n_models));
  std::vector<KahanSum> acc_sums(stats.size());
  std::vector<KahanSum> cost_sums(stats.size());
  for (const auto& rec : records) {
    const auto k = static_cast<std::size_t>(nearest_centroid(rec.embedding, centroids));
    const auto idx = k * static_cast<std::size_t>(n_models) +
                     static_cast<std::size_t>(rec.model_index);
    acc_sums[idx].add(rec.accuracy);
    cost_sums[idx].add(rec.cost);
    ++stats[idx].count;
  }
  for (std::size_t i = 0; i < stats.size(); ++i) {
    if (stats[i].count > 0) {
      stats[i].mean_accuracy = acc_sums[i].value() / static_cast<double>(stats[i].count);
      stats[i].mean_cost = cost_sums[i].value() / static_cast<double>(stats[i].count);
    }
  }
  return stats;
}

void merge_stats(std::vector<CellStat>& into, const std::vector<CellStat>& from) {
  if (into.size() != from.size()) throw std::invalid_argument("merge_stats: size mismatch");
  for (std::size_t i = 0; i < into.size(); ++i) {
    const auto& b = from[i];
    if (b.count == 0) continue;
    auto& a = into[i];
    if (a.count == 0) {
      a = b;
      continue;
    }
    const double na = static_cast<double>(a.count);
    const double nb = static_cast<double>(b.count);
    a.mean_accuracy = (na * a.mean_accuracy + nb * b.mean_accuracy) / (na + nb);
    a.mean_cost = (na * a.mean_cost + nb * b.mean_cost) / (na + nb);
    a.count += b.count;
  }
}

std::vector<CellStat> fallback_from_stats(const std::vector<CellStat>& stats, int k,
                                          int n_models) {
  std::vector<CellStat> fallback(static_cast<std::size_t>(n_models));
  for (int m = 0; m < n_models; ++m) {
    KahanSum acc;
    KahanSum cost;
    long long count = 0;
    for (int c = 0; c < k; ++c) {
      const auto& cell = stats[static_cast<std::size_t>(c) * static_cast<std::size_t>(n_models) +
                               static_cast<std::size_t>(m)];
      if (cell.count == 0) continue;
      acc.add(static_cast<double>(cell.count) * cell.mean_accuracy);
      cost.add(static_cast<double>(cell.count) * cell.mean_cost);
      count += cell.count;
    }
    if (count > 0) {
      fallback[static_cast<std::size_t>(m)] = {acc.value() / static_cast<double>(count),
                                               cost.value() / static_cast<double>(count),
                                               count};
    }
  }
  return fallback;
}

KmeansRouterState build_federated_kmeans(const std::vector<ClientDataset>& clients,
                                         int n_models, const KmeansConfig& cfg,
                                         std::uint64_t seed, int threads) {
  bool any_data = false;
  for (const auto& c : clients) any_data = any_data || !c.train.empty();
  if (!any_data) {
    throw std::invalid_argument("build_federated_kmeans: no client has training data");
  }

  // Stage 1: local clustering; clients upload (centroid, size) pairs.
  std::vector<LocalCentroidSummary> uploads(clients.size());
  parallel_for(clients.size(), threads, [&](std::size_t i) {
    const auto& client = clients[i];
    if (client.train.empty()) return;
    std::vector<EmbeddingVector> points;
    points.reserve(client.train.size());
    for (const auto& rec : client.train) points.push_back(rec.embedding);
    const int k = std::min<int>(cfg.k_local, static_cast<int>(points.size()));
    const std::vector<double> ones(points.size(), 1.0);
    const auto local = lloyd_kmeans(
        points, ones, k, cfg.n_init, cfg.max_iter,
        derive_seed(seed, "local-kmeans", static_cast<std::uint64_t>(client.client_id)));
    std::vector<long long> sizes(local.centroids.size(), 0);
    for (const int a : local.assignments) ++sizes[static_cast<std::size_t>(a)];
    for (std::size_t c = 0; c < local.centroids.size(); ++c) {
      if (sizes[c] == 0) continue;  // nothing to send for an empty cluster
      uploads[i].centroids.push_back(local.centroids[c]);
      uploads[i].sizes.push_back(sizes[c]);
    }
  });

  // Stage 2: server-side weighted clustering of the uploads.
  std::vector<EmbeddingVector> server_points;
  std::vector<double> server_weights;
  for (const auto& upload : uploads) {  // client-id order
    for (std::size_t c = 0; c < upload.centroids.size(); ++c) {
      server_points.push_back(upload.centroids[c]);
      server_weights.push_back(static_cast<double>(upload.sizes[c]));
    }
  }
  const int k_global = std::min<int>(cfg.k_global, static_cast<int>(server_points.size()));
  const auto server = lloyd_kmeans(server_points, server_weights, k_global, cfg.n_init,
                                   cfg.max_iter, derive_seed(seed, "server-kmeans"));

  KmeansRouterState state;
  state.centroids = server.centroids;
  state.n_models = n_models;
  state.stats.assign(state.centroids.size() * static_cast<std::size_t>(n_models), {});

  // Stage 3: clients compute per-(cluster, model) statistics against the
  // broadcast centers; the server merges them count-weighted, in id order.
  std::vector<std::vector<CellStat>> client_stats(clients.size());
  parallel_for(clients.size(), threads, [&](std::size_t i) {
    if (clients[i].train.empty()) return;
    client_stats[i] = accumulate_stats(clients[i].train, state.centroids, n_models);
  });
  for (const auto& stats : client_stats) {
    if (!stats.empty()) merge_stats(state.stats, stats);
  }
  state.fallback = fallback_from_stats(state.stats, static_cast<int>(state.centroids.size()),
                                       n_models);
  return state;
}

KmeansRouterState build_centralized_kmeans(const std::vector<EvaluationRecord>& records,
                                           int n_models, int k, int n_init, int max_iter,
                                           std::uint64_t seed) {
  if (records.empty()) {
    throw std::invalid_argument("build_centralized_kmeans: no records");
  }
  std::vector<EmbeddingVector> points;
  points.reserve(records.size());
  for (const auto& rec : records) points.push_back(rec.embedding);
  const std::vector<double> ones(points.size(), 1.0);
  const int k_eff = std::min<int>(k, static_cast<int>(points.size()));
  const auto result = lloyd_kmeans(points, ones, k_eff, n_init, max_iter,
                                   derive_seed(seed, "central-kmeans"));

  KmeansRouterState state;
  state.centroids = result.centroids;
  state.n_models = n_models;
  state.stats = accumulate_stats(records, state.centroids, n_models);
  state.fallback = fallback_from_stats(state.stats, static_cast<int>(state.centroids.size()),
                                       n_models);
  return state;
}

int assign_cluster(const KmeansRouterState& state, const EmbeddingVector& x) {
  if (state.centroids.empty()) throw std::invalid_argument("assign_cluster: no centroids");
  return nearest_centroid(x, state.centroids);
}

std::vector<double> cluster_utilities(const KmeansRouterState& state,
                                      const EmbeddingVector& x, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("cluster_utilities: lambda must be >= 0");
  bool any = false;
  for (const auto& f : state.fallback) any = any || f.count > 0;
  if (!any) throw std::runtime_error("cluster_utilities: untrained router (no statistics)");

  const auto k = static_cast<std::size_t>(assign_cluster(state, x));
  std::vector<double> utilities(static_cast<std::size_t>(state.n_models),
                                std::numeric_limits<double>::quiet_NaN());
  for (int m = 0; m < state.n_models; ++m) {
    const auto& cell = state.cell(k, static_cast<std::size_t>(m));
    const auto& source = cell.count > 0 ? cell : state.fallback[static_cast<std::size_t>(m)];
    if (source.count == 0) continue;  // model observed nowhere
    utilities[static_cast<std::size_t>(m)] =
        source.mean_accuracy - lambda * source.mean_cost;
  }
  return utilities;
}

}  // namespace fedroute
