#pragma once

#include <cstdint>
#include <vector>

#include "fedroute/types.hpp"

namespace fedroute {

struct KmeansResult {
  std::vector<EmbeddingVector> centroids;
  std::vector<int> assignments;
  double inertia = 0.0;  // weighted sum of squared distances
};

/// Weighted Lloyd iterations with distance-weighted sequential seeding
/// (probability proportional to weight times squared distance to the nearest
/// chosen center), best of n_init restarts by weighted inertia. Iteration
/// stops at an assignment fixpoint or max_iter; an emptied cluster is
/// re-seeded on the point with the largest weighted distance contribution.
/// Euclidean distance throughout; deterministic given the seed.
KmeansResult lloyd_kmeans(const std::vector<EmbeddingVector>& points,
                          const std::vector<double>& weights, int k, int n_init,
                          int max_iter, std::uint64_t seed);

/// Lloyd from explicitly supplied initial centroids (no restarts).
KmeansResult lloyd_kmeans_from_init(const std::vector<EmbeddingVector>& points,
                                    const std::vector<double>& weights,
                                    const std::vector<EmbeddingVector>& initial_centroids,
                                    int max_iter);

/// What one client uploads after local clustering.
struct LocalCentroidSummary {
  std::vector<EmbeddingVector> centroids;
  std::vector<long long> sizes;
};

/// Count-weighted accuracy/cost means for one (cluster, model) cell; a zero
/// count means the cell is absent and carries no mean values.
struct CellStat {
  double mean_accuracy = 0.0;
  double mean_cost = 0.0;
  long long count = 0;
};

struct KmeansRouterState {
  std::vector<EmbeddingVector> centroids;
  int n_models = 0;
  std::vector<CellStat> stats;     // centroids.size() x n_models, row-major
  std::vector<CellStat> fallback;  // per-model global means

  CellStat& cell(std::size_t k, std::size_t m) {
    return stats[k * static_cast<std::size_t>(n_models) + m];
  }
  const CellStat& cell(std::size_t k, std::size_t m) const {
    return stats[k * static_cast<std::size_t>(n_models) + m];
  }
};

struct KmeansConfig {
  int k_local = 15;
  int k_global = 20;
  int n_init = 3;
  int max_iter = 30;
};

/// Per-(cluster, model) counts and means of a record set against fixed
/// centroids; the client-side half of the statistics exchange.
std::vector<CellStat> accumulate_stats(const std::vector<EvaluationRecord>& records,
                                       const std::vector<EmbeddingVector>& centroids,
                                       int n_models);

/// Count-weighted merge of per-cell statistics (associative up to round-off).
void merge_stats(std::vector<CellStat>& into, const std::vector<CellStat>& from);

/// Per-model global means derived from a cell table.
std::vector<CellStat> fallback_from_stats(const std::vector<CellStat>& stats, int k,
                                          int n_models);

/// The two-stage federated pipeline: local K-means per client, server-side
/// weighted K-means over the uploaded (centroid, size) pairs, then
/// count-weighted aggregation of per-(cluster, model) statistics. A client
/// with fewer points than k_local clusters with K equal to its point count.
KmeansRouterState build_federated_kmeans(const std::vector<ClientDataset>& clients,
                                         int n_models, const KmeansConfig& cfg,
                                         std::uint64_t seed, int threads = 1);

/// Single-pool baseline: K-means straight on the records plus their stats.
KmeansRouterState build_centralized_kmeans(const std::vector<EvaluationRecord>& records,
                                           int n_models, int k, int n_init, int max_iter,
                                           std::uint64_t seed);

/// Nearest centroid by Euclidean distance; ties to the lowest index.
int assign_cluster(const KmeansRouterState& state, const EmbeddingVector& x);

/// Per-model utility a - lambda c from the assigned cluster's cell, falling
/// back to the model's global means when the cell is absent; models observed
/// nowhere stay absent (NaN). Throws if the router has no statistics at all.
std::vector<double> cluster_utilities(const KmeansRouterState& state,
                                      const EmbeddingVector& x, double lambda);

}  // namespace fedroute
