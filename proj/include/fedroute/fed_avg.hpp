#pragma once

#include <cstdint>
#include <vector>

#include "fedroute/mlp.hpp"
#include "fedroute/types.hpp"

namespace fedroute {

struct FederationConfig {
  int n_rounds = 50;
  double participation_fraction = 0.6;
  int local_epochs = 1;
  /// When > 0, clients run exactly this many local steps per round instead
  /// of whole epochs (the algorithm-as-stated mode).
  int local_steps = 0;
  int batch_size = 128;
  std::uint64_t seed = 0;
};

/// Uniform sample without replacement of round(fraction * N) clients
/// (minimum 1), deterministic given (seed, round_index); returned sorted.
std::vector<int> sample_participants(int n_clients, double participation_fraction,
                                     int round_index, std::uint64_t seed);

/// Coordinatewise convex combination with weights w_i / sum(w). Weights must
/// be nonnegative and not all zero; accumulation is compensated and runs in
/// input order, so callers pass participants in client-id order.
MlpRouterParams aggregate(const std::vector<MlpRouterParams>& params_list,
                          const std::vector<double>& weights);

struct RoundRecord {
  int round = 0;
  std::vector<int> participants;
  std::vector<double> weights;        // normalized aggregation weights
  double loss_participants = 0.0;     // weighted loss over the round's clients
  double loss_all_clients = 0.0;      // weighted loss over every client
  double wall_seconds = 0.0;
};

struct FedTrainResult {
  MlpRouterParams params;
  std::vector<RoundRecord> rounds;
};

/// Algorithm: per round, broadcast the global parameters, train locally on
/// each sampled participant, then average the returned parameters weighted
/// by local dataset size. Deterministic given the seeds; participants may
/// train concurrently (results are merged in client-id order).
FedTrainResult run_federated_training(const std::vector<ClientDataset>& clients,
                                      const MlpArchitecture& arch,
                                      const MlpRouterParams& initial,
                                      const FederationConfig& fed_cfg,
                                      const OptimizerConfig& opt_cfg,
                                      double cost_normalizer, int threads = 1);

}  // namespace fedroute
