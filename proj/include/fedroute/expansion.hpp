#pragma once

#include <cstdint>
#include <vector>

#include "fedroute/fed_avg.hpp"
#include "fedroute/kmeans.hpp"
#include "fedroute/mlp.hpp"
#include "fedroute/types.hpp"

namespace fedroute {

/// Onboards one new model into an MLP router: appends a freshly initialized
/// head and trains only that head on the calibration records (which must all
/// be logged on the new model). Existing parameters stay bit-identical; the
/// architecture's model count grows by one. An empty calibration set leaves
/// the head untrained and returns false.
bool add_model_mlp(MlpRouterParams& params, MlpArchitecture& arch,
                   const std::vector<EvaluationRecord>& calibration, double cost_normalizer,
                   const LocalTrainConfig& cfg, std::uint64_t seed);

/// Onboards one new model into a K-means router: calibration records are
/// assigned to the existing clusters and per-(cluster, new model) statistics
/// are inserted; centroids and existing cells are untouched.
void add_model_kmeans(KmeansRouterState& state,
                      const std::vector<EvaluationRecord>& calibration);

/// Continued federated training on the new clients only, with a
/// distillation penalty that keeps predictions close to the frozen base
/// router on the new clients' prompts.
FedTrainResult add_clients_mlp(const MlpRouterParams& base, const MlpArchitecture& arch,
                               const std::vector<ClientDataset>& new_clients,
                               double distill_weight, const FederationConfig& fed_cfg,
                               const OptimizerConfig& opt_cfg, double cost_normalizer,
                               int threads = 1);

/// Training-free client onboarding: new clients compute per-(cluster, model)
/// statistics against the existing centroids and the server merges them
/// count-weighted into the current state.
void add_clients_kmeans(KmeansRouterState& state,
                        const std::vector<ClientDataset>& new_clients);

}  // namespace fedroute
