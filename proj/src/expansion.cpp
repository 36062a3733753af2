#include "fedroute/expansion.hpp"

#include <stdexcept>

#include "fedroute/rng.hpp"
#include "fedroute/threading.hpp"

namespace fedroute {

bool add_model_mlp(MlpRouterParams& params, MlpArchitecture& arch,
                   const std::vector<EvaluationRecord>& calibration, double cost_normalizer,
                   const LocalTrainConfig& cfg, std::uint64_t seed) {
  const int new_index = arch.n_models;
  for (const auto& rec : calibration) {
    if (rec.model_index != new_index) {
      throw std::invalid_argument(
          "add_model_mlp: calibration records must be evaluations of the new model");
    }
  }
  append_head(params, arch, seed);
  arch.n_models += 1;
  if (calibration.empty()) return false;
  train_head_only(params, arch, new_index, calibration, cost_normalizer, cfg,
                  derive_seed(seed, "head-train"));
  return true;
}

void add_model_kmeans(KmeansRouterState& state,
                      const std::vector<EvaluationRecord>& calibration) {
  const int new_index = state.n_models;
  const int k = static_cast<int>(state.centroids.size());

  // Widen the dense cell table by one model column, leaving existing cells
  // untouched.
  std::vector<CellStat> widened(static_cast<std::size_t>(k) *
                                static_cast<std::size_t>(new_index + 1));
  for (int c = 0; c < k; ++c) {
    for (int m = 0; m < new_index; ++m) {
      widened[static_cast<std::size_t>(c) * static_cast<std::size_t>(new_index + 1) +
              static_cast<std::size_t>(m)] = state.cell(static_cast<std::size_t>(c),
                                                        static_cast<std::size_t>(m));
    }
  }
  state.stats = std::move(widened);
  state.n_models = new_index + 1;
  state.fallback.push_back({});

  if (calibration.empty()) return;
  for (const auto& rec : calibration) {
    if (rec.model_index != new_index) {
      throw std::invalid_argument(
          "add_model_kmeans: calibration records must be evaluations of the new model");
    }
  }
  const auto new_stats = accumulate_stats(calibration, state.centroids, state.n_models);
  merge_stats(state.stats, new_stats);
  state.fallback = fallback_from_stats(state.stats, k, state.n_models);
}

FedTrainResult add_clients_mlp(const MlpRouterParams& base, const MlpArchitecture& arch,
                               const std::vector<ClientDataset>& new_clients,
                               double distill_weight, const FederationConfig& fed_cfg,
                               const OptimizerConfig& opt_cfg, double cost_normalizer,
                               int threads) {
  if (distill_weight < 0.0) {
    throw std::invalid_argument("add_clients_mlp: distillation weight must be >= 0");
  }
  bool any_data = false;
  for (const auto& c : new_clients) any_data = any_data || !c.train.empty();
  if (!any_data) throw std::invalid_argument("add_clients_mlp: new clients have no data");

  const MlpRouterParams reference = base;  // frozen teacher snapshot

  FedTrainResult result;
  result.params = base;

  LocalTrainConfig local_cfg;
  local_cfg.epochs = fed_cfg.local_epochs;
  local_cfg.steps = fed_cfg.local_steps;
  local_cfg.batch_size = fed_cfg.batch_size;
  local_cfg.optimizer = opt_cfg;

  for (int round = 0; round < fed_cfg.n_rounds; ++round) {
    const auto participants =
        sample_participants(static_cast<int>(new_clients.size()),
                            fed_cfg.participation_fraction, round, fed_cfg.seed);
    std::vector<MlpRouterParams> updated(participants.size());
    parallel_for(participants.size(), threads, [&](std::size_t i) {
      const auto& client = new_clients[static_cast<std::size_t>(participants[i])];
      const auto seed = derive_seed(fed_cfg.seed, "expand-train",
                                    static_cast<std::uint64_t>(round),
                                    static_cast<std::uint64_t>(client.client_id));
      updated[i] = local_train_distill(result.params, reference, arch, client.train,
                                       cost_normalizer, distill_weight, local_cfg, seed);
    });

    std::vector<double> weights(participants.size());
    double round_data = 0.0;
    for (std::size_t i = 0; i < participants.size(); ++i) {
      weights[i] = static_cast<double>(
          new_clients[static_cast<std::size_t>(participants[i])].train.size());
      round_data += weights[i];
    }
    if (round_data > 0.0) result.params = aggregate(updated, weights);

    RoundRecord record;
    record.round = round;
    record.participants = participants;
    record.weights.resize(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
      record.weights[i] = round_data > 0.0 ? weights[i] / round_data : 0.0;
    }
    result.rounds.push_back(std::move(record));
  }
  return result;
}

void add_clients_kmeans(KmeansRouterState& state,
                        const std::vector<ClientDataset>& new_clients) {
  for (const auto& client : new_clients) {
    if (client.train.empty()) continue;
    const auto stats = accumulate_stats(client.train, state.centroids, state.n_models);
    merge_stats(state.stats, stats);
  }
  state.fallback = fallback_from_stats(state.stats, static_cast<int>(state.centroids.size()),
                                       state.n_models);
}

}  // namespace fedroute
