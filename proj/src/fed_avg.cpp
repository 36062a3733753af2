#include "fedroute/fed_avg.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "fedroute/numeric.hpp"
#include "fedroute/rng.hpp"
#include "fedroute/threading.hpp"

namespace fedroute {

std::vector<int> sample_participants(int n_clients, double participation_fraction,
                                     int round_index, std::uint64_t seed) {
  if (!(participation_fraction > 0.0 && participation_fraction <= 1.0)) {
    throw std::invalid_argument("sample_participants: fraction must be in (0,1]");
  }
  if (n_clients < 1) throw std::invalid_argument("sample_participants: no clients");
  const auto count = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::llround(participation_fraction * static_cast<double>(n_clients))));
  Rng rng(derive_seed(seed, "participants", static_cast<std::uint64_t>(round_index)));
  auto sampled =
      rng.sample_without_replacement(static_cast<std::size_t>(n_clients), count);
  std::vector<int> ids(sampled.begin(), sampled.end());
  std::sort(ids.begin(), ids.end());
  return ids;
}

MlpRouterParams aggregate(const std::vector<MlpRouterParams>& params_list,
                          const std::vector<double>& weights) {
  if (params_list.empty()) throw std::invalid_argument("aggregate: empty parameter list");
  if (params_list.size() != weights.size()) {
    throw std::invalid_argument("aggregate: weights/params size mismatch");
  }
  KahanSum weight_sum;
  for (const double w : weights) {
    if (w < 0.0 || !std::isfinite(w)) {
      throw std::invalid_argument("aggregate: weights must be finite and nonnegative");
    }
    weight_sum.add(w);
  }
  const double total = weight_sum.value();
  if (total <= 0.0) throw std::invalid_argument("aggregate: weights must not all be zero");

  std::vector<std::vector<std::span<const double>>> views(params_list.size());
  for (std::size_t p = 0; p < params_list.size(); ++p) {
    collect_param_views(params_list[p], views[p]);
    if (views[p].size() != views[0].size()) {
      throw std::invalid_argument("aggregate: parameter shape mismatch");
    }
    for (std::size_t a = 0; a < views[p].size(); ++a) {
      if (views[p][a].size() != views[0][a].size()) {
        throw std::invalid_argument("aggregate: parameter shape mismatch");
      }
    }
  }

  MlpRouterParams out = params_list.front();
  std::vector<std::span<double>> out_views;
  collect_param_views(out, out_views);
  for (std::size_t a = 0; a < out_views.size(); ++a) {
    for (std::size_t i = 0; i < out_views[a].size(); ++i) {
      KahanSum acc;
      for (std::size_t p = 0; p < params_list.size(); ++p) {
        acc.add((weights[p] / total) * views[p][a][i]);
      }
      out_views[a][i] = acc.value();
    }
  }
  return out;
}

FedTrainResult run_federated_training(const std::vector<ClientDataset>& clients,
                                      const MlpArchitecture& arch,
                                      const MlpRouterParams& initial,
                                      const FederationConfig& fed_cfg,
                                      const OptimizerConfig& opt_cfg,
                                      double cost_normalizer, int threads) {
  bool any_data = false;
  for (const auto& c : clients) any_data = any_data || !c.train.empty();
  if (clients.empty() || !any_data) {
    throw std::invalid_argument("run_federated_training: no client has training data");
  }

  FedTrainResult result;
  result.params = initial;

  std::size_t total_train = 0;
  for (const auto& c : clients) total_train += c.train.size();

  LocalTrainConfig local_cfg;
  local_cfg.epochs = fed_cfg.local_epochs;
  local_cfg.steps = fed_cfg.local_steps;
  local_cfg.batch_size = fed_cfg.batch_size;
  local_cfg.optimizer = opt_cfg;

  for (int round = 0; round < fed_cfg.n_rounds; ++round) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto participants = sample_participants(
        static_cast<int>(clients.size()), fed_cfg.participation_fraction, round,
        fed_cfg.seed);

    std::vector<MlpRouterParams> updated(participants.size());
    parallel_for(participants.size(), threads, [&](std::size_t i) {
      const auto& client = clients[static_cast<std::size_t>(participants[i])];
      const auto seed = derive_seed(fed_cfg.seed, "local-train",
                                    static_cast<std::uint64_t>(round),
                                    static_cast<std::uint64_t>(client.client_id));
      updated[i] = local_train(result.params, arch, client.train, cost_normalizer,
                               local_cfg, seed);
    });

    std::vector<double> weights(participants.size());
    double round_data = 0.0;
    for (std::size_t i = 0; i < participants.size(); ++i) {
      weights[i] =
          static_cast<double>(clients[static_cast<std::size_t>(participants[i])].train.size());
      round_data += weights[i];
    }
    // A round where every sampled client is empty leaves the global model
    // unchanged (an empty client carries aggregation weight 0).
    if (round_data > 0.0) {
      result.params = aggregate(updated, weights);
    }

    RoundRecord record;
    record.round = round;
    record.participants = participants;
    record.weights.resize(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
      record.weights[i] = round_data > 0.0 ? weights[i] / round_data : 0.0;
    }
    KahanSum loss_part;
    for (const int id : participants) {
      const auto& client = clients[static_cast<std::size_t>(id)];
      if (client.train.empty() || round_data <= 0.0) continue;
      loss_part.add(static_cast<double>(client.train.size()) / round_data *
                    evaluate_loss(result.params, arch, client.train, cost_normalizer));
    }
    record.loss_participants = loss_part.value();
    KahanSum loss_all;
    for (const auto& client : clients) {
      if (client.train.empty()) continue;
      loss_all.add(static_cast<double>(client.train.size()) /
                   static_cast<double>(total_train) *
                   evaluate_loss(result.params, arch, client.train, cost_normalizer));
    }
    record.loss_all_clients = loss_all.value();
    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.rounds.push_back(std::move(record));
  }
  return result;
}

}  // namespace fedroute
