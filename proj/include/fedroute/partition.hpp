#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedroute/synthetic.hpp"
#include "fedroute/types.hpp"

namespace fedroute {

struct PartitionConfig {
  int n_clients = 10;
  double alpha_query = 0.6;   // Dirichlet concentration over task labels
  double alpha_model = 0.45;  // Dirichlet concentration over models
  double train_fraction = 0.75;
  std::uint64_t seed = 0;
};

/// Per-client view of a partitioned corpus. Indices refer to positions in
/// the source full-evaluation corpus; logged_model is set for train queries
/// only (test queries keep their full evaluations for scoring).
struct ClientSplit {
  int client_id = 0;
  std::vector<std::size_t> train_queries;
  std::vector<int> train_logged_models;  // parallel to train_queries
  std::vector<std::size_t> test_queries;
};

struct ClientPartition {
  std::vector<ClientSplit> clients;
  PartitionConfig config;
  std::vector<std::string> warnings;
};

/// Assigns query indices to clients: per task label, one Dirichlet draw over
/// clients sets the proportions and each record of that task is assigned
/// multinomially. Deterministic given the seed; empty clients are kept (with
/// a warning) since aggregation weights them by dataset size anyway.
std::vector<std::vector<std::size_t>> partition_queries(
    const std::vector<FullEvaluation>& corpus, int n_clients, double alpha_query,
    std::uint64_t seed, std::vector<std::string>* warnings = nullptr);

/// Uniform shuffle then prefix split; |train| = round(train_fraction * n).
void split_train_test(std::vector<std::size_t>& queries, double train_fraction,
                      std::uint64_t seed, std::vector<std::size_t>& train,
                      std::vector<std::size_t>& test);

/// Per client, one Dirichlet(alpha_model) draw over the pool; each train
/// query's logged model is sampled i.i.d. from that client distribution.
std::vector<std::vector<int>> assign_logged_models(
    const std::vector<ClientSplit>& clients, int n_models, double alpha_model,
    std::uint64_t seed);

/// Full pipeline: queries -> clients -> train/test -> logged models.
ClientPartition partition_corpus(const std::vector<FullEvaluation>& corpus,
                                 int n_models, const PartitionConfig& config);

/// Materializes EvaluationRecord datasets from a partition: train records
/// carry the logged model's realized accuracy/cost; test records carry the
/// logged-model placeholder -1 and are kept as full evaluations elsewhere.
std::vector<ClientDataset> materialize_clients(const std::vector<FullEvaluation>& corpus,
                                               const ClientPartition& partition);

/// Partition manifest round-trip (delimited text) so experiments are
/// replayable without re-sampling.
void save_partition(const std::string& path, const ClientPartition& partition);
ClientPartition load_partition(const std::string& path);

}  // namespace fedroute
