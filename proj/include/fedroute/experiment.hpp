#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedroute/fed_avg.hpp"
#include "fedroute/kmeans.hpp"
#include "fedroute/mlp.hpp"
#include "fedroute/partition.hpp"
#include "fedroute/routing.hpp"
#include "fedroute/synthetic.hpp"

namespace fedroute {

enum class RouterFamily { Mlp, Kmeans, Both };

struct BaselineConfig {
  bool local = true;
  bool centralized = true;
  int local_epochs = 50;        // training budget of a client-local router
  int centralized_epochs = 50;  // pooled-training budget
};

struct ExpansionConfig {
  int withhold_models = 0;  // expand-models scenario: last k models join late
  double calibration_fraction = 0.1;
  int head_epochs = 50;
  double head_learning_rate = 1e-2;
  int initial_clients = 0;  // expand-clients scenario: first k clients train first
  double distill_weight = 1.0;
  int adaptation_rounds = 20;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;

  bool synthetic = true;
  std::string corpus_path;  // full-evaluation corpus when synthetic == false
  SyntheticSpec synthetic_spec;
  std::size_t n_queries = 20000;

  PartitionConfig partition;
  RouterFamily routers = RouterFamily::Both;
  FederationConfig federation;
  MlpArchitecture mlp;  // d_emb is filled from the data at run time
  OptimizerConfig optimizer;
  KmeansConfig kmeans;
  LambdaGrid grid;
  BaselineConfig baselines;
  bool personalization = false;
  ExpansionConfig expansion;
};

/// Parses a JSON experiment config; unknown fields are rejected and invalid
/// values produce errors naming the offending field.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

/// Canonical dump with every default echoed (the frozen-config pattern).
std::string dump_experiment_config(const ExperimentConfig& cfg);

/// Everything the pipeline stages pass between each other in memory.
struct ExperimentData {
  SyntheticOracle oracle;  // synthetic runs only
  bool has_oracle = false;
  std::vector<FullEvaluation> corpus;
  DatasetManifest manifest;
  ClientPartition partition;
  std::vector<ClientDataset> clients;
  std::vector<FullEvaluation> global_test;
  std::vector<std::vector<FullEvaluation>> client_tests;
};

/// Builds (or loads) the corpus and the client partition; when out_dir is
/// nonempty, the corpus/oracle/manifest artifacts are written there.
ExperimentData stage_partition(const ExperimentConfig& cfg, const std::string& out_dir);

/// Reloads the artifacts written by stage_partition.
ExperimentData load_experiment_data(const ExperimentConfig& cfg, const std::string& dir);

void stage_train(const ExperimentConfig& cfg, const ExperimentData& data,
                 const std::string& out_dir, int threads);
void stage_eval(const ExperimentConfig& cfg, const ExperimentData& data,
                const std::string& out_dir, int threads);
void stage_personalize(const ExperimentConfig& cfg, const ExperimentData& data,
                       const std::string& out_dir, int threads);
void stage_expand_models(const ExperimentConfig& cfg, const std::string& out_dir,
                         int threads);
void stage_expand_clients(const ExperimentConfig& cfg, const std::string& out_dir,
                          int threads);

/// Full pipeline: partition -> train -> eval, plus personalization and the
/// expansion scenarios when enabled. The artifact directory is a pure
/// function of (config, corpus file) apart from wall-clock columns in the
/// round-trace files.
void run_experiment(const ExperimentConfig& cfg, const std::string& out_dir, int threads);

/// AUC summary access for tests and downstream tooling.
struct AucRow {
  std::string router;
  std::string eval_set;
  double auc = 0.0;
};
std::vector<AucRow> load_auc_summary(const std::string& path);

}  // namespace fedroute
