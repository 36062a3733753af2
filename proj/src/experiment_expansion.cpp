#include <filesystem>
#include <stdexcept>

#include "experiment_util.hpp"
#include "fedroute/checkpoint.hpp"
#include "fedroute/expansion.hpp"
#include "fedroute/rng.hpp"

namespace fedroute {

namespace {

namespace fs = std::filesystem;

/// Calibration subset for one client: the first fraction of a seeded shuffle
/// of its train queries, evaluated on one withheld model using the stored
/// full evaluations.
std::vector<EvaluationRecord> calibration_records(const std::vector<FullEvaluation>& corpus,
                                                  const ClientSplit& client,
                                                  double fraction, int model_index,
                                                  std::uint64_t seed) {
  std::vector<std::size_t> queries = client.train_queries;
  Rng rng(derive_seed(seed, "calibration", static_cast<std::uint64_t>(client.client_id)));
  rng.shuffle(queries);
  const auto n = static_cast<std::size_t>(
      std::max<long long>(queries.empty() ? 0 : 1,
                          std::llround(fraction * static_cast<double>(queries.size()))));
  std::vector<EvaluationRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < std::min(n, queries.size()); ++i) {
    const auto& q = corpus[queries[i]];
    EvaluationRecord rec;
    rec.embedding = q.embedding;
    rec.model_index = model_index;
    rec.accuracy = q.accuracy[static_cast<std::size_t>(model_index)];
    rec.cost = q.cost[static_cast<std::size_t>(model_index)];
    rec.task_label = q.task_label;
    records.push_back(std::move(rec));
  }
  return records;
}

struct CurveRow {
  std::string name;
  FrontierCurve curve;
};

void save_rows(const std::string& dir, const std::vector<CurveRow>& curves) {
  std::vector<AucRow> rows;
  for (const auto& c : curves) {
    save_curve(dir + "/curves/" + c.name + "__global_test.csv", c.curve);
    rows.push_back({c.name, "global_test", c.curve.auc});
  }
  detail::write_auc_summary(dir + "/auc_summary.csv", std::move(rows));
}

}  // namespace

void stage_expand_models(const ExperimentConfig& cfg, const std::string& out_dir,
                         int threads) {
  const int withheld = cfg.expansion.withhold_models;
  if (withheld < 1) throw std::invalid_argument("expand-models: withhold_models must be >= 1");
  const auto data = load_experiment_data(cfg, out_dir);
  const int n_models = data.manifest.model_pool.size();
  if (withheld >= n_models) {
    throw std::invalid_argument("expand-models: must leave at least one initial model");
  }
  const int n_initial = n_models - withheld;

  const std::string dir = out_dir + "/expansion_models";
  fs::create_directories(dir + "/curves");
  fs::create_directories(dir + "/checkpoints");

  // Re-log the training queries over the reduced pool: during the initial
  // training nobody has evaluated the withheld models.
  ClientPartition reduced = data.partition;
  auto logged = assign_logged_models(reduced.clients, n_initial, cfg.partition.alpha_model,
                                     derive_seed(cfg.seed, "expansion-logging"));
  for (std::size_t c = 0; c < reduced.clients.size(); ++c) {
    reduced.clients[c].train_logged_models = std::move(logged[c]);
  }
  const auto clients = materialize_clients(data.corpus, reduced);
  const double cn = data.manifest.cost_normalizer;

  std::vector<CurveRow> curves;

  if (cfg.routers != RouterFamily::Kmeans) {
    MlpArchitecture arch = detail::resolved_architecture(cfg, data.manifest);
    arch.n_models = n_initial;
    FederationConfig fed_cfg = cfg.federation;
    fed_cfg.seed = derive_seed(cfg.seed, "expansion-fed-mlp");
    auto fed = run_federated_training(
        clients, arch, init_params(arch, derive_seed(cfg.seed, "expansion-mlp-init")),
        fed_cfg, cfg.optimizer, cn, threads);

    const std::vector<std::string> initial_ids(
        data.manifest.model_pool.model_ids.begin(),
        data.manifest.model_pool.model_ids.begin() + n_initial);
    save_mlp_checkpoint(dir + "/checkpoints/mlp_pre_expansion.json",
                        {arch, fed.params, cn, initial_ids});
    curves.push_back({"mlp_pre_expansion",
                      sweep_lambda(MlpEstimator(fed.params, arch, cn), data.global_test,
                                   cfg.grid, threads)});

    // Head-only onboarding, one withheld model at a time.
    MlpRouterParams params = fed.params;
    LocalTrainConfig head_cfg;
    head_cfg.epochs = cfg.expansion.head_epochs;
    head_cfg.batch_size = cfg.federation.batch_size;
    head_cfg.optimizer = cfg.optimizer;
    head_cfg.optimizer.learning_rate = cfg.expansion.head_learning_rate;
    for (int w = 0; w < withheld; ++w) {
      const int new_index = n_initial + w;
      std::vector<EvaluationRecord> calibration;
      for (const auto& client : data.partition.clients) {
        auto recs = calibration_records(data.corpus, client,
                                        cfg.expansion.calibration_fraction, new_index,
                                        derive_seed(cfg.seed, "expansion-mlp-calib",
                                                    static_cast<std::uint64_t>(w)));
        calibration.insert(calibration.end(), recs.begin(), recs.end());
      }
      add_model_mlp(params, arch, calibration, cn, head_cfg,
                    derive_seed(cfg.seed, "expansion-mlp-head",
                                static_cast<std::uint64_t>(w)));
    }
    save_mlp_checkpoint(dir + "/checkpoints/mlp_post_expansion.json",
                        {arch, params, cn, data.manifest.model_pool.model_ids});
    curves.push_back({"mlp_post_expansion",
                      sweep_lambda(MlpEstimator(params, arch, cn), data.global_test,
                                   cfg.grid, threads)});
  }

  if (cfg.routers != RouterFamily::Mlp) {
    auto state = build_federated_kmeans(clients, n_initial, cfg.kmeans,
                                        derive_seed(cfg.seed, "expansion-kmeans"), threads);
    const std::vector<std::string> initial_ids(
        data.manifest.model_pool.model_ids.begin(),
        data.manifest.model_pool.model_ids.begin() + n_initial);
    save_kmeans_checkpoint(dir + "/checkpoints/kmeans_pre_expansion.json",
                           {state, initial_ids});
    curves.push_back({"kmeans_pre_expansion",
                      sweep_lambda(KmeansEstimator(state), data.global_test, cfg.grid,
                                   threads)});
    for (int w = 0; w < withheld; ++w) {
      const int new_index = n_initial + w;
      std::vector<EvaluationRecord> calibration;
      for (const auto& client : data.partition.clients) {
        auto recs = calibration_records(data.corpus, client,
                                        cfg.expansion.calibration_fraction, new_index,
                                        derive_seed(cfg.seed, "expansion-km-calib",
                                                    static_cast<std::uint64_t>(w)));
        calibration.insert(calibration.end(), recs.begin(), recs.end());
      }
      add_model_kmeans(state, calibration);
    }
    save_kmeans_checkpoint(dir + "/checkpoints/kmeans_post_expansion.json",
                           {state, data.manifest.model_pool.model_ids});
    curves.push_back({"kmeans_post_expansion",
                      sweep_lambda(KmeansEstimator(state), data.global_test, cfg.grid,
                                   threads)});
  }

  save_rows(dir, curves);
}

void stage_expand_clients(const ExperimentConfig& cfg, const std::string& out_dir,
                          int threads) {
  const int n_initial = cfg.expansion.initial_clients;
  if (n_initial < 1) throw std::invalid_argument("expand-clients: initial_clients must be >= 1");
  const auto data = load_experiment_data(cfg, out_dir);
  if (n_initial >= static_cast<int>(data.clients.size())) {
    throw std::invalid_argument("expand-clients: no clients left to onboard");
  }

  const std::string dir = out_dir + "/expansion_clients";
  fs::create_directories(dir + "/curves");
  fs::create_directories(dir + "/checkpoints");

  const std::vector<ClientDataset> initial_clients(data.clients.begin(),
                                                   data.clients.begin() + n_initial);
  const std::vector<ClientDataset> new_clients(data.clients.begin() + n_initial,
                                               data.clients.end());
  const double cn = data.manifest.cost_normalizer;
  const auto& model_ids = data.manifest.model_pool.model_ids;

  std::vector<CurveRow> curves;

  if (cfg.routers != RouterFamily::Kmeans) {
    const auto arch = detail::resolved_architecture(cfg, data.manifest);
    FederationConfig fed_cfg = cfg.federation;
    fed_cfg.seed = derive_seed(cfg.seed, "expansion-clients-fed");
    auto base = run_federated_training(
        initial_clients, arch,
        init_params(arch, derive_seed(cfg.seed, "expansion-clients-init")), fed_cfg,
        cfg.optimizer, cn, threads);
    save_mlp_checkpoint(dir + "/checkpoints/mlp_pre_expansion.json",
                        {arch, base.params, cn, model_ids});
    curves.push_back({"mlp_pre_expansion",
                      sweep_lambda(MlpEstimator(base.params, arch, cn), data.global_test,
                                   cfg.grid, threads)});

    FederationConfig adapt_cfg = cfg.federation;
    adapt_cfg.n_rounds = cfg.expansion.adaptation_rounds;
    adapt_cfg.participation_fraction = 1.0;  // every new client joins each round
    adapt_cfg.seed = derive_seed(cfg.seed, "expansion-clients-adapt");
    auto adapted = add_clients_mlp(base.params, arch, new_clients,
                                   cfg.expansion.distill_weight, adapt_cfg, cfg.optimizer,
                                   cn, threads);
    save_mlp_checkpoint(dir + "/checkpoints/mlp_post_expansion.json",
                        {arch, adapted.params, cn, model_ids});
    curves.push_back({"mlp_post_expansion",
                      sweep_lambda(MlpEstimator(adapted.params, arch, cn), data.global_test,
                                   cfg.grid, threads)});
  }

  if (cfg.routers != RouterFamily::Mlp) {
    const int n_models = data.manifest.model_pool.size();
    auto state = build_federated_kmeans(initial_clients, n_models, cfg.kmeans,
                                        derive_seed(cfg.seed, "expansion-clients-km"),
                                        threads);
    save_kmeans_checkpoint(dir + "/checkpoints/kmeans_pre_expansion.json",
                           {state, model_ids});
    curves.push_back({"kmeans_pre_expansion",
                      sweep_lambda(KmeansEstimator(state), data.global_test, cfg.grid,
                                   threads)});
    add_clients_kmeans(state, new_clients);
    save_kmeans_checkpoint(dir + "/checkpoints/kmeans_post_expansion.json",
                           {state, model_ids});
    curves.push_back({"kmeans_post_expansion",
                      sweep_lambda(KmeansEstimator(state), data.global_test, cfg.grid,
                                   threads)});
  }

  save_rows(dir, curves);
}

}  // namespace fedroute
