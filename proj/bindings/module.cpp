#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fedroute/corpus_io.hpp"
#include "fedroute/expansion.hpp"
#include "fedroute/experiment.hpp"
#include "fedroute/fed_avg.hpp"
#include "fedroute/kmeans.hpp"
#include "fedroute/mlp.hpp"
#include "fedroute/partition.hpp"
#include "fedroute/personalization.hpp"
#include "fedroute/routing.hpp"
#include "fedroute/synthetic.hpp"

namespace py = pybind11;
using namespace fedroute;

namespace {

OptimizerConfig optimizer_from_kwargs(const std::string& kind, double learning_rate,
                                      double weight_decay, double clip_norm) {
  OptimizerConfig cfg;
  cfg.kind = kind == "sgd" ? OptimizerConfig::Kind::Sgd : OptimizerConfig::Kind::AdamW;
  cfg.learning_rate = learning_rate;
  cfg.weight_decay = weight_decay;
  cfg.clip_norm = clip_norm;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Federated LLM-router training and evaluation core";

  py::class_<EvaluationRecord>(m, "EvaluationRecord")
      .def(py::init<>())
      .def_readwrite("embedding", &EvaluationRecord::embedding)
      .def_readwrite("model_index", &EvaluationRecord::model_index)
      .def_readwrite("accuracy", &EvaluationRecord::accuracy)
      .def_readwrite("cost", &EvaluationRecord::cost)
      .def_readwrite("task_label", &EvaluationRecord::task_label);

  py::class_<FullEvaluation>(m, "FullEvaluation")
      .def(py::init<>())
      .def_readwrite("embedding", &FullEvaluation::embedding)
      .def_readwrite("task_label", &FullEvaluation::task_label)
      .def_readwrite("accuracy", &FullEvaluation::accuracy)
      .def_readwrite("cost", &FullEvaluation::cost);

  py::class_<ClientDataset>(m, "ClientDataset")
      .def(py::init<>())
      .def_readwrite("client_id", &ClientDataset::client_id)
      .def_readwrite("train", &ClientDataset::train)
      .def_readwrite("test", &ClientDataset::test);

  py::class_<SyntheticOracle>(m, "SyntheticOracle")
      .def_property_readonly("n_models", &SyntheticOracle::n_models)
      .def_property_readonly("n_tasks", &SyntheticOracle::n_tasks)
      .def_property_readonly("d_emb", &SyntheticOracle::d_emb)
      .def_readonly("base_costs", &SyntheticOracle::base_costs)
      .def("true_accuracy", &SyntheticOracle::true_accuracy)
      .def("true_cost", &SyntheticOracle::true_cost)
      .def("true_utility", &SyntheticOracle::true_utility);

  m.def(
      "make_synthetic_oracle",
      [](int d_emb, int n_models, int n_tasks, std::uint64_t seed, double c_max,
         double cost_noise_scale, std::vector<double> base_costs) {
        SyntheticSpec spec;
        spec.d_emb = d_emb;
        spec.n_models = n_models;
        spec.n_tasks = n_tasks;
        spec.c_max = c_max;
        spec.cost_noise_scale = cost_noise_scale;
        spec.base_costs = std::move(base_costs);
        return make_synthetic_oracle(spec, seed);
      },
      py::arg("d_emb"), py::arg("n_models"), py::arg("n_tasks"), py::arg("seed"),
      py::arg("c_max") = 1.0, py::arg("cost_noise_scale") = 0.02,
      py::arg("base_costs") = std::vector<double>{});

  m.def("generate_synthetic", &generate_synthetic, py::arg("oracle"),
        py::arg("n_queries"), py::arg("seed"));
  m.def("oracle_best_model", &oracle_best_model, py::arg("oracle"), py::arg("x"),
        py::arg("lambda_"));

  py::class_<PartitionConfig>(m, "PartitionConfig")
      .def(py::init<>())
      .def_readwrite("n_clients", &PartitionConfig::n_clients)
      .def_readwrite("alpha_query", &PartitionConfig::alpha_query)
      .def_readwrite("alpha_model", &PartitionConfig::alpha_model)
      .def_readwrite("train_fraction", &PartitionConfig::train_fraction)
      .def_readwrite("seed", &PartitionConfig::seed);

  py::class_<ClientPartition>(m, "ClientPartition")
      .def_readonly("warnings", &ClientPartition::warnings)
      .def_property_readonly("n_clients", [](const ClientPartition& p) {
        return p.clients.size();
      });

  m.def("partition_corpus", &partition_corpus, py::arg("corpus"), py::arg("n_models"),
        py::arg("config"));
  m.def("materialize_clients", &materialize_clients, py::arg("corpus"),
        py::arg("partition"));
  m.def(
      "test_queries",
      [](const std::vector<FullEvaluation>& corpus, const ClientPartition& partition,
         const SyntheticOracle* oracle) {
        std::vector<FullEvaluation> out;
        for (const auto& client : partition.clients) {
          for (const auto q : client.test_queries) {
            FullEvaluation t = corpus[q];
            if (oracle != nullptr) {
              for (int mi = 0; mi < oracle->n_models(); ++mi) {
                t.accuracy[static_cast<std::size_t>(mi)] =
                    oracle->true_accuracy(t.embedding, mi);
                t.cost[static_cast<std::size_t>(mi)] = oracle->true_cost(t.embedding, mi);
              }
            }
            out.push_back(std::move(t));
          }
        }
        return out;
      },
      py::arg("corpus"), py::arg("partition"), py::arg("oracle") = nullptr,
      "Global test set (oracle-truth scored when an oracle is given)");

  py::class_<MlpArchitecture>(m, "MlpArchitecture")
      .def(py::init<>())
      .def_readwrite("d_emb", &MlpArchitecture::d_emb)
      .def_readwrite("hidden_widths", &MlpArchitecture::hidden_widths)
      .def_readwrite("dropout_p", &MlpArchitecture::dropout_p)
      .def_readwrite("n_models", &MlpArchitecture::n_models);

  py::class_<MlpRouterParams>(m, "MlpRouterParams")
      .def_property_readonly("parameter_count",
                             [](const MlpRouterParams& p) { return parameter_count(p); });

  py::class_<FederationConfig>(m, "FederationConfig")
      .def(py::init<>())
      .def_readwrite("n_rounds", &FederationConfig::n_rounds)
      .def_readwrite("participation_fraction", &FederationConfig::participation_fraction)
      .def_readwrite("local_epochs", &FederationConfig::local_epochs)
      .def_readwrite("local_steps", &FederationConfig::local_steps)
      .def_readwrite("batch_size", &FederationConfig::batch_size)
      .def_readwrite("seed", &FederationConfig::seed);

  m.def("init_params", &init_params, py::arg("arch"), py::arg("seed"));
  m.def(
      "train_federated_mlp",
      [](const std::vector<ClientDataset>& clients, const MlpArchitecture& arch,
         const FederationConfig& fed_cfg, double cost_normalizer, std::uint64_t init_seed,
         const std::string& optimizer, double learning_rate, double weight_decay,
         double clip_norm, int threads) {
        const auto opt =
            optimizer_from_kwargs(optimizer, learning_rate, weight_decay, clip_norm);
        auto result = run_federated_training(clients, arch, init_params(arch, init_seed),
                                             fed_cfg, opt, cost_normalizer, threads);
        std::vector<double> losses;
        for (const auto& round : result.rounds) losses.push_back(round.loss_all_clients);
        return py::make_tuple(result.params, losses);
      },
      py::arg("clients"), py::arg("arch"), py::arg("federation"),
      py::arg("cost_normalizer"), py::arg("init_seed") = 0,
      py::arg("optimizer") = "adamw", py::arg("learning_rate") = 1e-3,
      py::arg("weight_decay") = 3e-4, py::arg("clip_norm") = 1.0, py::arg("threads") = 1,
      "FedAvg training; returns (params, per-round global loss trace)");

  m.def(
      "train_local_mlp",
      [](const std::vector<EvaluationRecord>& train, const MlpArchitecture& arch,
         double cost_normalizer, int epochs, int batch_size, std::uint64_t seed,
         const std::string& optimizer, double learning_rate, double weight_decay,
         double clip_norm) {
        LocalTrainConfig cfg;
        cfg.epochs = epochs;
        cfg.batch_size = batch_size;
        cfg.optimizer =
            optimizer_from_kwargs(optimizer, learning_rate, weight_decay, clip_norm);
        return local_train(init_params(arch, derive_seed(seed, "init")), arch, train,
                           cost_normalizer, cfg, derive_seed(seed, "train"));
      },
      py::arg("train"), py::arg("arch"), py::arg("cost_normalizer"),
      py::arg("epochs") = 50, py::arg("batch_size") = 128, py::arg("seed") = 0,
      py::arg("optimizer") = "adamw", py::arg("learning_rate") = 1e-3,
      py::arg("weight_decay") = 3e-4, py::arg("clip_norm") = 1.0);

  m.def("predict_utilities", &predict_utilities, py::arg("params"), py::arg("arch"),
        py::arg("x"), py::arg("lambda_"), py::arg("cost_normalizer"));

  py::class_<KmeansConfig>(m, "KmeansConfig")
      .def(py::init<>())
      .def_readwrite("k_local", &KmeansConfig::k_local)
      .def_readwrite("k_global", &KmeansConfig::k_global)
      .def_readwrite("n_init", &KmeansConfig::n_init)
      .def_readwrite("max_iter", &KmeansConfig::max_iter);

  py::class_<KmeansRouterState>(m, "KmeansRouterState")
      .def_readonly("centroids", &KmeansRouterState::centroids)
      .def_readonly("n_models", &KmeansRouterState::n_models);

  m.def("build_federated_kmeans", &build_federated_kmeans, py::arg("clients"),
        py::arg("n_models"), py::arg("config"), py::arg("seed"), py::arg("threads") = 1);
  m.def("assign_cluster", &assign_cluster, py::arg("state"), py::arg("x"));
  m.def("cluster_utilities", &cluster_utilities, py::arg("state"), py::arg("x"),
        py::arg("lambda_"), "Per-model utilities; NaN marks absent models");

  py::class_<UtilityEstimator, std::shared_ptr<UtilityEstimator>>(m, "UtilityEstimator")
      .def("n_models", &UtilityEstimator::n_models);
  py::class_<MlpEstimator, UtilityEstimator, std::shared_ptr<MlpEstimator>>(m,
                                                                            "MlpEstimator")
      .def(py::init<MlpRouterParams, MlpArchitecture, double, bool>(), py::arg("params"),
           py::arg("arch"), py::arg("cost_normalizer"), py::arg("clamp_cost") = true);
  py::class_<KmeansEstimator, UtilityEstimator, std::shared_ptr<KmeansEstimator>>(
      m, "KmeansEstimator")
      .def(py::init<KmeansRouterState>(), py::arg("state"));
  py::class_<OracleEstimator, UtilityEstimator, std::shared_ptr<OracleEstimator>>(
      m, "OracleEstimator")
      .def(py::init<SyntheticOracle>(), py::arg("oracle"));
  py::class_<BlendedEstimator, UtilityEstimator, std::shared_ptr<BlendedEstimator>>(
      m, "BlendedEstimator");

  m.def(
      "route",
      [](const UtilityEstimator& estimator, const EmbeddingVector& x, double lambda) {
        return route(estimator.estimate(x), lambda);
      },
      py::arg("estimator"), py::arg("x"), py::arg("lambda_"));

  py::class_<FrontierPoint>(m, "FrontierPoint")
      .def_readonly("lambda_", &FrontierPoint::lambda)
      .def_readonly("mean_cost", &FrontierPoint::mean_cost)
      .def_readonly("mean_accuracy", &FrontierPoint::mean_accuracy);

  py::class_<FrontierCurve>(m, "FrontierCurve")
      .def_readonly("points", &FrontierCurve::points)
      .def_readonly("auc", &FrontierCurve::auc);

  py::class_<LambdaGrid>(m, "LambdaGrid")
      .def(py::init<>())
      .def_readwrite("lambda_min", &LambdaGrid::lambda_min)
      .def_readwrite("lambda_max", &LambdaGrid::lambda_max)
      .def_readwrite("n_points", &LambdaGrid::n_points);

  m.def(
      "evaluate_policy",
      [](const UtilityEstimator& estimator, const std::vector<FullEvaluation>& test,
         double lambda, int threads) {
        const auto score = evaluate_policy(estimator, test, lambda, threads);
        return py::make_tuple(score.mean_accuracy, score.mean_cost);
      },
      py::arg("estimator"), py::arg("test"), py::arg("lambda_"), py::arg("threads") = 1);
  m.def("sweep_lambda", &sweep_lambda, py::arg("estimator"), py::arg("test"),
        py::arg("grid") = LambdaGrid{}, py::arg("threads") = 1);
  m.def("suboptimality", &suboptimality, py::arg("policy"), py::arg("oracle"),
        py::arg("test"), py::arg("lambda_"));

  m.def(
      "blend_estimators",
      [](std::shared_ptr<UtilityEstimator> federated,
         std::shared_ptr<UtilityEstimator> local,
         const std::vector<EvaluationRecord>& calibration) {
        const auto weights = blend_weights(calibration_errors(*federated, calibration),
                                           calibration_errors(*local, calibration));
        return std::make_shared<BlendedEstimator>(std::move(federated), std::move(local),
                                                  weights);
      },
      py::arg("federated"), py::arg("local"), py::arg("calibration"),
      "Adaptive personalization: error-weighted blend of two estimators");

  m.def(
      "add_model_mlp",
      [](MlpRouterParams params, MlpArchitecture arch,
         const std::vector<EvaluationRecord>& calibration, double cost_normalizer,
         int epochs, double learning_rate, std::uint64_t seed) {
        LocalTrainConfig cfg;
        cfg.epochs = epochs;
        cfg.optimizer.learning_rate = learning_rate;
        add_model_mlp(params, arch, calibration, cost_normalizer, cfg, seed);
        return py::make_tuple(params, arch);
      },
      py::arg("params"), py::arg("arch"), py::arg("calibration"),
      py::arg("cost_normalizer"), py::arg("epochs") = 50,
      py::arg("learning_rate") = 1e-2, py::arg("seed") = 0);
  m.def(
      "add_model_kmeans",
      [](KmeansRouterState state, const std::vector<EvaluationRecord>& calibration) {
        add_model_kmeans(state, calibration);
        return state;
      },
      py::arg("state"), py::arg("calibration"));
  m.def(
      "add_clients_kmeans",
      [](KmeansRouterState state, const std::vector<ClientDataset>& new_clients) {
        add_clients_kmeans(state, new_clients);
        return state;
      },
      py::arg("state"), py::arg("new_clients"));

  m.def(
      "run_experiment_config",
      [](const std::string& config_json, const std::string& out_dir, int threads) {
        run_experiment(parse_experiment_config(config_json), out_dir, threads);
      },
      py::arg("config_json"), py::arg("out_dir"), py::arg("threads") = 1,
      "Full pipeline from a JSON config string into an artifact directory");
}
