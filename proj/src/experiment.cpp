#include "fedroute/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fedroute/checkpoint.hpp"
#include "experiment_util.hpp"
#include "fedroute/corpus_io.hpp"
#include "fedroute/numeric.hpp"
#include "fedroute/expansion.hpp"
#include "fedroute/personalization.hpp"
#include "fedroute/rng.hpp"
#include "fedroute/threading.hpp"

namespace fedroute {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

[[noreturn]] void config_error(const std::string& field, const std::string& message) {
  throw std::invalid_argument("config field '" + field + "': " + message);
}

void check_known_keys(const json& j, const std::string& scope,
                      std::initializer_list<const char*> known) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) config_error(scope.empty() ? key : scope + "." + key, "unknown field");
  }
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  check_known_keys(j, "",
                   {"seed", "dataset", "partition", "routers", "federation", "mlp",
                    "optimizer", "kmeans", "evaluation", "baselines", "personalization",
                    "expansion"});

  ExperimentConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);

  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    check_known_keys(d, "dataset", {"kind", "synthetic", "file"});
    const std::string kind = d.value("kind", "synthetic");
    if (kind == "synthetic") {
      cfg.synthetic = true;
    } else if (kind == "file") {
      cfg.synthetic = false;
    } else {
      config_error("dataset.kind", "must be 'synthetic' or 'file'");
    }
    if (d.contains("synthetic")) {
      const auto& s = d.at("synthetic");
      check_known_keys(s, "dataset.synthetic",
                       {"d_emb", "n_models", "n_tasks", "n_queries", "c_max",
                        "cost_noise_scale", "mixture_stddev", "center_spread",
                        "accuracy_sharpness", "base_costs"});
      cfg.synthetic_spec.d_emb = s.value("d_emb", cfg.synthetic_spec.d_emb);
      cfg.synthetic_spec.n_models = s.value("n_models", cfg.synthetic_spec.n_models);
      cfg.synthetic_spec.n_tasks = s.value("n_tasks", cfg.synthetic_spec.n_tasks);
      cfg.n_queries = s.value("n_queries", cfg.n_queries);
      cfg.synthetic_spec.c_max = s.value("c_max", cfg.synthetic_spec.c_max);
      cfg.synthetic_spec.cost_noise_scale =
          s.value("cost_noise_scale", cfg.synthetic_spec.cost_noise_scale);
      cfg.synthetic_spec.mixture_stddev =
          s.value("mixture_stddev", cfg.synthetic_spec.mixture_stddev);
      cfg.synthetic_spec.center_spread =
          s.value("center_spread", cfg.synthetic_spec.center_spread);
      cfg.synthetic_spec.accuracy_sharpness =
          s.value("accuracy_sharpness", cfg.synthetic_spec.accuracy_sharpness);
      cfg.synthetic_spec.base_costs =
          s.value("base_costs", cfg.synthetic_spec.base_costs);
    }
    if (d.contains("file")) {
      const auto& f = d.at("file");
      check_known_keys(f, "dataset.file", {"path"});
      cfg.corpus_path = f.value("path", "");
    }
  }

  if (j.contains("partition")) {
    const auto& p = j.at("partition");
    check_known_keys(p, "partition",
                     {"n_clients", "alpha_query", "alpha_model", "train_fraction"});
    cfg.partition.n_clients = p.value("n_clients", cfg.partition.n_clients);
    cfg.partition.alpha_query = p.value("alpha_query", cfg.partition.alpha_query);
    cfg.partition.alpha_model = p.value("alpha_model", cfg.partition.alpha_model);
    cfg.partition.train_fraction = p.value("train_fraction", cfg.partition.train_fraction);
  }

  if (j.contains("routers")) {
    const std::string family = j.at("routers").get<std::string>();
    if (family == "mlp") {
      cfg.routers = RouterFamily::Mlp;
    } else if (family == "kmeans") {
      cfg.routers = RouterFamily::Kmeans;
    } else if (family == "both") {
      cfg.routers = RouterFamily::Both;
    } else {
      config_error("routers", "must be 'mlp', 'kmeans' or 'both'");
    }
  }

  if (j.contains("federation")) {
    const auto& f = j.at("federation");
    check_known_keys(f, "federation",
                     {"n_rounds", "participation_fraction", "local_epochs", "local_steps",
                      "batch_size"});
    cfg.federation.n_rounds = f.value("n_rounds", cfg.federation.n_rounds);
    cfg.federation.participation_fraction =
        f.value("participation_fraction", cfg.federation.participation_fraction);
    cfg.federation.local_epochs = f.value("local_epochs", cfg.federation.local_epochs);
    cfg.federation.local_steps = f.value("local_steps", cfg.federation.local_steps);
    cfg.federation.batch_size = f.value("batch_size", cfg.federation.batch_size);
  }

  if (j.contains("mlp")) {
    const auto& m = j.at("mlp");
    check_known_keys(m, "mlp", {"hidden_widths", "dropout_p"});
    cfg.mlp.hidden_widths = m.value("hidden_widths", cfg.mlp.hidden_widths);
    cfg.mlp.dropout_p = m.value("dropout_p", cfg.mlp.dropout_p);
  }

  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    check_known_keys(o, "optimizer",
                     {"kind", "learning_rate", "weight_decay", "beta1", "beta2", "epsilon",
                      "clip_norm"});
    const std::string kind = o.value("kind", "adamw");
    if (kind == "adamw") {
      cfg.optimizer.kind = OptimizerConfig::Kind::AdamW;
    } else if (kind == "sgd") {
      cfg.optimizer.kind = OptimizerConfig::Kind::Sgd;
    } else {
      config_error("optimizer.kind", "must be 'adamw' or 'sgd'");
    }
    cfg.optimizer.learning_rate = o.value("learning_rate", cfg.optimizer.learning_rate);
    cfg.optimizer.weight_decay = o.value("weight_decay", cfg.optimizer.weight_decay);
    cfg.optimizer.beta1 = o.value("beta1", cfg.optimizer.beta1);
    cfg.optimizer.beta2 = o.value("beta2", cfg.optimizer.beta2);
    cfg.optimizer.epsilon = o.value("epsilon", cfg.optimizer.epsilon);
    cfg.optimizer.clip_norm = o.value("clip_norm", cfg.optimizer.clip_norm);
  }

  if (j.contains("kmeans")) {
    const auto& k = j.at("kmeans");
    check_known_keys(k, "kmeans", {"k_local", "k_global", "n_init", "max_iter"});
    cfg.kmeans.k_local = k.value("k_local", cfg.kmeans.k_local);
    cfg.kmeans.k_global = k.value("k_global", cfg.kmeans.k_global);
    cfg.kmeans.n_init = k.value("n_init", cfg.kmeans.n_init);
    cfg.kmeans.max_iter = k.value("max_iter", cfg.kmeans.max_iter);
  }

  if (j.contains("evaluation")) {
    const auto& e = j.at("evaluation");
    check_known_keys(e, "evaluation", {"lambda_min", "lambda_max", "n_lambda"});
    cfg.grid.lambda_min = e.value("lambda_min", cfg.grid.lambda_min);
    cfg.grid.lambda_max = e.value("lambda_max", cfg.grid.lambda_max);
    cfg.grid.n_points = e.value("n_lambda", cfg.grid.n_points);
  }

  if (j.contains("baselines")) {
    const auto& b = j.at("baselines");
    check_known_keys(b, "baselines", {"local", "centralized", "local_epochs",
                                      "centralized_epochs"});
    cfg.baselines.local = b.value("local", cfg.baselines.local);
    cfg.baselines.centralized = b.value("centralized", cfg.baselines.centralized);
    cfg.baselines.local_epochs = b.value("local_epochs", cfg.baselines.local_epochs);
    cfg.baselines.centralized_epochs =
        b.value("centralized_epochs", cfg.baselines.centralized_epochs);
  }

  if (j.contains("personalization")) {
    const auto& p = j.at("personalization");
    check_known_keys(p, "personalization", {"enabled"});
    cfg.personalization = p.value("enabled", cfg.personalization);
  }

  if (j.contains("expansion")) {
    const auto& e = j.at("expansion");
    check_known_keys(e, "expansion",
                     {"withhold_models", "calibration_fraction", "head_epochs",
                      "head_learning_rate", "initial_clients", "distill_weight",
                      "adaptation_rounds"});
    cfg.expansion.withhold_models = e.value("withhold_models", cfg.expansion.withhold_models);
    cfg.expansion.calibration_fraction =
        e.value("calibration_fraction", cfg.expansion.calibration_fraction);
    cfg.expansion.head_epochs = e.value("head_epochs", cfg.expansion.head_epochs);
    cfg.expansion.head_learning_rate =
        e.value("head_learning_rate", cfg.expansion.head_learning_rate);
    cfg.expansion.initial_clients = e.value("initial_clients", cfg.expansion.initial_clients);
    cfg.expansion.distill_weight = e.value("distill_weight", cfg.expansion.distill_weight);
    cfg.expansion.adaptation_rounds =
        e.value("adaptation_rounds", cfg.expansion.adaptation_rounds);
  }

  // Field-level validation.
  if (!cfg.synthetic && cfg.corpus_path.empty()) {
    config_error("dataset.file.path", "required when dataset.kind is 'file'");
  }
  if (cfg.synthetic && cfg.n_queries < 1) config_error("dataset.synthetic.n_queries", "must be >= 1");
  if (cfg.synthetic && cfg.synthetic_spec.d_emb < 1) config_error("dataset.synthetic.d_emb", "must be >= 1");
  if (cfg.synthetic && cfg.synthetic_spec.n_models < 1) {
    config_error("dataset.synthetic.n_models", "must be >= 1");
  }
  if (cfg.synthetic && cfg.synthetic_spec.n_tasks < 1) config_error("dataset.synthetic.n_tasks", "must be >= 1");
  if (cfg.partition.n_clients < 1) config_error("partition.n_clients", "must be >= 1");
  if (cfg.partition.alpha_query <= 0.0) config_error("partition.alpha_query", "must be > 0");
  if (cfg.partition.alpha_model <= 0.0) config_error("partition.alpha_model", "must be > 0");
  if (!(cfg.partition.train_fraction > 0.0 && cfg.partition.train_fraction < 1.0)) {
    config_error("partition.train_fraction", "must be in (0,1)");
  }
  if (cfg.federation.n_rounds < 0) config_error("federation.n_rounds", "must be >= 0");
  if (!(cfg.federation.participation_fraction > 0.0 &&
        cfg.federation.participation_fraction <= 1.0)) {
    config_error("federation.participation_fraction", "must be in (0,1]");
  }
  if (cfg.federation.local_epochs < 1 && cfg.federation.local_steps < 1) {
    config_error("federation.local_epochs", "need local_epochs >= 1 or local_steps >= 1");
  }
  if (cfg.federation.batch_size < 1) config_error("federation.batch_size", "must be >= 1");
  if (cfg.mlp.hidden_widths.empty()) config_error("mlp.hidden_widths", "must be nonempty");
  for (const int w : cfg.mlp.hidden_widths) {
    if (w < 1) config_error("mlp.hidden_widths", "widths must be >= 1");
  }
  if (!(cfg.mlp.dropout_p >= 0.0 && cfg.mlp.dropout_p < 1.0)) {
    config_error("mlp.dropout_p", "must be in [0,1)");
  }
  if (cfg.optimizer.learning_rate <= 0.0) config_error("optimizer.learning_rate", "must be > 0");
  if (cfg.kmeans.k_local < 1) config_error("kmeans.k_local", "must be >= 1");
  if (cfg.kmeans.k_global < 1) config_error("kmeans.k_global", "must be >= 1");
  if (cfg.kmeans.n_init < 1) config_error("kmeans.n_init", "must be >= 1");
  if (cfg.kmeans.max_iter < 1) config_error("kmeans.max_iter", "must be >= 1");
  if (cfg.grid.n_points < 2) config_error("evaluation.n_lambda", "must be >= 2");
  if (!(cfg.grid.lambda_min > 0.0 && cfg.grid.lambda_max > 0.0)) {
    config_error("evaluation.lambda_min", "grid endpoints must be positive");
  }
  if (cfg.expansion.withhold_models < 0) config_error("expansion.withhold_models", "must be >= 0");
  if (cfg.synthetic &&
      cfg.expansion.withhold_models >= cfg.synthetic_spec.n_models) {
    config_error("expansion.withhold_models", "must leave at least one initial model");
  }
  if (!(cfg.expansion.calibration_fraction > 0.0 &&
        cfg.expansion.calibration_fraction <= 1.0)) {
    config_error("expansion.calibration_fraction", "must be in (0,1]");
  }
  if (cfg.expansion.initial_clients < 0 ||
      cfg.expansion.initial_clients > cfg.partition.n_clients) {
    config_error("expansion.initial_clients", "must be in [0, n_clients]");
  }
  if (cfg.expansion.distill_weight < 0.0) {
    config_error("expansion.distill_weight", "must be >= 0");
  }
  cfg.partition.seed = derive_seed(cfg.seed, "partition");
  cfg.federation.seed = derive_seed(cfg.seed, "federation");
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_experiment_config(buffer.str());
}

std::string dump_experiment_config(const ExperimentConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["dataset"]["kind"] = cfg.synthetic ? "synthetic" : "file";
  j["dataset"]["synthetic"] = {{"d_emb", cfg.synthetic_spec.d_emb},
                               {"n_models", cfg.synthetic_spec.n_models},
                               {"n_tasks", cfg.synthetic_spec.n_tasks},
                               {"n_queries", cfg.n_queries},
                               {"c_max", cfg.synthetic_spec.c_max},
                               {"cost_noise_scale", cfg.synthetic_spec.cost_noise_scale},
                               {"mixture_stddev", cfg.synthetic_spec.mixture_stddev},
                               {"center_spread", cfg.synthetic_spec.center_spread},
                               {"accuracy_sharpness", cfg.synthetic_spec.accuracy_sharpness},
                               {"base_costs", cfg.synthetic_spec.base_costs}};
  j["dataset"]["file"] = {{"path", cfg.corpus_path}};
  j["partition"] = {{"n_clients", cfg.partition.n_clients},
                    {"alpha_query", cfg.partition.alpha_query},
                    {"alpha_model", cfg.partition.alpha_model},
                    {"train_fraction", cfg.partition.train_fraction}};
  j["routers"] = cfg.routers == RouterFamily::Mlp
                     ? "mlp"
                     : (cfg.routers == RouterFamily::Kmeans ? "kmeans" : "both");
  j["federation"] = {{"n_rounds", cfg.federation.n_rounds},
                     {"participation_fraction", cfg.federation.participation_fraction},
                     {"local_epochs", cfg.federation.local_epochs},
                     {"local_steps", cfg.federation.local_steps},
                     {"batch_size", cfg.federation.batch_size}};
  j["mlp"] = {{"hidden_widths", cfg.mlp.hidden_widths}, {"dropout_p", cfg.mlp.dropout_p}};
  j["optimizer"] = {{"kind", cfg.optimizer.kind == OptimizerConfig::Kind::AdamW ? "adamw"
                                                                                : "sgd"},
                    {"learning_rate", cfg.optimizer.learning_rate},
                    {"weight_decay", cfg.optimizer.weight_decay},
                    {"beta1", cfg.optimizer.beta1},
                    {"beta2", cfg.optimizer.beta2},
                    {"epsilon", cfg.optimizer.epsilon},
                    {"clip_norm", cfg.optimizer.clip_norm}};
  j["kmeans"] = {{"k_local", cfg.kmeans.k_local},
                 {"k_global", cfg.kmeans.k_global},
                 {"n_init", cfg.kmeans.n_init},
                 {"max_iter", cfg.kmeans.max_iter}};
  j["evaluation"] = {{"lambda_min", cfg.grid.lambda_min},
                     {"lambda_max", cfg.grid.lambda_max},
                     {"n_lambda", cfg.grid.n_points}};
  j["baselines"] = {{"local", cfg.baselines.local},
                    {"centralized", cfg.baselines.centralized},
                    {"local_epochs", cfg.baselines.local_epochs},
                    {"centralized_epochs", cfg.baselines.centralized_epochs}};
  j["personalization"] = {{"enabled", cfg.personalization}};
  j["expansion"] = {{"withhold_models", cfg.expansion.withhold_models},
                    {"calibration_fraction", cfg.expansion.calibration_fraction},
                    {"head_epochs", cfg.expansion.head_epochs},
                    {"head_learning_rate", cfg.expansion.head_learning_rate},
                    {"initial_clients", cfg.expansion.initial_clients},
                    {"distill_weight", cfg.expansion.distill_weight},
                    {"adaptation_rounds", cfg.expansion.adaptation_rounds}};
  return j.dump(2) + "\n";
}

namespace {

std::vector<FullEvaluation> make_test_queries(const std::vector<FullEvaluation>& corpus,
                                              const std::vector<std::size_t>& indices,
                                              const SyntheticOracle* oracle) {
  std::vector<FullEvaluation> out;
  out.reserve(indices.size());
  for (const std::size_t i : indices) {
    FullEvaluation q = corpus[i];
    if (oracle != nullptr) {
      // Score against the oracle's true expectations rather than the
      // realized draws; any routed model can then be priced exactly.
      for (int m = 0; m < oracle->n_models(); ++m) {
        q.accuracy[static_cast<std::size_t>(m)] = oracle->true_accuracy(q.embedding, m);
        q.cost[static_cast<std::size_t>(m)] = oracle->true_cost(q.embedding, m);
      }
    }
    out.push_back(std::move(q));
  }
  return out;
}

void finalize_test_sets(const ExperimentConfig& cfg, ExperimentData& data) {
  const SyntheticOracle* oracle = data.has_oracle ? &data.oracle : nullptr;
  data.client_tests.clear();
  std::vector<std::size_t> global_indices;
  for (const auto& client : data.partition.clients) {
    data.client_tests.push_back(make_test_queries(data.corpus, client.test_queries, oracle));
    global_indices.insert(global_indices.end(), client.test_queries.begin(),
                          client.test_queries.end());
  }
  std::sort(global_indices.begin(), global_indices.end());
  data.global_test = make_test_queries(data.corpus, global_indices, oracle);
  data.clients = materialize_clients(data.corpus, data.partition);
  (void)cfg;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
}

}  // namespace

ExperimentData stage_partition(const ExperimentConfig& cfg, const std::string& out_dir) {
  ExperimentData data;
  if (cfg.synthetic) {
    data.oracle = make_synthetic_oracle(cfg.synthetic_spec, derive_seed(cfg.seed, "oracle"));
    data.has_oracle = true;
    data.corpus = generate_synthetic(data.oracle, cfg.n_queries,
                                     derive_seed(cfg.seed, "corpus"));
    data.manifest = synthetic_manifest(data.oracle, data.corpus);
  } else {
    auto [corpus, manifest] = load_full_corpus(cfg.corpus_path);
    data.corpus = std::move(corpus);
    data.manifest = std::move(manifest);
  }
  data.partition = partition_corpus(data.corpus, data.manifest.model_pool.size(),
                                    cfg.partition);
  finalize_test_sets(cfg, data);

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text_file(out_dir + "/frozen_config.json", dump_experiment_config(cfg));
    save_full_corpus(out_dir + "/corpus.csv", data.corpus, data.manifest);
    if (data.has_oracle) save_oracle(out_dir + "/oracle.json", data.oracle);
    save_partition(out_dir + "/partition_manifest.csv", data.partition);
  }
  return data;
}

ExperimentData load_experiment_data(const ExperimentConfig& cfg, const std::string& dir) {
  ExperimentData data;
  auto [corpus, manifest] = load_full_corpus(dir + "/corpus.csv");
  data.corpus = std::move(corpus);
  data.manifest = std::move(manifest);
  if (fs::exists(dir + "/oracle.json")) {
    data.oracle = load_oracle(dir + "/oracle.json");
    data.has_oracle = true;
  }
  data.partition = load_partition(dir + "/partition_manifest.csv");
  finalize_test_sets(cfg, data);
  return data;
}

namespace {

struct TrainedRouters {
  bool has_mlp = false;
  MlpCheckpoint mlp_federated;
  std::vector<RoundRecord> mlp_federated_rounds;
  std::vector<MlpCheckpoint> mlp_locals;
  bool has_mlp_centralized = false;
  MlpCheckpoint mlp_centralized;

  bool has_kmeans = false;
  KmeansCheckpoint kmeans_federated;
  std::vector<KmeansCheckpoint> kmeans_locals;
  bool has_kmeans_centralized = false;
  KmeansCheckpoint kmeans_centralized;
};

TrainedRouters train_routers(const ExperimentConfig& cfg, const ExperimentData& data,
                             int threads) {
  TrainedRouters routers;
  const auto arch = detail::resolved_architecture(cfg, data.manifest);
  const double cn = data.manifest.cost_normalizer;
  const auto& model_ids = data.manifest.model_pool.model_ids;
  const bool want_mlp = cfg.routers != RouterFamily::Kmeans;
  const bool want_kmeans = cfg.routers != RouterFamily::Mlp;

  if (want_mlp) {
    routers.has_mlp = true;
    const auto initial = init_params(arch, derive_seed(cfg.seed, "mlp-init"));
    auto fed = run_federated_training(data.clients, arch, initial, cfg.federation,
                                      cfg.optimizer, cn, threads);
    routers.mlp_federated = {arch, std::move(fed.params), cn, model_ids};
    routers.mlp_federated_rounds = std::move(fed.rounds);

    if (cfg.baselines.local) {
      routers.mlp_locals.resize(data.clients.size());
      parallel_for(data.clients.size(), threads, [&](std::size_t c) {
        LocalTrainConfig local_cfg;
        local_cfg.epochs = cfg.baselines.local_epochs;
        local_cfg.batch_size = cfg.federation.batch_size;
        local_cfg.optimizer = cfg.optimizer;
        const auto local_initial =
            init_params(arch, derive_seed(cfg.seed, "local-mlp-init", c));
        auto params = local_train(local_initial, arch, data.clients[c].train, cn, local_cfg,
                                  derive_seed(cfg.seed, "local-mlp-train", c));
        routers.mlp_locals[c] = {arch, std::move(params), cn, model_ids};
      });
    }
    if (cfg.baselines.centralized) {
      routers.has_mlp_centralized = true;
      LocalTrainConfig central_cfg;
      central_cfg.epochs = cfg.baselines.centralized_epochs;
      central_cfg.batch_size = cfg.federation.batch_size;
      central_cfg.optimizer = cfg.optimizer;
      const auto pooled = detail::pooled_records(data.clients);
      auto params = local_train(init_params(arch, derive_seed(cfg.seed, "central-mlp-init")),
                                arch, pooled, cn, central_cfg,
                                derive_seed(cfg.seed, "central-mlp-train"));
      routers.mlp_centralized = {arch, std::move(params), cn, model_ids};
    }
  }

  if (want_kmeans) {
    routers.has_kmeans = true;
    const int n_models = data.manifest.model_pool.size();
    routers.kmeans_federated = {
        build_federated_kmeans(data.clients, n_models, cfg.kmeans,
                               derive_seed(cfg.seed, "kmeans-fed"), threads),
        model_ids};
    if (cfg.baselines.local) {
      routers.kmeans_locals.resize(data.clients.size());
      parallel_for(data.clients.size(), threads, [&](std::size_t c) {
        if (data.clients[c].train.empty()) return;
        routers.kmeans_locals[c] = {
            build_centralized_kmeans(data.clients[c].train, n_models, cfg.kmeans.k_global,
                                     cfg.kmeans.n_init, cfg.kmeans.max_iter,
                                     derive_seed(cfg.seed, "kmeans-local", c)),
            model_ids};
      });
    }
    if (cfg.baselines.centralized) {
      routers.has_kmeans_centralized = true;
      routers.kmeans_centralized = {
          build_centralized_kmeans(detail::pooled_records(data.clients), n_models,
                                   cfg.kmeans.k_global, cfg.kmeans.n_init,
                                   cfg.kmeans.max_iter,
                                   derive_seed(cfg.seed, "kmeans-central")),
          model_ids};
    }
  }
  return routers;
}

}  // namespace

void stage_train(const ExperimentConfig& cfg, const ExperimentData& data,
                 const std::string& out_dir, int threads) {
  const auto routers = train_routers(cfg, data, threads);
  fs::create_directories(out_dir + "/checkpoints");
  fs::create_directories(out_dir + "/traces");

  if (routers.has_mlp) {
    save_mlp_checkpoint(out_dir + "/checkpoints/mlp_federated.json", routers.mlp_federated);
    detail::save_round_trace(out_dir + "/traces/round_trace_mlp_federated.csv",
                     routers.mlp_federated_rounds);
    for (std::size_t c = 0; c < routers.mlp_locals.size(); ++c) {
      if (routers.mlp_locals[c].model_ids.empty()) continue;
      save_mlp_checkpoint(out_dir + "/checkpoints/mlp_local_" + detail::client_tag(static_cast<int>(c)) +
                              ".json",
                          routers.mlp_locals[c]);
    }
    if (routers.has_mlp_centralized) {
      save_mlp_checkpoint(out_dir + "/checkpoints/mlp_centralized.json",
                          routers.mlp_centralized);
    }
  }
  if (routers.has_kmeans) {
    save_kmeans_checkpoint(out_dir + "/checkpoints/kmeans_federated.json",
                           routers.kmeans_federated);
    for (std::size_t c = 0; c < routers.kmeans_locals.size(); ++c) {
      if (routers.kmeans_locals[c].model_ids.empty()) continue;
      save_kmeans_checkpoint(out_dir + "/checkpoints/kmeans_local_" +
                                 detail::client_tag(static_cast<int>(c)) + ".json",
                             routers.kmeans_locals[c]);
    }
    if (routers.has_kmeans_centralized) {
      save_kmeans_checkpoint(out_dir + "/checkpoints/kmeans_centralized.json",
                             routers.kmeans_centralized);
    }
  }
}

namespace {

void eval_router(const std::string& name, const UtilityEstimator& estimator,
                 const ExperimentConfig& cfg, const ExperimentData& data,
                 const std::string& out_dir, int threads, bool all_client_tests,
                 int only_client, std::vector<AucRow>& rows) {
  const auto global_curve = sweep_lambda(estimator, data.global_test, cfg.grid, threads);
  save_curve(out_dir + "/curves/" + name + "__global_test.csv", global_curve);
  rows.push_back({name, "global_test", global_curve.auc});
  for (std::size_t c = 0; c < data.client_tests.size(); ++c) {
    const bool wanted = all_client_tests || static_cast<int>(c) == only_client;
    if (!wanted || data.client_tests[c].empty()) continue;
    const auto curve = sweep_lambda(estimator, data.client_tests[c], cfg.grid, threads);
    const std::string set_name = detail::client_tag(static_cast<int>(c)) + "_test";
    save_curve(out_dir + "/curves/" + name + "__" + set_name + ".csv", curve);
    rows.push_back({name, set_name, curve.auc});
  }
}

}  // namespace

void stage_eval(const ExperimentConfig& cfg, const ExperimentData& data,
                const std::string& out_dir, int threads) {
  fs::create_directories(out_dir + "/curves");
  std::vector<AucRow> rows;

  const std::string ck = out_dir + "/checkpoints";
  if (fs::exists(ck + "/mlp_federated.json")) {
    const auto checkpoint = load_mlp_checkpoint(ck + "/mlp_federated.json");
    const MlpEstimator estimator(checkpoint.params, checkpoint.architecture,
                                 checkpoint.cost_normalizer);
    eval_router("mlp_federated", estimator, cfg, data, out_dir, threads, true, -1, rows);
  }
  if (fs::exists(ck + "/mlp_centralized.json")) {
    const auto checkpoint = load_mlp_checkpoint(ck + "/mlp_centralized.json");
    const MlpEstimator estimator(checkpoint.params, checkpoint.architecture,
                                 checkpoint.cost_normalizer);
    eval_router("mlp_centralized", estimator, cfg, data, out_dir, threads, false, -1, rows);
  }
  if (fs::exists(ck + "/kmeans_federated.json")) {
    const auto checkpoint = load_kmeans_checkpoint(ck + "/kmeans_federated.json");
    const KmeansEstimator estimator(checkpoint.state);
    eval_router("kmeans_federated", estimator, cfg, data, out_dir, threads, true, -1, rows);
  }
  if (fs::exists(ck + "/kmeans_centralized.json")) {
    const auto checkpoint = load_kmeans_checkpoint(ck + "/kmeans_centralized.json");
    const KmeansEstimator estimator(checkpoint.state);
    eval_router("kmeans_centralized", estimator, cfg, data, out_dir, threads, false, -1,
                rows);
  }
  for (int c = 0; c < cfg.partition.n_clients; ++c) {
    const std::string mlp_path = ck + "/mlp_local_" + detail::client_tag(c) + ".json";
    if (fs::exists(mlp_path)) {
      const auto checkpoint = load_mlp_checkpoint(mlp_path);
      const MlpEstimator estimator(checkpoint.params, checkpoint.architecture,
                                   checkpoint.cost_normalizer);
      eval_router("mlp_local_" + detail::client_tag(c), estimator, cfg, data, out_dir, threads,
                  false, c, rows);
    }
    const std::string km_path = ck + "/kmeans_local_" + detail::client_tag(c) + ".json";
    if (fs::exists(km_path)) {
      const auto checkpoint = load_kmeans_checkpoint(km_path);
      const KmeansEstimator estimator(checkpoint.state);
      eval_router("kmeans_local_" + detail::client_tag(c), estimator, cfg, data, out_dir, threads,
                  false, c, rows);
    }
  }
  detail::write_auc_summary(out_dir + "/auc_summary.csv", std::move(rows));
}

void stage_personalize(const ExperimentConfig& cfg, const ExperimentData& data,
                       const std::string& out_dir, int threads) {
  fs::create_directories(out_dir + "/curves");
  const std::string ck = out_dir + "/checkpoints";
  std::vector<AucRow> rows;
  if (fs::exists(out_dir + "/auc_summary.csv")) {
    rows = load_auc_summary(out_dir + "/auc_summary.csv");
  }
  std::erase_if(rows, [](const AucRow& r) {
    return r.router.find("personalized") != std::string::npos;
  });

  std::vector<std::pair<int, PersonalizationWeights>> mlp_reports;
  std::vector<std::pair<int, PersonalizationWeights>> kmeans_reports;

  for (int c = 0; c < cfg.partition.n_clients; ++c) {
    const auto& client = data.clients[static_cast<std::size_t>(c)];
    if (client.train.empty()) continue;

    const std::string fed_mlp = ck + "/mlp_federated.json";
    const std::string local_mlp = ck + "/mlp_local_" + detail::client_tag(c) + ".json";
    if (fs::exists(fed_mlp) && fs::exists(local_mlp)) {
      const auto fed_ck = load_mlp_checkpoint(fed_mlp);
      const auto local_ck = load_mlp_checkpoint(local_mlp);
      auto fed = std::make_shared<MlpEstimator>(fed_ck.params, fed_ck.architecture,
                                                fed_ck.cost_normalizer);
      auto local = std::make_shared<MlpEstimator>(local_ck.params, local_ck.architecture,
                                                  local_ck.cost_normalizer);
      const auto weights = blend_weights(calibration_errors(*fed, client.train),
                                         calibration_errors(*local, client.train));
      mlp_reports.emplace_back(c, weights);
      const BlendedEstimator blended(fed, local, weights);
      if (!data.client_tests[static_cast<std::size_t>(c)].empty()) {
        const auto curve = sweep_lambda(blended, data.client_tests[static_cast<std::size_t>(c)],
                                        cfg.grid, threads);
        const std::string name = "mlp_personalized_" + detail::client_tag(c);
        save_curve(out_dir + "/curves/" + name + "__" + detail::client_tag(c) + "_test.csv", curve);
        rows.push_back({name, detail::client_tag(c) + "_test", curve.auc});
      }
    }

    const std::string fed_km = ck + "/kmeans_federated.json";
    const std::string local_km = ck + "/kmeans_local_" + detail::client_tag(c) + ".json";
    if (fs::exists(fed_km) && fs::exists(local_km)) {
      const auto fed_ck = load_kmeans_checkpoint(fed_km);
      const auto local_ck = load_kmeans_checkpoint(local_km);
      auto fed = std::make_shared<KmeansEstimator>(fed_ck.state);
      auto local = std::make_shared<KmeansEstimator>(local_ck.state);
      const auto weights = blend_weights(calibration_errors(*fed, client.train),
                                         calibration_errors(*local, client.train));
      kmeans_reports.emplace_back(c, weights);
      const BlendedEstimator blended(fed, local, weights);
      if (!data.client_tests[static_cast<std::size_t>(c)].empty()) {
        const auto curve = sweep_lambda(blended, data.client_tests[static_cast<std::size_t>(c)],
                                        cfg.grid, threads);
        const std::string name = "kmeans_personalized_" + detail::client_tag(c);
        save_curve(out_dir + "/curves/" + name + "__" + detail::client_tag(c) + "_test.csv", curve);
        rows.push_back({name, detail::client_tag(c) + "_test", curve.auc});
      }
    }
  }

  if (!mlp_reports.empty()) {
    save_personalization_report(out_dir + "/personalization_report_mlp.csv", mlp_reports);
  }
  if (!kmeans_reports.empty()) {
    save_personalization_report(out_dir + "/personalization_report_kmeans.csv",
                                kmeans_reports);
  }
  detail::write_auc_summary(out_dir + "/auc_summary.csv", std::move(rows));
}

void run_experiment(const ExperimentConfig& cfg, const std::string& out_dir, int threads) {
  const auto data = stage_partition(cfg, out_dir);
  stage_train(cfg, data, out_dir, threads);
  stage_eval(cfg, data, out_dir, threads);
  if (cfg.personalization) stage_personalize(cfg, data, out_dir, threads);
  if (cfg.expansion.withhold_models > 0) stage_expand_models(cfg, out_dir, threads);
  if (cfg.expansion.initial_clients > 0) stage_expand_clients(cfg, out_dir, threads);
}

std::vector<AucRow> load_auc_summary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "router,eval_set,auc") {
    throw std::runtime_error(path + ": not an AUC summary file");
  }
  std::vector<AucRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    AucRow row;
    std::string cell;
    std::getline(ss, row.router, ',');
    std::getline(ss, row.eval_set, ',');
    std::getline(ss, cell, ',');
    row.auc = std::stod(cell);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace fedroute
