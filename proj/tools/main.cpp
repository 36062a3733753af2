#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fedroute/checkpoint.hpp"
#include "fedroute/experiment.hpp"
#include "fedroute/threading.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::string out_dir;
  std::string seed_override;
  int threads = fedroute::default_thread_count();
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "Experiment config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", opts.out_dir, "Artifact directory")->required();
  cmd->add_option("--seed", opts.seed_override, "Master seed override");
  cmd->add_option("--threads", opts.threads, "Worker threads (1 = serial)");
}

fedroute::ExperimentConfig load_config(const CommonOptions& opts) {
  auto cfg = fedroute::load_experiment_config(opts.config_path);
  if (!opts.seed_override.empty()) {
    cfg.seed = std::stoull(opts.seed_override);
    // Re-parse so the derived sub-seeds follow the override.
    cfg = fedroute::parse_experiment_config(fedroute::dump_experiment_config(cfg));
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedroute: federated LLM-router training and evaluation"};
  app.require_subcommand(1);

  CommonOptions run_opts;
  auto* run = app.add_subcommand(
      "run", "Full pipeline: partition, train, eval (+ optional scenarios)");
  add_common(run, run_opts);

  CommonOptions partition_opts;
  auto* partition = app.add_subcommand(
      "partition", "Materialize the corpus and the client partition");
  add_common(partition, partition_opts);

  CommonOptions train_opts;
  auto* train = app.add_subcommand(
      "train", "Train routers from an existing partition artifact");
  add_common(train, train_opts);

  CommonOptions eval_opts;
  auto* eval = app.add_subcommand(
      "eval", "Sweep lambda over trained checkpoints and summarize AUCs");
  add_common(eval, eval_opts);

  CommonOptions personalize_opts;
  auto* personalize = app.add_subcommand(
      "personalize", "Blend federated and client-local routers per client");
  add_common(personalize, personalize_opts);

  CommonOptions expand_models_opts;
  auto* expand_models = app.add_subcommand(
      "expand-models", "Withheld-model scenario: train, onboard, re-evaluate");
  add_common(expand_models, expand_models_opts);

  CommonOptions expand_clients_opts;
  auto* expand_clients = app.add_subcommand(
      "expand-clients", "Late-joining-client scenario: adapt and re-evaluate");
  add_common(expand_clients, expand_clients_opts);

  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect", "Print checkpoint metadata");
  inspect->add_option("path", inspect_path, "Checkpoint or oracle file")
      ->required()
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (inspect->parsed()) {
      std::cout << fedroute::describe_checkpoint(inspect_path);
      return 0;
    }
    if (run->parsed()) {
      const auto cfg = load_config(run_opts);
      fedroute::run_experiment(cfg, run_opts.out_dir, run_opts.threads);
      std::cout << "artifacts written to " << run_opts.out_dir << "\n";
      return 0;
    }
    if (partition->parsed()) {
      const auto cfg = load_config(partition_opts);
      fedroute::stage_partition(cfg, partition_opts.out_dir);
      std::cout << "partition written to " << partition_opts.out_dir << "\n";
      return 0;
    }
    if (train->parsed()) {
      const auto cfg = load_config(train_opts);
      const auto data = fedroute::load_experiment_data(cfg, train_opts.out_dir);
      fedroute::stage_train(cfg, data, train_opts.out_dir, train_opts.threads);
      std::cout << "checkpoints written to " << train_opts.out_dir << "/checkpoints\n";
      return 0;
    }
    if (eval->parsed()) {
      const auto cfg = load_config(eval_opts);
      const auto data = fedroute::load_experiment_data(cfg, eval_opts.out_dir);
      fedroute::stage_eval(cfg, data, eval_opts.out_dir, eval_opts.threads);
      std::cout << "curves and AUC summary written to " << eval_opts.out_dir << "\n";
      return 0;
    }
    if (personalize->parsed()) {
      const auto cfg = load_config(personalize_opts);
      const auto data = fedroute::load_experiment_data(cfg, personalize_opts.out_dir);
      fedroute::stage_personalize(cfg, data, personalize_opts.out_dir,
                                  personalize_opts.threads);
      std::cout << "personalization artifacts written to " << personalize_opts.out_dir
                << "\n";
      return 0;
    }
    if (expand_models->parsed()) {
      const auto cfg = load_config(expand_models_opts);
      fedroute::stage_expand_models(cfg, expand_models_opts.out_dir,
                                    expand_models_opts.threads);
      std::cout << "expansion artifacts written to " << expand_models_opts.out_dir
                << "/expansion_models\n";
      return 0;
    }
    if (expand_clients->parsed()) {
      const auto cfg = load_config(expand_clients_opts);
      fedroute::stage_expand_clients(cfg, expand_clients_opts.out_dir,
                                     expand_clients_opts.threads);
      std::cout << "expansion artifacts written to " << expand_clients_opts.out_dir
                << "/expansion_clients\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
