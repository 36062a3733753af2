#include "fedroute/partition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "fedroute/numeric.hpp"
#include "fedroute/rng.hpp"

namespace fedroute {

std::vector<std::vector<std::size_t>> partition_queries(
    const std::vector<FullEvaluation>& corpus, int n_clients, double alpha_query,
    std::uint64_t seed, std::vector<std::string>* warnings) {
  if (n_clients < 1) throw std::invalid_argument("partition_queries: n_clients must be >= 1");
  if (alpha_query <= 0.0) {
    throw std::invalid_argument("partition_queries: alpha_query must be > 0");
  }

  // Group query indices by task label, in sorted label order so the
  // assignment is a pure function of (corpus, config, seed).
  std::map<std::string, std::vector<std::size_t>> by_task;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    by_task[corpus[i].task_label].push_back(i);
  }

  std::vector<std::vector<std::size_t>> clients(static_cast<std::size_t>(n_clients));
  std::uint64_t task_index = 0;
  for (const auto& [label, queries] : by_task) {
    Rng rng(derive_seed(seed, "task-split", task_index++));
    const auto proportions = rng.dirichlet(alpha_query, static_cast<std::size_t>(n_clients));
    for (const std::size_t q : queries) {
      clients[rng.categorical(proportions)].push_back(q);
    }
  }

  if (warnings != nullptr) {
    for (int c = 0; c < n_clients; ++c) {
      if (clients[static_cast<std::size_t>(c)].empty()) {
        warnings->push_back("client " + std::to_string(c) + " received zero records");
      }
    }
  }
  return clients;
}

void split_train_test(std::vector<std::size_t>& queries, double train_fraction,
                      std::uint64_t seed, std::vector<std::size_t>& train,
                      std::vector<std::size_t>& test) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("split_train_test: train_fraction must be in (0,1)");
  }
  Rng rng(seed);
  rng.shuffle(queries);
  const auto n_train = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(queries.size())));
  train.assign(queries.begin(), queries.begin() + static_cast<std::ptrdiff_t>(n_train));
  test.assign(queries.begin() + static_cast<std::ptrdiff_t>(n_train), queries.end());
}

std::vector<std::vector<int>> assign_logged_models(
    const std::vector<ClientSplit>& clients, int n_models, double alpha_model,
    std::uint64_t seed) {
  if (n_models < 1) throw std::invalid_argument("assign_logged_models: empty model pool");
  if (alpha_model <= 0.0) {
    throw std::invalid_argument("assign_logged_models: alpha_model must be > 0");
  }
  std::vector<std::vector<int>> logged(clients.size());
  for (std::size_t c = 0; c < clients.size(); ++c) {
    Rng rng(derive_seed(seed, "model-dist", static_cast<std::uint64_t>(clients[c].client_id)));
    const auto proportions = rng.dirichlet(alpha_model, static_cast<std::size_t>(n_models));
    logged[c].reserve(clients[c].train_queries.size());
    for (std::size_t j = 0; j < clients[c].train_queries.size(); ++j) {
      logged[c].push_back(static_cast<int>(rng.categorical(proportions)));
    }
  }
  return logged;
}

ClientPartition partition_corpus(const std::vector<FullEvaluation>& corpus,
                                 int n_models, const PartitionConfig& config) {
  ClientPartition partition;
  partition.config = config;

  auto assignment = partition_queries(corpus, config.n_clients, config.alpha_query,
                                      derive_seed(config.seed, "queries"),
                                      &partition.warnings);
  partition.clients.resize(assignment.size());
  for (std::size_t c = 0; c < assignment.size(); ++c) {
    auto& client = partition.clients[c];
    client.client_id = static_cast<int>(c);
    split_train_test(assignment[c], config.train_fraction,
                     derive_seed(config.seed, "split", static_cast<std::uint64_t>(c)),
                     client.train_queries, client.test_queries);
    if (client.test_queries.empty() && !client.train_queries.empty()) {
      partition.warnings.push_back("client " + std::to_string(c) + " has an empty test set");
    }
  }

  auto logged = assign_logged_models(partition.clients, n_models, config.alpha_model,
                                     derive_seed(config.seed, "models"));
  for (std::size_t c = 0; c < partition.clients.size(); ++c) {
    partition.clients[c].train_logged_models = std::move(logged[c]);
  }
  return partition;
}

std::vector<ClientDataset> materialize_clients(const std::vector<FullEvaluation>& corpus,
                                               const ClientPartition& partition) {
  std::vector<ClientDataset> datasets;
  datasets.reserve(partition.clients.size());
  for (const auto& split : partition.clients) {
    ClientDataset ds;
    ds.client_id = split.client_id;
    ds.train.reserve(split.train_queries.size());
    for (std::size_t j = 0; j < split.train_queries.size(); ++j) {
      const auto& q = corpus[split.train_queries[j]];
      const int m = split.train_logged_models[j];
      EvaluationRecord rec;
      rec.embedding = q.embedding;
      rec.model_index = m;
      rec.accuracy = q.accuracy[static_cast<std::size_t>(m)];
      rec.cost = q.cost[static_cast<std::size_t>(m)];
      rec.task_label = q.task_label;
      ds.train.push_back(std::move(rec));
    }
    datasets.push_back(std::move(ds));
  }
  return datasets;
}

void save_partition(const std::string& path, const ClientPartition& partition) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  const auto& cfg = partition.config;
  out << "# fedroute-partition v1 n_clients=" << cfg.n_clients
      << " alpha_query=" << format_double(cfg.alpha_query)
      << " alpha_model=" << format_double(cfg.alpha_model)
      << " train_fraction=" << format_double(cfg.train_fraction) << " seed=" << cfg.seed
      << "\n";
  out << "client_id,query_index,split,logged_model\n";
  for (const auto& client : partition.clients) {
    for (std::size_t j = 0; j < client.train_queries.size(); ++j) {
      out << client.client_id << ',' << client.train_queries[j] << ",train,"
          << client.train_logged_models[j] << '\n';
    }
    for (const std::size_t q : client.test_queries) {
      out << client.client_id << ',' << q << ",test,-1\n";
    }
  }
}

ClientPartition load_partition(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# fedroute-partition v1 ", 0) != 0) {
    throw std::runtime_error(path + ": not a partition manifest");
  }

  ClientPartition partition;
  {
    std::stringstream meta(line.substr(std::string("# fedroute-partition v1 ").size()));
    std::string kv;
    while (meta >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = kv.substr(0, eq);
      const std::string value = kv.substr(eq + 1);
      if (key == "n_clients") partition.config.n_clients = std::stoi(value);
      if (key == "alpha_query") partition.config.alpha_query = std::stod(value);
      if (key == "alpha_model") partition.config.alpha_model = std::stod(value);
      if (key == "train_fraction") partition.config.train_fraction = std::stod(value);
      if (key == "seed") partition.config.seed = std::stoull(value);
    }
  }
  if (!std::getline(in, line) || line != "client_id,query_index,split,logged_model") {
    throw std::runtime_error(path + ": unexpected manifest column header");
  }

  partition.clients.resize(static_cast<std::size_t>(partition.config.n_clients));
  for (std::size_t c = 0; c < partition.clients.size(); ++c) {
    partition.clients[c].client_id = static_cast<int>(c);
  }
  std::size_t row = 2;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 4) {
      throw std::runtime_error(path + ": malformed manifest row " + std::to_string(row));
    }
    const int client_id = std::stoi(cells[0]);
    if (client_id < 0 || client_id >= partition.config.n_clients) {
      throw std::runtime_error(path + ": client id out of range at row " + std::to_string(row));
    }
    auto& client = partition.clients[static_cast<std::size_t>(client_id)];
    const auto query = static_cast<std::size_t>(std::stoull(cells[1]));
    if (cells[2] == "train") {
      client.train_queries.push_back(query);
      client.train_logged_models.push_back(std::stoi(cells[3]));
    } else if (cells[2] == "test") {
      client.test_queries.push_back(query);
    } else {
      throw std::runtime_error(path + ": unknown split '" + cells[2] + "' at row " +
                               std::to_string(row));
    }
  }
  return partition;
}

}  // namespace fedroute
