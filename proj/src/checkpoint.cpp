#include "fedroute/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace fedroute {

namespace {

using nlohmann::json;

json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  json j;
  in >> j;
  return j;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump(2) << '\n';
}

}  // namespace

void save_mlp_checkpoint(const std::string& path, const MlpCheckpoint& checkpoint) {
  json j;
  j["format"] = "fedroute-mlp-checkpoint";
  j["version"] = 1;
  j["architecture"] = {{"d_emb", checkpoint.architecture.d_emb},
                       {"hidden_widths", checkpoint.architecture.hidden_widths},
                       {"dropout_p", checkpoint.architecture.dropout_p},
                       {"n_models", checkpoint.architecture.n_models}};
  j["cost_normalizer"] = checkpoint.cost_normalizer;
  j["model_ids"] = checkpoint.model_ids;
  json trunk = json::array();
  for (const auto& layer : checkpoint.params.trunk) {
    trunk.push_back({{"weight", layer.weight},
                     {"bias", layer.bias},
                     {"ln_scale", layer.ln_scale},
                     {"ln_shift", layer.ln_shift}});
  }
  j["trunk"] = std::move(trunk);
  json heads = json::array();
  for (const auto& head : checkpoint.params.heads) {
    heads.push_back({{"acc_weight", head.acc_weight},
                     {"acc_bias", head.acc_bias},
                     {"cost_weight", head.cost_weight},
                     {"cost_bias", head.cost_bias}});
  }
  j["heads"] = std::move(heads);
  write_json(path, j);
}

MlpCheckpoint load_mlp_checkpoint(const std::string& path) {
  const json j = read_json(path);
  if (j.value("format", "") != "fedroute-mlp-checkpoint") {
    throw std::runtime_error(path + ": not an MLP checkpoint");
  }
  MlpCheckpoint checkpoint;
  const auto& a = j.at("architecture");
  checkpoint.architecture.d_emb = a.at("d_emb").get<int>();
  checkpoint.architecture.hidden_widths = a.at("hidden_widths").get<std::vector<int>>();
  checkpoint.architecture.dropout_p = a.at("dropout_p").get<double>();
  checkpoint.architecture.n_models = a.at("n_models").get<int>();
  checkpoint.cost_normalizer = j.at("cost_normalizer").get<double>();
  checkpoint.model_ids = j.at("model_ids").get<std::vector<std::string>>();
  for (const auto& layer_json : j.at("trunk")) {
    TrunkLayer layer;
    layer.weight = layer_json.at("weight").get<std::vector<double>>();
    layer.bias = layer_json.at("bias").get<std::vector<double>>();
    layer.ln_scale = layer_json.at("ln_scale").get<std::vector<double>>();
    layer.ln_shift = layer_json.at("ln_shift").get<std::vector<double>>();
    checkpoint.params.trunk.push_back(std::move(layer));
  }
  for (const auto& head_json : j.at("heads")) {
    ModelHeads head;
    head.acc_weight = head_json.at("acc_weight").get<std::vector<double>>();
    head.acc_bias = head_json.at("acc_bias").get<double>();
    head.cost_weight = head_json.at("cost_weight").get<std::vector<double>>();
    head.cost_bias = head_json.at("cost_bias").get<double>();
    checkpoint.params.heads.push_back(std::move(head));
  }
  return checkpoint;
}

void save_kmeans_checkpoint(const std::string& path, const KmeansCheckpoint& checkpoint) {
  const auto& state = checkpoint.state;
  json j;
  j["format"] = "fedroute-kmeans-checkpoint";
  j["version"] = 1;
  j["n_models"] = state.n_models;
  j["model_ids"] = checkpoint.model_ids;
  j["centroids"] = state.centroids;
  json stats = json::array();
  for (std::size_t k = 0; k < state.centroids.size(); ++k) {
    for (int m = 0; m < state.n_models; ++m) {
      const auto& cell = state.cell(k, static_cast<std::size_t>(m));
      if (cell.count == 0) continue;  // sparse table: absent cells are not stored
      stats.push_back({{"cluster", k},
                       {"model", m},
                       {"mean_accuracy", cell.mean_accuracy},
                       {"mean_cost", cell.mean_cost},
                       {"count", cell.count}});
    }
  }
  j["stats"] = std::move(stats);
  json fallback = json::array();
  for (int m = 0; m < state.n_models; ++m) {
    const auto& cell = state.fallback[static_cast<std::size_t>(m)];
    if (cell.count == 0) continue;
    fallback.push_back({{"model", m},
                        {"mean_accuracy", cell.mean_accuracy},
                        {"mean_cost", cell.mean_cost},
                        {"count", cell.count}});
  }
  j["fallback"] = std::move(fallback);
  write_json(path, j);
}

KmeansCheckpoint load_kmeans_checkpoint(const std::string& path) {
  const json j = read_json(path);
  if (j.value("format", "") != "fedroute-kmeans-checkpoint") {
    throw std::runtime_error(path + ": not a K-means checkpoint");
  }
  KmeansCheckpoint checkpoint;
  auto& state = checkpoint.state;
  state.n_models = j.at("n_models").get<int>();
  checkpoint.model_ids = j.at("model_ids").get<std::vector<std::string>>();
  state.centroids = j.at("centroids").get<std::vector<EmbeddingVector>>();
  state.stats.assign(state.centroids.size() * static_cast<std::size_t>(state.n_models), {});
  for (const auto& cell_json : j.at("stats")) {
    const auto k = cell_json.at("cluster").get<std::size_t>();
    const auto m = cell_json.at("model").get<std::size_t>();
    state.cell(k, m) = {cell_json.at("mean_accuracy").get<double>(),
                        cell_json.at("mean_cost").get<double>(),
                        cell_json.at("count").get<long long>()};
  }
  state.fallback.assign(static_cast<std::size_t>(state.n_models), {});
  for (const auto& cell_json : j.at("fallback")) {
    const auto m = cell_json.at("model").get<std::size_t>();
    state.fallback[m] = {cell_json.at("mean_accuracy").get<double>(),
                         cell_json.at("mean_cost").get<double>(),
                         cell_json.at("count").get<long long>()};
  }
  return checkpoint;
}

std::string describe_checkpoint(const std::string& path) {
  const json j = read_json(path);
  const std::string format = j.value("format", "(missing format tag)");
  std::ostringstream out;
  if (format == "fedroute-mlp-checkpoint") {
    const auto checkpoint = load_mlp_checkpoint(path);
    out << "mlp checkpoint v" << j.value("version", 0) << "\n";
    out << "  d_emb: " << checkpoint.architecture.d_emb << "\n";
    out << "  hidden_widths:";
    for (const int w : checkpoint.architecture.hidden_widths) out << ' ' << w;
    out << "\n";
    out << "  dropout_p: " << checkpoint.architecture.dropout_p << "\n";
    out << "  n_models: " << checkpoint.architecture.n_models << "\n";
    out << "  parameters: " << parameter_count(checkpoint.params) << "\n";
    out << "  cost_normalizer: " << checkpoint.cost_normalizer << "\n";
  } else if (format == "fedroute-kmeans-checkpoint") {
    const auto checkpoint = load_kmeans_checkpoint(path);
    const auto& state = checkpoint.state;
    std::size_t occupied = 0;
    long long total_count = 0;
    for (const auto& cell : state.stats) {
      if (cell.count > 0) {
        ++occupied;
        total_count += cell.count;
      }
    }
    out << "kmeans checkpoint v" << j.value("version", 0) << "\n";
    out << "  centroids: " << state.centroids.size() << " x "
        << (state.centroids.empty() ? 0 : state.centroids.front().size()) << "\n";
    out << "  n_models: " << state.n_models << "\n";
    out << "  occupied cells: " << occupied << " / " << state.stats.size() << "\n";
    out << "  total evaluations: " << total_count << "\n";
  } else if (format == "fedroute-oracle") {
    out << "synthetic oracle v" << j.value("version", 0) << "\n";
    out << "  tasks: " << j.at("mixture_centers").size() << "\n";
    out << "  models: " << j.at("base_costs").size() << "\n";
    out << "  c_max: " << j.at("c_max").get<double>() << "\n";
  } else {
    out << "unrecognized file format: " << format << "\n";
  }
  return out.str();
}

}  // namespace fedroute
