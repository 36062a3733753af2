#pragma once

// Internal helpers shared by the experiment pipeline translation units.

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "fedroute/experiment.hpp"
#include "fedroute/numeric.hpp"

namespace fedroute::detail {

inline std::string client_tag(int client_id) {
  std::ostringstream out;
  out << "client_";
  if (client_id < 100) out << (client_id < 10 ? "00" : "0");
  out << client_id;
  return out.str();
}

inline void write_auc_summary(const std::string& path, std::vector<AucRow> rows) {
  std::sort(rows.begin(), rows.end(), [](const AucRow& a, const AucRow& b) {
    return std::tie(a.router, a.eval_set) < std::tie(b.router, b.eval_set);
  });
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "router,eval_set,auc\n";
  for (const auto& row : rows) {
    out << row.router << ',' << row.eval_set << ',' << format_double(row.auc) << '\n';
  }
}

inline void save_round_trace(const std::string& path,
                             const std::vector<RoundRecord>& rounds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "round,client_id,weight,loss_participants,loss_all_clients,wall_seconds\n";
  for (const auto& r : rounds) {
    for (std::size_t i = 0; i < r.participants.size(); ++i) {
      out << r.round << ',' << r.participants[i] << ',' << format_double(r.weights[i]) << ','
          << format_double(r.loss_participants) << ',' << format_double(r.loss_all_clients)
          << ',' << format_double(r.wall_seconds) << '\n';
    }
  }
}

inline MlpArchitecture resolved_architecture(const ExperimentConfig& cfg,
                                             const DatasetManifest& manifest) {
  MlpArchitecture arch = cfg.mlp;
  arch.d_emb = manifest.d_emb;
  arch.n_models = manifest.model_pool.size();
  return arch;
}

inline std::vector<EvaluationRecord> pooled_records(
    const std::vector<ClientDataset>& clients) {
  std::vector<EvaluationRecord> pooled;
  for (const auto& c : clients) {
    pooled.insert(pooled.end(), c.train.begin(), c.train.end());
  }
  return pooled;
}

}  // namespace fedroute::detail
