#include "fedroute/types.hpp"

#include <cmath>

#include "fedroute/numeric.hpp"

namespace fedroute {

ValidationReport validate_dataset(const std::vector<EvaluationRecord>& records,
                                  const DatasetManifest& manifest) {
  ValidationReport report;
  const int n_models = manifest.model_pool.size();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (static_cast<int>(r.embedding.size()) != manifest.d_emb) {
      report.issues.push_back(
          {i, "embedding length " + std::to_string(r.embedding.size()) +
                  " does not match d_emb " + std::to_string(manifest.d_emb)});
    }
    if (!all_finite(r.embedding)) {
      report.issues.push_back({i, "embedding has non-finite entries"});
    }
    if (r.model_index < 0 || r.model_index >= n_models) {
      report.issues.push_back({i, "model index " + std::to_string(r.model_index) +
                                      " out of [0, " + std::to_string(n_models) + ")"});
    }
    if (!(r.accuracy >= 0.0 && r.accuracy <= 1.0)) {
      report.issues.push_back({i, "accuracy out of [0,1]"});
    }
    if (!(r.cost >= 0.0 && r.cost <= manifest.model_pool.c_max)) {
      report.issues.push_back({i, "cost out of [0, c_max]"});
    }
    if (std::isfinite(manifest.cost_normalizer) && r.cost > manifest.cost_normalizer) {
      report.issues.push_back({i, "cost exceeds cost_normalizer"});
    }
  }
  if (manifest.model_pool.c_max <= 0.0) {
    report.issues.push_back({std::nullopt, "c_max must be positive"});
  }
  return report;
}

}  // namespace fedroute
