#pragma once

#include <string>
#include <vector>

#include "fedroute/kmeans.hpp"
#include "fedroute/mlp.hpp"

namespace fedroute {

/// Versioned structured-text (JSON) checkpoints. Doubles are written with
/// shortest-round-trip formatting, so save/load is bit-exact.

struct MlpCheckpoint {
  MlpArchitecture architecture;
  MlpRouterParams params;
  double cost_normalizer = 1.0;
  std::vector<std::string> model_ids;
};

void save_mlp_checkpoint(const std::string& path, const MlpCheckpoint& checkpoint);
MlpCheckpoint load_mlp_checkpoint(const std::string& path);

struct KmeansCheckpoint {
  KmeansRouterState state;
  std::vector<std::string> model_ids;
};

void save_kmeans_checkpoint(const std::string& path, const KmeansCheckpoint& checkpoint);
KmeansCheckpoint load_kmeans_checkpoint(const std::string& path);

/// Human-readable metadata summary for `inspect`; dispatches on the file's
/// format tag (mlp checkpoint, kmeans checkpoint, or oracle).
std::string describe_checkpoint(const std::string& path);

}  // namespace fedroute
