#pragma once

#include <cstdint>
#include <vector>

#include "fedroute/types.hpp"

namespace fedroute {

/// Closed-form ground truth for synthetic corpora. Accuracy is a logistic of
/// a per-model affine score, cost is a per-model base price plus clipped
/// Gaussian noise, and queries come from a Gaussian mixture whose component
/// index doubles as the task label. Both truth functions are smooth in the
/// embedding, so utilities are Lipschitz.
struct SyntheticOracle {
  std::vector<EmbeddingVector> mixture_centers;  // n_tasks x d_emb
  double mixture_stddev = 1.0;
  std::vector<std::vector<double>> accuracy_weights;  // M x d_emb
  std::vector<double> accuracy_bias;                  // M
  std::vector<double> base_costs;                     // M
  double cost_noise_scale = 0.0;
  double c_max = 1.0;

  int n_models() const { return static_cast<int>(base_costs.size()); }
  int n_tasks() const { return static_cast<int>(mixture_centers.size()); }
  int d_emb() const {
    return mixture_centers.empty() ? 0 : static_cast<int>(mixture_centers.front().size());
  }

  /// True expected accuracy a(x,m) = logistic(w_m . x + b_m), in (0,1).
  double true_accuracy(const EmbeddingVector& x, int model) const;

  /// True expected cost; constant in x by construction (clipping bias from
  /// the noise is ignored here, see clipped_mean_cost for the exact value).
  double true_cost(const EmbeddingVector& /*x*/, int model) const {
    return base_costs[static_cast<std::size_t>(model)];
  }

  double true_utility(const EmbeddingVector& x, int model, double lambda) const {
    return true_accuracy(x, model) - lambda * true_cost(x, model);
  }

  /// Monte-Carlo estimate of E[clip(base + noise, 0, c_max)] for one model,
  /// for tests that need the clipped mean rather than the base cost.
  double clipped_mean_cost(int model, std::size_t n_draws, std::uint64_t seed) const;
};

struct SyntheticSpec {
  int d_emb = 16;
  int n_models = 6;
  int n_tasks = 8;
  double c_max = 1.0;
  double cost_noise_scale = 0.02;
  double mixture_stddev = 0.35;
  double center_spread = 1.0;
  /// Scale of the accuracy logit weights; larger values make per-model
  /// accuracies vary more sharply across the embedding space.
  double accuracy_sharpness = 3.0;
  /// Optional explicit base costs; when empty, M values evenly spaced over
  /// [0.05, 0.95] * c_max are used.
  std::vector<double> base_costs;
};

/// Builds a randomized oracle from the spec; deterministic given the seed.
SyntheticOracle make_synthetic_oracle(const SyntheticSpec& spec, std::uint64_t seed);

/// Draws n_queries from the mixture and evaluates every model on each query:
/// accuracy is a Bernoulli draw with mean a(x,m), cost is base_m plus
/// Gaussian noise clipped to [0, c_max]. Single-model logging happens later
/// (partition module), so the same query set can be re-logged under
/// different heterogeneity regimes.
std::vector<FullEvaluation> generate_synthetic(const SyntheticOracle& oracle,
                                               std::size_t n_queries, std::uint64_t seed);

/// argmax_m a(x,m) - lambda * c(x,m) over the oracle's true closed forms;
/// ties break toward lower cost, then lower index.
int oracle_best_model(const SyntheticOracle& oracle, const EmbeddingVector& x,
                      double lambda);

/// Manifest for a generated corpus: model ids "model_00".., cost_normalizer
/// set to the maximum realized cost.
DatasetManifest synthetic_manifest(const SyntheticOracle& oracle,
                                   const std::vector<FullEvaluation>& corpus);

}  // namespace fedroute
