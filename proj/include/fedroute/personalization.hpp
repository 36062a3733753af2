#pragma once

#include <memory>
#include <string>
#include <vector>

#include "fedroute/routing.hpp"
#include "fedroute/types.hpp"

namespace fedroute {

/// Per-model mean absolute calibration errors of one estimator on a client's
/// own records; count 0 means the model never appears in those records.
struct ModelError {
  double mae_accuracy = 0.0;
  double mae_cost = 0.0;  // raw-cost scale
  long long count = 0;
};

/// Per model: mean |prediction - observation| over the records logged on
/// that model. The estimator must cover every logged model.
std::vector<ModelError> calibration_errors(const UtilityEstimator& estimator,
                                           const std::vector<EvaluationRecord>& records);

/// Blend weights on the LOCAL estimator, one pair per model. A weight of 0
/// routes with the federated estimates alone, 1 with the local ones.
struct ModelBlendWeight {
  double w_accuracy = 0.0;
  double w_cost = 0.0;
};

struct PersonalizationWeights {
  std::vector<ModelBlendWeight> weights;
  std::vector<ModelError> federated_errors;
  std::vector<ModelError> local_errors;
};

/// w = e(fed) / (e(fed) + e(local)) per model and target. Degenerate cases:
/// both errors zero -> 0 (prefer the federated side, wider coverage); model
/// absent locally -> 0; absent from the federated errors -> 1.
PersonalizationWeights blend_weights(const std::vector<ModelError>& federated_errors,
                                     const std::vector<ModelError>& local_errors);

/// Convex per-model combination of two estimators' accuracy and cost
/// estimates. When a model is absent on one side at a query, the other side
/// is used alone; absent on both sides stays absent.
class BlendedEstimator final : public UtilityEstimator {
 public:
  BlendedEstimator(std::shared_ptr<const UtilityEstimator> federated,
                   std::shared_ptr<const UtilityEstimator> local,
                   PersonalizationWeights weights);

  int n_models() const override { return n_models_; }
  std::vector<ModelEstimate> estimate(const EmbeddingVector& x) const override;

 private:
  std::shared_ptr<const UtilityEstimator> federated_;
  std::shared_ptr<const UtilityEstimator> local_;
  PersonalizationWeights weights_;
  int n_models_;
};

/// Blended per-model utilities at a query; absent models are NaN.
std::vector<double> personalized_utilities(const UtilityEstimator& federated,
                                           const UtilityEstimator& local,
                                           const PersonalizationWeights& weights,
                                           const EmbeddingVector& x, double lambda);

/// Audit file: per-client, per-model MAEs and blend weights.
void save_personalization_report(const std::string& path,
                                 const std::vector<std::pair<int, PersonalizationWeights>>&
                                     per_client_weights);

}  // namespace fedroute
