#pragma once

#include <memory>
#include <span>
#include <vector>

#include "fedroute/kmeans.hpp"
#include "fedroute/mlp.hpp"
#include "fedroute/synthetic.hpp"
#include "fedroute/types.hpp"

namespace fedroute {

/// One model's estimated accuracy and cost (raw currency units) at a query.
/// Absent entries (present == false) carry no values.
struct ModelEstimate {
  double accuracy = 0.0;
  double cost = 0.0;
  bool present = false;

  double utility(double lambda) const { return accuracy - lambda * cost; }
};

/// Anything that can score every model for a query embedding. Estimates do
/// not depend on lambda, so a lambda sweep computes them once per query.
class UtilityEstimator {
 public:
  virtual ~UtilityEstimator() = default;
  virtual int n_models() const = 0;
  virtual std::vector<ModelEstimate> estimate(const EmbeddingVector& x) const = 0;
};

class MlpEstimator final : public UtilityEstimator {
 public:
  MlpEstimator(MlpRouterParams params, MlpArchitecture arch, double cost_normalizer,
               bool clamp_cost = true)
      : params_(std::move(params)),
        arch_(std::move(arch)),
        cost_normalizer_(cost_normalizer),
        clamp_cost_(clamp_cost) {}

  int n_models() const override { return arch_.n_models; }
  std::vector<ModelEstimate> estimate(const EmbeddingVector& x) const override;

  const MlpRouterParams& params() const { return params_; }
  const MlpArchitecture& architecture() const { return arch_; }
  double cost_normalizer() const { return cost_normalizer_; }

 private:
  MlpRouterParams params_;
  MlpArchitecture arch_;
  double cost_normalizer_;
  bool clamp_cost_;
};

class KmeansEstimator final : public UtilityEstimator {
 public:
  explicit KmeansEstimator(KmeansRouterState state) : state_(std::move(state)) {}

  int n_models() const override { return state_.n_models; }
  std::vector<ModelEstimate> estimate(const EmbeddingVector& x) const override;

  const KmeansRouterState& state() const { return state_; }

 private:
  KmeansRouterState state_;
};

/// True-utility policy backed by the synthetic oracle's closed forms.
class OracleEstimator final : public UtilityEstimator {
 public:
  explicit OracleEstimator(SyntheticOracle oracle) : oracle_(std::move(oracle)) {}

  int n_models() const override { return oracle_.n_models(); }
  std::vector<ModelEstimate> estimate(const EmbeddingVector& x) const override;

 private:
  SyntheticOracle oracle_;
};

/// argmax over present utilities at the given lambda; ties break toward
/// lower estimated cost, then lower model index. Throws when every model is
/// absent.
int route(std::span<const ModelEstimate> estimates, double lambda);

/// Per-model estimated utilities for an MLP parameterization (cost
/// de-normalized to currency units before entering the trade-off).
std::vector<double> predict_utilities(const MlpRouterParams& params,
                                      const MlpArchitecture& arch, const EmbeddingVector& x,
                                      double lambda, double cost_normalizer);

struct PolicyScore {
  double mean_accuracy = 0.0;
  double mean_cost = 0.0;
};

/// Routes every test query and averages the ground-truth accuracy and cost
/// of the chosen models. Queries must carry values for every model.
PolicyScore evaluate_policy(const UtilityEstimator& estimator,
                            const std::vector<FullEvaluation>& test_queries, double lambda,
                            int threads = 1);

struct FrontierPoint {
  double lambda = 0.0;
  double mean_cost = 0.0;
  double mean_accuracy = 0.0;
};

struct FrontierCurve {
  std::vector<FrontierPoint> points;  // ordered by lambda
  double auc = 0.0;
};

struct LambdaGrid {
  double lambda_min = 1e-2;
  double lambda_max = 1e7;
  int n_points = 100;
};

/// Logarithmically spaced lambda sweep; evaluates the policy per lambda and
/// summarizes the curve with the normalized AUC.
FrontierCurve sweep_lambda(const UtilityEstimator& estimator,
                           const std::vector<FullEvaluation>& test_queries,
                           const LambdaGrid& grid, int threads = 1);

/// Accuracy integrated over cost (trapezoid) divided by the cost range.
/// Duplicate-cost points collapse to their maximum accuracy first; a
/// zero-width cost range yields that single accuracy value.
double normalized_auc(const std::vector<FrontierPoint>& points);

/// Mean true-utility gap to the oracle-optimal policy over the test queries.
double suboptimality(const UtilityEstimator& policy, const SyntheticOracle& oracle,
                     const std::vector<FullEvaluation>& test_queries, double lambda);

/// Curve file round-trip: `lambda,mean_cost,mean_accuracy` rows plus a
/// one-line AUC footer.
void save_curve(const std::string& path, const FrontierCurve& curve);
FrontierCurve load_curve(const std::string& path);

}  // namespace fedroute
