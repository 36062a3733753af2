#include "fedroute/personalization.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "fedroute/numeric.hpp"

namespace fedroute {

std::vector<ModelError> calibration_errors(const UtilityEstimator& estimator,
                                           const std::vector<EvaluationRecord>& records) {
  const int n_models = estimator.n_models();
  std::vector<KahanSum> acc_err(static_cast<std::size_t>(n_models));
  std::vector<KahanSum> cost_err(static_cast<std::size_t>(n_models));
  std::vector<long long> counts(static_cast<std::size_t>(n_models), 0);
  for (const auto& rec : records) {
    if (rec.model_index < 0 || rec.model_index >= n_models) {
      throw std::invalid_argument("calibration_errors: record model index out of range");
    }
    const auto estimates = estimator.estimate(rec.embedding);
    const auto m = static_cast<std::size_t>(rec.model_index);
    if (!estimates[m].present) {
      throw std::runtime_error(
          "calibration_errors: estimator cannot score logged model " +
          std::to_string(rec.model_index));
    }
    acc_err[m].add(std::abs(estimates[m].accuracy - rec.accuracy));
    cost_err[m].add(std::abs(estimates[m].cost - rec.cost));
    ++counts[m];
  }
  std::vector<ModelError> errors(static_cast<std::size_t>(n_models));
  for (std::size_t m = 0; m < errors.size(); ++m) {
    if (counts[m] > 0) {
      errors[m] = {acc_err[m].value() / static_cast<double>(counts[m]),
                   cost_err[m].value() / static_cast<double>(counts[m]), counts[m]};
    }
  }
  return errors;
}

namespace {

double one_blend_weight(double fed_error, bool fed_present, double local_error,
                        bool local_present) {
  if (!local_present) return 0.0;
  if (!fed_present) return 1.0;
  const double denom = fed_error + local_error;
  if (denom <= 0.0) return 0.0;
  return fed_error / denom;
}

}  // namespace

PersonalizationWeights blend_weights(const std::vector<ModelError>& federated_errors,
                                     const std::vector<ModelError>& local_errors) {
  if (federated_errors.size() != local_errors.size()) {
    throw std::invalid_argument("blend_weights: error vectors differ in length");
  }
  PersonalizationWeights result;
  result.federated_errors = federated_errors;
  result.local_errors = local_errors;
  result.weights.resize(federated_errors.size());
  for (std::size_t m = 0; m < federated_errors.size(); ++m) {
    const auto& fed = federated_errors[m];
    const auto& loc = local_errors[m];
    result.weights[m].w_accuracy =
        one_blend_weight(fed.mae_accuracy, fed.count > 0, loc.mae_accuracy, loc.count > 0);
    result.weights[m].w_cost =
        one_blend_weight(fed.mae_cost, fed.count > 0, loc.mae_cost, loc.count > 0);
  }
  return result;
}

BlendedEstimator::BlendedEstimator(std::shared_ptr<const UtilityEstimator> federated,
                                   std::shared_ptr<const UtilityEstimator> local,
                                   PersonalizationWeights weights)
    : federated_(std::move(federated)),
      local_(std::move(local)),
      weights_(std::move(weights)),
      n_models_(federated_->n_models()) {
  if (local_->n_models() != n_models_ ||
      static_cast<int>(weights_.weights.size()) != n_models_) {
    throw std::invalid_argument("BlendedEstimator: model pool size mismatch");
  }
}

std::vector<ModelEstimate> BlendedEstimator::estimate(const EmbeddingVector& x) const {
  const auto fed = federated_->estimate(x);
  const auto loc = local_->estimate(x);
  std::vector<ModelEstimate> out(static_cast<std::size_t>(n_models_));
  for (std::size_t m = 0; m < out.size(); ++m) {
    if (!fed[m].present && !loc[m].present) continue;
    if (!fed[m].present) {
      out[m] = loc[m];
      continue;
    }
    if (!loc[m].present) {
      out[m] = fed[m];
      continue;
    }
    const auto& w = weights_.weights[m];
    out[m].accuracy = w.w_accuracy * loc[m].accuracy + (1.0 - w.w_accuracy) * fed[m].accuracy;
    out[m].cost = w.w_cost * loc[m].cost + (1.0 - w.w_cost) * fed[m].cost;
    out[m].present = true;
  }
  return out;
}

std::vector<double> personalized_utilities(const UtilityEstimator& federated,
                                           const UtilityEstimator& local,
                                           const PersonalizationWeights& weights,
                                           const EmbeddingVector& x, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("personalized_utilities: lambda >= 0");
  const auto fed = federated.estimate(x);
  const auto loc = local.estimate(x);
  std::vector<double> utilities(fed.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t m = 0; m < fed.size(); ++m) {
    const auto& w = weights.weights[m];
    if (!fed[m].present && !loc[m].present) continue;
    double acc;
    double cost;
    if (!fed[m].present) {
      acc = loc[m].accuracy;
      cost = loc[m].cost;
    } else if (!loc[m].present) {
      acc = fed[m].accuracy;
      cost = fed[m].cost;
    } else {
      acc = w.w_accuracy * loc[m].accuracy + (1.0 - w.w_accuracy) * fed[m].accuracy;
      cost = w.w_cost * loc[m].cost + (1.0 - w.w_cost) * fed[m].cost;
    }
    utilities[m] = acc - lambda * cost;
  }
  return utilities;
}

void save_personalization_report(
    const std::string& path,
    const std::vector<std::pair<int, PersonalizationWeights>>& per_client_weights) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "client_id,model_index,mae_acc_federated,mae_cost_federated,mae_acc_local,"
         "mae_cost_local,w_accuracy,w_cost\n";
  for (const auto& [client_id, weights] : per_client_weights) {
    for (std::size_t m = 0; m < weights.weights.size(); ++m) {
      const auto& fed = weights.federated_errors[m];
      const auto& loc = weights.local_errors[m];
      out << client_id << ',' << m << ',' << format_double(fed.mae_accuracy) << ','
          << format_double(fed.mae_cost) << ',' << format_double(loc.mae_accuracy) << ','
          << format_double(loc.mae_cost) << ',' << format_double(weights.weights[m].w_accuracy)
          << ',' << format_double(weights.weights[m].w_cost) << '\n';
    }
  }
}

}  // namespace fedroute
