#include <doctest.h>

#include <memory>

#include "fedroute/personalization.hpp"
#include "fedroute/rng.hpp"

using namespace fedroute;

namespace {

class TableEstimator final : public UtilityEstimator {
 public:
  explicit TableEstimator(std::vector<ModelEstimate> row) : row_(std::move(row)) {}
  int n_models() const override { return static_cast<int>(row_.size()); }
  std::vector<ModelEstimate> estimate(const EmbeddingVector&) const override { return row_; }

 private:
  std::vector<ModelEstimate> row_;
};

std::vector<EvaluationRecord> records_for_model(int model, std::size_t n,
                                                double accuracy, double cost) {
  std::vector<EvaluationRecord> records(n);
  Rng rng(static_cast<std::uint64_t>(model) + 100);
  for (auto& rec : records) {
    rec.embedding = {rng.normal()};
    rec.model_index = model;
    rec.accuracy = accuracy;
    rec.cost = cost;
  }
  return records;
}

}  // namespace

TEST_CASE("a perfect estimator has zero MAE on every target") {
  TableEstimator perfect({{0.7, 0.3, true}});
  const auto errors = calibration_errors(perfect, records_for_model(0, 10, 0.7, 0.3));
  CHECK(errors[0].mae_accuracy == doctest::Approx(0.0));
  CHECK(errors[0].mae_cost == doctest::Approx(0.0));
  CHECK(errors[0].count == 10);
}

TEST_CASE("a constant 0.5 predictor on {0,1,1} observations has MAE 0.5") {
  TableEstimator constant({{0.5, 0.5, true}});
  std::vector<EvaluationRecord> records;
  for (const double a : {0.0, 1.0, 1.0}) {
    EvaluationRecord rec;
    rec.embedding = {0.0};
    rec.model_index = 0;
    rec.accuracy = a;
    rec.cost = 0.5;
    records.push_back(rec);
  }
  const auto errors = calibration_errors(constant, records);
  CHECK(errors[0].mae_accuracy == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("calibration errors match a direct per-record summation") {
  Rng rng(7);
  std::vector<EvaluationRecord> records(40);
  for (auto& rec : records) {
    rec.embedding = {rng.normal()};
    rec.model_index = static_cast<int>(rng.uniform_below(2));
    rec.accuracy = rng.uniform();
    rec.cost = rng.uniform();
  }
  const std::vector<ModelEstimate> row{{0.6, 0.4, true}, {0.3, 0.7, true}};
  TableEstimator estimator(row);
  const auto errors = calibration_errors(estimator, records);
  for (int m = 0; m < 2; ++m) {
    double acc_sum = 0.0;
    double cost_sum = 0.0;
    int count = 0;
    for (const auto& rec : records) {
      if (rec.model_index != m) continue;
      acc_sum += std::abs(row[static_cast<std::size_t>(m)].accuracy - rec.accuracy);
      cost_sum += std::abs(row[static_cast<std::size_t>(m)].cost - rec.cost);
      ++count;
    }
    CHECK(errors[static_cast<std::size_t>(m)].count == count);
    CHECK(errors[static_cast<std::size_t>(m)].mae_accuracy ==
          doctest::Approx(acc_sum / count).epsilon(1e-12));
    CHECK(errors[static_cast<std::size_t>(m)].mae_cost ==
          doctest::Approx(cost_sum / count).epsilon(1e-12));
  }
}

TEST_CASE("models with zero records are absent from the errors") {
  TableEstimator estimator({{0.5, 0.5, true}, {0.5, 0.5, true}});
  const auto errors = calibration_errors(estimator, records_for_model(0, 5, 1.0, 0.2));
  CHECK(errors[0].count == 5);
  CHECK(errors[1].count == 0);
}

TEST_CASE("blend weight formula and its degenerate cases") {
  auto err = [](double a, double c, long long n) { return ModelError{a, c, n}; };

  // Equal positive errors: w = 0.5.
  auto w = blend_weights({err(0.3, 0.3, 5)}, {err(0.3, 0.3, 5)});
  CHECK(w.weights[0].w_accuracy == doctest::Approx(0.5));
  CHECK(w.weights[0].w_cost == doctest::Approx(0.5));

  // Perfect federated estimator: w = 0 (pure federated).
  w = blend_weights({err(0.0, 0.0, 5)}, {err(0.4, 0.4, 5)});
  CHECK(w.weights[0].w_accuracy == doctest::Approx(0.0));

  // e(fed)=0.2, e(local)=0.1 -> w = 2/3 on the local estimator.
  w = blend_weights({err(0.2, 0.2, 5)}, {err(0.1, 0.1, 5)});
  CHECK(w.weights[0].w_accuracy == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  // Both zero: prefer the federated side.
  w = blend_weights({err(0.0, 0.0, 5)}, {err(0.0, 0.0, 5)});
  CHECK(w.weights[0].w_accuracy == doctest::Approx(0.0));

  // Model absent locally -> 0; absent from the federated errors -> 1.
  w = blend_weights({err(0.2, 0.2, 5)}, {err(0.0, 0.0, 0)});
  CHECK(w.weights[0].w_accuracy == doctest::Approx(0.0));
  w = blend_weights({err(0.0, 0.0, 0)}, {err(0.3, 0.3, 5)});
  CHECK(w.weights[0].w_accuracy == doctest::Approx(1.0));
}

TEST_CASE("blend weights always land in [0,1]") {
  Rng rng(11);
  for (int rep = 0; rep < 200; ++rep) {
    const ModelError fed{rng.uniform(), rng.uniform(), rng.bernoulli(0.8) ? 5LL : 0LL};
    const ModelError loc{rng.uniform(), rng.uniform(), rng.bernoulli(0.8) ? 5LL : 0LL};
    const auto w = blend_weights({fed}, {loc});
    CHECK(w.weights[0].w_accuracy >= 0.0);
    CHECK(w.weights[0].w_accuracy <= 1.0);
    CHECK(w.weights[0].w_cost >= 0.0);
    CHECK(w.weights[0].w_cost <= 1.0);
  }
}

TEST_CASE("blend endpoints reproduce the federated and local estimators") {
  auto fed = std::make_shared<TableEstimator>(
      std::vector<ModelEstimate>{{0.6, 0.2, true}, {0.4, 0.8, true}});
  auto local = std::make_shared<TableEstimator>(
      std::vector<ModelEstimate>{{0.8, 0.4, true}, {0.2, 0.6, true}});

  PersonalizationWeights pure_fed;
  pure_fed.weights = {{0.0, 0.0}, {0.0, 0.0}};
  pure_fed.federated_errors.resize(2);
  pure_fed.local_errors.resize(2);
  const BlendedEstimator fed_only(fed, local, pure_fed);
  const auto fe = fed_only.estimate({0.0});
  CHECK(fe[0].accuracy == doctest::Approx(0.6));
  CHECK(fe[1].cost == doctest::Approx(0.8));

  PersonalizationWeights pure_local = pure_fed;
  pure_local.weights = {{1.0, 1.0}, {1.0, 1.0}};
  const BlendedEstimator local_only(fed, local, pure_local);
  const auto le = local_only.estimate({0.0});
  CHECK(le[0].accuracy == doctest::Approx(0.8));
  CHECK(le[1].cost == doctest::Approx(0.6));

  PersonalizationWeights half = pure_fed;
  half.weights = {{0.5, 0.5}, {0.5, 0.5}};
  const BlendedEstimator mid(fed, local, half);
  const auto me = mid.estimate({0.0});
  CHECK(me[0].accuracy == doctest::Approx(0.7));  // midpoint of 0.6 and 0.8
}

TEST_CASE("blended estimates lie between the two sources componentwise") {
  Rng rng(13);
  for (int rep = 0; rep < 100; ++rep) {
    const ModelEstimate f{rng.uniform(), rng.uniform(), true};
    const ModelEstimate l{rng.uniform(), rng.uniform(), true};
    auto fed = std::make_shared<TableEstimator>(std::vector<ModelEstimate>{f});
    auto local = std::make_shared<TableEstimator>(std::vector<ModelEstimate>{l});
    PersonalizationWeights w;
    w.weights = {{rng.uniform(), rng.uniform()}};
    w.federated_errors.resize(1);
    w.local_errors.resize(1);
    const BlendedEstimator blended(fed, local, w);
    const auto b = blended.estimate({0.0});
    CHECK(b[0].accuracy >= std::min(f.accuracy, l.accuracy) - 1e-15);
    CHECK(b[0].accuracy <= std::max(f.accuracy, l.accuracy) + 1e-15);
    CHECK(b[0].cost >= std::min(f.cost, l.cost) - 1e-15);
    CHECK(b[0].cost <= std::max(f.cost, l.cost) + 1e-15);
  }
}

TEST_CASE("one-sided absence falls back to the covered estimator") {
  auto fed = std::make_shared<TableEstimator>(
      std::vector<ModelEstimate>{{0.6, 0.2, true}, {}});
  auto local = std::make_shared<TableEstimator>(
      std::vector<ModelEstimate>{{}, {0.3, 0.5, true}});
  PersonalizationWeights w;
  w.weights = {{0.5, 0.5}, {0.5, 0.5}};
  w.federated_errors.resize(2);
  w.local_errors.resize(2);
  const BlendedEstimator blended(fed, local, w);
  const auto b = blended.estimate({0.0});
  CHECK(b[0].present);
  CHECK(b[0].accuracy == doctest::Approx(0.6));
  CHECK(b[1].present);
  CHECK(b[1].accuracy == doctest::Approx(0.3));
}

TEST_CASE("personalized utilities apply the blended trade-off") {
  TableEstimator fed({{0.6, 0.2, true}});
  TableEstimator local({{0.8, 0.4, true}});
  PersonalizationWeights w;
  w.weights = {{0.5, 0.5}};
  w.federated_errors.resize(1);
  w.local_errors.resize(1);
  const auto utilities = personalized_utilities(fed, local, w, {0.0}, 1.0);
  CHECK(utilities[0] == doctest::Approx(0.7 - 0.3).epsilon(1e-12));
}
