#include "fedroute/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fedroute/numeric.hpp"
#include "fedroute/rng.hpp"

namespace fedroute {

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::string two_digit_model_id(int m) {
  return m < 10 ? "model_0" + std::to_string(m) : "model_" + std::to_string(m);
}

}  // namespace

double SyntheticOracle::true_accuracy(const EmbeddingVector& x, int model) const {
  const auto& w = accuracy_weights[static_cast<std::size_t>(model)];
  double z = accuracy_bias[static_cast<std::size_t>(model)];
  for (std::size_t i = 0; i < w.size(); ++i) z += w[i] * x[i];
  return logistic(z);
}

double SyntheticOracle::clipped_mean_cost(int model, std::size_t n_draws,
                                          std::uint64_t seed) const {
  Rng rng(derive_seed(seed, "clipped-cost", static_cast<std::uint64_t>(model)));
  KahanSum sum;
  const double base = base_costs[static_cast<std::size_t>(model)];
  for (std::size_t i = 0; i < n_draws; ++i) {
    const double c = base + cost_noise_scale * rng.normal();
    sum.add(std::clamp(c, 0.0, c_max));
  }
  return sum.value() / static_cast<double>(n_draws);
}

SyntheticOracle make_synthetic_oracle(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.d_emb < 1 || spec.n_models < 1 || spec.n_tasks < 1) {
    throw std::invalid_argument("make_synthetic_oracle: dimensions must be >= 1");
  }
  if (spec.c_max <= 0.0) throw std::invalid_argument("make_synthetic_oracle: c_max must be > 0");

  SyntheticOracle oracle;
  oracle.mixture_stddev = spec.mixture_stddev;
  oracle.cost_noise_scale = spec.cost_noise_scale;
  oracle.c_max = spec.c_max;

  Rng rng(derive_seed(seed, "oracle"));
  oracle.mixture_centers.resize(static_cast<std::size_t>(spec.n_tasks));
  for (auto& center : oracle.mixture_centers) {
    center.resize(static_cast<std::size_t>(spec.d_emb));
    for (auto& v : center) v = spec.center_spread * rng.normal();
  }

  const double weight_scale =
      spec.accuracy_sharpness / std::sqrt(static_cast<double>(spec.d_emb));
  oracle.accuracy_weights.resize(static_cast<std::size_t>(spec.n_models));
  oracle.accuracy_bias.resize(static_cast<std::size_t>(spec.n_models));
  for (int m = 0; m < spec.n_models; ++m) {
    auto& w = oracle.accuracy_weights[static_cast<std::size_t>(m)];
    w.resize(static_cast<std::size_t>(spec.d_emb));
    for (auto& v : w) v = weight_scale * rng.normal();
    oracle.accuracy_bias[static_cast<std::size_t>(m)] = 0.5 * rng.normal();
  }

  if (!spec.base_costs.empty()) {
    if (static_cast<int>(spec.base_costs.size()) != spec.n_models) {
      throw std::invalid_argument("make_synthetic_oracle: base_costs size mismatch");
    }
    oracle.base_costs = spec.base_costs;
  } else {
    oracle.base_costs.resize(static_cast<std::size_t>(spec.n_models));
    for (int m = 0; m < spec.n_models; ++m) {
      const double t = spec.n_models == 1
                           ? 0.5
                           : static_cast<double>(m) / static_cast<double>(spec.n_models - 1);
      oracle.base_costs[static_cast<std::size_t>(m)] = (0.05 + 0.9 * t) * spec.c_max;
    }
  }
  for (const double c : oracle.base_costs) {
    if (c < 0.0 || c > oracle.c_max) {
      throw std::invalid_argument("make_synthetic_oracle: base cost outside [0, c_max]");
    }
  }
  return oracle;
}

std::vector<FullEvaluation> generate_synthetic(const SyntheticOracle& oracle,
                                               std::size_t n_queries, std::uint64_t seed) {
  if (n_queries < 1) throw std::invalid_argument("generate_synthetic: n_queries must be >= 1");
  const int d = oracle.d_emb();
  const int n_models = oracle.n_models();
  const int n_tasks = oracle.n_tasks();

  Rng rng(derive_seed(seed, "generate"));
  std::vector<FullEvaluation> corpus(n_queries);
  for (auto& q : corpus) {
    const int task = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(n_tasks)));
    const auto& center = oracle.mixture_centers[static_cast<std::size_t>(task)];
    q.task_label = "task_" + std::to_string(task);
    q.embedding.resize(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
      q.embedding[static_cast<std::size_t>(i)] =
          center[static_cast<std::size_t>(i)] + oracle.mixture_stddev * rng.normal();
    }
    q.accuracy.resize(static_cast<std::size_t>(n_models));
    q.cost.resize(static_cast<std::size_t>(n_models));
    for (int m = 0; m < n_models; ++m) {
      const double a = oracle.true_accuracy(q.embedding, m);
      q.accuracy[static_cast<std::size_t>(m)] = rng.bernoulli(a) ? 1.0 : 0.0;
      const double c = oracle.base_costs[static_cast<std::size_t>(m)] +
                       oracle.cost_noise_scale * rng.normal();
      q.cost[static_cast<std::size_t>(m)] = std::clamp(c, 0.0, oracle.c_max);
    }
  }
  return corpus;
}

int oracle_best_model(const SyntheticOracle& oracle, const EmbeddingVector& x,
                      double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("oracle_best_model: lambda must be >= 0");
  int best = 0;
  double best_utility = oracle.true_utility(x, 0, lambda);
  double best_cost = oracle.true_cost(x, 0);
  for (int m = 1; m < oracle.n_models(); ++m) {
    const double u = oracle.true_utility(x, m, lambda);
    const double c = oracle.true_cost(x, m);
    if (u > best_utility || (u == best_utility && c < best_cost)) {
      best = m;
      best_utility = u;
      best_cost = c;
    }
  }
  return best;
}

DatasetManifest synthetic_manifest(const SyntheticOracle& oracle,
                                   const std::vector<FullEvaluation>& corpus) {
  DatasetManifest manifest;
  manifest.d_emb = oracle.d_emb();
  manifest.model_pool.c_max = oracle.c_max;
  for (int m = 0; m < oracle.n_models(); ++m) {
    manifest.model_pool.model_ids.push_back(two_digit_model_id(m));
  }
  manifest.n_records = corpus.size();
  double max_cost = 0.0;
  for (const auto& q : corpus) {
    for (const double c : q.cost) max_cost = std::max(max_cost, c);
  }
  manifest.cost_normalizer = max_cost > 0.0 ? max_cost : 1.0;
  return manifest;
}

}  // namespace fedroute
