#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "fedroute/mlp.hpp"
#include "fedroute/rng.hpp"

using namespace fedroute;

namespace {

MlpArchitecture tiny_arch() {
  MlpArchitecture arch;
  arch.d_emb = 3;
  arch.hidden_widths = {4};
  arch.dropout_p = 0.0;
  arch.n_models = 2;
  return arch;
}

// Reference forward pass written independently of the production path:
// plain std:: algorithms, no shared helpers.
std::pair<std::vector<double>, std::vector<double>> reference_forward(
    const MlpRouterParams& p, const MlpArchitecture& arch, const std::vector<double>& x) {
  std::vector<double> h = x;
  for (std::size_t l = 0; l < p.trunk.size(); ++l) {
    const auto& layer = p.trunk[l];
    const std::size_t width = layer.bias.size();
    std::vector<double> z(width);
    for (std::size_t i = 0; i < width; ++i) {
      z[i] = std::inner_product(h.begin(), h.end(),
                                layer.weight.begin() + static_cast<std::ptrdiff_t>(i * h.size()),
                                layer.bias[i]);
    }
    const double mu = std::accumulate(z.begin(), z.end(), 0.0) / static_cast<double>(width);
    double var = 0.0;
    for (const double v : z) var += (v - mu) * (v - mu);
    var /= static_cast<double>(width);
    const double denom = std::sqrt(var + 1e-5);
    std::vector<double> out(width);
    for (std::size_t i = 0; i < width; ++i) {
      const double y = layer.ln_scale[i] * (z[i] - mu) / denom + layer.ln_shift[i];
      out[i] = y * 0.5 * (1.0 + std::erf(y / std::sqrt(2.0)));
    }
    h = out;
  }
  std::vector<double> acc(p.heads.size());
  std::vector<double> cost(p.heads.size());
  for (std::size_t m = 0; m < p.heads.size(); ++m) {
    const double logit = std::inner_product(h.begin(), h.end(), p.heads[m].acc_weight.begin(),
                                            p.heads[m].acc_bias);
    acc[m] = 1.0 / (1.0 + std::exp(-logit));
    cost[m] = std::inner_product(h.begin(), h.end(), p.heads[m].cost_weight.begin(),
                                 p.heads[m].cost_bias);
  }
  return {acc, cost};
}

std::vector<EvaluationRecord> random_batch(const MlpArchitecture& arch, std::size_t n,
                                           std::uint64_t seed) {
  Rng rng(seed);
  std::vector<EvaluationRecord> batch(n);
  for (auto& rec : batch) {
    rec.embedding.resize(static_cast<std::size_t>(arch.d_emb));
    for (auto& v : rec.embedding) v = rng.normal();
    rec.model_index = static_cast<int>(rng.uniform_below(
        static_cast<std::uint64_t>(arch.n_models)));
    rec.accuracy = rng.bernoulli(0.6) ? 1.0 : 0.0;
    rec.cost = rng.uniform(0.05, 0.95);
  }
  return batch;
}

}  // namespace

TEST_CASE("zero parameters predict sigmoid(0) = 0.5 for every model") {
  const auto arch = tiny_arch();
  auto p = zero_params(arch);
  // Layer-norm scale 0 zeroes the trunk, so heads see a zero feature vector.
  const auto pred = mlp_forward(p, arch, std::vector<double>{1.0, -2.0, 0.5}, false, 0, false);
  for (const double a : pred.accuracy) CHECK(a == 0.5);
  for (const double c : pred.cost_norm) CHECK(c == 0.0);
}

TEST_CASE("forward matches the independent reference implementation") {
  const auto arch = tiny_arch();
  const auto p = init_params(arch, 42);
  Rng rng(3);
  for (int rep = 0; rep < 25; ++rep) {
    std::vector<double> x(3);
    for (auto& v : x) v = rng.normal();
    const auto pred = mlp_forward(p, arch, x, false, 0, false);
    const auto [ref_acc, ref_cost] = reference_forward(p, arch, x);
    for (std::size_t m = 0; m < 2; ++m) {
      CHECK(pred.accuracy[m] == doctest::Approx(ref_acc[m]).epsilon(1e-12));
      CHECK(pred.cost_norm[m] == doctest::Approx(ref_cost[m]).epsilon(1e-12));
    }
  }
}

TEST_CASE("dropout disabled: training and inference agree") {
  auto arch = tiny_arch();
  arch.dropout_p = 0.0;
  const auto p = init_params(arch, 7);
  const std::vector<double> x{0.2, -0.4, 0.9};
  const auto train_pred = mlp_forward(p, arch, x, true, 123, false);
  const auto infer_pred = mlp_forward(p, arch, x, false, 456, false);
  CHECK(train_pred.accuracy == infer_pred.accuracy);
  CHECK(train_pred.cost_norm == infer_pred.cost_norm);
}

TEST_CASE("accuracy stays inside (0,1) and the inference clamp bounds cost") {
  auto arch = tiny_arch();
  const auto p = init_params(arch, 11);
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> x(3);
    for (auto& v : x) v = 100.0 * rng.normal();
    const auto pred = mlp_forward(p, arch, x, false, 0, true);
    for (const double a : pred.accuracy) {
      CHECK(a > 0.0);
      CHECK(a < 1.0);
    }
    for (const double c : pred.cost_norm) {
      CHECK(c >= 0.0);
      CHECK(c <= 1.0);
    }
  }
}

TEST_CASE("wrong embedding length raises an error") {
  const auto arch = tiny_arch();
  const auto p = init_params(arch, 1);
  CHECK_THROWS(mlp_forward(p, arch, std::vector<double>{1.0}, false, 0, false));
}

TEST_CASE("a perfectly fitted batch has zero loss and zero gradient") {
  auto arch = tiny_arch();
  arch.dropout_p = 0.0;
  const auto p = init_params(arch, 13);
  // Build a record whose targets equal the model's own predictions.
  EvaluationRecord rec;
  rec.embedding = {0.4, 0.1, -0.2};
  rec.model_index = 1;
  const auto pred = mlp_forward(p, arch, rec.embedding, false, 0, false);
  rec.accuracy = pred.accuracy[1];
  rec.cost = pred.cost_norm[1];  // cost_normalizer 1.0
  MlpRouterParams grad;
  const double loss = loss_and_gradient(p, arch, std::vector<EvaluationRecord>{rec}, 1.0, 0,
                                        grad);
  CHECK(loss == doctest::Approx(0.0).epsilon(1e-24));
  CHECK(linf_difference(grad, zero_params(arch)) < 1e-12);
}

TEST_CASE("heads of unlogged models receive exactly zero gradient") {
  auto arch = tiny_arch();
  arch.dropout_p = 0.1;
  const auto p = init_params(arch, 17);
  auto batch = random_batch(arch, 1, 19);
  batch[0].model_index = 0;
  MlpRouterParams grad;
  loss_and_gradient(p, arch, batch, 1.0, 21, grad);
  const auto& untouched = grad.heads[1];
  for (const double g : untouched.acc_weight) CHECK(g == 0.0);
  for (const double g : untouched.cost_weight) CHECK(g == 0.0);
  CHECK(untouched.acc_bias == 0.0);
  CHECK(untouched.cost_bias == 0.0);
}

TEST_CASE("analytic gradient matches central finite differences") {
  MlpArchitecture arch;
  arch.d_emb = 3;
  arch.hidden_widths = {4};
  arch.dropout_p = 0.1;  // exercises the dropout mask in the backward pass
  arch.n_models = 2;
  const auto p = init_params(arch, 23);
  const auto batch = random_batch(arch, 2, 29);
  const double cn = 1.0;
  const std::uint64_t dropout_seed = 31;

  MlpRouterParams grad;
  loss_and_gradient(p, arch, batch, cn, dropout_seed, grad);

  std::vector<std::span<const double>> grad_views;
  collect_param_views(grad, grad_views);

  const double h = 1e-5;
  MlpRouterParams probe = p;
  std::vector<std::span<double>> probe_views;
  collect_param_views(probe, probe_views);
  MlpRouterParams scratch;

  for (std::size_t a = 0; a < probe_views.size(); ++a) {
    for (std::size_t i = 0; i < probe_views[a].size(); ++i) {
      const double original = probe_views[a][i];
      probe_views[a][i] = original + h;
      const double loss_plus = loss_and_gradient(probe, arch, batch, cn, dropout_seed, scratch);
      probe_views[a][i] = original - h;
      const double loss_minus = loss_and_gradient(probe, arch, batch, cn, dropout_seed, scratch);
      probe_views[a][i] = original;
      const double fd = (loss_plus - loss_minus) / (2.0 * h);
      const double analytic = grad_views[a][i];
      const double err = std::abs(fd - analytic);
      const double scale = std::max(std::abs(fd), std::abs(analytic));
      CHECK((err < 1e-8 || err / scale < 1e-4));
    }
  }
}

TEST_CASE("local_train is a pure function of its seeds") {
  MlpArchitecture arch;
  arch.d_emb = 4;
  arch.hidden_widths = {8, 8};
  arch.dropout_p = 0.1;
  arch.n_models = 3;
  const auto p = init_params(arch, 37);
  const auto data = random_batch(arch, 64, 41);
  LocalTrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  const auto a = local_train(p, arch, data, 1.0, cfg, 43);
  const auto b = local_train(p, arch, data, 1.0, cfg, 43);
  CHECK(linf_difference(a, b) == 0.0);
  const auto c = local_train(p, arch, data, 1.0, cfg, 44);
  CHECK(linf_difference(a, c) > 0.0);
}

TEST_CASE("one batch covering the data set means exactly one optimizer step") {
  MlpArchitecture arch;
  arch.d_emb = 2;
  arch.hidden_widths = {4};
  arch.dropout_p = 0.0;
  arch.n_models = 1;
  const auto p = init_params(arch, 47);
  const auto data = random_batch(arch, 10, 53);

  LocalTrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 100;  // >= |train|
  cfg.optimizer.kind = OptimizerConfig::Kind::Sgd;
  cfg.optimizer.learning_rate = 0.1;
  cfg.optimizer.weight_decay = 0.0;
  cfg.optimizer.clip_norm = 0.0;
  const auto trained = local_train(p, arch, data, 1.0, cfg, 59);

  // Hand-rolled single step: full-batch gradient, one SGD update.
  MlpRouterParams grad;
  loss_and_gradient(p, arch, data, 1.0, derive_seed(59, "batch", 0, 0), grad);
  auto expected = p;
  std::vector<std::span<double>> e_views;
  std::vector<std::span<const double>> g_views;
  collect_param_views(expected, e_views);
  collect_param_views(grad, g_views);
  for (std::size_t a = 0; a < e_views.size(); ++a) {
    for (std::size_t i = 0; i < e_views[a].size(); ++i) {
      e_views[a][i] -= 0.1 * g_views[a][i];
    }
  }
  CHECK(linf_difference(trained, expected) < 1e-15);
}

TEST_CASE("training on a separable synthetic task shrinks the loss 10x") {
  MlpArchitecture arch;
  arch.d_emb = 2;
  arch.hidden_widths = {16};
  arch.dropout_p = 0.0;
  arch.n_models = 2;
  Rng rng(61);
  std::vector<EvaluationRecord> data(256);
  for (auto& rec : data) {
    const bool right = rng.bernoulli(0.5);
    rec.embedding = {right ? 1.0 + 0.2 * rng.normal() : -1.0 + 0.2 * rng.normal(),
                     rng.normal()};
    rec.model_index = static_cast<int>(rng.uniform_below(2));
    const bool good = (rec.embedding[0] > 0.0) == (rec.model_index == 0);
    rec.accuracy = good ? 1.0 : 0.0;
    rec.cost = rec.model_index == 0 ? 0.2 : 0.8;
  }
  const auto p = init_params(arch, 67);
  const double initial = evaluate_loss(p, arch, data, 1.0);
  LocalTrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 32;
  const auto trained = local_train(p, arch, data, 1.0, cfg, 71);
  const double final_loss = evaluate_loss(trained, arch, data, 1.0);
  CHECK(final_loss * 10.0 <= initial);
}

TEST_CASE("empty train set returns the parameters unchanged") {
  const auto arch = tiny_arch();
  const auto p = init_params(arch, 73);
  LocalTrainConfig cfg;
  const auto out = local_train(p, arch, {}, 1.0, cfg, 79);
  CHECK(linf_difference(p, out) == 0.0);
}
