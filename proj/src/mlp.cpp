#include "fedroute/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fedroute/numeric.hpp"
#include "fedroute/rng.hpp"

namespace fedroute {

namespace {

constexpr double kLayerNormEpsilon = 1e-5;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Exact Gaussian-CDF form; keeps gradient tests free of tanh-approximation
// ambiguity.
double gelu(double z) { return z * 0.5 * std::erfc(-z * kInvSqrt2); }

double gelu_derivative(double z) {
  const double cdf = 0.5 * std::erfc(-z * kInvSqrt2);
  const double pdf = kInvSqrt2Pi * std::exp(-0.5 * z * z);
  return cdf + z * pdf;
}

struct LayerCache {
  std::vector<double> input;
  std::vector<double> affine;   // z = W x + b
  std::vector<double> ln_xhat;  // (z - mu) / sigma
  double ln_sigma = 1.0;
  std::vector<double> ln_out;   // gamma * xhat + shift (GELU input)
  std::vector<double> act;      // GELU output
  std::vector<double> mask;     // dropout keep mask (1/0), pre-scaling
  std::vector<double> output;
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  std::vector<double> features;  // trunk output
};

void affine_forward(const TrunkLayer& layer, std::span<const double> in,
                    std::vector<double>& out) {
  const std::size_t n_out = layer.bias.size();
  const std::size_t n_in = in.size();
  out.resize(n_out);
  const double* w = layer.weight.data();
  for (std::size_t i = 0; i < n_out; ++i) {
    double acc = layer.bias[i];
    const double* row = w + i * n_in;
    for (std::size_t j = 0; j < n_in; ++j) acc += row[j] * in[j];
    out[i] = acc;
  }
}

void trunk_layer_forward(const TrunkLayer& layer, std::span<const double> in,
                         bool training, double dropout_p, Rng* dropout_rng,
                         LayerCache& cache, int layer_index) {
  cache.input.assign(in.begin(), in.end());
  affine_forward(layer, in, cache.affine);

  const std::size_t h = cache.affine.size();
  double mu = 0.0;
  for (const double v : cache.affine) mu += v;
  mu /= static_cast<double>(h);
  double var = 0.0;
  for (const double v : cache.affine) {
    const double d = v - mu;
    var += d * d;
  }
  var /= static_cast<double>(h);
  const double sigma = std::sqrt(var + kLayerNormEpsilon);
  cache.ln_sigma = sigma;
  cache.ln_xhat.resize(h);
  cache.ln_out.resize(h);
  cache.act.resize(h);
  for (std::size_t i = 0; i < h; ++i) {
    const double xhat = (cache.affine[i] - mu) / sigma;
    cache.ln_xhat[i] = xhat;
    const double y = layer.ln_scale[i] * xhat + layer.ln_shift[i];
    cache.ln_out[i] = y;
    cache.act[i] = gelu(y);
  }

  const bool drop = training && dropout_p > 0.0;
  cache.mask.resize(h);
  cache.output.resize(h);
  if (drop) {
    const double keep_scale = 1.0 / (1.0 - dropout_p);
    for (std::size_t i = 0; i < h; ++i) {
      const bool keep = dropout_rng->uniform() >= dropout_p;
      cache.mask[i] = keep ? 1.0 : 0.0;
      cache.output[i] = keep ? cache.act[i] * keep_scale : 0.0;
    }
  } else {
    std::fill(cache.mask.begin(), cache.mask.end(), 1.0);
    cache.output = cache.act;
  }

  if (!all_finite(cache.output)) {
    throw std::runtime_error("non-finite activation in trunk layer " +
                             std::to_string(layer_index));
  }
}

void trunk_forward(const MlpRouterParams& params, const MlpArchitecture& arch,
                   std::span<const double> x, bool training, Rng* dropout_rng,
                   ForwardCache& cache) {
  if (static_cast<int>(x.size()) != arch.d_emb) {
    throw std::invalid_argument("mlp_forward: embedding length " +
                                std::to_string(x.size()) + " does not match d_emb " +
                                std::to_string(arch.d_emb));
  }
  cache.layers.resize(params.trunk.size());
  std::span<const double> current = x;
  for (std::size_t l = 0; l < params.trunk.size(); ++l) {
    trunk_layer_forward(params.trunk[l], current, training, arch.dropout_p, dropout_rng,
                        cache.layers[l], static_cast<int>(l));
    current = cache.layers[l].output;
  }
  cache.features.assign(current.begin(), current.end());
}

struct HeadOutputs {
  std::vector<double> acc;        // sigmoid outputs
  std::vector<double> cost;       // raw normalized-cost outputs
  std::vector<double> acc_logit;  // pre-sigmoid, kept for backprop
};

void heads_forward(const MlpRouterParams& params, std::span<const double> features,
                   HeadOutputs& out) {
  const std::size_t n_models = params.heads.size();
  out.acc.resize(n_models);
  out.cost.resize(n_models);
  out.acc_logit.resize(n_models);
  for (std::size_t m = 0; m < n_models; ++m) {
    const auto& head = params.heads[m];
    double logit = head.acc_bias;
    double cost = head.cost_bias;
    for (std::size_t j = 0; j < features.size(); ++j) {
      logit += head.acc_weight[j] * features[j];
      cost += head.cost_weight[j] * features[j];
    }
    out.acc_logit[m] = logit;
    out.acc[m] = sigmoid(logit);
    out.cost[m] = cost;
  }
}

// Backpropagates d(loss)/d(features) through the trunk, accumulating
// parameter gradients into grad (summed, not averaged).
void trunk_backward(const MlpRouterParams& params, const MlpArchitecture& arch,
                    const ForwardCache& cache, std::vector<double>& d_out,
                    MlpRouterParams& grad) {
  std::vector<double> d_in;
  for (std::size_t li = params.trunk.size(); li-- > 0;) {
    const auto& layer = params.trunk[li];
    const auto& c = cache.layers[li];
    auto& g = grad.trunk[li];
    const std::size_t h = c.affine.size();

    // dropout (inverted scaling) then GELU
    const bool dropped = arch.dropout_p > 0.0;
    const double keep_scale = dropped ? 1.0 / (1.0 - arch.dropout_p) : 1.0;
    std::vector<double> d_y(h);
    for (std::size_t i = 0; i < h; ++i) {
      const double d_act = dropped ? d_out[i] * c.mask[i] * keep_scale : d_out[i];
      d_y[i] = d_act * gelu_derivative(c.ln_out[i]);
    }

    // layer norm
    double mean_u = 0.0;
    double mean_ux = 0.0;
    for (std::size_t i = 0; i < h; ++i) {
      g.ln_scale[i] += d_y[i] * c.ln_xhat[i];
      g.ln_shift[i] += d_y[i];
      const double u = d_y[i] * layer.ln_scale[i];
      mean_u += u;
      mean_ux += u * c.ln_xhat[i];
    }
    mean_u /= static_cast<double>(h);
    mean_ux /= static_cast<double>(h);
    std::vector<double> d_z(h);
    for (std::size_t i = 0; i < h; ++i) {
      const double u = d_y[i] * layer.ln_scale[i];
      d_z[i] = (u - mean_u - c.ln_xhat[i] * mean_ux) / c.ln_sigma;
    }

    // affine
    const std::size_t n_in = c.input.size();
    d_in.assign(n_in, 0.0);
    for (std::size_t i = 0; i < h; ++i) {
      const double dzi = d_z[i];
      g.bias[i] += dzi;
      double* g_row = g.weight.data() + i * n_in;
      const double* w_row = layer.weight.data() + i * n_in;
      for (std::size_t j = 0; j < n_in; ++j) {
        g_row[j] += dzi * c.input[j];
        d_in[j] += dzi * w_row[j];
      }
    }
    d_out = d_in;
  }
}

void check_record(const EvaluationRecord& rec, const MlpArchitecture& arch) {
  if (rec.model_index < 0 || rec.model_index >= arch.n_models) {
    throw std::invalid_argument("record model index out of range");
  }
}

// Shared core for the plain and distillation objectives.
double batch_loss_and_gradient(const MlpRouterParams& params,
                               const MlpRouterParams* reference,
                               const MlpArchitecture& arch,
                               std::span<const EvaluationRecord> data,
                               std::span<const std::size_t> batch_indices,
                               double cost_normalizer, double distill_weight,
                               std::uint64_t dropout_seed, MlpRouterParams& gradient) {
  if (batch_indices.empty()) throw std::invalid_argument("loss_and_gradient: empty batch");
  if (cost_normalizer <= 0.0) {
    throw std::invalid_argument("loss_and_gradient: cost_normalizer must be > 0");
  }
  gradient = zero_params(arch);
  const std::size_t n_models = params.heads.size();
  const double inv_batch = 1.0 / static_cast<double>(batch_indices.size());
  const bool distill = reference != nullptr && distill_weight > 0.0;

  ForwardCache cache;
  ForwardCache ref_cache;
  HeadOutputs heads;
  HeadOutputs ref_heads;
  KahanSum loss;
  std::vector<double> d_features;

  for (std::size_t slot = 0; slot < batch_indices.size(); ++slot) {
    const auto& rec = data[batch_indices[slot]];
    check_record(rec, arch);
    Rng dropout_rng(derive_seed(dropout_seed, "dropout", slot));
    trunk_forward(params, arch, rec.embedding, true, &dropout_rng, cache);
    heads_forward(params, cache.features, heads);

    const auto m = static_cast<std::size_t>(rec.model_index);
    const double acc_err = heads.acc[m] - rec.accuracy;
    const double cost_err = heads.cost[m] - rec.cost / cost_normalizer;
    double sample_loss = acc_err * acc_err + cost_err * cost_err;

    std::vector<double> d_logit(n_models, 0.0);
    std::vector<double> d_cost(n_models, 0.0);
    d_logit[m] = 2.0 * acc_err * heads.acc[m] * (1.0 - heads.acc[m]);
    d_cost[m] = 2.0 * cost_err;

    if (distill) {
      trunk_forward(*reference, arch, rec.embedding, false, nullptr, ref_cache);
      heads_forward(*reference, ref_cache.features, ref_heads);
      const double scale = distill_weight / static_cast<double>(n_models);
      for (std::size_t k = 0; k < n_models; ++k) {
        const double da = heads.acc[k] - ref_heads.acc[k];
        const double dc = heads.cost[k] - ref_heads.cost[k];
        sample_loss += scale * (da * da + dc * dc);
        d_logit[k] += scale * 2.0 * da * heads.acc[k] * (1.0 - heads.acc[k]);
        d_cost[k] += scale * 2.0 * dc;
      }
    }
    loss.add(sample_loss);

    // Heads: only models with nonzero upstream signal contribute.
    d_features.assign(cache.features.size(), 0.0);
    for (std::size_t k = 0; k < n_models; ++k) {
      if (d_logit[k] == 0.0 && d_cost[k] == 0.0) continue;
      const auto& head = params.heads[k];
      auto& g_head = gradient.heads[k];
      const double dl = d_logit[k] * inv_batch;
      const double dc = d_cost[k] * inv_batch;
      g_head.acc_bias += dl;
      g_head.cost_bias += dc;
      for (std::size_t j = 0; j < cache.features.size(); ++j) {
        g_head.acc_weight[j] += dl * cache.features[j];
        g_head.cost_weight[j] += dc * cache.features[j];
        d_features[j] += dl * head.acc_weight[j] + dc * head.cost_weight[j];
      }
    }
    trunk_backward(params, arch, cache, d_features, gradient);
  }
  return loss.value() * inv_batch;
}

}  // namespace

void collect_param_views(MlpRouterParams& p, std::vector<std::span<double>>& out) {
  out.clear();
  for (auto& layer : p.trunk) {
    out.emplace_back(layer.weight);
    out.emplace_back(layer.bias);
    out.emplace_back(layer.ln_scale);
    out.emplace_back(layer.ln_shift);
  }
  for (auto& head : p.heads) {
    out.emplace_back(head.acc_weight);
    out.emplace_back(&head.acc_bias, 1);
    out.emplace_back(head.cost_weight);
    out.emplace_back(&head.cost_bias, 1);
  }
}

void collect_param_views(const MlpRouterParams& p,
                         std::vector<std::span<const double>>& out) {
  out.clear();
  for (const auto& layer : p.trunk) {
    out.emplace_back(layer.weight);
    out.emplace_back(layer.bias);
    out.emplace_back(layer.ln_scale);
    out.emplace_back(layer.ln_shift);
  }
  for (const auto& head : p.heads) {
    out.emplace_back(head.acc_weight);
    out.emplace_back(&head.acc_bias, 1);
    out.emplace_back(head.cost_weight);
    out.emplace_back(&head.cost_bias, 1);
  }
}

std::size_t parameter_count(const MlpRouterParams& p) {
  std::vector<std::span<const double>> views;
  collect_param_views(p, views);
  std::size_t n = 0;
  for (const auto& v : views) n += v.size();
  return n;
}

double linf_difference(const MlpRouterParams& a, const MlpRouterParams& b) {
  std::vector<std::span<const double>> va;
  std::vector<std::span<const double>> vb;
  collect_param_views(a, va);
  collect_param_views(b, vb);
  if (va.size() != vb.size()) throw std::invalid_argument("linf_difference: shape mismatch");
  double max_diff = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    if (va[i].size() != vb[i].size()) {
      throw std::invalid_argument("linf_difference: shape mismatch");
    }
    for (std::size_t j = 0; j < va[i].size(); ++j) {
      max_diff = std::max(max_diff, std::abs(va[i][j] - vb[i][j]));
    }
  }
  return max_diff;
}

bool params_all_finite(const MlpRouterParams& p) {
  std::vector<std::span<const double>> views;
  collect_param_views(p, views);
  for (const auto& v : views) {
    if (!all_finite(v)) return false;
  }
  return true;
}

MlpRouterParams zero_params(const MlpArchitecture& arch) {
  if (arch.d_emb < 1 || arch.n_models < 1 || arch.hidden_widths.empty()) {
    throw std::invalid_argument("mlp: architecture dimensions must be >= 1");
  }
  MlpRouterParams p;
  int in = arch.d_emb;
  for (const int width : arch.hidden_widths) {
    if (width < 1) throw std::invalid_argument("mlp: hidden widths must be >= 1");
    TrunkLayer layer;
    layer.weight.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(in), 0.0);
    layer.bias.assign(static_cast<std::size_t>(width), 0.0);
    layer.ln_scale.assign(static_cast<std::size_t>(width), 0.0);
    layer.ln_shift.assign(static_cast<std::size_t>(width), 0.0);
    p.trunk.push_back(std::move(layer));
    in = width;
  }
  for (int m = 0; m < arch.n_models; ++m) {
    ModelHeads head;
    head.acc_weight.assign(static_cast<std::size_t>(in), 0.0);
    head.cost_weight.assign(static_cast<std::size_t>(in), 0.0);
    p.heads.push_back(std::move(head));
  }
  return p;
}

namespace {

void init_trunk_layer(TrunkLayer& layer, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& w : layer.weight) w = rng.uniform(-bound, bound);
  std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  std::fill(layer.ln_scale.begin(), layer.ln_scale.end(), 1.0);
  std::fill(layer.ln_shift.begin(), layer.ln_shift.end(), 0.0);
}

void init_head(ModelHeads& head, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& w : head.acc_weight) w = rng.uniform(-bound, bound);
  head.acc_bias = 0.0;
  for (auto& w : head.cost_weight) w = rng.uniform(-bound, bound);
  head.cost_bias = 0.0;
}

}  // namespace

MlpRouterParams init_params(const MlpArchitecture& arch, std::uint64_t seed) {
  MlpRouterParams p = zero_params(arch);
  Rng rng(derive_seed(seed, "init"));
  int in = arch.d_emb;
  for (std::size_t l = 0; l < p.trunk.size(); ++l) {
    init_trunk_layer(p.trunk[l], in, rng);
    in = arch.hidden_widths[l];
  }
  for (auto& head : p.heads) init_head(head, in, rng);
  return p;
}

void append_head(MlpRouterParams& params, const MlpArchitecture& arch, std::uint64_t seed) {
  const int fan_in = arch.hidden_out();
  ModelHeads head;
  head.acc_weight.assign(static_cast<std::size_t>(fan_in), 0.0);
  head.cost_weight.assign(static_cast<std::size_t>(fan_in), 0.0);
  Rng rng(derive_seed(seed, "new-head"));
  init_head(head, fan_in, rng);
  params.heads.push_back(std::move(head));
}

MlpPrediction mlp_forward(const MlpRouterParams& params, const MlpArchitecture& arch,
                          std::span<const double> x, bool training,
                          std::uint64_t dropout_seed, bool clamp_cost) {
  ForwardCache cache;
  Rng dropout_rng(derive_seed(dropout_seed, "dropout", 0));
  trunk_forward(params, arch, x, training, training ? &dropout_rng : nullptr, cache);
  HeadOutputs heads;
  heads_forward(params, cache.features, heads);
  MlpPrediction pred;
  pred.accuracy = std::move(heads.acc);
  pred.cost_norm = std::move(heads.cost);
  if (clamp_cost) {
    for (auto& c : pred.cost_norm) c = clamp01(c);
  }
  return pred;
}

double loss_and_gradient(const MlpRouterParams& params, const MlpArchitecture& arch,
                         std::span<const EvaluationRecord> batch, double cost_normalizer,
                         std::uint64_t dropout_seed, MlpRouterParams& gradient) {
  std::vector<std::size_t> idx(batch.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return batch_loss_and_gradient(params, nullptr, arch, batch, idx, cost_normalizer, 0.0,
                                 dropout_seed, gradient);
}

double loss_and_gradient_distill(const MlpRouterParams& params,
                                 const MlpRouterParams& reference,
                                 const MlpArchitecture& arch,
                                 std::span<const EvaluationRecord> batch,
                                 double cost_normalizer, double distill_weight,
                                 std::uint64_t dropout_seed, MlpRouterParams& gradient) {
  std::vector<std::size_t> idx(batch.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return batch_loss_and_gradient(params, &reference, arch, batch, idx, cost_normalizer,
                                 distill_weight, dropout_seed, gradient);
}

double evaluate_loss(const MlpRouterParams& params, const MlpArchitecture& arch,
                     std::span<const EvaluationRecord> records, double cost_normalizer) {
  if (records.empty()) return 0.0;
  ForwardCache cache;
  HeadOutputs heads;
  KahanSum loss;
  for (const auto& rec : records) {
    check_record(rec, arch);
    trunk_forward(params, arch, rec.embedding, false, nullptr, cache);
    heads_forward(params, cache.features, heads);
    const auto m = static_cast<std::size_t>(rec.model_index);
    const double acc_err = heads.acc[m] - rec.accuracy;
    const double cost_err = heads.cost[m] - rec.cost / cost_normalizer;
    loss.add(acc_err * acc_err + cost_err * cost_err);
  }
  return loss.value() / static_cast<double>(records.size());
}

OptimizerState make_optimizer_state(const MlpArchitecture& arch) {
  OptimizerState state;
  state.first_moment = zero_params(arch);
  state.second_moment = zero_params(arch);
  state.step = 0;
  return state;
}

void optimizer_step(MlpRouterParams& params, OptimizerState& state,
                    const MlpRouterParams& gradient, const OptimizerConfig& cfg) {
  if (!params_all_finite(gradient)) {
    throw std::runtime_error("optimizer_step: non-finite gradient");
  }
  std::vector<std::span<const double>> g_views;
  collect_param_views(gradient, g_views);

  double scale = 1.0;
  if (cfg.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& view : g_views) {
      for (const double g : view) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > cfg.clip_norm) scale = cfg.clip_norm / norm;
  }

  std::vector<std::span<double>> p_views;
  collect_param_views(params, p_views);

  if (cfg.kind == OptimizerConfig::Kind::Sgd) {
    for (std::size_t a = 0; a < p_views.size(); ++a) {
      for (std::size_t i = 0; i < p_views[a].size(); ++i) {
        const double g = g_views[a][i] * scale;
        p_views[a][i] -= cfg.learning_rate * (g + cfg.weight_decay * p_views[a][i]);
      }
    }
    ++state.step;
    return;
  }

  std::vector<std::span<double>> m_views;
  std::vector<std::span<double>> v_views;
  collect_param_views(state.first_moment, m_views);
  collect_param_views(state.second_moment, v_views);
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t a = 0; a < p_views.size(); ++a) {
    for (std::size_t i = 0; i < p_views[a].size(); ++i) {
      const double g = g_views[a][i] * scale;
      double& m = m_views[a][i];
      double& v = v_views[a][i];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m / bc1;
      const double v_hat = v / bc2;
      p_views[a][i] -= cfg.learning_rate *
                       (m_hat / (std::sqrt(v_hat) + cfg.epsilon) +
                        cfg.weight_decay * p_views[a][i]);
    }
  }
}

namespace {

MlpRouterParams run_local_training(const MlpRouterParams& initial,
                                   const MlpRouterParams* reference,
                                   const MlpArchitecture& arch,
                                   std::span<const EvaluationRecord> train,
                                   double cost_normalizer, double distill_weight,
                                   const LocalTrainConfig& cfg, std::uint64_t seed) {
  MlpRouterParams params = initial;
  if (train.empty()) return params;
  if (cfg.epochs < 1 && cfg.steps < 1) {
    throw std::invalid_argument("local_train: need epochs >= 1 or steps >= 1");
  }
  const int batch_size = std::max(1, cfg.batch_size);

  OptimizerState state = make_optimizer_state(arch);
  MlpRouterParams gradient;
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const bool step_mode = cfg.steps > 0;
  const long long step_budget = step_mode ? cfg.steps : -1;
  long long steps_done = 0;
  for (int epoch = 0; step_mode || epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(batch_size));
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      const auto dropout_seed = derive_seed(seed, "batch",
                                            static_cast<std::uint64_t>(epoch),
                                            static_cast<std::uint64_t>(start));
      batch_loss_and_gradient(params, reference, arch, train, batch, cost_normalizer,
                              distill_weight, dropout_seed, gradient);
      optimizer_step(params, state, gradient, cfg.optimizer);
      ++steps_done;
      if (step_mode && steps_done >= step_budget) return params;
    }
  }
  return params;
}

}  // namespace

MlpRouterParams local_train(const MlpRouterParams& params, const MlpArchitecture& arch,
                            std::span<const EvaluationRecord> train, double cost_normalizer,
                            const LocalTrainConfig& cfg, std::uint64_t seed) {
  return run_local_training(params, nullptr, arch, train, cost_normalizer, 0.0, cfg, seed);
}

MlpRouterParams local_train_distill(const MlpRouterParams& params,
                                    const MlpRouterParams& reference,
                                    const MlpArchitecture& arch,
                                    std::span<const EvaluationRecord> train,
                                    double cost_normalizer, double distill_weight,
                                    const LocalTrainConfig& cfg, std::uint64_t seed) {
  return run_local_training(params, &reference, arch, train, cost_normalizer,
                            distill_weight, cfg, seed);
}

void train_head_only(MlpRouterParams& params, const MlpArchitecture& arch, int model_index,
                     std::span<const EvaluationRecord> records, double cost_normalizer,
                     const LocalTrainConfig& cfg, std::uint64_t seed) {
  if (model_index < 0 || model_index >= static_cast<int>(params.heads.size())) {
    throw std::invalid_argument("train_head_only: model index out of range");
  }
  if (records.empty()) return;
  for (const auto& rec : records) {
    if (rec.model_index != model_index) {
      throw std::invalid_argument("train_head_only: record logged on a different model");
    }
  }

  // Trunk is frozen: features are computed once without dropout.
  ForwardCache cache;
  std::vector<std::vector<double>> features;
  features.reserve(records.size());
  for (const auto& rec : records) {
    trunk_forward(params, arch, rec.embedding, false, nullptr, cache);
    features.push_back(cache.features);
  }

  auto& head = params.heads[static_cast<std::size_t>(model_index)];
  const std::size_t h = head.acc_weight.size();
  std::vector<double> m_acc(h + 1, 0.0), v_acc(h + 1, 0.0);
  std::vector<double> m_cost(h + 1, 0.0), v_cost(h + 1, 0.0);
  std::vector<double> g_acc(h + 1), g_cost(h + 1);
  long long step = 0;

  const int batch_size = std::max(1, cfg.batch_size);
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const auto& opt = cfg.optimizer;
  for (int epoch = 0; epoch < std::max(1, cfg.epochs); ++epoch) {
    Rng shuffle_rng(derive_seed(seed, "head-shuffle", static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(batch_size));
      std::fill(g_acc.begin(), g_acc.end(), 0.0);
      std::fill(g_cost.begin(), g_cost.end(), 0.0);
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      for (std::size_t s = start; s < end; ++s) {
        const auto& rec = records[order[s]];
        const auto& phi = features[order[s]];
        double logit = head.acc_bias;
        double cost = head.cost_bias;
        for (std::size_t j = 0; j < h; ++j) {
          logit += head.acc_weight[j] * phi[j];
          cost += head.cost_weight[j] * phi[j];
        }
        const double acc_hat = sigmoid(logit);
        const double d_logit =
            2.0 * (acc_hat - rec.accuracy) * acc_hat * (1.0 - acc_hat) * inv_batch;
        const double d_cost = 2.0 * (cost - rec.cost / cost_normalizer) * inv_batch;
        for (std::size_t j = 0; j < h; ++j) {
          g_acc[j] += d_logit * phi[j];
          g_cost[j] += d_cost * phi[j];
        }
        g_acc[h] += d_logit;
        g_cost[h] += d_cost;
      }

      double scale = 1.0;
      if (opt.clip_norm > 0.0) {
        double sq = 0.0;
        for (std::size_t j = 0; j <= h; ++j) sq += g_acc[j] * g_acc[j] + g_cost[j] * g_cost[j];
        const double norm = std::sqrt(sq);
        if (norm > opt.clip_norm) scale = opt.clip_norm / norm;
      }

      ++step;
      const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(step));
      auto update = [&](double& p, double g, double& m, double& v) {
        if (opt.kind == OptimizerConfig::Kind::Sgd) {
          p -= opt.learning_rate * (g + opt.weight_decay * p);
          return;
        }
        m = opt.beta1 * m + (1.0 - opt.beta1) * g;
        v = opt.beta2 * v + (1.0 - opt.beta2) * g * g;
        p -= opt.learning_rate *
             ((m / bc1) / (std::sqrt(v / bc2) + opt.epsilon) + opt.weight_decay * p);
      };
      for (std::size_t j = 0; j < h; ++j) {
        update(head.acc_weight[j], g_acc[j] * scale, m_acc[j], v_acc[j]);
        update(head.cost_weight[j], g_cost[j] * scale, m_cost[j], v_cost[j]);
      }
      update(head.acc_bias, g_acc[h] * scale, m_acc[h], v_acc[h]);
      update(head.cost_bias, g_cost[h] * scale, m_cost[h], v_cost[h]);
    }
  }
}

}  // namespace fedroute
