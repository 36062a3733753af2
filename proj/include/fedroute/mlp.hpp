#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fedroute/types.hpp"

namespace fedroute {

struct MlpArchitecture {
  int d_emb = 0;
  std::vector<int> hidden_widths{512, 512};
  double dropout_p = 0.1;
  int n_models = 0;

  int hidden_out() const { return hidden_widths.empty() ? d_emb : hidden_widths.back(); }
};

/// One trunk block: affine map -> layer normalization -> GELU -> dropout.
struct TrunkLayer {
  std::vector<double> weight;  // out x in, row-major
  std::vector<double> bias;
  std::vector<double> ln_scale;
  std::vector<double> ln_shift;
};

/// Per-model linear heads on the shared trunk output: an accuracy logit
/// (sigmoid applied) and a normalized cost scalar (raw; clamped to [0,1] at
/// inference only).
struct ModelHeads {
  std::vector<double> acc_weight;
  double acc_bias = 0.0;
  std::vector<double> cost_weight;
  double cost_bias = 0.0;
};

struct MlpRouterParams {
  std::vector<TrunkLayer> trunk;
  std::vector<ModelHeads> heads;
};

/// Visits every parameter array (scalars as 1-element spans) in a fixed
/// order; the generic walk behind aggregation, optimizer steps and norms.
void collect_param_views(MlpRouterParams& p, std::vector<std::span<double>>& out);
void collect_param_views(const MlpRouterParams& p,
                         std::vector<std::span<const double>>& out);

std::size_t parameter_count(const MlpRouterParams& p);
double linf_difference(const MlpRouterParams& a, const MlpRouterParams& b);
bool params_all_finite(const MlpRouterParams& p);

/// Fan-in-scaled uniform init for weights, zero biases, identity layer norm.
MlpRouterParams init_params(const MlpArchitecture& arch, std::uint64_t seed);
MlpRouterParams zero_params(const MlpArchitecture& arch);

/// Appends a freshly initialized head for a new model; every existing
/// parameter is left bit-identical.
void append_head(MlpRouterParams& params, const MlpArchitecture& arch, std::uint64_t seed);

struct MlpPrediction {
  std::vector<double> accuracy;   // sigmoid outputs, in (0,1)
  std::vector<double> cost_norm;  // normalized-cost scale
};

/// Forward pass. Dropout is active only in training mode and is a pure
/// function of dropout_seed (inverted scaling, so inference needs no
/// rescaling). clamp_cost applies the inference-only [0,1] clamp.
MlpPrediction mlp_forward(const MlpRouterParams& params, const MlpArchitecture& arch,
                          std::span<const double> x, bool training,
                          std::uint64_t dropout_seed, bool clamp_cost);

/// Eq-style squared-error objective: per record, (acc_hat - acc)^2 +
/// (cost_hat - cost/cost_normalizer)^2 on the logged model only, averaged
/// over the batch. Returns the loss and writes the exact gradient.
double loss_and_gradient(const MlpRouterParams& params, const MlpArchitecture& arch,
                         std::span<const EvaluationRecord> batch, double cost_normalizer,
                         std::uint64_t dropout_seed, MlpRouterParams& gradient);

/// Same objective evaluated without dropout; used for loss traces.
double evaluate_loss(const MlpRouterParams& params, const MlpArchitecture& arch,
                     std::span<const EvaluationRecord> records, double cost_normalizer);

/// Adds a distillation penalty to the data loss: the mean over all models of
/// the squared deviation of both head outputs from a frozen reference
/// (teacher evaluated without dropout). Used when onboarding new clients.
double loss_and_gradient_distill(const MlpRouterParams& params,
                                 const MlpRouterParams& reference,
                                 const MlpArchitecture& arch,
                                 std::span<const EvaluationRecord> batch,
                                 double cost_normalizer, double distill_weight,
                                 std::uint64_t dropout_seed, MlpRouterParams& gradient);

struct OptimizerConfig {
  enum class Kind { AdamW, Sgd };
  Kind kind = Kind::AdamW;
  double learning_rate = 1e-3;
  double weight_decay = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 1.0;  // global L2 clip; <= 0 disables
};

struct OptimizerState {
  MlpRouterParams first_moment;
  MlpRouterParams second_moment;
  long long step = 0;
};

OptimizerState make_optimizer_state(const MlpArchitecture& arch);

/// One optimizer step in place: global-norm gradient clipping, then either a
/// bias-corrected decoupled-weight-decay adaptive-moment update or plain SGD.
void optimizer_step(MlpRouterParams& params, OptimizerState& state,
                    const MlpRouterParams& gradient, const OptimizerConfig& cfg);

struct LocalTrainConfig {
  int epochs = 1;
  /// When > 0, runs exactly this many mini-batch steps (cycling through
  /// reshuffled epochs) instead of whole epochs.
  int steps = 0;
  int batch_size = 128;
  OptimizerConfig optimizer;
};

/// Seeded per-epoch shuffling, sequential mini-batch steps, fresh optimizer
/// state per call (moments are never carried across communication rounds).
/// An empty train set returns the parameters unchanged.
MlpRouterParams local_train(const MlpRouterParams& params, const MlpArchitecture& arch,
                            std::span<const EvaluationRecord> train, double cost_normalizer,
                            const LocalTrainConfig& cfg, std::uint64_t seed);

/// Head-only training for model expansion: trunk features are computed once
/// (no dropout) and only the new model's head parameters move.
void train_head_only(MlpRouterParams& params, const MlpArchitecture& arch, int model_index,
                     std::span<const EvaluationRecord> records, double cost_normalizer,
                     const LocalTrainConfig& cfg, std::uint64_t seed);

/// Variant of local_train whose objective includes the distillation penalty
/// against a frozen reference.
MlpRouterParams local_train_distill(const MlpRouterParams& params,
                                    const MlpRouterParams& reference,
                                    const MlpArchitecture& arch,
                                    std::span<const EvaluationRecord> train,
                                    double cost_normalizer, double distill_weight,
                                    const LocalTrainConfig& cfg, std::uint64_t seed);

}  // namespace fedroute
