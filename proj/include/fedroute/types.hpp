#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace fedroute {

/// Query embedding; length must equal the dataset manifest's d_emb.
using EmbeddingVector = std::vector<double>;

/// The pool of routable models. Identifiers are mapped to dense indices at
/// load time; all internal computation uses indices.
struct ModelPool {
  std::vector<std::string> model_ids;
  double c_max = 1.0;

  int size() const { return static_cast<int>(model_ids.size()); }
};

/// One logged (query, model) evaluation: the atom of all training datasets.
/// Exactly one model per record (single-model logging).
struct EvaluationRecord {
  EmbeddingVector embedding;
  int model_index = 0;
  double accuracy = 0.0;
  double cost = 0.0;
  std::string task_label;  // used only for partitioning
};

/// A query evaluated on every model in the pool. Produced by the synthetic
/// generator and by grouping full-evaluation corpora; test-time scoring needs
/// the whole row so any routed model can be priced.
struct FullEvaluation {
  EmbeddingVector embedding;
  std::string task_label;
  std::vector<double> accuracy;  // per model
  std::vector<double> cost;      // per model
};

struct ClientDataset {
  int client_id = 0;
  std::vector<EvaluationRecord> train;
  std::vector<EvaluationRecord> test;
};

struct DatasetManifest {
  int d_emb = 0;
  ModelPool model_pool;
  std::size_t n_records = 0;
  /// Maps raw costs to [0,1] for MLP regression targets; inverted at
  /// inference. Must be >= the maximum observed cost.
  double cost_normalizer = 1.0;
};

struct ValidationIssue {
  std::optional<std::size_t> record_index;  // empty for dataset-level issues
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;

  bool ok() const { return issues.empty(); }
};

/// Checks every record against the manifest invariants. Reporting only:
/// never throws, idempotent, and order-independent in the set of issues.
ValidationReport validate_dataset(const std::vector<EvaluationRecord>& records,
                                  const DatasetManifest& manifest);

}  // namespace fedroute
