#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fedroute/synthetic.hpp"
#include "fedroute/types.hpp"

namespace fedroute {

/// Corpus files are UTF-8 delimited text with the header
/// `task,model,accuracy,cost,e0,e1,...,e{d-1}`; one row per logged
/// (query, model) evaluation. Model identifiers are mapped to dense indices
/// in order of first appearance unless the file's pool is given explicitly.

std::pair<std::vector<EvaluationRecord>, DatasetManifest> load_corpus(
    const std::string& path);

void save_corpus(const std::string& path, const std::vector<EvaluationRecord>& records,
                 const DatasetManifest& manifest);

/// Full-evaluation corpora store each query as one row per model (same
/// embedding, every model exactly once). Writing preserves model order;
/// loading groups consecutive rows with bit-identical embeddings and
/// requires every group to cover the whole pool.
void save_full_corpus(const std::string& path, const std::vector<FullEvaluation>& corpus,
                      const DatasetManifest& manifest);

std::pair<std::vector<FullEvaluation>, DatasetManifest> load_full_corpus(
    const std::string& path);

/// Structured-text (JSON) serialization of the synthetic oracle so
/// acceptance runs are replayable.
void save_oracle(const std::string& path, const SyntheticOracle& oracle);
SyntheticOracle load_oracle(const std::string& path);

}  // namespace fedroute
