#include "fedroute/corpus_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fedroute/numeric.hpp"

namespace fedroute {

namespace {

using nlohmann::json;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double_cell(const std::string& cell, std::size_t row, const std::string& column) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last) {
    throw std::runtime_error("corpus row " + std::to_string(row) + ": column '" + column +
                             "' is not a number: '" + cell + "'");
  }
  return value;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  return in;
}

void write_header(std::ofstream& out, int d_emb) {
  out << "task,model,accuracy,cost";
  for (int i = 0; i < d_emb; ++i) out << ",e" << i;
  out << "\n";
}

int parse_header(const std::string& header, const std::string& path) {
  const auto cells = split_csv_line(header);
  if (cells.size() < 5 || cells[0] != "task" || cells[1] != "model" ||
      cells[2] != "accuracy" || cells[3] != "cost") {
    throw std::runtime_error(path + ": unexpected corpus header: '" + header + "'");
  }
  for (std::size_t i = 4; i < cells.size(); ++i) {
    if (cells[i] != "e" + std::to_string(i - 4)) {
      throw std::runtime_error(path + ": embedding columns must be e0,e1,...");
    }
  }
  return static_cast<int>(cells.size() - 4);
}

struct ParsedRow {
  std::string task;
  std::string model_id;
  double accuracy;
  double cost;
  EmbeddingVector embedding;
};

ParsedRow parse_row(const std::string& line, std::size_t row, int d_emb) {
  const auto cells = split_csv_line(line);
  if (static_cast<int>(cells.size()) != d_emb + 4) {
    throw std::runtime_error("corpus row " + std::to_string(row) + ": expected " +
                             std::to_string(d_emb + 4) + " columns, got " +
                             std::to_string(cells.size()));
  }
  ParsedRow parsed;
  parsed.task = cells[0];
  parsed.model_id = cells[1];
  parsed.accuracy = parse_double_cell(cells[2], row, "accuracy");
  parsed.cost = parse_double_cell(cells[3], row, "cost");
  parsed.embedding.resize(static_cast<std::size_t>(d_emb));
  for (int i = 0; i < d_emb; ++i) {
    parsed.embedding[static_cast<std::size_t>(i)] =
        parse_double_cell(cells[static_cast<std::size_t>(i) + 4], row, "e" + std::to_string(i));
  }
  return parsed;
}

}  // namespace

std::pair<std::vector<EvaluationRecord>, DatasetManifest> load_corpus(
    const std::string& path) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty corpus file");
  const int d_emb = parse_header(line, path);

  std::vector<EvaluationRecord> records;
  std::map<std::string, int> model_index;
  std::vector<std::string> model_ids;
  double max_cost = 0.0;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    if (line.empty()) {
      ++row;
      continue;
    }
    const auto parsed = parse_row(line, row, d_emb);
    auto [it, inserted] = model_index.try_emplace(parsed.model_id,
                                                  static_cast<int>(model_ids.size()));
    if (inserted) model_ids.push_back(parsed.model_id);
    EvaluationRecord rec;
    rec.embedding = parsed.embedding;
    rec.model_index = it->second;
    rec.accuracy = parsed.accuracy;
    rec.cost = parsed.cost;
    rec.task_label = parsed.task;
    records.push_back(std::move(rec));
    max_cost = std::max(max_cost, parsed.cost);
    ++row;
  }

  DatasetManifest manifest;
  manifest.d_emb = d_emb;
  manifest.model_pool.model_ids = std::move(model_ids);
  manifest.model_pool.c_max = max_cost > 0.0 ? max_cost : 1.0;
  manifest.n_records = records.size();
  manifest.cost_normalizer = max_cost > 0.0 ? max_cost : 1.0;
  return {std::move(records), std::move(manifest)};
}

void save_corpus(const std::string& path, const std::vector<EvaluationRecord>& records,
                 const DatasetManifest& manifest) {
  auto out = open_output(path);
  write_header(out, manifest.d_emb);
  for (const auto& r : records) {
    out << r.task_label << ','
        << manifest.model_pool.model_ids[static_cast<std::size_t>(r.model_index)] << ','
        << format_double(r.accuracy) << ',' << format_double(r.cost);
    for (const double e : r.embedding) out << ',' << format_double(e);
    out << '\n';
  }
}

void save_full_corpus(const std::string& path, const std::vector<FullEvaluation>& corpus,
                      const DatasetManifest& manifest) {
  auto out = open_output(path);
  write_header(out, manifest.d_emb);
  const int n_models = manifest.model_pool.size();
  for (const auto& q : corpus) {
    for (int m = 0; m < n_models; ++m) {
      out << q.task_label << ','
          << manifest.model_pool.model_ids[static_cast<std::size_t>(m)] << ','
          << format_double(q.accuracy[static_cast<std::size_t>(m)]) << ','
          << format_double(q.cost[static_cast<std::size_t>(m)]);
      for (const double e : q.embedding) out << ',' << format_double(e);
      out << '\n';
    }
  }
}

std::pair<std::vector<FullEvaluation>, DatasetManifest> load_full_corpus(
    const std::string& path) {
  auto [records, manifest] = load_corpus(path);
  const int n_models = manifest.model_pool.size();
  std::vector<FullEvaluation> corpus;
  std::size_t i = 0;
  while (i < records.size()) {
    FullEvaluation q;
    q.embedding = records[i].embedding;
    q.task_label = records[i].task_label;
    q.accuracy.assign(static_cast<std::size_t>(n_models),
                      std::numeric_limits<double>::quiet_NaN());
    q.cost.assign(static_cast<std::size_t>(n_models),
                  std::numeric_limits<double>::quiet_NaN());
    std::size_t j = i;
    while (j < records.size() && records[j].embedding == q.embedding) {
      const auto m = static_cast<std::size_t>(records[j].model_index);
      if (!std::isnan(q.accuracy[m])) {
        throw std::runtime_error("full corpus row " + std::to_string(j + 1) +
                                 ": duplicate model within one query group");
      }
      q.accuracy[m] = records[j].accuracy;
      q.cost[m] = records[j].cost;
      ++j;
    }
    for (int m = 0; m < n_models; ++m) {
      if (std::isnan(q.accuracy[static_cast<std::size_t>(m)])) {
        throw std::runtime_error("full corpus query starting at row " + std::to_string(i + 1) +
                                 ": missing evaluation for model '" +
                                 manifest.model_pool.model_ids[static_cast<std::size_t>(m)] +
                                 "'");
      }
    }
    corpus.push_back(std::move(q));
    i = j;
  }
  manifest.n_records = corpus.size();
  return {std::move(corpus), std::move(manifest)};
}

void save_oracle(const std::string& path, const SyntheticOracle& oracle) {
  json j;
  j["format"] = "fedroute-oracle";
  j["version"] = 1;
  j["mixture_centers"] = oracle.mixture_centers;
  j["mixture_stddev"] = oracle.mixture_stddev;
  j["accuracy_weights"] = oracle.accuracy_weights;
  j["accuracy_bias"] = oracle.accuracy_bias;
  j["base_costs"] = oracle.base_costs;
  j["cost_noise_scale"] = oracle.cost_noise_scale;
  j["c_max"] = oracle.c_max;
  auto out = open_output(path);
  out << j.dump(2) << '\n';
}

SyntheticOracle load_oracle(const std::string& path) {
  auto in = open_input(path);
  json j;
  in >> j;
  if (j.value("format", "") != "fedroute-oracle") {
    throw std::runtime_error(path + ": not an oracle file");
  }
  SyntheticOracle oracle;
  oracle.mixture_centers = j.at("mixture_centers").get<std::vector<EmbeddingVector>>();
  oracle.mixture_stddev = j.at("mixture_stddev").get<double>();
  oracle.accuracy_weights = j.at("accuracy_weights").get<std::vector<std::vector<double>>>();
  oracle.accuracy_bias = j.at("accuracy_bias").get<std::vector<double>>();
  oracle.base_costs = j.at("base_costs").get<std::vector<double>>();
  oracle.cost_noise_scale = j.at("cost_noise_scale").get<double>();
  oracle.c_max = j.at("c_max").get<double>();
  return oracle;
}

}  // namespace fedroute
