#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <unistd.h>

#include "bankxai/csv.hpp"
#include "bankxai/evidence.hpp"
#include "bankxai/featurize.hpp"
#include "bankxai/ingest.hpp"
#include "bankxai/metrics.hpp"
#include "bankxai/pnn.hpp"
#include "bankxai/random.hpp"

namespace bankxai::testing {

inline std::string fixture_path(const std::string& name) { return std::string(BANKXAI_FIXTURES) + "/" + name; }

inline std::string read_fixture(const std::string& name) {
  std::ifstream in(fixture_path(name), std::ios::binary);
  if (!in) throw std::runtime_error("missing fixture " + name);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct ScoredRow {
  int row = 0;
  ClassLabel actual;
  ClassLabel predicted;
  ClassProbabilities probabilities{};
};

inline std::vector<ScoredRow> scored_rows() {
  std::vector<ScoredRow> out;
  const auto rows = read_csv(read_fixture("scored_sample.csv"));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i].fields;
    ScoredRow r{std::stoi(f[0]), parse_label(f[1]), parse_label(f[2]), {}};
    for (std::size_t k = 0; k < kNumClasses; ++k) r.probabilities[k] = std::stod(f[3 + k]);
    out.push_back(r);
  }
  return out;
}

inline std::string scored_sha(int row) { return "S_" + std::to_string(row); }

// The nine scored sample rows as an evidence store. Descriptions, amounts
// and dates are placeholders chosen so search and neighbor queries have
// something to match; the classifications come from the CSV.
inline EvidenceStore scored_store(FeatureSchema* schema_out = nullptr) {
  static const char* kDescriptions[] = {
      "INVOICE 1001 PAYMENT",   "LOAN FUNDING DRAWDOWN", "CAPITAL FUNDING ADVANCE",
      "CASH DEPOSIT BRANCH",    "CASH DEPOSIT ATM",      "FUNDING TRANCHE",
      "TRANSFER FROM SAVINGS",  "CHEQUE DEPOSIT 000123", "INVOICE 2002 CASH RECEIPT"};
  const auto rows = scored_rows();
  std::vector<EnrichedTransaction> txs;
  std::vector<Prediction> preds;
  std::unordered_map<std::string, ClassLabel> actuals;
  for (const auto& r : rows) {
    EnrichedTransaction tx;
    tx.raw.sha = scored_sha(r.row);
    tx.raw.date = parse_timestamp("2021-0" + std::to_string(1 + r.row % 9) + "-1" + std::to_string(r.row % 9));
    tx.raw.amount = 100.0 * r.row;
    tx.raw.description = kDescriptions[r.row - 1];
    tx.customer_id = r.row;
    tx.bank = r.row % 2 ? "NAB" : "ANZ";
    tx.industry = r.row % 3 ? "Hospitality" : "Meat";
    txs.push_back(tx);
    preds.push_back({tx.raw.sha, r.probabilities, r.predicted, "scored-fixture"});
    actuals.emplace(tx.raw.sha, r.actual);
  }
  const FeatureSchema schema = fit_schema(std::span<const EnrichedTransaction>(txs), FitOptions{16, 0});
  std::vector<FeatureVector> features;
  for (const auto& tx : txs) features.push_back(build_feature_vector(tx, schema));
  if (schema_out) *schema_out = schema;
  return EvidenceStore::load_join(txs, features, preds, actuals);
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("bankxai_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// ---------------------------------------------------------------------------
// Hand-rolled generators.

inline ClassLabel random_label(Rng& rng) { return label_at(uniform_below(rng, kNumClasses)); }

inline std::vector<LabelPair> random_pairs(Rng& rng, std::size_t n) {
  std::vector<LabelPair> pairs;
  pairs.reserve(n);
  // Skewed sets now and then so some classes are missing entirely.
  const std::size_t classes = 1 + uniform_below(rng, kNumClasses);
  for (std::size_t i = 0; i < n; ++i) {
    pairs.emplace_back(label_at(uniform_below(rng, classes)), label_at(uniform_below(rng, classes)));
  }
  return pairs;
}

inline std::vector<double> random_vector(Rng& rng, std::size_t dim, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(dim);
  for (double& x : v) x = uniform_real(rng, lo, hi);
  return v;
}

// Exemplars with contiguous labels; every class gets at least one.
inline std::vector<LabeledFeatures> random_exemplars(Rng& rng, std::size_t n, std::size_t dim) {
  std::vector<LabeledFeatures> out;
  out.reserve(n);
  GroupIndex index({0, 0, 0, 0, 0, 0, dim});
  for (std::size_t i = 0; i < n; ++i) {
    FeatureVector fv;
    fv.sha = "EX_" + std::to_string(i);
    fv.schema_version = 1;
    fv.values = random_vector(rng, dim);
    fv.group_index = index;
    const ClassLabel label = i < kNumClasses ? label_at(i) : random_label(rng);
    out.push_back({std::move(fv), label});
  }
  return out;
}

}  // namespace bankxai::testing
