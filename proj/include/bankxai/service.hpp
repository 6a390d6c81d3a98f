#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "bankxai/error.hpp"
#include "bankxai/evidence.hpp"
#include "bankxai/explain.hpp"
#include "bankxai/featurize.hpp"
#include "bankxai/ingest.hpp"
#include "bankxai/metrics.hpp"
#include "bankxai/pnn.hpp"
#include "bankxai/random.hpp"

namespace bankxai {

inline constexpr const char* kDataDirEnv = "EVIDENCE_DATA_DIR";

struct ServiceConfig {
  std::filesystem::path data_dir = "evidence_data";
  std::string listen_address = "127.0.0.1:8080";
  std::size_t text_dim = 64;
  std::optional<double> sigma;  // unset: grid search
  std::vector<double> sigma_grid{kDefaultSigmaGrid.begin(), kDefaultSigmaGrid.end()};
  PriorMode prior_mode = PriorMode::kEmpirical;
  std::uint64_t seed = 42;
  double test_fraction = 0.2;
  double validation_fraction = 0.2;
};

// EVIDENCE_DATA_DIR, when set and non-empty, replaces config.data_dir.
inline ServiceConfig apply_environment(ServiceConfig config) {
  if (const char* dir = std::getenv(kDataDirEnv); dir != nullptr && *dir != '\0') config.data_dir = dir;
  return config;
}

// ---------------------------------------------------------------------------
// Files under data_dir.

inline constexpr const char* kRawFile = "raw.jsonl";              // labeled corpus
inline constexpr const char* kUnlabeledFile = "unlabeled.jsonl";  // ingested, awaiting classification
inline constexpr const char* kSchemaFile = "schema.json";
inline constexpr const char* kFeaturesFile = "features.jsonl";
inline constexpr const char* kSplitFile = "split.json";
inline constexpr const char* kModelFile = "model.json";
inline constexpr const char* kEvidenceFile = "evidence.jsonl";
inline constexpr const char* kReportFile = "report.json";
inline constexpr const char* kImportanceFile = "importance.json";

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes through a temporary sibling and renames, so readers never see a
// half-written artifact.
inline void write_text_file(const std::filesystem::path& path, std::string_view content) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorKind::kIo, "short write on " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

class Workspace {
 public:
  explicit Workspace(std::filesystem::path dir) : dir_(std::move(dir)) {}

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path path(const char* name) const { return dir_ / name; }
  bool has(const char* name) const { return std::filesystem::exists(path(name)); }
  void ensure() const {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw Error(ErrorKind::kIo, "cannot create " + dir_.string() + ": " + ec.message());
  }

  std::string read(const char* name) const { return read_text_file(path(name)); }
  void write(const char* name, std::string_view content) const {
    ensure();
    write_text_file(path(name), content);
  }

  std::vector<LabeledTransaction> corpus() const {
    return has(kRawFile) ? labeled_from_jsonl(read(kRawFile)) : std::vector<LabeledTransaction>{};
  }

  std::vector<EnrichedTransaction> unlabeled() const {
    std::vector<EnrichedTransaction> out;
    if (!has(kUnlabeledFile)) return out;
    const std::string text = read(kUnlabeledFile);
    std::size_t start = 0;
    while (start < text.size()) {
      std::size_t end = text.find('\n', start);
      if (end == std::string::npos) end = text.size();
      if (end > start) out.push_back(enriched_from_json(nlohmann::json::parse(text.substr(start, end - start))));
      start = end + 1;
    }
    return out;
  }

  std::optional<FeatureSchema> schema() const {
    if (!has(kSchemaFile)) return std::nullopt;
    return schema_from_json(nlohmann::json::parse(read(kSchemaFile)));
  }

 private:
  std::filesystem::path dir_;
};

// Builds a ledger seeded with everything already stored in the workspace.
inline ShaLedger ledger_for(const Workspace& ws) {
  ShaLedger ledger;
  std::vector<ContextualTransaction> known;
  for (const auto& row : ws.corpus()) {
    known.push_back({row.tx.raw, row.tx.customer_id, row.tx.bank, row.tx.industry, row.label});
  }
  for (const auto& tx : ws.unlabeled()) known.push_back({tx.raw, tx.customer_id, tx.bank, tx.industry, std::nullopt});
  ledger.accept(known);
  return ledger;
}

// ---------------------------------------------------------------------------
// Pipeline stages.

// Wraps a stage failure with the stage name, keeping the original kind.
class PipelineError : public Error {
 public:
  PipelineError(std::string stage, const Error& cause)
      : Error(cause.kind(), "stage '" + stage + "': " + cause.what()), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

template <typename F>
auto run_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const PipelineError&) {
    throw;
  } catch (const Error& e) {
    throw PipelineError(stage, e);
  } catch (const std::exception& e) {
    throw PipelineError(stage, Error(ErrorKind::kIo, e.what()));
  }
}

// Stratified split: each class contributes round(fraction * n_k) rows,
// always leaving at least one row of every class on the training side.
// Depends only on the sha set, the labels, and the seed.
inline std::set<std::string> stratified_holdout(std::span<const std::pair<std::string, ClassLabel>> rows,
                                                double fraction, std::uint64_t seed) {
  std::array<std::vector<std::string>, kNumClasses> by_class;
  for (const auto& [sha, label] : rows) by_class[index_of(label)].push_back(sha);
  std::set<std::string> held;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    auto& shas = by_class[k];
    std::sort(shas.begin(), shas.end());
    Rng rng(derive_seed(seed, 0x5eed, k));
    fisher_yates(std::span<std::string>(shas), rng);
    std::size_t take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(shas.size())));
    if (shas.size() > 0 && take >= shas.size()) take = shas.size() - 1;
    held.insert(shas.begin(), shas.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return held;
}

struct FeaturizedCorpus {
  FeatureSchema schema;
  std::vector<FeatureVector> vectors;  // corpus order
  std::set<std::string> test_shas;
};

// Keeps credit rows only; debits are reported as warnings.
inline std::vector<LabeledTransaction> credit_only(std::vector<LabeledTransaction> rows,
                                                   std::vector<std::string>* warnings = nullptr) {
  std::vector<LabeledTransaction> out;
  out.reserve(rows.size());
  std::unordered_set<std::string> seen;
  for (auto& row : rows) {
    if (row.tx.raw.type == TxType::kDebit) {
      if (warnings) warnings->push_back("debit transaction " + row.tx.raw.sha + " skipped");
      continue;
    }
    if (!seen.insert(row.tx.raw.sha).second) throw Error(ErrorKind::kConflict, "duplicate sha " + row.tx.raw.sha);
    out.push_back(std::move(row));
  }
  return out;
}

// Fits the schema on the training side only. When the fitted content equals
// `previous`, its version is kept; otherwise the version advances.
inline FeaturizedCorpus featurize_corpus(std::span<const LabeledTransaction> corpus, const ServiceConfig& config,
                                         const std::optional<FeatureSchema>& previous) {
  if (corpus.empty()) throw Error(ErrorKind::kValidation, "corpus is empty");
  std::vector<std::pair<std::string, ClassLabel>> keyed;
  for (const auto& row : corpus) keyed.emplace_back(row.tx.raw.sha, row.label);
  FeaturizedCorpus out;
  out.test_shas = stratified_holdout(keyed, config.test_fraction, config.seed);

  std::vector<EnrichedTransaction> train_txs;
  for (const auto& row : corpus) {
    if (!out.test_shas.count(row.tx.raw.sha)) train_txs.push_back(row.tx);
  }
  FeatureSchema schema = fit_schema(std::span<const EnrichedTransaction>(train_txs),
                                    FitOptions{config.text_dim, previous ? previous->version : 0});
  if (previous) {
    FeatureSchema same = schema;
    same.version = previous->version;
    if (same == *previous) schema = same;
  }
  out.schema = schema;
  out.vectors.reserve(corpus.size());
  for (const auto& row : corpus) out.vectors.push_back(build_feature_vector(row.tx, schema));
  return out;
}

inline nlohmann::json split_to_json(const std::set<std::string>& test_shas, std::uint64_t seed, double fraction) {
  return {{"seed", seed}, {"test_fraction", fraction}, {"test_shas", std::vector<std::string>(test_shas.begin(), test_shas.end())}};
}

inline std::set<std::string> split_from_json(const nlohmann::json& j) {
  const auto v = j.at("test_shas").get<std::vector<std::string>>();
  return {v.begin(), v.end()};
}

struct TrainedModel {
  std::shared_ptr<const PnnModel> model;
  std::optional<SigmaSearchResult> sigma_search;
};

inline std::vector<LabeledFeatures> join_labels(std::span<const LabeledTransaction> corpus,
                                                std::span<const FeatureVector> vectors) {
  if (corpus.size() != vectors.size()) throw Error(ErrorKind::kValidation, "corpus and feature store differ in size");
  std::unordered_map<std::string, ClassLabel> labels;
  for (const auto& row : corpus) labels.emplace(row.tx.raw.sha, row.label);
  std::vector<LabeledFeatures> out;
  out.reserve(vectors.size());
  for (const auto& fv : vectors) {
    auto it = labels.find(fv.sha);
    if (it == labels.end()) throw Error(ErrorKind::kValidation, "feature vector " + fv.sha + " has no corpus row");
    out.push_back({fv, it->second});
  }
  return out;
}

inline TrainedModel train_on_split(std::span<const LabeledFeatures> rows, const std::set<std::string>& test_shas,
                                   const ServiceConfig& config) {
  std::vector<LabeledFeatures> train_rows;
  for (const auto& r : rows) {
    if (!test_shas.count(r.features.sha)) train_rows.push_back(r);
  }
  TrainedModel out;
  double sigma = config.sigma.value_or(kDefaultSigma);
  if (!config.sigma) {
    std::vector<std::pair<std::string, ClassLabel>> keyed;
    for (const auto& r : train_rows) keyed.emplace_back(r.features.sha, r.label);
    const auto validation_shas = stratified_holdout(keyed, config.validation_fraction, derive_seed(config.seed, 7));
    std::vector<LabeledFeatures> inner, validation;
    for (const auto& r : train_rows) (validation_shas.count(r.features.sha) ? validation : inner).push_back(r);
    if (!validation.empty()) {
      out.sigma_search = select_sigma(inner, validation, config.sigma_grid, config.prior_mode);
      sigma = out.sigma_search->best_sigma;
    }
  }
  out.model = std::make_shared<const PnnModel>(train(train_rows, TrainOptions{sigma, config.prior_mode}));
  return out;
}

inline std::vector<Prediction> predict_all(const PnnModel& model, std::span<const FeatureVector> vectors) {
  std::vector<Prediction> out;
  out.reserve(vectors.size());
  for (const auto& fv : vectors) out.push_back(predict_record(model, fv));
  return out;
}

inline EvaluationReport holdout_report(std::span<const Prediction> predictions, std::span<const LabeledTransaction> corpus,
                                       const std::set<std::string>& test_shas, const std::string& model_id) {
  std::unordered_map<std::string, ClassLabel> labels;
  for (const auto& row : corpus) labels.emplace(row.tx.raw.sha, row.label);
  ConfusionMatrix cm;
  for (const auto& p : predictions) {
    if (test_shas.count(p.sha)) cm.add(labels.at(p.sha), p.final);
  }
  return evaluate(cm, model_id);
}

inline EvidenceStore build_store(std::span<const LabeledTransaction> corpus, std::span<const FeatureVector> vectors,
                                 std::span<const Prediction> predictions) {
  std::vector<EnrichedTransaction> txs;
  std::unordered_map<std::string, ClassLabel> actuals;
  for (const auto& row : corpus) {
    txs.push_back(row.tx);
    actuals.emplace(row.tx.raw.sha, row.label);
  }
  return EvidenceStore::load_join(txs, vectors, predictions, actuals);
}

inline nlohmann::json sigma_search_to_json(const std::optional<SigmaSearchResult>& s, double sigma) {
  nlohmann::json j = {{"sigma", sigma}};
  if (s) {
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& c : s->candidates) cands.push_back({{"sigma", c.sigma}, {"macro_f1", c.macro_f1}});
    j["grid"] = cands;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Sessions.

// Everything a request reads. Never mutated after publication; a retrain
// builds a new snapshot and swaps it in whole.
struct Snapshot {
  std::optional<FeatureSchema> schema;
  std::shared_ptr<const PnnModel> model;
  EvidenceStore store;
  std::optional<EvaluationReport> holdout;
  std::vector<LabeledFeatures> labeled;  // full corpus in feature space
  std::set<std::string> test_shas;
  nlohmann::json sigma_info = nlohmann::json::object();

  std::string model_id() const { return model ? model->model_id() : store.model_id(); }
  std::uint64_t schema_version() const {
    if (schema) return schema->version;
    return store.empty() ? 0 : store.records().front().features.schema_version;
  }
  std::vector<LabeledFeatures> holdout_rows() const {
    std::vector<LabeledFeatures> out;
    for (const auto& r : labeled) {
      if (test_shas.count(r.features.sha)) out.push_back(r);
    }
    return out;
  }
};

struct PipelineResult {
  std::shared_ptr<const Snapshot> snapshot;
  std::vector<std::string> warnings;
};

// ingest -> fit schema -> featurize -> train -> predict all -> evaluate ->
// evidence store. Artifacts are written only after every stage succeeded; a
// failure while writing removes whatever this run already put down.
inline PipelineResult run_pipeline(std::vector<LabeledTransaction> raw, const ServiceConfig& config) {
  const Workspace ws(config.data_dir);
  PipelineResult result;
  auto corpus = run_stage("ingest", [&] {
    auto rows = credit_only(std::move(raw), &result.warnings);
    if (rows.empty()) throw Error(ErrorKind::kValidation, "no credit transactions to process");
    return rows;
  });
  const auto previous = run_stage("featurize", [&] { return ws.schema(); });
  const FeaturizedCorpus fc = run_stage("featurize", [&] { return featurize_corpus(corpus, config, previous); });
  auto labeled = run_stage("train", [&] { return join_labels(corpus, fc.vectors); });
  const TrainedModel tm = run_stage("train", [&] { return train_on_split(labeled, fc.test_shas, config); });
  const auto predictions = run_stage("predict", [&] { return predict_all(*tm.model, fc.vectors); });
  auto report = run_stage("evaluate", [&] {
    return holdout_report(predictions, corpus, fc.test_shas, tm.model->model_id());
  });
  auto store = run_stage("evidence", [&] { return build_store(corpus, fc.vectors, predictions); });

  auto snap = std::make_shared<Snapshot>();
  snap->schema = fc.schema;
  snap->model = tm.model;
  snap->store = std::move(store);
  snap->holdout = std::move(report);
  snap->labeled = std::move(labeled);
  snap->test_shas = fc.test_shas;
  snap->sigma_info = sigma_search_to_json(tm.sigma_search, tm.model->sigma());

  run_stage("persist", [&] {
    const std::vector<std::pair<const char*, std::string>> artifacts = {
        {kRawFile, to_jsonl(corpus)},
        {kSchemaFile, to_json(fc.schema).dump(2)},
        {kFeaturesFile, feature_store_to_jsonl(fc.vectors)},
        {kSplitFile, split_to_json(fc.test_shas, config.seed, config.test_fraction).dump(2)},
        {kModelFile, to_json(*tm.model).dump()},
        {kEvidenceFile, evidence_to_jsonl(snap->store)},
        {kReportFile, [&] {
           auto j = to_json(*snap->holdout);
           j["schema_version"] = fc.schema.version;
           j["sigma_selection"] = snap->sigma_info;
           return j.dump(2);
         }()},
    };
    std::vector<std::filesystem::path> written;
    try {
      ws.ensure();
      for (const auto& [name, content] : artifacts) {
        write_text_file(ws.path(name), content);
        written.push_back(ws.path(name));
      }
      // Importance computed for an older model no longer applies.
      std::filesystem::remove(ws.path(kImportanceFile));
    } catch (...) {
      for (const auto& p : written) std::filesystem::remove(p);
      for (const auto& [name, content] : artifacts) std::filesystem::remove(ws.path(name).string() + ".tmp");
      throw;
    }
    return 0;
  });
  result.snapshot = std::move(snap);
  return result;
}

// Rebuilds a snapshot from the artifacts of a completed run.
inline std::shared_ptr<const Snapshot> load_snapshot(const Workspace& ws) {
  for (const char* name : {kRawFile, kSchemaFile, kFeaturesFile, kSplitFile, kModelFile, kEvidenceFile}) {
    if (!ws.has(name)) throw Error(ErrorKind::kNotFound, std::string("missing artifact ") + (ws.dir() / name).string());
  }
  auto snap = std::make_shared<Snapshot>();
  snap->schema = ws.schema();
  snap->model = std::make_shared<const PnnModel>(model_from_json(nlohmann::json::parse(ws.read(kModelFile))));
  snap->store = evidence_from_jsonl(ws.read(kEvidenceFile));
  if (snap->model->schema_version() != snap->schema->version) {
    throw Error(ErrorKind::kSchema, "model and schema versions differ; re-run train");
  }
  if (!snap->store.is_current(snap->model->model_id())) {
    throw Error(ErrorKind::kSchema, "evidence store was built by another model; re-run evaluate");
  }
  const auto corpus = credit_only(ws.corpus());
  const auto vectors = feature_store_from_jsonl(ws.read(kFeaturesFile));
  snap->labeled = join_labels(corpus, vectors);
  snap->test_shas = split_from_json(nlohmann::json::parse(ws.read(kSplitFile)));
  if (ws.has(kReportFile)) {
    const auto j = nlohmann::json::parse(ws.read(kReportFile));
    if (j.contains("sigma_selection")) snap->sigma_info = j["sigma_selection"];
  }
  snap->holdout = holdout_report(predict_all(*snap->model, vectors), corpus, snap->test_shas, snap->model->model_id());
  return snap;
}

// Single-writer holder for the published snapshot. Readers copy the pointer
// under a short lock and then work on an immutable object.
class SessionHolder {
 public:
  explicit SessionHolder(std::shared_ptr<const Snapshot> initial = nullptr) : current_(std::move(initial)) {}

  std::shared_ptr<const Snapshot> get() const {
    std::lock_guard lock(read_mu_);
    return current_;
  }

  void publish(std::shared_ptr<const Snapshot> next) {
    std::lock_guard lock(read_mu_);
    current_ = std::move(next);
  }

  // Serializes pipeline runs and retrains.
  std::mutex& writer_gate() { return writer_mu_; }

 private:
  mutable std::mutex read_mu_;
  std::mutex writer_mu_;
  std::shared_ptr<const Snapshot> current_;
};

// Retrains on the snapshot's feature store and split, then rebuilds
// predictions, evaluation, and the evidence store for the new model.
inline std::shared_ptr<const Snapshot> retrain(const Snapshot& base, const ServiceConfig& config) {
  std::vector<LabeledTransaction> corpus;
  corpus.reserve(base.store.size());
  for (const auto& rec : base.store.records()) {
    corpus.push_back({rec.tx, *rec.actual});
  }
  std::vector<FeatureVector> vectors;
  for (const auto& row : base.labeled) vectors.push_back(row.features);
  std::sort(corpus.begin(), corpus.end(), [](const auto& a, const auto& b) { return a.tx.raw.sha < b.tx.raw.sha; });
  std::sort(vectors.begin(), vectors.end(), [](const auto& a, const auto& b) { return a.sha < b.sha; });

  const TrainedModel tm = run_stage("train", [&] { return train_on_split(base.labeled, base.test_shas, config); });
  const auto predictions = run_stage("predict", [&] { return predict_all(*tm.model, vectors); });
  auto snap = std::make_shared<Snapshot>();
  snap->schema = base.schema;
  snap->model = tm.model;
  snap->labeled = base.labeled;
  snap->test_shas = base.test_shas;
  snap->holdout = run_stage("evaluate", [&] {
    return holdout_report(predictions, corpus, base.test_shas, tm.model->model_id());
  });
  snap->store = run_stage("evidence", [&] { return build_store(corpus, vectors, predictions); });
  snap->sigma_info = sigma_search_to_json(tm.sigma_search, tm.model->sigma());
  return snap;
}

inline void persist_model_artifacts(const Workspace& ws, const Snapshot& snap) {
  ws.write(kModelFile, to_json(*snap.model).dump());
  ws.write(kEvidenceFile, evidence_to_jsonl(snap.store));
  auto j = to_json(*snap.holdout);
  j["schema_version"] = snap.schema_version();
  j["sigma_selection"] = snap.sigma_info;
  ws.write(kReportFile, j.dump(2));
  std::filesystem::remove(ws.path(kImportanceFile));
}

}  // namespace bankxai
