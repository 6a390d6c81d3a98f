#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "bankxai/class_label.hpp"
#include "bankxai/error.hpp"
#include "bankxai/featurize.hpp"
#include "bankxai/ingest.hpp"
#include "bankxai/metrics.hpp"
#include "bankxai/prediction.hpp"

namespace bankxai {

enum class Outcome { kTP, kFP, kTN, kFN };

inline std::string_view outcome_name(Outcome o) {
  switch (o) {
    case Outcome::kTP: return "TP";
    case Outcome::kFP: return "FP";
    case Outcome::kTN: return "TN";
    case Outcome::kFN: return "FN";
  }
  return "?";
}

inline Outcome outcome_for(ClassLabel actual, ClassLabel predicted, ClassLabel focus) {
  const bool is_actual = actual == focus;
  const bool is_predicted = predicted == focus;
  if (is_actual) return is_predicted ? Outcome::kTP : Outcome::kFN;
  return is_predicted ? Outcome::kFP : Outcome::kTN;
}

struct EvidenceRecord {
  EnrichedTransaction tx;
  FeatureVector features;
  Prediction prediction;
  std::optional<ClassLabel> actual;

  const std::string& sha() const { return tx.raw.sha; }
  std::optional<bool> correct() const {
    if (!actual) return std::nullopt;
    return prediction.final == *actual;
  }
  std::optional<Outcome> outcome(ClassLabel focus) const {
    if (!actual) return std::nullopt;
    return outcome_for(*actual, prediction.final, focus);
  }
};

enum class MatchMode { kContains, kExact };

inline MatchMode parse_match_mode(std::string_view s) {
  if (s == "contains" || s.empty()) return MatchMode::kContains;
  if (s == "exact") return MatchMode::kExact;
  throw Error(ErrorKind::kValidation, "unknown match mode '" + std::string(s) + "'");
}

using RecordRefs = std::vector<const EvidenceRecord*>;

struct ClassificationView {
  ClassLabel label = ClassLabel::kFunding;
  RecordRefs correct;
  RecordRefs incorrect;
  RecordRefs unlabeled;                // predicted as the class, actual unknown
  std::optional<ClassReport> metrics;  // absent when the store has no actuals
};

struct SearchResult {
  RecordRefs correct;
  RecordRefs incorrect;
  RecordRefs unlabeled;
  std::size_t size() const { return correct.size() + incorrect.size() + unlabeled.size(); }
};

struct Neighbor {
  const EvidenceRecord* record = nullptr;
  double distance = 0.0;
};

struct VisualizationPoint {
  std::string sha;
  double x = 0.0;
  Outcome outcome = Outcome::kTN;
  double probability_of_focus = 0.0;
};

namespace detail {

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace detail

// Transactions joined with their feature vectors, predictions, and (when
// known) actual classes. Immutable after construction; records are held in
// sha order so every query result is independent of input order.
class EvidenceStore {
 public:
  EvidenceStore() = default;

  // `actuals` is either empty or covers exactly the joined sha set.
  static EvidenceStore load_join(std::span<const EnrichedTransaction> transactions,
                                 std::span<const FeatureVector> features, std::span<const Prediction> predictions,
                                 const std::unordered_map<std::string, ClassLabel>& actuals) {
    std::map<std::string, EvidenceRecord> joined;
    std::vector<std::string> problems;
    for (const auto& tx : transactions) {
      if (joined.count(tx.raw.sha)) throw Error(ErrorKind::kConflict, "duplicate sha " + tx.raw.sha + " in transactions");
      joined[tx.raw.sha].tx = tx;
    }
    std::unordered_set<std::string> have_features, have_predictions;
    for (const auto& fv : features) {
      if (!have_features.insert(fv.sha).second) throw Error(ErrorKind::kConflict, "duplicate sha " + fv.sha + " in features");
      auto it = joined.find(fv.sha);
      if (it == joined.end()) {
        problems.push_back(fv.sha + " (features without transaction)");
      } else {
        it->second.features = fv;
      }
    }
    std::string model_id;
    for (const auto& p : predictions) {
      if (!have_predictions.insert(p.sha).second) throw Error(ErrorKind::kConflict, "duplicate sha " + p.sha + " in predictions");
      if (model_id.empty()) model_id = p.model_id;
      if (p.model_id != model_id) throw Error(ErrorKind::kConflict, "predictions come from several models");
      auto it = joined.find(p.sha);
      if (it == joined.end()) {
        problems.push_back(p.sha + " (prediction without transaction)");
      } else {
        it->second.prediction = p;
      }
    }
    for (const auto& [sha, rec] : joined) {
      if (!have_features.count(sha)) problems.push_back(sha + " (missing features)");
      if (!have_predictions.count(sha)) problems.push_back(sha + " (missing prediction)");
    }
    if (!actuals.empty()) {
      for (auto& [sha, rec] : joined) {
        auto it = actuals.find(sha);
        if (it == actuals.end()) {
          problems.push_back(sha + " (missing actual)");
        } else {
          rec.actual = it->second;
        }
      }
      for (const auto& [sha, label] : actuals) {
        if (!joined.count(sha)) problems.push_back(sha + " (actual without transaction)");
      }
    }
    if (!problems.empty()) {
      std::sort(problems.begin(), problems.end());
      std::string msg = "misaligned sha sets:";
      for (const auto& p : problems) msg += " " + p + ";";
      throw Error(ErrorKind::kValidation, msg);
    }

    EvidenceStore store;
    store.model_id_ = model_id;
    store.has_actuals_ = !actuals.empty();
    store.records_.reserve(joined.size());
    for (auto& [sha, rec] : joined) store.records_.push_back(std::move(rec));
    store.build_indices();
    return store;
  }

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  bool has_actuals() const { return has_actuals_; }
  const std::string& model_id() const { return model_id_; }
  // Cached predictions belong to one model; a different id means stale.
  bool is_current(std::string_view model_id) const { return model_id_ == model_id; }
  const std::vector<EvidenceRecord>& records() const { return records_; }
  const std::optional<EvaluationReport>& evaluation() const { return evaluation_; }
  const std::optional<Segregation>& segregation() const { return segregation_; }

  const EvidenceRecord* find(const std::string& sha) const {
    auto it = by_sha_.find(sha);
    return it == by_sha_.end() ? nullptr : &records_[it->second];
  }

  const EvidenceRecord& at(const std::string& sha) const {
    const EvidenceRecord* rec = find(sha);
    if (!rec) throw Error(ErrorKind::kNotFound, "unknown sha " + sha);
    return *rec;
  }

  RecordRefs with_token(const std::string& token) const {
    RecordRefs out;
    auto it = by_token_.find(detail::to_lower(token));
    if (it == by_token_.end()) return out;
    for (std::size_t i : it->second) out.push_back(&records_[i]);
    return out;
  }

  // Records whose predicted class is `label`, split by correctness. With
  // `correct` set only that partition is filled.
  ClassificationView filter_by_classification(ClassLabel label, std::optional<bool> correct = std::nullopt) const {
    ClassificationView view;
    view.label = label;
    for (std::size_t i : by_predicted_[index_of(label)]) {
      const EvidenceRecord& rec = records_[i];
      const auto ok = rec.correct();
      if (!ok) {
        if (!correct) view.unlabeled.push_back(&rec);
        continue;
      }
      if (correct && *correct != *ok) continue;
      (*ok ? view.correct : view.incorrect).push_back(&rec);
    }
    if (has_actuals_ && evaluation_) view.metrics = (*evaluation_)[label];
    return view;
  }

  // contains: case-insensitive substring of the raw description.
  // exact: case-insensitive equality with the whole description.
  SearchResult search(const std::string& term, MatchMode match) const {
    if (term.empty()) throw Error(ErrorKind::kValidation, "search term is empty");
    const std::string needle = detail::to_lower(term);
    SearchResult result;
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const std::string& hay = lowered_descriptions_[i];
      const bool hit = match == MatchMode::kExact ? hay == needle : hay.find(needle) != std::string::npos;
      if (!hit) continue;
      const auto ok = records_[i].correct();
      if (!ok) {
        result.unlabeled.push_back(&records_[i]);
      } else {
        (*ok ? result.correct : result.incorrect).push_back(&records_[i]);
      }
    }
    return result;
  }

  // k nearest other records by Euclidean distance over the selected groups
  // (all groups when none are given); ties resolve by sha.
  std::vector<Neighbor> neighbors(const std::string& sha, std::span<const FeatureGroupId> groups, std::size_t k) const {
    if (k < 1) throw Error(ErrorKind::kValidation, "k must be >= 1");
    const EvidenceRecord& query = at(sha);
    std::vector<FeatureGroupId> selected(groups.begin(), groups.end());
    if (selected.empty()) selected.assign(kAllFeatureGroups.begin(), kAllFeatureGroups.end());

    std::vector<Neighbor> all;
    all.reserve(records_.size());
    for (const auto& rec : records_) {
      if (&rec == &query) continue;
      double s = 0.0;
      for (FeatureGroupId g : selected) {
        const auto a = query.features.group(g);
        const auto b = rec.features.group(g);
        if (a.size() != b.size()) throw Error(ErrorKind::kValidation, "records have different layouts");
        for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
      }
      all.push_back({&rec, std::sqrt(s)});
    }
    // records_ is sha-ordered, so a stable sort keeps sha order on ties.
    std::stable_sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) { return a.distance < b.distance; });
    if (all.size() > k) all.resize(k);
    return all;
  }

  // One point per record: scalar groups give their value, vector groups
  // their L2 norm.
  std::vector<VisualizationPoint> visualization_data(ClassLabel focus, FeatureGroupId axis) const {
    if (!has_actuals_) throw Error(ErrorKind::kValidation, "visualization needs actual classes");
    std::vector<VisualizationPoint> points;
    points.reserve(records_.size());
    for (const auto& rec : records_) {
      const auto values = rec.features.group(axis);
      double x = 0.0;
      if (values.size() == 1) {
        x = values[0];
      } else {
        for (double v : values) x += v * v;
        x = std::sqrt(x);
      }
      points.push_back({rec.sha(), x, *rec.outcome(focus), rec.prediction.probabilities[index_of(focus)]});
    }
    return points;
  }

 private:
  void build_indices() {
    by_sha_.clear();
    by_token_.clear();
    for (auto& v : by_predicted_) v.clear();
    lowered_descriptions_.clear();
    std::vector<LabelPair> pairs;
    std::vector<Prediction> predictions;
    std::unordered_map<std::string, ClassLabel> actuals;
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const EvidenceRecord& rec = records_[i];
      by_sha_.emplace(rec.sha(), i);
      by_predicted_[index_of(rec.prediction.final)].push_back(i);
      lowered_descriptions_.push_back(detail::to_lower(rec.tx.raw.description));
      auto tokens = clean_tokenize(rec.tx.raw.description);
      std::sort(tokens.begin(), tokens.end());
      tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
      for (auto& t : tokens) by_token_[t].push_back(i);
      if (rec.actual) {
        pairs.emplace_back(*rec.actual, rec.prediction.final);
        predictions.push_back(rec.prediction);
        actuals.emplace(rec.sha(), *rec.actual);
      }
    }
    // Evaluation is deferred for an empty store.
    if (has_actuals_ && !pairs.empty()) {
      evaluation_ = evaluate(confusion(pairs), model_id_);
      segregation_ = segregate(predictions, actuals);
    }
  }

  std::vector<EvidenceRecord> records_;
  std::unordered_map<std::string, std::size_t> by_sha_;
  std::array<std::vector<std::size_t>, kNumClasses> by_predicted_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_token_;
  std::vector<std::string> lowered_descriptions_;
  std::optional<EvaluationReport> evaluation_;
  std::optional<Segregation> segregation_;
  std::string model_id_;
  bool has_actuals_ = false;
};

// ---------------------------------------------------------------------------
// JSON-lines persistence.

inline nlohmann::json to_json(const EvidenceRecord& rec) {
  nlohmann::json j = {{"sha", rec.sha()},
                      {"tx", to_json(rec.tx)},
                      {"features", to_json(rec.features)},
                      {"prediction", to_json(rec.prediction)}};
  j["actual"] = rec.actual ? nlohmann::json(std::string(label_name(*rec.actual))) : nlohmann::json(nullptr);
  return j;
}

inline std::string evidence_to_jsonl(const EvidenceStore& store) {
  std::string out;
  for (const auto& rec : store.records()) {
    out += to_json(rec).dump();
    out.push_back('\n');
  }
  return out;
}

// Rebuilds a store (and its indices) from persisted records.
inline EvidenceStore evidence_from_jsonl(std::string_view text) {
  std::vector<EnrichedTransaction> txs;
  std::vector<FeatureVector> features;
  std::vector<Prediction> predictions;
  std::unordered_map<std::string, ClassLabel> actuals;
  bool any_missing_actual = false;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(start, end - start);
    if (!line.empty()) {
      try {
        const auto j = nlohmann::json::parse(line);
        txs.push_back(enriched_from_json(j.at("tx")));
        features.push_back(feature_vector_from_json(j.at("features")));
        predictions.push_back(prediction_from_json(j.at("prediction")));
        if (j.at("actual").is_null()) {
          any_missing_actual = true;
        } else {
          actuals.emplace(txs.back().raw.sha, parse_label(j.at("actual").get<std::string>()));
        }
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("evidence store: ") + e.what(), start);
      }
    }
    start = end + 1;
  }
  if (any_missing_actual && !actuals.empty()) {
    throw Error(ErrorKind::kSchema, "evidence store mixes records with and without actuals");
  }
  return EvidenceStore::load_join(txs, features, predictions, actuals);
}

}  // namespace bankxai
