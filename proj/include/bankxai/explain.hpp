#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bankxai/featurize.hpp"
#include "bankxai/metrics.hpp"
#include "bankxai/pnn.hpp"
#include "bankxai/random.hpp"

namespace bankxai {

// ---------------------------------------------------------------------------
// Permutation importance over feature groups.

enum class ImportanceMetric { kMacroF1, kAccuracy };

inline std::string_view metric_name(ImportanceMetric m) {
  return m == ImportanceMetric::kAccuracy ? "accuracy" : "macro_f1";
}

inline ImportanceMetric parse_importance_metric(std::string_view name) {
  if (name == "macro_f1" || name == "macro-F1" || name == "macro-f1") return ImportanceMetric::kMacroF1;
  if (name == "accuracy") return ImportanceMetric::kAccuracy;
  throw Error(ErrorKind::kValidation, "unknown metric '" + std::string(name) + "'");
}

struct GroupImportance {
  FeatureGroupId group = FeatureGroupId::kBank;
  double mean_drop = 0.0;
  double std_drop = 0.0;  // sample standard deviation; 0 for one repeat
  std::vector<double> drops;
  std::size_t repeats() const { return drops.size(); }
};

struct ImportanceReport {
  std::string model_id;
  ImportanceMetric metric = ImportanceMetric::kMacroF1;
  double baseline = 0.0;
  std::uint64_t seed = 0;
  std::size_t rows = 0;
  std::vector<GroupImportance> groups;  // canonical group order

  const GroupImportance& operator[](FeatureGroupId id) const {
    for (const auto& g : groups) {
      if (g.group == id) return g;
    }
    throw Error(ErrorKind::kNotFound, "group " + std::string(group_name(id)) + " not in report");
  }

  // Groups by descending mean drop, canonical order on ties.
  std::vector<FeatureGroupId> ranking() const {
    std::vector<GroupImportance> sorted = groups;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const GroupImportance& a, const GroupImportance& b) { return a.mean_drop > b.mean_drop; });
    std::vector<FeatureGroupId> out;
    for (const auto& g : sorted) out.push_back(g.group);
    return out;
  }
};

struct ImportanceOptions {
  ImportanceMetric metric = ImportanceMetric::kMacroF1;
  std::size_t repeats = 5;
  std::uint64_t seed = 42;
};

using VectorClassifier = std::function<ClassLabel(std::span<const double>)>;

namespace detail {

inline double score(ImportanceMetric metric, const ConfusionMatrix& cm) {
  const EvaluationReport r = evaluate(cm);
  return metric == ImportanceMetric::kAccuracy ? r.overall_accuracy : r.macro_f1();
}

}  // namespace detail

// Model-agnostic: `classify` is any function from a feature vector to a
// label. Rows are put in sha order first so the shuffles depend only on the
// dataset's content. Each (group, repeat) draws its permutation from a seed
// derived from (seed, group, repeat).
inline ImportanceReport permutation_importance(const VectorClassifier& classify, std::string model_id,
                                               std::span<const LabeledFeatures> dataset,
                                               const ImportanceOptions& options = {}) {
  if (dataset.size() < 2) throw Error(ErrorKind::kValidation, "permutation importance needs at least 2 rows");
  if (options.repeats < 1) throw Error(ErrorKind::kValidation, "repeats must be >= 1");
  const GroupIndex& layout = dataset.front().features.group_index;
  for (const auto& row : dataset) {
    if (!(row.features.group_index == layout)) throw Error(ErrorKind::kValidation, "rows have different layouts");
  }
  if (options.metric == ImportanceMetric::kMacroF1) {
    std::array<bool, kNumClasses> present{};
    for (const auto& row : dataset) present[index_of(row.label)] = true;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      if (!present[k]) {
        throw Error(ErrorKind::kValidation,
                    "macro_f1 needs every class; " + std::string(label_name(label_at(k))) + " is absent");
      }
    }
  }

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dataset[a].features.sha < dataset[b].features.sha; });

  ImportanceReport report;
  report.model_id = std::move(model_id);
  report.metric = options.metric;
  report.seed = options.seed;
  report.rows = dataset.size();

  ConfusionMatrix base_cm;
  for (std::size_t idx : order) base_cm.add(dataset[idx].label, classify(dataset[idx].features.values));
  report.baseline = detail::score(options.metric, base_cm);

  std::vector<double> scratch;
  std::vector<std::size_t> perm(order.size());
  for (std::size_t g = 0; g < kNumFeatureGroups; ++g) {
    const GroupRange range = layout.ranges()[g];
    GroupImportance gi;
    gi.group = range.id;
    for (std::size_t r = 0; r < options.repeats; ++r) {
      Rng rng(derive_seed(options.seed, g + 1, r + 1));
      std::iota(perm.begin(), perm.end(), 0);
      fisher_yates(std::span<std::size_t>(perm), rng);
      ConfusionMatrix cm;
      for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& row = dataset[order[i]];
        const auto& donor = dataset[order[perm[i]]].features.values;
        scratch = row.features.values;
        std::copy(donor.begin() + static_cast<std::ptrdiff_t>(range.offset),
                  donor.begin() + static_cast<std::ptrdiff_t>(range.end()),
                  scratch.begin() + static_cast<std::ptrdiff_t>(range.offset));
        cm.add(row.label, classify(scratch));
      }
      gi.drops.push_back(report.baseline - detail::score(options.metric, cm));
    }
    const double n = static_cast<double>(gi.drops.size());
    gi.mean_drop = std::accumulate(gi.drops.begin(), gi.drops.end(), 0.0) / n;
    if (gi.drops.size() > 1) {
      double ss = 0.0;
      for (double d : gi.drops) ss += (d - gi.mean_drop) * (d - gi.mean_drop);
      gi.std_drop = std::sqrt(ss / (n - 1.0));
    }
    report.groups.push_back(std::move(gi));
  }
  return report;
}

inline ImportanceReport permutation_importance(const PnnModel& model, std::span<const LabeledFeatures> dataset,
                                               const ImportanceOptions& options = {}) {
  return permutation_importance([&model](std::span<const double> x) { return predict(model, x); },
                                model.model_id(), dataset, options);
}

// Groups whose mean drop reaches the threshold, most important first.
inline std::vector<FeatureGroupId> importance_feedback(const ImportanceReport& report, double threshold) {
  std::vector<FeatureGroupId> out;
  for (FeatureGroupId id : report.ranking()) {
    if (report[id].mean_drop >= threshold) out.push_back(id);
  }
  return out;
}

inline nlohmann::json to_json(const ImportanceReport& r) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : r.groups) {
    groups.push_back({{"group_name", std::string(group_name(g.group))},
                      {"mean_drop", g.mean_drop},
                      {"std_drop", g.std_drop},
                      {"repeats", g.repeats()},
                      {"drops", g.drops}});
  }
  nlohmann::json ranking = nlohmann::json::array();
  for (FeatureGroupId id : r.ranking()) ranking.push_back(std::string(group_name(id)));
  return {{"model_id", r.model_id}, {"metric", std::string(metric_name(r.metric))},
          {"baseline", r.baseline}, {"seed", r.seed},
          {"rows", r.rows},         {"groups", groups},
          {"ranking", ranking}};
}

inline ImportanceReport importance_from_json(const nlohmann::json& j) {
  ImportanceReport r;
  r.model_id = j.at("model_id").get<std::string>();
  r.metric = parse_importance_metric(j.at("metric").get<std::string>());
  r.baseline = j.at("baseline").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.rows = j.value("rows", std::size_t{0});
  for (const auto& g : j.at("groups")) {
    GroupImportance gi;
    gi.group = parse_group(g.at("group_name").get<std::string>());
    gi.mean_drop = g.at("mean_drop").get<double>();
    gi.std_drop = g.at("std_drop").get<double>();
    gi.drops = g.at("drops").get<std::vector<double>>();
    r.groups.push_back(std::move(gi));
  }
  return r;
}

// ---------------------------------------------------------------------------
// What-if probing.

// Field name -> new value. Accepted fields: amount, description, bank,
// industry, date.
using Overrides = std::map<std::string, nlohmann::json>;

struct WhatIfResult {
  std::string sha;
  Prediction baseline;
  Prediction modified;
  Overrides overrides;
  ClassProbabilities delta{};  // modified - baseline
  std::vector<std::string> notes;
};

inline EnrichedTransaction apply_overrides(const EnrichedTransaction& base, const Overrides& overrides) {
  EnrichedTransaction tx = base;
  for (const auto& [field, value] : overrides) {
    if (field == "amount") {
      double amount = 0.0;
      if (value.is_number()) {
        amount = value.get<double>();
      } else if (value.is_string()) {
        const std::string s = value.get<std::string>();
        auto res = std::from_chars(s.data(), s.data() + s.size(), amount);
        if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
          throw Error(ErrorKind::kValidation, "override amount: not a number");
        }
      } else {
        throw Error(ErrorKind::kValidation, "override amount: not a number");
      }
      if (!std::isfinite(amount)) throw Error(ErrorKind::kValidation, "override amount: not finite");
      tx.raw.amount = amount;
    } else if (field == "description" || field == "bank" || field == "industry" || field == "date") {
      if (!value.is_string()) throw Error(ErrorKind::kValidation, "override " + field + ": expected string");
      const std::string s = value.get<std::string>();
      if (field == "description") {
        tx.raw.description = s;
      } else if (field == "bank") {
        tx.bank = s;
      } else if (field == "industry") {
        tx.industry = s;
      } else {
        auto ts = try_parse_timestamp(s);
        if (!ts) throw Error(ErrorKind::kValidation, "override date: unparseable '" + s + "'");
        tx.raw.date = *ts;
      }
    } else {
      throw Error(ErrorKind::kValidation, "unknown override field '" + field + "'");
    }
  }
  return tx;
}

// Rebuilds the vector under the live schema with the overrides applied and
// re-predicts. Nothing is written anywhere.
inline WhatIfResult what_if(const PnnModel& model, const FeatureSchema& schema, const EnrichedTransaction& base,
                            const Overrides& overrides) {
  const EnrichedTransaction modified_tx = apply_overrides(base, overrides);
  WhatIfResult result;
  result.sha = base.raw.sha;
  result.overrides = overrides;
  result.baseline = predict_record(model, build_feature_vector(base, schema));
  result.modified = predict_record(model, build_feature_vector(modified_tx, schema));
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    result.delta[k] = result.modified.probabilities[k] - result.baseline.probabilities[k];
  }
  if (overrides.count("amount")) {
    const double a = modified_tx.raw.amount;
    if (a > schema.amount_scaler.max) result.notes.push_back("amount above training range; scaled value clamped to 1");
    if (a < schema.amount_scaler.min) result.notes.push_back("amount below training range; scaled value clamped to 0");
  }
  if (overrides.count("bank") && schema.bank_vocab.slot(modified_tx.bank) == schema.bank_vocab.oov_slot()) {
    result.notes.push_back("bank not seen in training; encoded as out-of-vocabulary");
  }
  if (overrides.count("industry") &&
      schema.industry_vocab.slot(modified_tx.industry) == schema.industry_vocab.oov_slot()) {
    result.notes.push_back("industry not seen in training; encoded as out-of-vocabulary");
  }
  return result;
}

inline nlohmann::json to_json(const WhatIfResult& r) {
  nlohmann::json delta = nlohmann::json::object();
  for (ClassLabel label : kAllClasses) delta[std::string(label_key(label))] = r.delta[index_of(label)];
  nlohmann::json overrides = nlohmann::json::object();
  for (const auto& [k, v] : r.overrides) overrides[k] = v;
  return {{"sha", r.sha},         {"baseline", to_json(r.baseline)}, {"modified", to_json(r.modified)},
          {"overrides", overrides}, {"delta", delta},                 {"notes", r.notes}};
}

}  // namespace bankxai
