#pragma once

#include <algorithm>
#include <array>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bankxai/class_label.hpp"
#include "bankxai/error.hpp"

namespace bankxai {

// Indexed by index_of(ClassLabel).
using ClassProbabilities = std::array<double, kNumClasses>;

// First maximum wins, so ties resolve in canonical class order.
inline ClassLabel argmax(const ClassProbabilities& p) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < kNumClasses; ++k) {
    if (p[k] > p[best]) best = k;
  }
  return label_at(best);
}

struct Prediction {
  std::string sha;
  ClassProbabilities probabilities{};
  ClassLabel final = ClassLabel::kFunding;
  std::string model_id;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

// Full record used for persistence: probabilities keyed by snake_case label.
inline nlohmann::json to_json(const Prediction& p) {
  nlohmann::json probs = nlohmann::json::object();
  for (ClassLabel label : kAllClasses) probs[std::string(label_key(label))] = p.probabilities[index_of(label)];
  return {{"sha", p.sha}, {"model_id", p.model_id}, {"probabilities", probs},
          {"FinalClassification", std::string(label_name(p.final))}};
}

inline Prediction prediction_from_json(const nlohmann::json& j) {
  Prediction p;
  p.sha = j.at("sha").get<std::string>();
  p.model_id = j.value("model_id", std::string());
  const auto& probs = j.at("probabilities");
  for (ClassLabel label : kAllClasses) p.probabilities[index_of(label)] = probs.at(std::string(label_key(label))).get<double>();
  p.final = parse_label(j.at("FinalClassification").get<std::string>());
  return p;
}

// {"Transactions": [{"Sha": ..., "FinalClassification": "INCOME_CASH"}, ...]}
inline nlohmann::json final_classification_document(std::span<const Prediction> predictions) {
  nlohmann::json txs = nlohmann::json::array();
  for (const auto& p : predictions) {
    nlohmann::json row = nlohmann::json::object();
    row["Sha"] = p.sha;
    row["FinalClassification"] = std::string(label_name(p.final));
    txs.push_back(std::move(row));
  }
  return {{"Transactions", std::move(txs)}};
}

// {"Transactions": [{"Sha": ..., "income_invoice": 0.5, "income_cash": 0.3,
//   "funding": 0.1, "income_cheque": 0.1, "other": 0.0}, ...]}
// Keys are uniformly snake_case; the hand-written "income-cheque" spelling is
// accepted on input by try_parse_label but never emitted.
inline nlohmann::json probability_document(std::span<const Prediction> predictions) {
  nlohmann::json txs = nlohmann::json::array();
  for (const auto& p : predictions) {
    nlohmann::json row = nlohmann::json::object();
    row["Sha"] = p.sha;
    for (ClassLabel label : kAllClasses) row[std::string(label_key(label))] = p.probabilities[index_of(label)];
    txs.push_back(std::move(row));
  }
  return {{"Transactions", std::move(txs)}};
}

// Reads a final-classification document and a probability document back
// into predictions, joined on Sha. Probability keys may use any spelling
// try_parse_label accepts; every class must be present.
inline std::vector<Prediction> predictions_from_documents(const nlohmann::json& final_doc,
                                                          const nlohmann::json& probability_doc) {
  std::vector<Prediction> out;
  for (const auto& row : final_doc.at("Transactions")) {
    Prediction p;
    p.sha = row.at("Sha").get<std::string>();
    p.final = parse_label(row.at("FinalClassification").get<std::string>());
    out.push_back(std::move(p));
  }
  std::size_t matched = 0;
  for (const auto& row : probability_doc.at("Transactions")) {
    const std::string sha = row.at("Sha").get<std::string>();
    auto it = std::find_if(out.begin(), out.end(), [&](const Prediction& p) { return p.sha == sha; });
    if (it == out.end()) throw Error(ErrorKind::kValidation, "probabilities for unknown Sha " + sha);
    std::array<bool, kNumClasses> seen{};
    for (const auto& [key, value] : row.items()) {
      if (key == "Sha") continue;
      const ClassLabel label = parse_label(key);
      it->probabilities[index_of(label)] = value.get<double>();
      seen[index_of(label)] = true;
    }
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      if (!seen[k]) throw FieldError("Transactions[" + sha + "]." + std::string(label_key(label_at(k))));
    }
    ++matched;
  }
  if (matched != out.size()) throw Error(ErrorKind::kValidation, "probability document does not cover every Sha");
  return out;
}

}  // namespace bankxai
