#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bankxai/class_label.hpp"
#include "bankxai/error.hpp"
#include "bankxai/prediction.hpp"

namespace bankxai {

// counts[actual][predicted], canonical class order on both axes.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts{};
  std::uint64_t total = 0;

  void add(ClassLabel actual, ClassLabel predicted) {
    ++counts[index_of(actual)][index_of(predicted)];
    ++total;
  }

  std::uint64_t row_sum(std::size_t actual) const {
    std::uint64_t s = 0;
    for (auto c : counts[actual]) s += c;
    return s;
  }
  std::uint64_t col_sum(std::size_t predicted) const {
    std::uint64_t s = 0;
    for (const auto& row : counts) s += row[predicted];
    return s;
  }
  std::uint64_t trace() const {
    std::uint64_t s = 0;
    for (std::size_t k = 0; k < kNumClasses; ++k) s += counts[k][k];
    return s;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

using LabelPair = std::pair<ClassLabel, ClassLabel>;  // (actual, predicted)

inline ConfusionMatrix confusion(std::span<const LabelPair> pairs) {
  ConfusionMatrix cm;
  for (const auto& [actual, predicted] : pairs) cm.add(actual, predicted);
  return cm;
}

struct ClassCounts {
  ClassLabel label = ClassLabel::kFunding;
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

// One-vs-rest projection.
inline ClassCounts per_class_counts(const ConfusionMatrix& cm, ClassLabel label) {
  const std::size_t k = index_of(label);
  ClassCounts c;
  c.label = label;
  c.tp = cm.counts[k][k];
  c.fn = cm.row_sum(k) - c.tp;
  c.fp = cm.col_sum(k) - c.tp;
  c.tn = cm.total - c.tp - c.fn - c.fp;
  return c;
}

// Names of metrics whose denominator was zero; those metrics report 0.
struct UndefinedFlags {
  bool precision = false;
  bool recall = false;
  bool f_measure = false;

  bool any() const { return precision || recall || f_measure; }
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    if (precision) out.emplace_back("precision");
    if (recall) out.emplace_back("recall");
    if (f_measure) out.emplace_back("f_measure");
    return out;
  }
  friend bool operator==(const UndefinedFlags&, const UndefinedFlags&) = default;
};

struct ClassReport {
  ClassLabel label = ClassLabel::kFunding;
  ClassCounts counts;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;  // also reported as sensitivity
  double f_measure = 0.0;
  std::uint64_t support = 0;
  std::uint64_t predicted = 0;
  UndefinedFlags undefined;
};

struct EvaluationReport {
  std::array<ClassReport, kNumClasses> classes{};
  ConfusionMatrix matrix;
  double overall_accuracy = 0.0;
  double cohen_kappa = 0.0;
  double p = 0.0;  // observed agreement
  double q = 0.0;  // chance agreement from the marginals
  bool kappa_undefined = false;
  std::string model_id;

  const ClassReport& operator[](ClassLabel label) const { return classes[index_of(label)]; }

  // Mean F-measure over the classes that occur as actual or predicted.
  double macro_f1() const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& c : classes) {
      if (c.support == 0 && c.predicted == 0) continue;
      sum += c.f_measure;
      ++n;
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
  }
};

namespace detail {

inline double ratio(std::uint64_t num, std::uint64_t den, bool& undefined) {
  if (den == 0) {
    undefined = true;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace detail

inline EvaluationReport evaluate(const ConfusionMatrix& cm, std::string model_id = {}) {
  if (cm.total == 0) throw Error(ErrorKind::kValidation, "cannot evaluate an empty confusion matrix");
  EvaluationReport report;
  report.matrix = cm;
  report.model_id = std::move(model_id);
  const double total = static_cast<double>(cm.total);

  for (ClassLabel label : kAllClasses) {
    ClassReport& c = report.classes[index_of(label)];
    c.label = label;
    c.counts = per_class_counts(cm, label);
    c.support = c.counts.tp + c.counts.fn;
    c.predicted = c.counts.tp + c.counts.fp;
    c.accuracy = static_cast<double>(c.counts.tp + c.counts.tn) / total;
    c.precision = detail::ratio(c.counts.tp, c.counts.tp + c.counts.fp, c.undefined.precision);
    c.recall = detail::ratio(c.counts.tp, c.counts.tp + c.counts.fn, c.undefined.recall);
    if (c.precision + c.recall > 0.0) {
      c.f_measure = 2.0 * c.precision * c.recall / (c.precision + c.recall);
    } else {
      c.f_measure = 0.0;
      c.undefined.f_measure = true;
    }
  }

  report.overall_accuracy = static_cast<double>(cm.trace()) / total;
  report.p = report.overall_accuracy;
  double chance = 0.0;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    chance += static_cast<double>(cm.row_sum(k)) * static_cast<double>(cm.col_sum(k));
  }
  report.q = chance / (total * total);
  if (report.q >= 1.0) {
    // Every actual and every prediction is the same single class: the matrix
    // is diagonal, but chance agreement leaves nothing to correct for.
    report.kappa_undefined = true;
    report.cohen_kappa = 1.0;
  } else {
    report.cohen_kappa = (report.p - report.q) / (1.0 - report.q);
  }
  return report;
}

inline nlohmann::json to_json(const EvaluationReport& r) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : r.classes) {
    classes.push_back({{"label", std::string(label_name(c.label))},
                       {"accuracy", c.accuracy},
                       {"precision", c.precision},
                       {"recall", c.recall},
                       {"sensitivity", c.recall},
                       {"f_measure", c.f_measure},
                       {"support", c.support},
                       {"predicted", c.predicted},
                       {"tp", c.counts.tp},
                       {"fp", c.counts.fp},
                       {"tn", c.counts.tn},
                       {"fn", c.counts.fn},
                       {"undefined_flags", c.undefined.names()}});
  }
  nlohmann::json matrix = nlohmann::json::array();
  for (const auto& row : r.matrix.counts) matrix.push_back(row);
  nlohmann::json j = {{"overall_accuracy", r.overall_accuracy},
                      {"cohen_kappa", r.cohen_kappa},
                      {"p", r.p},
                      {"q", r.q},
                      {"macro_f1", r.macro_f1()},
                      {"total", r.matrix.total},
                      {"confusion", matrix},
                      {"classes", classes}};
  if (r.kappa_undefined) j["kappa_undefined"] = true;
  if (!r.model_id.empty()) j["model_id"] = r.model_id;
  return j;
}

// ---------------------------------------------------------------------------
// Correct / incorrect partition.

struct Segregation {
  std::vector<std::string> correct;
  std::vector<std::string> incorrect;
};

// Preserves the order of `predictions`. Every predicted sha needs an actual
// and vice versa.
inline Segregation segregate(std::span<const Prediction> predictions,
                             const std::unordered_map<std::string, ClassLabel>& actuals) {
  Segregation out;
  std::unordered_set<std::string> seen;
  for (const auto& p : predictions) {
    if (!seen.insert(p.sha).second) throw Error(ErrorKind::kConflict, "duplicate sha " + p.sha);
    auto it = actuals.find(p.sha);
    if (it == actuals.end()) throw Error(ErrorKind::kNotFound, "sha " + p.sha + " has no actual class");
    (p.final == it->second ? out.correct : out.incorrect).push_back(p.sha);
  }
  for (const auto& [sha, label] : actuals) {
    if (!seen.count(sha)) throw Error(ErrorKind::kNotFound, "sha " + sha + " has no prediction");
  }
  return out;
}

}  // namespace bankxai
