#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "bankxai/error.hpp"

namespace bankxai {

// The five credit-transaction classes, in canonical order. The order is
// significant: argmax ties resolve to the earliest label.
enum class ClassLabel : std::size_t {
  kFunding = 0,
  kIncomeInvoice = 1,
  kIncomeCash = 2,
  kIncomeCheque = 3,
  kOther = 4,
};

inline constexpr std::size_t kNumClasses = 5;

inline constexpr std::array<ClassLabel, kNumClasses> kAllClasses = {
    ClassLabel::kFunding, ClassLabel::kIncomeInvoice, ClassLabel::kIncomeCash,
    ClassLabel::kIncomeCheque, ClassLabel::kOther};

constexpr std::size_t index_of(ClassLabel label) {
  return static_cast<std::size_t>(label);
}

constexpr ClassLabel label_at(std::size_t index) {
  return static_cast<ClassLabel>(index);
}

// FinalClassification values: FUNDING, INCOME_INVOICE, ...
inline std::string_view label_name(ClassLabel label) {
  static constexpr std::array<std::string_view, kNumClasses> kNames = {
      "FUNDING", "INCOME_INVOICE", "INCOME_CASH", "INCOME_CHEQUE", "OTHER"};
  return kNames[index_of(label)];
}

// Probability keys: funding, income_invoice, ...
inline std::string_view label_key(ClassLabel label) {
  static constexpr std::array<std::string_view, kNumClasses> kKeys = {
      "funding", "income_invoice", "income_cash", "income_cheque", "other"};
  return kKeys[index_of(label)];
}

// Accepts the upper-case name, the snake_case key, and the hyphenated form
// ("income-cheque") that shows up in hand-written documents.
inline std::optional<ClassLabel> try_parse_label(std::string_view text) {
  std::string norm;
  norm.reserve(text.size());
  for (char c : text) {
    if (c == '-' || c == ' ') {
      norm.push_back('_');
    } else if (c >= 'A' && c <= 'Z') {
      norm.push_back(static_cast<char>(c - 'A' + 'a'));
    } else {
      norm.push_back(c);
    }
  }
  for (ClassLabel label : kAllClasses) {
    if (norm == label_key(label)) return label;
  }
  return std::nullopt;
}

inline ClassLabel parse_label(std::string_view text) {
  if (auto label = try_parse_label(text)) return *label;
  throw Error(ErrorKind::kValidation, "unknown class label '" + std::string(text) + "'");
}

}  // namespace bankxai
