#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bankxai/error.hpp"
#include "bankxai/hash.hpp"
#include "bankxai/ingest.hpp"

namespace bankxai {

// ---------------------------------------------------------------------------
// Text.

// Lower-cases ASCII letters and splits on runs of anything that is not an
// ASCII letter or digit. Bytes >= 0x80 count as word characters so UTF-8
// words stay whole.
inline std::vector<std::string> clean_tokenize(std::string_view description) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : description) {
    const auto c = static_cast<unsigned char>(ch);
    const bool word = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
    if (word) {
      current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

inline std::size_t hashed_bucket(std::string_view token, std::size_t dim) {
  return static_cast<std::size_t>(fnv1a64(token) % dim);
}

// Hashed bag of words: counts per FNV-1a bucket, then unit L2 norm (an empty
// token list stays the zero vector).
inline std::vector<double> text_vector(std::span<const std::string> tokens, std::size_t dim) {
  if (dim < 8) throw Error(ErrorKind::kValidation, "text dimension must be >= 8");
  std::vector<double> v(dim, 0.0);
  for (const auto& token : tokens) v[hashed_bucket(token, dim)] += 1.0;
  double norm2 = 0.0;
  for (double x : v) norm2 += x * x;
  if (norm2 > 0.0) {
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) x *= inv;
  }
  return v;
}

// ---------------------------------------------------------------------------
// Categorical and numeric encoders.

// Ordered, duplicate-free vocabulary with one trailing out-of-vocabulary slot.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> values) : values_(std::move(values)) {
    std::vector<std::string> sorted = values_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw Error(ErrorKind::kValidation, "vocabulary contains duplicates");
    }
  }

  // Sorted distinct values.
  static Vocabulary fit(std::vector<std::string> observed) {
    std::sort(observed.begin(), observed.end());
    observed.erase(std::unique(observed.begin(), observed.end()), observed.end());
    return Vocabulary(std::move(observed));
  }

  std::size_t size() const { return values_.size(); }
  std::size_t width() const { return values_.size() + 1; }
  std::size_t oov_slot() const { return values_.size(); }
  const std::vector<std::string>& values() const { return values_; }

  std::size_t slot(std::string_view value) const {
    auto it = std::find(values_.begin(), values_.end(), value);
    return it == values_.end() ? oov_slot() : static_cast<std::size_t>(it - values_.begin());
  }

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

 private:
  std::vector<std::string> values_;
};

inline std::vector<double> one_hot(std::string_view value, const Vocabulary& vocab) {
  std::vector<double> v(vocab.width(), 0.0);
  v[vocab.slot(value)] = 1.0;
  return v;
}

struct MinMaxScaler {
  double min = 0.0;
  double max = 0.0;

  friend bool operator==(const MinMaxScaler&, const MinMaxScaler&) = default;
};

// (x - min) / (max - min) clamped to [0, 1]; a degenerate range maps to 0.
inline double apply_scaler(const MinMaxScaler& scaler, double x) {
  if (!(scaler.max > scaler.min)) return 0.0;
  const double scaled = (x - scaler.min) / (scaler.max - scaler.min);
  return std::clamp(scaled, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Feature groups.

enum class FeatureGroupId : std::size_t { kBank, kIndustry, kAmount, kYear, kMonth, kDay, kText };

inline constexpr std::size_t kNumFeatureGroups = 7;

inline constexpr std::array<FeatureGroupId, kNumFeatureGroups> kAllFeatureGroups = {
    FeatureGroupId::kBank, FeatureGroupId::kIndustry, FeatureGroupId::kAmount, FeatureGroupId::kYear,
    FeatureGroupId::kMonth, FeatureGroupId::kDay, FeatureGroupId::kText};

inline std::string_view group_name(FeatureGroupId id) {
  static constexpr std::array<std::string_view, kNumFeatureGroups> kNames = {
      "bank", "industry", "amount", "year", "month", "day", "text"};
  return kNames[static_cast<std::size_t>(id)];
}

inline std::optional<FeatureGroupId> try_parse_group(std::string_view name) {
  for (FeatureGroupId id : kAllFeatureGroups) {
    if (group_name(id) == name) return id;
  }
  return std::nullopt;
}

inline FeatureGroupId parse_group(std::string_view name) {
  if (auto id = try_parse_group(name)) return *id;
  throw Error(ErrorKind::kValidation, "unknown feature group '" + std::string(name) + "'");
}

struct GroupRange {
  FeatureGroupId id = FeatureGroupId::kBank;
  std::size_t offset = 0;
  std::size_t size = 0;

  std::size_t end() const { return offset + size; }
  friend bool operator==(const GroupRange&, const GroupRange&) = default;
};

// Contiguous ranges, in canonical group order, that partition the vector.
class GroupIndex {
 public:
  GroupIndex() = default;
  explicit GroupIndex(const std::array<std::size_t, kNumFeatureGroups>& sizes) {
    std::size_t offset = 0;
    for (std::size_t g = 0; g < kNumFeatureGroups; ++g) {
      ranges_[g] = GroupRange{kAllFeatureGroups[g], offset, sizes[g]};
      offset += sizes[g];
    }
    dimension_ = offset;
  }

  const GroupRange& operator[](FeatureGroupId id) const { return ranges_[static_cast<std::size_t>(id)]; }
  const std::array<GroupRange, kNumFeatureGroups>& ranges() const { return ranges_; }
  std::size_t dimension() const { return dimension_; }

  friend bool operator==(const GroupIndex&, const GroupIndex&) = default;

 private:
  std::array<GroupRange, kNumFeatureGroups> ranges_{};
  std::size_t dimension_ = 0;
};

// ---------------------------------------------------------------------------
// Schema.

struct FeatureSchema {
  Vocabulary bank_vocab;
  Vocabulary industry_vocab;
  MinMaxScaler amount_scaler;
  MinMaxScaler year_scaler;
  std::size_t text_dim = 64;
  std::uint64_t version = 1;

  GroupIndex group_index() const {
    return GroupIndex({bank_vocab.width(), industry_vocab.width(), 1, 1, 12, 1, text_dim});
  }
  std::size_t dimension() const { return group_index().dimension(); }

  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;
};

struct FitOptions {
  std::size_t text_dim = 64;
  // The fitted schema gets previous_version + 1.
  std::uint64_t previous_version = 0;
};

inline FeatureSchema fit_schema(std::span<const EnrichedTransaction> dataset, const FitOptions& options = {}) {
  if (dataset.empty()) throw Error(ErrorKind::kValidation, "cannot fit a schema on an empty dataset");
  if (options.text_dim < 8) throw Error(ErrorKind::kValidation, "text dimension must be >= 8");
  std::vector<std::string> banks;
  std::vector<std::string> industries;
  double amount_min = dataset.front().raw.amount;
  double amount_max = amount_min;
  int year_min = dataset.front().raw.date.year();
  int year_max = year_min;
  for (const auto& tx : dataset) {
    banks.push_back(tx.bank);
    industries.push_back(tx.industry);
    amount_min = std::min(amount_min, tx.raw.amount);
    amount_max = std::max(amount_max, tx.raw.amount);
    year_min = std::min(year_min, tx.raw.date.year());
    year_max = std::max(year_max, tx.raw.date.year());
  }
  FeatureSchema schema;
  schema.bank_vocab = Vocabulary::fit(std::move(banks));
  schema.industry_vocab = Vocabulary::fit(std::move(industries));
  schema.amount_scaler = {amount_min, amount_max};
  schema.year_scaler = {static_cast<double>(year_min), static_cast<double>(year_max)};
  schema.text_dim = options.text_dim;
  schema.version = options.previous_version + 1;
  return schema;
}

inline FeatureSchema fit_schema(std::span<const LabeledTransaction> dataset, const FitOptions& options = {}) {
  std::vector<EnrichedTransaction> txs;
  txs.reserve(dataset.size());
  for (const auto& row : dataset) txs.push_back(row.tx);
  return fit_schema(std::span<const EnrichedTransaction>(txs), options);
}

// ---------------------------------------------------------------------------
// Vectors.

struct FeatureVector {
  std::string sha;
  std::uint64_t schema_version = 0;
  std::vector<double> values;
  GroupIndex group_index;

  std::span<const double> group(FeatureGroupId id) const {
    const GroupRange& r = group_index[id];
    return std::span<const double>(values).subspan(r.offset, r.size);
  }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

// Layout: [bank one-hot | industry one-hot | amount | year | month one-hot(12) | day/31 | text].
inline FeatureVector build_feature_vector(const EnrichedTransaction& tx, const FeatureSchema& schema) {
  FeatureVector fv;
  fv.sha = tx.raw.sha;
  fv.schema_version = schema.version;
  fv.group_index = schema.group_index();
  fv.values.assign(fv.group_index.dimension(), 0.0);

  const auto& g = fv.group_index;
  fv.values[g[FeatureGroupId::kBank].offset + schema.bank_vocab.slot(tx.bank)] = 1.0;
  fv.values[g[FeatureGroupId::kIndustry].offset + schema.industry_vocab.slot(tx.industry)] = 1.0;
  fv.values[g[FeatureGroupId::kAmount].offset] = apply_scaler(schema.amount_scaler, tx.raw.amount);
  fv.values[g[FeatureGroupId::kYear].offset] = apply_scaler(schema.year_scaler, static_cast<double>(tx.raw.date.year()));
  fv.values[g[FeatureGroupId::kMonth].offset + (tx.raw.date.month() - 1)] = 1.0;
  fv.values[g[FeatureGroupId::kDay].offset] = static_cast<double>(tx.raw.date.day()) / 31.0;

  const auto tokens = clean_tokenize(tx.raw.description);
  const auto text = text_vector(tokens, schema.text_dim);
  std::copy(text.begin(), text.end(), fv.values.begin() + static_cast<std::ptrdiff_t>(g[FeatureGroupId::kText].offset));
  return fv;
}

// ---------------------------------------------------------------------------
// Persistence.

inline nlohmann::json to_json(const GroupIndex& index) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& r : index.ranges()) {
    j[std::string(group_name(r.id))] = nlohmann::json::array({r.offset, r.offset + r.size});
  }
  return j;
}

inline GroupIndex group_index_from_json(const nlohmann::json& j) {
  std::array<std::size_t, kNumFeatureGroups> sizes{};
  std::size_t expected_offset = 0;
  for (FeatureGroupId id : kAllFeatureGroups) {
    const auto& range = j.at(std::string(group_name(id)));
    const auto begin = range.at(0).get<std::size_t>();
    const auto end = range.at(1).get<std::size_t>();
    if (begin != expected_offset || end < begin) {
      throw Error(ErrorKind::kSchema, "group ranges do not partition the vector");
    }
    sizes[static_cast<std::size_t>(id)] = end - begin;
    expected_offset = end;
  }
  return GroupIndex(sizes);
}

inline nlohmann::json to_json(const FeatureSchema& s) {
  nlohmann::json j = nlohmann::json::object();
  j["version"] = s.version;
  j["bank_vocab"] = s.bank_vocab.values();
  j["industry_vocab"] = s.industry_vocab.values();
  j["amount_scaler"] = {{"min", s.amount_scaler.min}, {"max", s.amount_scaler.max}};
  j["date_encoding"] = {{"year_scaler", {{"min", s.year_scaler.min}, {"max", s.year_scaler.max}}},
                        {"month", "one_hot_12"},
                        {"day", "day_of_month_over_31"}};
  j["text_dim"] = s.text_dim;
  j["text_encoding"] = "fnv1a64_hashed_bag_of_words_l2";
  j["dimension"] = s.dimension();
  j["group_index"] = to_json(s.group_index());
  return j;
}

inline FeatureSchema schema_from_json(const nlohmann::json& j) {
  FeatureSchema s;
  s.version = j.at("version").get<std::uint64_t>();
  s.bank_vocab = Vocabulary(j.at("bank_vocab").get<std::vector<std::string>>());
  s.industry_vocab = Vocabulary(j.at("industry_vocab").get<std::vector<std::string>>());
  s.amount_scaler = {j.at("amount_scaler").at("min").get<double>(), j.at("amount_scaler").at("max").get<double>()};
  const auto& ys = j.at("date_encoding").at("year_scaler");
  s.year_scaler = {ys.at("min").get<double>(), ys.at("max").get<double>()};
  s.text_dim = j.at("text_dim").get<std::size_t>();
  if (s.text_dim < 8) throw Error(ErrorKind::kSchema, "text_dim must be >= 8");
  if (s.amount_scaler.min > s.amount_scaler.max || s.year_scaler.min > s.year_scaler.max) {
    throw Error(ErrorKind::kSchema, "scaler min exceeds max");
  }
  return s;
}

// One feature-store line: {sha, schema_version, values, group_index}.
inline nlohmann::json to_json(const FeatureVector& fv) {
  nlohmann::json j = nlohmann::json::object();
  j["sha"] = fv.sha;
  j["schema_version"] = fv.schema_version;
  j["values"] = fv.values;
  j["group_index"] = to_json(fv.group_index);
  return j;
}

inline FeatureVector feature_vector_from_json(const nlohmann::json& j) {
  FeatureVector fv;
  fv.sha = j.at("sha").get<std::string>();
  fv.schema_version = j.at("schema_version").get<std::uint64_t>();
  fv.values = j.at("values").get<std::vector<double>>();
  fv.group_index = group_index_from_json(j.at("group_index"));
  if (fv.values.size() != fv.group_index.dimension()) {
    throw Error(ErrorKind::kSchema, "feature vector " + fv.sha + " length does not match its group index");
  }
  for (double v : fv.values) {
    if (!std::isfinite(v)) throw Error(ErrorKind::kSchema, "feature vector " + fv.sha + " has a non-finite value");
  }
  return fv;
}

inline std::string feature_store_to_jsonl(std::span<const FeatureVector> vectors) {
  std::string out;
  for (const auto& fv : vectors) {
    out += to_json(fv).dump();
    out.push_back('\n');
  }
  return out;
}

// Every line must share one schema version and layout.
inline std::vector<FeatureVector> feature_store_from_jsonl(std::string_view text) {
  std::vector<FeatureVector> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(start, end - start);
    if (!line.empty()) {
      FeatureVector fv;
      try {
        fv = feature_vector_from_json(nlohmann::json::parse(line));
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("feature store: ") + e.what(), start);
      }
      if (!out.empty() && (fv.schema_version != out.front().schema_version || !(fv.group_index == out.front().group_index))) {
        throw Error(ErrorKind::kSchema, "feature store mixes schema versions or layouts");
      }
      out.push_back(std::move(fv));
    }
    start = end + 1;
  }
  return out;
}

}  // namespace bankxai
