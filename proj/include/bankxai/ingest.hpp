#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "bankxai/class_label.hpp"
#include "bankxai/csv.hpp"
#include "bankxai/date.hpp"
#include "bankxai/error.hpp"
#include "bankxai/hash.hpp"

namespace bankxai {

using json = nlohmann::json;

enum class TxType { kCredit, kDebit };

inline std::string_view tx_type_name(TxType type) {
  return type == TxType::kCredit ? "credit" : "debit";
}

struct RawTransaction {
  std::string sha;
  Timestamp date;
  double amount = 0.0;  // AUD
  std::string description;
  TxType type = TxType::kCredit;

  friend bool operator==(const RawTransaction&, const RawTransaction&) = default;
};

struct RawAccount {
  std::string bank;
  std::string account_name;
  std::optional<std::string> account_nickname;
  std::string account_number;
  std::vector<RawTransaction> transactions;

  friend bool operator==(const RawAccount&, const RawAccount&) = default;
};

struct RawApplication {
  std::string application_id;
  std::string industry_category;
  std::vector<RawAccount> bank_accounts;

  friend bool operator==(const RawApplication&, const RawApplication&) = default;
};

// A transaction together with the customer context it was found in: the
// Table-style row shape (customer, bank, industry). `actual` is the analyst
// supplied class when the source carries one.
struct ContextualTransaction {
  RawTransaction raw;
  std::int64_t customer_id = 0;
  std::string bank;
  std::string industry;
  std::optional<ClassLabel> actual;

  friend bool operator==(const ContextualTransaction&, const ContextualTransaction&) = default;
};

using EnrichmentTags = std::map<std::string, std::vector<std::string>>;

struct EnrichedTransaction {
  RawTransaction raw;
  std::int64_t customer_id = 0;
  std::string bank;
  std::string industry;
  EnrichmentTags enrichment_tags;

  friend bool operator==(const EnrichedTransaction&, const EnrichedTransaction&) = default;
};

struct LabeledTransaction {
  EnrichedTransaction tx;
  ClassLabel label = ClassLabel::kOther;

  friend bool operator==(const LabeledTransaction&, const LabeledTransaction&) = default;
};

inline EnrichedTransaction without_enrichment(const ContextualTransaction& ctx) {
  return EnrichedTransaction{ctx.raw, ctx.customer_id, ctx.bank, ctx.industry, {}};
}

// ---------------------------------------------------------------------------
// Application documents (ApplicationId / BankAccounts / Transactions).

namespace detail {

// Blanks out commas that directly precede a closing bracket, outside string
// literals. Offsets are unchanged so parse errors still point at the input.
inline std::string blank_trailing_commas(std::string_view text) {
  std::string out(text);
  bool in_string = false;
  std::optional<std::size_t> pending_comma;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const char c = out[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
      pending_comma.reset();
    } else if (c == ',') {
      pending_comma = i;
    } else if (c == '}' || c == ']') {
      if (pending_comma) out[*pending_comma] = ' ';
      pending_comma.reset();
    } else if (c != ' ' && c != '\t' && c != '\n' && c != '\r') {
      pending_comma.reset();
    }
  }
  return out;
}

inline const json& require(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) throw FieldError(path + key);
  return *it;
}

inline std::string require_string(const json& obj, const char* key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  throw Error(ErrorKind::kValidation, "field " + path + key + ": expected string");
}

inline std::int64_t customer_id_from(std::string_view application_id) {
  std::int64_t value = 0;
  auto res = std::from_chars(application_id.data(), application_id.data() + application_id.size(), value);
  if (res.ec == std::errc{} && res.ptr == application_id.data() + application_id.size()) return value;
  return 0;
}

}  // namespace detail

inline RawTransaction transaction_from_json(const json& j, const std::string& path) {
  if (!j.is_object()) throw Error(ErrorKind::kValidation, path + ": expected object");
  RawTransaction tx;
  tx.sha = detail::require_string(j, "Sha", path);
  if (tx.sha.empty()) throw Error(ErrorKind::kValidation, "field " + path + "Sha: empty");
  const std::string date = detail::require_string(j, "Date", path);
  auto ts = try_parse_timestamp(date);
  if (!ts) throw Error(ErrorKind::kValidation, "field " + path + "Date: unparseable date '" + date + "'");
  tx.date = *ts;
  const json& amount = detail::require(j, "Amount", path);
  if (!amount.is_number()) throw Error(ErrorKind::kValidation, "field " + path + "Amount: expected number");
  tx.amount = amount.get<double>();
  if (!std::isfinite(tx.amount)) throw Error(ErrorKind::kValidation, "field " + path + "Amount: not finite");
  tx.description = detail::require_string(j, "Description", path);
  tx.type = tx.amount < 0 ? TxType::kDebit : TxType::kCredit;
  if (auto it = j.find("Type"); it != j.end() && it->is_string()) {
    const std::string t = it->get<std::string>();
    if (t == "debit" || t == "DEBIT") tx.type = TxType::kDebit;
  }
  return tx;
}

inline json transaction_to_json(const RawTransaction& tx) {
  json j = json::object();
  j["Sha"] = tx.sha;
  j["Date"] = format_timestamp(tx.date);
  j["Amount"] = tx.amount;
  j["Description"] = tx.description;
  if (tx.type == TxType::kDebit && tx.amount >= 0) j["Type"] = "debit";
  return j;
}

// Parses one application document. Throws ParseError (with byte offset) for
// malformed JSON, FieldError for a missing mandatory field, and Error for
// empty account lists or a sha repeated within the document.
inline RawApplication parse_application(std::string_view document) {
  json root;
  try {
    root = json::parse(detail::blank_trailing_commas(document));
  } catch (const json::parse_error& e) {
    throw ParseError("malformed application document", e.byte == 0 ? 0 : e.byte - 1);
  }
  if (!root.is_object()) throw ParseError("application document must be a JSON object", 0);

  RawApplication app;
  app.application_id = detail::require_string(root, "ApplicationId", "");
  if (app.application_id.empty()) throw Error(ErrorKind::kValidation, "field ApplicationId: empty");
  app.industry_category = detail::require_string(root, "IndustryCategory", "");
  const json& accounts = detail::require(root, "BankAccounts", "");
  if (!accounts.is_array()) throw Error(ErrorKind::kValidation, "field BankAccounts: expected array");
  if (accounts.empty()) throw Error(ErrorKind::kValidation, "no accounts");

  std::unordered_set<std::string> seen;
  for (std::size_t a = 0; a < accounts.size(); ++a) {
    const std::string path = "BankAccounts[" + std::to_string(a) + "].";
    const json& acc = accounts[a];
    if (!acc.is_object()) throw Error(ErrorKind::kValidation, path + ": expected object");
    RawAccount account;
    account.bank = detail::require_string(acc, "Bank", path);
    account.account_name = detail::require_string(acc, "AccountName", path);
    if (auto it = acc.find("AccountNickname"); it != acc.end() && it->is_string()) {
      account.account_nickname = it->get<std::string>();
    }
    account.account_number = detail::require_string(acc, "AccountNumber", path);
    if (account.account_number.empty()) {
      throw Error(ErrorKind::kValidation, "field " + path + "AccountNumber: empty");
    }
    const json& txs = detail::require(acc, "Transactions", path);
    if (!txs.is_array()) throw Error(ErrorKind::kValidation, "field " + path + "Transactions: expected array");
    for (std::size_t t = 0; t < txs.size(); ++t) {
      RawTransaction tx = transaction_from_json(txs[t], path + "Transactions[" + std::to_string(t) + "].");
      if (!seen.insert(tx.sha).second) throw Error(ErrorKind::kConflict, "duplicate sha " + tx.sha);
      account.transactions.push_back(std::move(tx));
    }
    app.bank_accounts.push_back(std::move(account));
  }
  return app;
}

inline json application_to_json(const RawApplication& app) {
  json accounts = json::array();
  for (const RawAccount& acc : app.bank_accounts) {
    json a = json::object();
    a["Bank"] = acc.bank;
    a["AccountName"] = acc.account_name;
    a["AccountNickname"] = acc.account_nickname ? json(*acc.account_nickname) : json(nullptr);
    a["AccountNumber"] = acc.account_number;
    json txs = json::array();
    for (const RawTransaction& tx : acc.transactions) txs.push_back(transaction_to_json(tx));
    a["Transactions"] = std::move(txs);
    accounts.push_back(std::move(a));
  }
  json j = json::object();
  j["ApplicationId"] = app.application_id;
  j["IndustryCategory"] = app.industry_category;
  j["BankAccounts"] = std::move(accounts);
  return j;
}

inline std::vector<std::string> application_shas(const RawApplication& app) {
  std::vector<std::string> shas;
  for (const auto& acc : app.bank_accounts)
    for (const auto& tx : acc.transactions) shas.push_back(tx.sha);
  return shas;
}

// Flattens an application into per-transaction rows carrying bank and industry.
inline std::vector<ContextualTransaction> flatten(const RawApplication& app) {
  std::vector<ContextualTransaction> out;
  const std::int64_t customer = detail::customer_id_from(app.application_id);
  for (const auto& acc : app.bank_accounts) {
    for (const auto& tx : acc.transactions) {
      out.push_back(ContextualTransaction{tx, customer, acc.bank, app.industry_category, std::nullopt});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Raw CSV export (Customer Id, Bank Name, Transaction Amount, ...).

inline constexpr std::string_view kColCustomer = "Customer Id";
inline constexpr std::string_view kColBank = "Bank Name";
inline constexpr std::string_view kColAmount = "Transaction Amount";
inline constexpr std::string_view kColDate = "Transaction Date";
inline constexpr std::string_view kColDescription = "Transaction Description";
inline constexpr std::string_view kColIndustry = "Industry Class";
// Optional extensions.
inline constexpr std::string_view kColType = "Transaction Type";
inline constexpr std::string_view kColActual = "Actual Classification";
inline constexpr std::string_view kColSha = "Sha";

struct CsvIngestResult {
  std::vector<ContextualTransaction> records;
  std::vector<std::string> warnings;
};

// Rows without a Sha column get a content-derived id so re-ingesting the same
// export yields the same ids.
inline std::string content_sha(const ContextualTransaction& t) {
  std::uint64_t h = kFnvOffsetBasis;
  auto mix = [&h](std::string_view s) {
    h = fnv1a64(s, h);
    h = fnv1a64(std::string_view("\x1f", 1), h);
  };
  char amount[64];
  std::snprintf(amount, sizeof(amount), "%.17g", t.raw.amount);
  mix(std::to_string(t.customer_id));
  mix(t.bank);
  mix(amount);
  mix(format_timestamp(t.raw.date));
  mix(t.raw.description);
  mix(t.industry);
  return "TX_" + hex64(h);
}

inline CsvIngestResult parse_raw_csv(std::string_view document) {
  const std::vector<CsvRow> rows = read_csv(document);
  CsvIngestResult result;
  if (rows.empty()) throw Error(ErrorKind::kSchema, "missing header row");

  const std::vector<std::string>& header = rows.front().fields;
  std::map<std::string_view, std::size_t> col;
  static constexpr std::string_view kRequired[] = {kColCustomer, kColBank, kColAmount,
                                                   kColDate, kColDescription, kColIndustry};
  static constexpr std::string_view kOptional[] = {kColType, kColActual, kColSha};
  for (std::size_t i = 0; i < header.size(); ++i) {
    std::string_view name = header[i];
    while (!name.empty() && name.back() == ' ') name.remove_suffix(1);
    while (!name.empty() && name.front() == ' ') name.remove_prefix(1);
    const bool known = std::find(std::begin(kRequired), std::end(kRequired), name) != std::end(kRequired) ||
                       std::find(std::begin(kOptional), std::end(kOptional), name) != std::end(kOptional);
    if (!known) throw Error(ErrorKind::kSchema, "unknown header '" + std::string(name) + "'");
    if (!col.emplace(name, i).second) throw Error(ErrorKind::kSchema, "duplicate header '" + std::string(name) + "'");
  }
  for (const auto& req : kRequired) {
    if (!col.count(req)) throw Error(ErrorKind::kSchema, "missing header '" + std::string(req) + "'");
  }

  std::unordered_map<std::string, std::size_t> by_sha;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const CsvRow& row = rows[r];
    if (row.fields.size() != header.size()) {
      throw RowError(row.line, "expected " + std::to_string(header.size()) + " fields, found " +
                                   std::to_string(row.fields.size()));
    }
    auto field = [&](std::string_view name) -> const std::string& { return row.fields[col.at(name)]; };

    ContextualTransaction t;
    {
      const std::string& s = field(kColCustomer);
      auto res = std::from_chars(s.data(), s.data() + s.size(), t.customer_id);
      if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw RowError(row.line, "unparseable customer id '" + s + "'");
      }
    }
    t.bank = field(kColBank);
    t.industry = field(kColIndustry);
    {
      std::string s = field(kColAmount);
      auto res = std::from_chars(s.data(), s.data() + s.size(), t.raw.amount);
      if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(t.raw.amount)) {
        throw RowError(row.line, "unparseable amount '" + s + "'");
      }
    }
    auto ts = try_parse_timestamp(field(kColDate));
    if (!ts) throw RowError(row.line, "unparseable date '" + field(kColDate) + "'");
    t.raw.date = *ts;
    t.raw.description = field(kColDescription);
    t.raw.type = t.raw.amount < 0 ? TxType::kDebit : TxType::kCredit;
    if (col.count(kColType)) {
      std::string type = field(kColType);
      std::transform(type.begin(), type.end(), type.begin(), [](unsigned char c) { return std::tolower(c); });
      if (type == "debit") {
        t.raw.type = TxType::kDebit;
      } else if (!type.empty() && type != "credit") {
        throw RowError(row.line, "unknown transaction type '" + field(kColType) + "'");
      }
    }
    if (col.count(kColActual) && !field(kColActual).empty()) {
      t.actual = try_parse_label(field(kColActual));
      if (!t.actual) throw RowError(row.line, "unknown class '" + field(kColActual) + "'");
    }
    if (t.raw.type == TxType::kDebit) {
      result.warnings.push_back("row " + std::to_string(row.line) + ": debit transaction skipped");
      continue;
    }
    t.raw.sha = col.count(kColSha) && !field(kColSha).empty() ? field(kColSha) : content_sha(t);

    if (auto it = by_sha.find(t.raw.sha); it != by_sha.end()) {
      if (result.records[it->second] == t) {
        result.warnings.push_back("row " + std::to_string(row.line) + ": duplicate of sha " + t.raw.sha + " dropped");
        continue;
      }
      throw Error(ErrorKind::kConflict, "duplicate sha " + t.raw.sha);
    }
    by_sha.emplace(t.raw.sha, result.records.size());
    result.records.push_back(std::move(t));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Cross-batch sha bookkeeping.

struct LedgerOutcome {
  std::vector<std::string> accepted;
  std::vector<std::string> already_known;  // byte-identical re-ingest
};

// Remembers every transaction accepted so far. A batch is applied all or
// nothing: any sha that reappears with different content rejects the batch.
class ShaLedger {
 public:
  LedgerOutcome accept(std::span<const ContextualTransaction> batch) {
    LedgerOutcome outcome;
    std::unordered_map<std::string, const ContextualTransaction*> in_batch;
    for (const auto& t : batch) {
      if (auto it = in_batch.find(t.raw.sha); it != in_batch.end() && !(*it->second == t)) {
        throw Error(ErrorKind::kConflict, "duplicate sha " + t.raw.sha);
      }
      in_batch.emplace(t.raw.sha, &t);
      if (auto it = known_.find(t.raw.sha); it != known_.end() && !(it->second == t)) {
        throw Error(ErrorKind::kConflict, "sha " + t.raw.sha + " already ingested with different content");
      }
    }
    std::unordered_set<std::string> done;
    for (const auto& t : batch) {
      if (!done.insert(t.raw.sha).second) continue;
      if (known_.count(t.raw.sha)) {
        outcome.already_known.push_back(t.raw.sha);
      } else {
        known_.emplace(t.raw.sha, t);
        order_.push_back(t.raw.sha);
        outcome.accepted.push_back(t.raw.sha);
      }
    }
    return outcome;
  }

  bool contains(const std::string& sha) const { return known_.count(sha) > 0; }
  std::size_t size() const { return known_.size(); }

  std::vector<ContextualTransaction> records() const {
    std::vector<ContextualTransaction> out;
    out.reserve(order_.size());
    for (const auto& sha : order_) out.push_back(known_.at(sha));
    return out;
  }

 private:
  std::unordered_map<std::string, ContextualTransaction> known_;
  std::vector<std::string> order_;
};

// ---------------------------------------------------------------------------
// Enrichment.

class EnrichmentProvider {
 public:
  virtual ~EnrichmentProvider() = default;
  virtual std::string name() const = 0;
  // May throw; callers treat any exception as a provider failure.
  virtual std::vector<std::string> lookup(const ContextualTransaction& tx) const = 0;
};

// In-process lookup table: every knowledge term found (case-insensitively) in
// the description contributes its tags, in term order, without duplicates.
class MockEnrichmentProvider : public EnrichmentProvider {
 public:
  explicit MockEnrichmentProvider(std::map<std::string, std::vector<std::string>> knowledge,
                                  std::string name = "mock")
      : knowledge_(std::move(knowledge)), name_(std::move(name)) {}

  // Knowledge file: JSON object mapping term -> array of tag strings.
  static MockEnrichmentProvider from_json(const json& j, std::string name = "mock") {
    if (!j.is_object()) throw Error(ErrorKind::kConfig, "knowledge file must be a JSON object");
    std::map<std::string, std::vector<std::string>> knowledge;
    for (const auto& [term, tags] : j.items()) {
      if (!tags.is_array()) throw Error(ErrorKind::kConfig, "knowledge entry '" + term + "' must be an array");
      knowledge[term] = tags.get<std::vector<std::string>>();
    }
    return MockEnrichmentProvider(std::move(knowledge), std::move(name));
  }

  std::string name() const override { return name_; }

  std::vector<std::string> lookup(const ContextualTransaction& tx) const override {
    std::vector<std::string> tags;
    const std::string haystack = lower(tx.raw.description);
    for (const auto& [term, term_tags] : knowledge_) {
      if (term.empty() || haystack.find(lower(term)) == std::string::npos) continue;
      for (const auto& tag : term_tags) {
        if (std::find(tags.begin(), tags.end(), tag) == tags.end()) tags.push_back(tag);
      }
    }
    return tags;
  }

 private:
  static std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
  }

  std::map<std::string, std::vector<std::string>> knowledge_;
  std::string name_;
};

struct EnrichmentResult {
  EnrichedTransaction tx;
  std::vector<std::string> warnings;
};

// Best effort: a provider that throws contributes nothing and leaves a
// warning. Providers with no tags for the transaction leave no key.
inline EnrichmentResult enrich(const ContextualTransaction& tx,
                               std::span<const EnrichmentProvider* const> providers) {
  EnrichmentResult result{without_enrichment(tx), {}};
  for (const EnrichmentProvider* provider : providers) {
    try {
      std::vector<std::string> tags = provider->lookup(tx);
      if (!tags.empty()) result.tx.enrichment_tags[provider->name()] = std::move(tags);
    } catch (const std::exception& e) {
      result.warnings.push_back("provider " + provider->name() + " failed for " + tx.raw.sha + ": " + e.what());
    }
  }
  return result;
}

inline EnrichmentResult enrich(const ContextualTransaction& tx, const EnrichmentProvider& provider) {
  const EnrichmentProvider* one[] = {&provider};
  return enrich(tx, std::span<const EnrichmentProvider* const>(one));
}

// ---------------------------------------------------------------------------
// JSON-lines persistence for labeled rows.

inline json to_json(const EnrichedTransaction& t) {
  json j = json::object();
  j["sha"] = t.raw.sha;
  j["date"] = format_timestamp(t.raw.date);
  j["amount"] = t.raw.amount;
  j["description"] = t.raw.description;
  j["type"] = tx_type_name(t.raw.type);
  j["customer_id"] = t.customer_id;
  j["bank"] = t.bank;
  j["industry"] = t.industry;
  j["enrichment_tags"] = t.enrichment_tags;
  return j;
}

inline EnrichedTransaction enriched_from_json(const json& j) {
  EnrichedTransaction t;
  t.raw.sha = j.at("sha").get<std::string>();
  t.raw.date = parse_timestamp(j.at("date").get<std::string>());
  t.raw.amount = j.at("amount").get<double>();
  t.raw.description = j.at("description").get<std::string>();
  t.raw.type = j.value("type", std::string("credit")) == "debit" ? TxType::kDebit : TxType::kCredit;
  t.customer_id = j.at("customer_id").get<std::int64_t>();
  t.bank = j.at("bank").get<std::string>();
  t.industry = j.at("industry").get<std::string>();
  if (auto it = j.find("enrichment_tags"); it != j.end() && it->is_object()) {
    t.enrichment_tags = it->get<EnrichmentTags>();
  }
  return t;
}

inline json to_json(const LabeledTransaction& t) {
  json j = to_json(t.tx);
  j["label"] = label_name(t.label);
  return j;
}

inline LabeledTransaction labeled_from_json(const json& j) {
  return LabeledTransaction{enriched_from_json(j), parse_label(j.at("label").get<std::string>())};
}

inline std::string to_jsonl(std::span<const LabeledTransaction> rows) {
  std::string out;
  for (const auto& row : rows) {
    out += to_json(row).dump();
    out.push_back('\n');
  }
  return out;
}

inline std::vector<LabeledTransaction> labeled_from_jsonl(std::string_view text) {
  std::vector<LabeledTransaction> rows;
  std::size_t start = 0;
  std::size_t line = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line;
    std::string_view chunk = text.substr(start, end - start);
    if (!chunk.empty()) {
      try {
        rows.push_back(labeled_from_json(json::parse(chunk)));
      } catch (const json::exception& e) {
        throw ParseError("line " + std::to_string(line) + ": " + e.what(), start);
      }
    }
    start = end + 1;
  }
  return rows;
}

}  // namespace bankxai
