#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "bankxai/class_label.hpp"
#include "bankxai/date.hpp"
#include "bankxai/error.hpp"
#include "bankxai/ingest.hpp"
#include "bankxai/random.hpp"

namespace bankxai {

struct AmountRange {
  double lo = 0.0;
  double hi = 0.0;
};

// Desk-scale stand-in for a proprietary transaction history. Everything about
// the output is a function of this struct.
struct SyntheticConfig {
  std::uint64_t seed = 42;
  std::size_t n_customers = 250;
  std::size_t n_transactions = 5000;
  std::array<double, kNumClasses> class_mix = {0.20, 0.30, 0.25, 0.10, 0.15};
  std::array<std::vector<std::string>, kNumClasses> vocab_per_class;
  std::array<AmountRange, kNumClasses> amount_ranges;
  std::vector<std::string> noise_vocab;
  std::vector<std::string> banks;
  std::vector<std::string> industries;
  // Narratives are drawn from a few fixed phrases per class, the way a bank
  // repeats the same wording for the same kind of credit.
  std::size_t phrases_per_class = 3;
  std::size_t max_noise_tokens = 1;
  // Chance of a trailing masked reference code.
  double code_rate = 0.3;
  // Chance that a description borrows one token from another class' vocab.
  double cross_talk = 0.05;
  int first_year = 2019;
  int last_year = 2021;
};

inline SyntheticConfig default_synthetic_config(std::uint64_t seed = 42, std::size_t n = 5000) {
  SyntheticConfig c;
  c.seed = seed;
  c.n_transactions = n;
  c.vocab_per_class = {{
      {"loan", "funding", "advance", "capital", "facility", "drawdown", "finance", "disbursement"},
      {"invoice", "inv", "myob", "xero", "remittance", "quickbooks", "billing", "receivable"},
      {"cash", "atm", "branch", "counter", "tyro", "square", "takings", "till"},
      {"cheque", "chq", "clearance", "cheq", "drawer", "cleared", "bankcheque", "chqdep"},
      {"transfer", "internal", "linked", "own", "refund", "reversal", "interest", "sweep"},
  }};
  c.amount_ranges = {{{5000.0, 50000.0}, {200.0, 9000.0}, {20.0, 2500.0}, {100.0, 6000.0}, {5.0, 15000.0}}};
  c.noise_vocab = {"credit", "payment", "direct", "online", "ref", "au", "nsw", "vic",
                   "qld", "pty", "ltd", "from", "to", "deposit", "bank", "trn"};
  c.banks = {"ANZ", "NAB", "Westpac", "CBA"};
  c.industries = {"Hospitality", "Building and Trade", "Professional services", "Retail"};
  return c;
}

inline void validate(const SyntheticConfig& c) {
  if (c.n_transactions == 0) throw Error(ErrorKind::kConfig, "n_transactions must be > 0");
  if (c.n_customers == 0) throw Error(ErrorKind::kConfig, "n_customers must be > 0");
  double total = 0.0;
  for (double w : c.class_mix) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorKind::kConfig, "class weights must be finite and non-negative");
    total += w;
  }
  if (!(total > 0.0)) throw Error(ErrorKind::kConfig, "class weights sum to zero");
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    if (c.class_mix[k] > 0.0 && c.vocab_per_class[k].empty()) {
      throw Error(ErrorKind::kConfig, "class " + std::string(label_name(label_at(k))) + " has no vocabulary");
    }
    if (c.amount_ranges[k].lo > c.amount_ranges[k].hi || c.amount_ranges[k].lo < 0.0) {
      throw Error(ErrorKind::kConfig, "bad amount range for " + std::string(label_name(label_at(k))));
    }
  }
  if (c.banks.empty() || c.industries.empty()) throw Error(ErrorKind::kConfig, "banks and industries must be non-empty");
  if (c.phrases_per_class == 0) throw Error(ErrorKind::kConfig, "phrases_per_class must be > 0");
  if (c.first_year > c.last_year) throw Error(ErrorKind::kConfig, "first_year after last_year");
}

// Largest-remainder apportionment of n slots to the weights. Exact up to
// rounding, so any n meets the mix within 1/n per class.
inline std::array<std::size_t, kNumClasses> apportion(std::size_t n, const std::array<double, kNumClasses>& weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::array<std::size_t, kNumClasses> counts{};
  std::array<double, kNumClasses> remainder{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    const double exact = static_cast<double>(n) * weights[k] / total;
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    remainder[k] = exact - static_cast<double>(counts[k]);
    assigned += counts[k];
  }
  while (assigned < n) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < kNumClasses; ++k) {
      if (remainder[k] > remainder[best]) best = k;
    }
    ++counts[best];
    remainder[best] = -1.0;
    ++assigned;
  }
  return counts;
}

namespace detail {

template <typename T>
const T& pick(const std::vector<T>& items, Rng& rng) {
  return items[static_cast<std::size_t>(uniform_below(rng, items.size()))];
}

inline std::string upper(std::string s) {
  for (char& c : s) {
    if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  }
  return s;
}

// Masked reference codes in the style of "2xxxx3".
inline std::string masked_code(Rng& rng) {
  const std::size_t len = 5 + static_cast<std::size_t>(uniform_below(rng, 4));
  std::string code;
  for (std::size_t i = 0; i < len; ++i) {
    const bool edge = i == 0 || i + 1 == len;
    if (edge || uniform_below(rng, 4) == 0) {
      code.push_back(static_cast<char>('0' + uniform_below(rng, 10)));
    } else {
      code.push_back('x');
    }
  }
  return code;
}

}  // namespace detail

inline std::vector<LabeledTransaction> generate_synthetic(const SyntheticConfig& config) {
  validate(config);
  using namespace std::chrono;

  std::vector<ClassLabel> labels;
  labels.reserve(config.n_transactions);
  const auto counts = apportion(config.n_transactions, config.class_mix);
  for (std::size_t k = 0; k < kNumClasses; ++k) labels.insert(labels.end(), counts[k], label_at(k));
  Rng label_rng(derive_seed(config.seed, 1));
  fisher_yates(std::span<ClassLabel>(labels), label_rng);

  // Each customer banks with one institution and belongs to one industry.
  std::vector<std::size_t> customer_bank(config.n_customers);
  std::vector<std::size_t> customer_industry(config.n_customers);
  Rng customer_rng(derive_seed(config.seed, 2));
  for (std::size_t c = 0; c < config.n_customers; ++c) {
    customer_bank[c] = static_cast<std::size_t>(uniform_below(customer_rng, config.banks.size()));
    customer_industry[c] = static_cast<std::size_t>(uniform_below(customer_rng, config.industries.size()));
  }

  std::array<std::vector<std::vector<std::string>>, kNumClasses> phrases;
  Rng phrase_rng(derive_seed(config.seed, 4));
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    if (config.vocab_per_class[k].empty()) continue;
    for (std::size_t p = 0; p < config.phrases_per_class; ++p) {
      // Distinct tokens, so a phrase never reads "LOAN LOAN".
      std::vector<std::string> phrase = config.vocab_per_class[k];
      fisher_yates(std::span<std::string>(phrase), phrase_rng);
      const std::size_t len = 2 + static_cast<std::size_t>(uniform_below(phrase_rng, 2));
      phrase.resize(std::min(len, phrase.size()));
      phrases[k].push_back(std::move(phrase));
    }
  }

  const sys_days first{year{config.first_year} / January / 1};
  const sys_days last{year{config.last_year} / December / 31};
  const auto span_days = static_cast<std::uint64_t>((last - first).count() + 1);

  std::vector<LabeledTransaction> out;
  out.reserve(config.n_transactions);
  Rng rng(derive_seed(config.seed, 3));
  for (std::size_t i = 0; i < config.n_transactions; ++i) {
    const ClassLabel label = labels[i];
    const std::size_t k = index_of(label);
    LabeledTransaction row;
    row.label = label;

    const std::size_t customer = static_cast<std::size_t>(uniform_below(rng, config.n_customers));
    row.tx.customer_id = static_cast<std::int64_t>(customer + 1);
    row.tx.bank = config.banks[customer_bank[customer]];
    row.tx.industry = config.industries[customer_industry[customer]];

    const sys_days day = first + days{static_cast<int>(uniform_below(rng, span_days))};
    row.tx.raw.date = Timestamp{sys_seconds{day}};

    const AmountRange range = config.amount_ranges[k];
    row.tx.raw.amount = std::round(uniform_real(rng, range.lo, range.hi) * 100.0) / 100.0;

    std::vector<std::string> tokens = detail::pick(phrases[k], rng);
    if (!config.noise_vocab.empty()) {
      const std::size_t n_noise = static_cast<std::size_t>(uniform_below(rng, config.max_noise_tokens + 1));
      for (std::size_t t = 0; t < n_noise; ++t) tokens.push_back(detail::pick(config.noise_vocab, rng));
    }
    if (uniform_unit(rng) < config.cross_talk) {
      const std::size_t other = (k + 1 + static_cast<std::size_t>(uniform_below(rng, kNumClasses - 1))) % kNumClasses;
      if (!config.vocab_per_class[other].empty()) tokens.push_back(detail::pick(config.vocab_per_class[other], rng));
    }
    if (uniform_unit(rng) < config.code_rate) tokens.push_back(detail::masked_code(rng));

    std::string description;
    for (const auto& token : tokens) {
      if (!description.empty()) description.push_back(' ');
      description += detail::upper(token);
    }
    row.tx.raw.description = std::move(description);
    row.tx.raw.type = TxType::kCredit;

    char sha[32];
    std::snprintf(sha, sizeof(sha), "SYN_%06zu", i + 1);
    row.tx.raw.sha = sha;
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace bankxai
