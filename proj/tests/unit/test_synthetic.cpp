#include <gtest/gtest.h>

#include "bankxai/synthetic.hpp"

using namespace bankxai;

TEST(Synthetic, SameSeedIsByteIdentical) {
  const auto cfg = default_synthetic_config(42, 1200);
  EXPECT_EQ(to_jsonl(generate_synthetic(cfg)), to_jsonl(generate_synthetic(cfg)));
}

TEST(Synthetic, DifferentSeedDiffers) {
  EXPECT_NE(to_jsonl(generate_synthetic(default_synthetic_config(1, 300))),
            to_jsonl(generate_synthetic(default_synthetic_config(2, 300))));
}

TEST(Synthetic, SingleClassMix) {
  auto cfg = default_synthetic_config(42, 250);
  cfg.class_mix = {1, 0, 0, 0, 0};
  const auto rows = generate_synthetic(cfg);
  ASSERT_EQ(rows.size(), 250u);
  for (const auto& r : rows) EXPECT_EQ(r.label, ClassLabel::kFunding);
}

TEST(Synthetic, DefaultHistogramMatchesMix) {
  const auto cfg = default_synthetic_config(42, 5000);
  const auto rows = generate_synthetic(cfg);
  ASSERT_EQ(rows.size(), 5000u);
  std::array<std::size_t, kNumClasses> counts{};
  for (const auto& r : rows) ++counts[index_of(r.label)];
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    EXPECT_NEAR(static_cast<double>(counts[k]) / 5000.0, cfg.class_mix[k], 0.02) << label_name(label_at(k));
  }
}

TEST(Synthetic, RecordsRespectConfig) {
  const auto cfg = default_synthetic_config(9, 2000);
  const auto rows = generate_synthetic(cfg);
  std::set<std::string> shas;
  for (const auto& r : rows) {
    const auto& range = cfg.amount_ranges[index_of(r.label)];
    EXPECT_GE(r.tx.raw.amount, range.lo);
    EXPECT_LE(r.tx.raw.amount, range.hi);
    EXPECT_GE(r.tx.raw.date.year(), cfg.first_year);
    EXPECT_LE(r.tx.raw.date.year(), cfg.last_year);
    EXPECT_EQ(r.tx.raw.type, TxType::kCredit);
    EXPECT_FALSE(r.tx.raw.description.empty());
    EXPECT_TRUE(shas.insert(r.tx.raw.sha).second);
  }
}

TEST(Synthetic, CustomersKeepBankAndIndustry) {
  const auto rows = generate_synthetic(default_synthetic_config(5, 1500));
  std::map<std::int64_t, std::pair<std::string, std::string>> seen;
  for (const auto& r : rows) {
    auto [it, fresh] = seen.emplace(r.tx.customer_id, std::make_pair(r.tx.bank, r.tx.industry));
    if (!fresh) {
      EXPECT_EQ(it->second.first, r.tx.bank);
      EXPECT_EQ(it->second.second, r.tx.industry);
    }
  }
}

TEST(Synthetic, ConfigErrors) {
  auto cfg = default_synthetic_config();
  cfg.class_mix = {0, 0, 0, 0, 0};
  EXPECT_THROW(generate_synthetic(cfg), Error);
  cfg = default_synthetic_config();
  cfg.n_transactions = 0;
  EXPECT_THROW(generate_synthetic(cfg), Error);
  cfg = default_synthetic_config();
  cfg.class_mix[2] = -0.1;
  EXPECT_THROW(generate_synthetic(cfg), Error);
}

TEST(Synthetic, ApportionIsExactAndSumsToN) {
  for (std::size_t n : {1u, 7u, 100u, 999u}) {
    const auto parts = apportion(n, {0.2, 0.3, 0.25, 0.1, 0.15});
    EXPECT_EQ(std::accumulate(parts.begin(), parts.end(), std::size_t{0}), n);
  }
  EXPECT_EQ(apportion(100, {0.2, 0.3, 0.25, 0.1, 0.15}), (std::array<std::size_t, kNumClasses>{20, 30, 25, 10, 15}));
}
