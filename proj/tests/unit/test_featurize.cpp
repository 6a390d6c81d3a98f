#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "bankxai/featurize.hpp"
#include "../support/fixtures.hpp"

using namespace bankxai;
using bankxai::testing::read_fixture;

namespace {

// Written out from the published FNV-1a definition, independent of hash.hpp.
std::uint64_t oracle_fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

EnrichedTransaction make_tx(std::string sha, std::string bank, std::string industry, double amount,
                            const std::string& date, std::string description) {
  EnrichedTransaction tx;
  tx.raw.sha = std::move(sha);
  tx.raw.amount = amount;
  tx.raw.date = parse_timestamp(date);
  tx.raw.description = std::move(description);
  tx.bank = std::move(bank);
  tx.industry = std::move(industry);
  return tx;
}

std::vector<EnrichedTransaction> feature_sample() {
  std::vector<EnrichedTransaction> out;
  const auto rows = read_csv(read_fixture("feature_sample.csv"));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i].fields;
    out.push_back(make_tx("T5_" + std::to_string(i), f[1], f[7], std::stod(f[2]), f[3] + "-" + f[4] + "-" + f[5], f[6]));
  }
  return out;
}

double norm(std::span<const double> v) {
  return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

}  // namespace

TEST(Tokenize, FeatureSampleRow1) {
  EXPECT_EQ(clean_tokenize("DIRECT CREDIT 2xxxx3 MYOB PAY BY 000003"),
            (std::vector<std::string>{"direct", "credit", "2xxxx3", "myob", "pay", "by", "000003"}));
}

TEST(Tokenize, EmptyAndSeparatorRuns) {
  EXPECT_TRUE(clean_tokenize("").empty());
  EXPECT_TRUE(clean_tokenize("--- ,,, ").empty());
  EXPECT_EQ(clean_tokenize("EFTPOS---TRANSACTION"), (std::vector<std::string>{"eftpos", "transaction"}));
  EXPECT_EQ(clean_tokenize("INTER-BANK CREDIT"), (std::vector<std::string>{"inter", "bank", "credit"}));
}

TEST(Tokenize, KeepsUtf8Words) {
  EXPECT_EQ(clean_tokenize("Caf\xC3\xA9 ABC"), (std::vector<std::string>{"caf\xC3\xA9", "abc"}));
}

TEST(Tokenize, NeverYieldsEmptyOrUppercase) {
  bankxai::Rng rng(11);
  const std::string alphabet = "aZ9 -_.,/x\t";
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    const auto len = uniform_below(rng, 30);
    for (std::uint64_t i = 0; i < len; ++i) s.push_back(alphabet[uniform_below(rng, alphabet.size())]);
    for (const auto& t : clean_tokenize(s)) {
      EXPECT_FALSE(t.empty());
      for (char c : t) EXPECT_FALSE(c >= 'A' && c <= 'Z');
    }
  }
}

TEST(TextVector, EmptyIsZero) {
  const auto v = text_vector({}, 16);
  EXPECT_EQ(v, std::vector<double>(16, 0.0));
}

TEST(TextVector, RepeatedTokenHitsOracleBucket) {
  const std::vector<std::string> tokens = {"pay", "pay"};
  const auto v = text_vector(tokens, 8);
  const std::size_t expected = oracle_fnv1a("pay") % 8;
  for (std::size_t i = 0; i < 8; ++i) EXPECT_DOUBLE_EQ(v[i], i == expected ? 1.0 : 0.0);
}

TEST(TextVector, MatchesOracleCounts) {
  const std::vector<std::string> tokens = {"direct", "credit", "2xxxx3", "myob", "pay", "by", "000003", "credit"};
  const std::size_t dim = 32;
  std::vector<double> expected(dim, 0.0);
  for (const auto& t : tokens) expected[oracle_fnv1a(t) % dim] += 1.0;
  const double n = norm(expected);
  for (double& x : expected) x /= n;
  const auto v = text_vector(tokens, dim);
  for (std::size_t i = 0; i < dim; ++i) EXPECT_NEAR(v[i], expected[i], 1e-15);
}

TEST(TextVector, PermutationInvariantAndUnitNorm) {
  bankxai::Rng rng(5);
  const std::vector<std::string> pool = {"a", "bb", "ccc", "loan", "cash", "x1", "2xxxx3", "pay"};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> tokens;
    const auto n = uniform_below(rng, 10);
    for (std::uint64_t i = 0; i < n; ++i) tokens.push_back(pool[uniform_below(rng, pool.size())]);
    const auto v = text_vector(tokens, 16);
    fisher_yates(std::span<std::string>(tokens), rng);
    EXPECT_EQ(text_vector(tokens, 16), v);
    const double l2 = norm(v);
    if (tokens.empty()) {
      EXPECT_EQ(l2, 0.0);
    } else {
      EXPECT_NEAR(l2, 1.0, 1e-12);
    }
  }
}

TEST(TextVector, RejectsSmallDimension) { EXPECT_THROW(text_vector({}, 7), Error); }

TEST(OneHot, KnownAndUnknownValues) {
  const Vocabulary vocab({"ANZ", "NAB", "Suncorp Bank"});
  EXPECT_EQ(one_hot("NAB", vocab), (std::vector<double>{0, 1, 0, 0}));
  EXPECT_EQ(one_hot("CBA", vocab), (std::vector<double>{0, 0, 0, 1}));
  EXPECT_EQ(one_hot("anything", Vocabulary{}), (std::vector<double>{1}));
}

TEST(OneHot, SumsToOne) {
  const Vocabulary vocab({"a", "b", "c"});
  for (const char* v : {"a", "b", "c", "d", ""}) {
    const auto h = one_hot(v, vocab);
    EXPECT_EQ(std::accumulate(h.begin(), h.end(), 0.0), 1.0);
  }
}

TEST(Vocabulary, RejectsDuplicates) { EXPECT_THROW(Vocabulary({"a", "b", "a"}), Error); }

TEST(Scaler, Examples) {
  EXPECT_DOUBLE_EQ(apply_scaler({100, 300}, 200), 0.5);
  EXPECT_DOUBLE_EQ(apply_scaler({100, 300}, 400), 1.0);
  EXPECT_DOUBLE_EQ(apply_scaler({100, 300}, 50), 0.0);
  EXPECT_DOUBLE_EQ(apply_scaler({5, 5}, 5), 0.0);
}

TEST(Scaler, AlwaysInUnitInterval) {
  bankxai::Rng rng(17);
  for (int i = 0; i < 2000; ++i) {
    const double a = uniform_real(rng, -1e4, 1e4);
    const double b = a + uniform_real(rng, 0, 1e4);
    const double x = uniform_real(rng, -3e4, 3e4);
    const double s = apply_scaler({a, b}, x);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(FitSchema, SortedDistinctVocabAndScaler) {
  const std::vector<EnrichedTransaction> txs = {make_tx("a", "NAB", "Meat", 100, "2020-01-01", "x"),
                                                make_tx("b", "ANZ", "Meat", 200, "2021-01-01", "y"),
                                                make_tx("c", "NAB", "Retail", 300, "2019-01-01", "z")};
  const FeatureSchema s = fit_schema(std::span<const EnrichedTransaction>(txs));
  EXPECT_EQ(s.bank_vocab.values(), (std::vector<std::string>{"ANZ", "NAB"}));
  EXPECT_EQ(s.industry_vocab.values(), (std::vector<std::string>{"Meat", "Retail"}));
  EXPECT_EQ(s.amount_scaler, (MinMaxScaler{100, 300}));
  EXPECT_EQ(s.year_scaler, (MinMaxScaler{2019, 2021}));
  EXPECT_EQ(s.version, 1u);
}

TEST(FitSchema, RefitIsIdenticalExceptVersion) {
  const auto txs = feature_sample();
  const FeatureSchema a = fit_schema(std::span<const EnrichedTransaction>(txs));
  FeatureSchema b = fit_schema(std::span<const EnrichedTransaction>(txs), FitOptions{64, a.version});
  EXPECT_EQ(b.version, a.version + 1);
  b.version = a.version;
  EXPECT_EQ(a, b);
}

TEST(FitSchema, Errors) {
  EXPECT_THROW(fit_schema(std::span<const EnrichedTransaction>{}), Error);
  const auto txs = feature_sample();
  EXPECT_THROW(fit_schema(std::span<const EnrichedTransaction>(txs), FitOptions{4, 0}), Error);
}

TEST(BuildFeatureVector, FeatureSampleRow1) {
  const auto txs = feature_sample();
  const FeatureSchema s = fit_schema(std::span<const EnrichedTransaction>(txs), FitOptions{16, 0});
  const FeatureVector fv = build_feature_vector(txs[0], s);
  // Lexicographic bank vocabulary: 117, 19, 2, 25, 3, 33, 46, 51.
  const auto bank = fv.group(FeatureGroupId::kBank);
  ASSERT_EQ(bank.size(), 9u);
  for (std::size_t i = 0; i < bank.size(); ++i) EXPECT_EQ(bank[i], i == 2 ? 1.0 : 0.0);
  EXPECT_DOUBLE_EQ(fv.group(FeatureGroupId::kAmount)[0], (4.453 - 0.11) / (8.8 - 0.11));
  EXPECT_DOUBLE_EQ(fv.group(FeatureGroupId::kYear)[0], 0.0);  // 2020 within [2020, 2021]
  const auto month = fv.group(FeatureGroupId::kMonth);
  for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(month[i], i == 5 ? 1.0 : 0.0);
  EXPECT_DOUBLE_EQ(fv.group(FeatureGroupId::kDay)[0], 9.0 / 31.0);
  EXPECT_NEAR(norm(fv.group(FeatureGroupId::kText)), 1.0, 1e-12);
}

TEST(BuildFeatureVector, LengthAndPartition) {
  const auto txs = feature_sample();
  const FeatureSchema s = fit_schema(std::span<const EnrichedTransaction>(txs), FitOptions{24, 0});
  const std::size_t expected = (s.bank_vocab.size() + 1) + (s.industry_vocab.size() + 1) + 1 + 1 + 12 + 1 + 24;
  EXPECT_EQ(s.dimension(), expected);
  for (const auto& tx : txs) {
    const FeatureVector fv = build_feature_vector(tx, s);
    EXPECT_EQ(fv.values.size(), expected);
    EXPECT_EQ(fv.group_index, s.group_index());
    std::size_t covered = 0;
    for (const auto& r : fv.group_index.ranges()) {
      EXPECT_EQ(r.offset, covered);
      covered += r.size;
    }
    EXPECT_EQ(covered, expected);
    for (double v : fv.values) EXPECT_TRUE(std::isfinite(v));
    EXPECT_EQ(build_feature_vector(tx, s), fv);
  }
}

TEST(BuildFeatureVector, UnseenValuesUseOovAndClamp) {
  const auto txs = feature_sample();
  const FeatureSchema s = fit_schema(std::span<const EnrichedTransaction>(txs), FitOptions{16, 0});
  const auto odd = make_tx("odd", "999", "unknown", 1e6, "2030-12-31", "");
  const FeatureVector fv = build_feature_vector(odd, s);
  EXPECT_EQ(fv.group(FeatureGroupId::kBank).back(), 1.0);
  EXPECT_EQ(fv.group(FeatureGroupId::kIndustry).back(), 1.0);
  EXPECT_EQ(fv.group(FeatureGroupId::kAmount)[0], 1.0);
  EXPECT_EQ(fv.group(FeatureGroupId::kYear)[0], 1.0);
  EXPECT_EQ(norm(fv.group(FeatureGroupId::kText)), 0.0);
}

TEST(Groups, NamesRoundTrip) {
  for (FeatureGroupId g : kAllFeatureGroups) EXPECT_EQ(parse_group(group_name(g)), g);
  EXPECT_THROW(parse_group("colour"), Error);
}

TEST(Persistence, SchemaAndFeatureStoreRoundTrip) {
  const auto txs = feature_sample();
  const FeatureSchema s = fit_schema(std::span<const EnrichedTransaction>(txs), FitOptions{16, 3});
  EXPECT_EQ(schema_from_json(to_json(s)), s);
  std::vector<FeatureVector> vectors;
  for (const auto& tx : txs) vectors.push_back(build_feature_vector(tx, s));
  const std::string jsonl = feature_store_to_jsonl(vectors);
  EXPECT_EQ(feature_store_from_jsonl(jsonl), vectors);
  const auto line = nlohmann::json::parse(jsonl.substr(0, jsonl.find('\n')));
  EXPECT_EQ(line.at("schema_version"), 4);
  EXPECT_EQ(line.at("group_index").at("bank"), nlohmann::json::array({0, 9}));
  EXPECT_TRUE(line.contains("sha"));
  EXPECT_TRUE(line.contains("values"));
}

TEST(Persistence, MixedVersionsRejected) {
  const auto txs = feature_sample();
  const FeatureSchema a = fit_schema(std::span<const EnrichedTransaction>(txs), FitOptions{16, 0});
  const FeatureSchema b = fit_schema(std::span<const EnrichedTransaction>(txs), FitOptions{16, 1});
  const std::vector<FeatureVector> mixed = {build_feature_vector(txs[0], a), build_feature_vector(txs[1], b)};
  EXPECT_THROW(feature_store_from_jsonl(feature_store_to_jsonl(mixed)), Error);
}
