#include <gtest/gtest.h>

#include <algorithm>

#include "bankxai/evidence.hpp"
#include "../support/fixtures.hpp"

using namespace bankxai;
using namespace bankxai::testing;

namespace {

std::vector<std::string> shas(const RecordRefs& refs) {
  std::vector<std::string> out;
  for (const auto* r : refs) out.push_back(r->sha());
  return out;
}

}  // namespace

TEST(EvidenceStore, ScoredEvaluation) {
  const auto store = scored_store();
  EXPECT_EQ(store.size(), 9u);
  ASSERT_TRUE(store.evaluation());
  EXPECT_DOUBLE_EQ(store.evaluation()->overall_accuracy, 4.0 / 9.0);
  EXPECT_EQ(store.segregation()->correct, (std::vector<std::string>{"S_1", "S_2", "S_3", "S_6"}));
  EXPECT_EQ(store.model_id(), "scored-fixture");
  EXPECT_TRUE(store.is_current("scored-fixture"));
}

TEST(EvidenceStore, FilterByClassification) {
  const auto store = scored_store();
  const auto cash = store.filter_by_classification(ClassLabel::kIncomeCash, false);
  EXPECT_EQ(shas(cash.incorrect), (std::vector<std::string>{"S_4", "S_5", "S_9"}));
  EXPECT_TRUE(cash.correct.empty());
  ASSERT_TRUE(cash.metrics);
  EXPECT_EQ(cash.metrics->counts.fp, 3u);

  const auto funding = store.filter_by_classification(ClassLabel::kFunding);
  EXPECT_EQ(shas(funding.correct), (std::vector<std::string>{"S_2", "S_3", "S_6"}));
  EXPECT_TRUE(funding.incorrect.empty());
  EXPECT_TRUE(store.filter_by_classification(ClassLabel::kFunding, false).correct.empty());
}

TEST(EvidenceStore, SearchContainsAndExact) {
  const auto store = scored_store();
  const auto hits = store.search("invoice", MatchMode::kContains);
  EXPECT_EQ(shas(hits.correct), (std::vector<std::string>{"S_1"}));
  EXPECT_EQ(shas(hits.incorrect), (std::vector<std::string>{"S_9"}));
  EXPECT_EQ(store.search("CASH DEPOSIT ATM", MatchMode::kExact).size(), 1u);
  EXPECT_EQ(store.search("cash deposit", MatchMode::kExact).size(), 0u);
  EXPECT_EQ(store.search("zzz", MatchMode::kContains).size(), 0u);
  EXPECT_THROW(store.search("", MatchMode::kContains), Error);
  EXPECT_EQ(shas(store.with_token("funding")), (std::vector<std::string>{"S_2", "S_3", "S_6"}));
}

TEST(EvidenceStore, NeighborsAreSortedAndExcludeSelf) {
  const auto store = scored_store();
  const auto all = store.neighbors("S_4", {}, 20);
  EXPECT_EQ(all.size(), 8u);
  EXPECT_TRUE(std::is_sorted(all.begin(), all.end(),
                             [](const Neighbor& a, const Neighbor& b) { return a.distance < b.distance; }));
  for (const auto& n : all) EXPECT_NE(n.record->sha(), "S_4");
  // Text only: the other cash deposit is the closest description.
  const std::vector<FeatureGroupId> text = {FeatureGroupId::kText};
  EXPECT_EQ(store.neighbors("S_4", text, 1).front().record->sha(), "S_5");
  // Bank only: ties at zero resolve by sha.
  const std::vector<FeatureGroupId> bank = {FeatureGroupId::kBank};
  const auto same_bank = store.neighbors("S_1", bank, 2);
  EXPECT_EQ(same_bank[0].record->sha(), "S_3");
  EXPECT_EQ(same_bank[1].record->sha(), "S_5");
  EXPECT_THROW(store.neighbors("S_1", {}, 0), Error);
  EXPECT_THROW(store.neighbors("nope", {}, 3), Error);
}

TEST(EvidenceStore, VisualizationOutcomes) {
  const auto store = scored_store();
  const auto points = store.visualization_data(ClassLabel::kFunding, FeatureGroupId::kAmount);
  ASSERT_EQ(points.size(), 9u);
  int fn = 0, tp = 0;
  for (const auto& p : points) {
    if (p.outcome == Outcome::kFN) {
      ++fn;
      EXPECT_EQ(p.sha, "S_7");
    }
    tp += p.outcome == Outcome::kTP;
    EXPECT_GE(p.x, 0.0);
    EXPECT_LE(p.x, 1.0);
  }
  EXPECT_EQ(fn, 1);
  EXPECT_EQ(tp, 3);
  const auto bank_axis = store.visualization_data(ClassLabel::kFunding, FeatureGroupId::kBank);
  for (const auto& p : bank_axis) EXPECT_DOUBLE_EQ(p.x, 1.0);
}

TEST(EvidenceStore, JsonlRoundTrip) {
  const auto store = scored_store();
  const auto back = evidence_from_jsonl(evidence_to_jsonl(store));
  EXPECT_EQ(back.size(), store.size());
  EXPECT_EQ(evidence_to_jsonl(back), evidence_to_jsonl(store));
  EXPECT_DOUBLE_EQ(back.evaluation()->overall_accuracy, 4.0 / 9.0);
}

TEST(EvidenceStore, MisalignedInputsRejected) {
  FeatureSchema schema;
  const auto store = scored_store(&schema);
  std::vector<EnrichedTransaction> txs;
  std::vector<FeatureVector> fvs;
  std::vector<Prediction> preds;
  for (const auto& r : store.records()) {
    txs.push_back(r.tx);
    fvs.push_back(r.features);
    preds.push_back(r.prediction);
  }
  EXPECT_NO_THROW(EvidenceStore::load_join(txs, fvs, preds, {}));
  EXPECT_FALSE(EvidenceStore::load_join(txs, fvs, preds, {}).has_actuals());

  auto short_preds = preds;
  short_preds.pop_back();
  EXPECT_THROW(EvidenceStore::load_join(txs, fvs, short_preds, {}), Error);
  auto dup = txs;
  dup.push_back(txs.front());
  EXPECT_THROW(EvidenceStore::load_join(dup, fvs, preds, {}), Error);
  EXPECT_THROW(EvidenceStore::load_join(txs, fvs, preds, {{"S_1", ClassLabel::kFunding}}), Error);
}

TEST(EvidenceStore, UnlabeledRecordsStaySeparate) {
  FeatureSchema schema;
  const auto store = scored_store(&schema);
  std::vector<EnrichedTransaction> txs;
  std::vector<FeatureVector> fvs;
  std::vector<Prediction> preds;
  for (const auto& r : store.records()) {
    txs.push_back(r.tx);
    fvs.push_back(r.features);
    preds.push_back(r.prediction);
  }
  const auto unlabeled = EvidenceStore::load_join(txs, fvs, preds, {});
  const auto view = unlabeled.filter_by_classification(ClassLabel::kIncomeCash);
  EXPECT_EQ(view.unlabeled.size(), 3u);
  EXPECT_FALSE(view.metrics);
  EXPECT_EQ(unlabeled.search("cash", MatchMode::kContains).unlabeled.size(), 3u);
  EXPECT_THROW(unlabeled.visualization_data(ClassLabel::kFunding, FeatureGroupId::kAmount), Error);
}
