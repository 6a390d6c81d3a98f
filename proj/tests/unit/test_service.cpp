#include <gtest/gtest.h>

#include <cstdlib>
#include <thread>

#include "bankxai/api.hpp"
#include "bankxai/server.hpp"
#include "bankxai/service.hpp"
#include "bankxai/synthetic.hpp"
#include "../support/fixtures.hpp"

using namespace bankxai;
using namespace bankxai::testing;

namespace {

ServiceConfig config_in(const std::filesystem::path& dir) {
  ServiceConfig c;
  c.data_dir = dir;
  c.text_dim = 32;
  return c;
}

std::vector<LabeledTransaction> small_corpus(std::size_t n = 400) {
  return generate_synthetic(default_synthetic_config(11, n));
}

ApiRequest get(std::string path, std::map<std::string, std::string> query = {}) {
  return {"GET", std::move(path), std::move(query), ""};
}

ApiRequest post(std::string path, std::string body) { return {"POST", std::move(path), {}, std::move(body)}; }

std::shared_ptr<const Snapshot> scored_snapshot() {
  auto snap = std::make_shared<Snapshot>();
  snap->store = scored_store();
  return snap;
}

}  // namespace

TEST(Pipeline, WritesEveryArtifactAndIsDeterministic) {
  TempDir dir("pipeline");
  const auto config = config_in(dir.path());
  const auto first = run_pipeline(small_corpus(), config);
  const Workspace ws(dir.path());
  for (const char* name : {kRawFile, kSchemaFile, kFeaturesFile, kSplitFile, kModelFile, kEvidenceFile, kReportFile}) {
    EXPECT_TRUE(ws.has(name)) << name;
  }
  const auto& snap = *first.snapshot;
  EXPECT_EQ(snap.store.size(), 400u);
  EXPECT_EQ(snap.schema_version(), 1u);
  EXPECT_EQ(nlohmann::json::parse(ws.read(kModelFile)).at("model_id"), snap.model_id());
  ASSERT_TRUE(snap.holdout);
  EXPECT_EQ(snap.holdout->matrix.total, snap.test_shas.size());
  EXPECT_TRUE(snap.sigma_info.contains("grid"));

  const auto second = run_pipeline(small_corpus(), config);
  EXPECT_EQ(second.snapshot->model_id(), snap.model_id());
  EXPECT_EQ(second.snapshot->schema_version(), 1u);
}

TEST(Pipeline, FixedSigmaSkipsSearch) {
  TempDir dir("fixed");
  auto config = config_in(dir.path());
  config.sigma = 0.5;
  const auto r = run_pipeline(small_corpus(200), config);
  EXPECT_EQ(r.snapshot->model->sigma(), 0.5);
  EXPECT_FALSE(r.snapshot->sigma_info.contains("grid"));
}

TEST(Pipeline, MissingClassFailsInTrainStage) {
  TempDir dir("missing");
  auto corpus = small_corpus();
  std::erase_if(corpus, [](const LabeledTransaction& t) { return t.label == ClassLabel::kOther; });
  try {
    run_pipeline(corpus, config_in(dir.path()));
    FAIL();
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.stage(), "train");
    EXPECT_EQ(e.kind(), ErrorKind::kValidation);
    EXPECT_NE(std::string(e.what()).find("OTHER"), std::string::npos);
  }
  EXPECT_FALSE(Workspace(dir.path()).has(kModelFile));
}

TEST(Pipeline, DebitsBecomeWarnings) {
  TempDir dir("debits");
  auto corpus = small_corpus(200);
  corpus[0].tx.raw.type = TxType::kDebit;
  const auto r = run_pipeline(corpus, config_in(dir.path()));
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_EQ(r.snapshot->store.size(), 199u);
  auto dup = small_corpus(200);
  dup.push_back(dup.front());
  EXPECT_THROW(run_pipeline(dup, config_in(dir.path())), PipelineError);
}

TEST(Pipeline, SnapshotReloadsFromDisk) {
  TempDir dir("reload");
  const auto built = run_pipeline(small_corpus(), config_in(dir.path())).snapshot;
  const auto loaded = load_snapshot(Workspace(dir.path()));
  EXPECT_EQ(loaded->model_id(), built->model_id());
  EXPECT_EQ(loaded->test_shas, built->test_shas);
  EXPECT_EQ(to_json(*loaded->holdout), to_json(*built->holdout));
  EXPECT_EQ(evidence_to_jsonl(loaded->store), evidence_to_jsonl(built->store));

  const Workspace ws(dir.path());
  auto model = nlohmann::json::parse(ws.read(kModelFile));
  model["schema_version"] = 7;
  model.erase("model_id");
  ws.write(kModelFile, model.dump());
  EXPECT_THROW(load_snapshot(ws), Error);
  std::filesystem::remove(ws.path(kModelFile));
  try {
    load_snapshot(ws);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNotFound);
  }
}

TEST(Split, StratifiedAndDeterministic) {
  Rng rng(4);
  std::vector<std::pair<std::string, ClassLabel>> rows;
  for (int i = 0; i < 500; ++i) rows.emplace_back("S" + std::to_string(i), random_label(rng));
  rows.emplace_back("lonely", ClassLabel::kOther);
  const auto a = stratified_holdout(rows, 0.2, 1);
  EXPECT_EQ(a, stratified_holdout(rows, 0.2, 1));
  EXPECT_NE(a, stratified_holdout(rows, 0.2, 2));
  std::reverse(rows.begin(), rows.end());
  EXPECT_EQ(a, stratified_holdout(rows, 0.2, 1));
  EXPECT_NEAR(static_cast<double>(a.size()), 100.0, 5.0);
  // Every class keeps training rows even at fraction 1.
  const auto all = stratified_holdout(rows, 1.0, 1);
  std::array<int, kNumClasses> kept{};
  for (const auto& [sha, label] : rows)
    if (!all.count(sha)) ++kept[index_of(label)];
  for (int k : kept) EXPECT_EQ(k, 1);
}

TEST(Config, EnvironmentOverridesDataDir) {
  ::setenv(kDataDirEnv, "/tmp/elsewhere", 1);
  EXPECT_EQ(apply_environment({}).data_dir, "/tmp/elsewhere");
  ::setenv(kDataDirEnv, "", 1);
  EXPECT_EQ(apply_environment({}).data_dir, "evidence_data");
  ::unsetenv(kDataDirEnv);
}

TEST(Config, ListenAddress) {
  EXPECT_EQ(parse_listen_address("127.0.0.1:8080").port, 8080);
  EXPECT_EQ(parse_listen_address(":9000").host, "0.0.0.0");
  EXPECT_THROW(parse_listen_address("localhost"), Error);
  EXPECT_THROW(parse_listen_address("h:99999"), Error);
  EXPECT_THROW(parse_listen_address("h:abc"), Error);
}

TEST(Api, ScoredEndpoints) {
  auto session = std::make_shared<SessionHolder>(scored_snapshot());
  ApiService api({}, session, nullptr, false);

  const auto m = api.handle(get("/metrics"));
  ASSERT_EQ(m.status, 200);
  EXPECT_DOUBLE_EQ(m.body["overall_accuracy"].get<double>(), 4.0 / 9.0);
  EXPECT_EQ(m.body["model_id"], "scored-fixture");
  EXPECT_EQ(api.handle(get("/metrics", {{"class", "INCOME_CASH"}})).body["metrics"]["fp"], 3);

  const auto t = api.handle(get("/transactions", {{"class", "INCOME_CASH"}, {"correct", "false"}}));
  ASSERT_EQ(t.status, 200);
  EXPECT_EQ(t.body["counts"]["incorrect"], 3);
  EXPECT_EQ(t.body["incorrect"][0]["sha"], "S_4");
  EXPECT_EQ(t.body["incorrect"][0]["actual"], "INCOME_INVOICE");

  const auto r = api.handle(get("/record", {{"sha", "S_7"}}));
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body["predicted"], "OTHER");
  EXPECT_EQ(r.body["features"]["month"].size(), 12u);

  const auto s = api.handle(get("/search", {{"term", "cash"}}));
  EXPECT_EQ(s.body["counts"]["incorrect"], 3);

  const auto n = api.handle(get("/neighbors", {{"sha", "S_4"}, {"groups", "text"}, {"k", "2"}}));
  ASSERT_EQ(n.status, 200);
  EXPECT_EQ(n.body["neighbors"].size(), 2u);

  const auto v = api.handle(get("/visualization", {{"class", "FUNDING"}}));
  ASSERT_EQ(v.status, 200);
  EXPECT_EQ(v.body["legend"]["FN"], 1);
  EXPECT_EQ(v.body["points"].size(), 9u);
}

TEST(Api, ErrorStatuses) {
  auto session = std::make_shared<SessionHolder>(scored_snapshot());
  ApiService api({}, session, nullptr, false);
  EXPECT_EQ(api.handle(get("/nowhere")).status, 404);
  EXPECT_EQ(api.handle(post("/metrics", "")).status, 405);
  EXPECT_EQ(api.handle(get("/whatif")).status, 405);
  EXPECT_EQ(api.handle(get("/transactions")).status, 400);
  EXPECT_EQ(api.handle(get("/transactions", {{"class", "GIFTS"}})).status, 400);
  EXPECT_EQ(api.handle(get("/transactions", {{"class", "FUNDING"}, {"correct", "maybe"}})).status, 400);
  EXPECT_EQ(api.handle(get("/record", {{"sha", "missing"}})).status, 404);
  EXPECT_EQ(api.handle(get("/neighbors", {{"sha", "S_1"}, {"k", "-1"}})).status, 400);
  EXPECT_EQ(api.handle(get("/neighbors", {{"sha", "S_1"}, {"groups", "colour"}})).status, 400);
  // No model behind the fixture store.
  EXPECT_EQ(api.handle(post("/whatif", R"({"sha": "S_1"})")).status, 409);
  EXPECT_EQ(api.handle(post("/classify", "{not json")).status, 400);

  ApiService empty({}, std::make_shared<SessionHolder>(), nullptr, false);
  EXPECT_EQ(empty.handle(get("/health")).status, 200);
  const auto unavailable = empty.handle(get("/metrics"));
  EXPECT_EQ(unavailable.status, 503);
  EXPECT_TRUE(unavailable.body["model_id"].is_null());
}

class ApiWithModel : public ::testing::Test {
 protected:
  void SetUp() override {
    config_ = config_in(dir_.path());
    auto snap = run_pipeline(small_corpus(), config_).snapshot;
    session_ = std::make_shared<SessionHolder>(snap);
    api_ = std::make_unique<ApiService>(config_, session_);
  }

  TempDir dir_{"api"};
  ServiceConfig config_;
  std::shared_ptr<SessionHolder> session_;
  std::unique_ptr<ApiService> api_;
};

TEST_F(ApiWithModel, ClassifyApplication) {
  const auto r = api_->handle(post("/classify", read_fixture("application.json")));
  ASSERT_EQ(r.status, 200) << r.body.dump();
  const auto& finals = r.body["final"]["Transactions"];
  ASSERT_EQ(finals.size(), 4u);
  EXPECT_EQ(finals[0]["Sha"], "SHA_0001");
  EXPECT_TRUE(parse_label(finals[0]["FinalClassification"].get<std::string>()) <= ClassLabel::kOther);
  const auto& probs = r.body["probabilities"]["Transactions"][0];
  double sum = 0;
  for (ClassLabel c : kAllClasses) sum += probs[std::string(label_key(c))].get<double>();
  EXPECT_NEAR(sum, 1.0, 1e-9);

  const auto flat = api_->handle(post("/classify", R"({"transactions": [{"Sha": "X1", "Date": "2020-01-02",
      "Amount": 120.5, "Description": "CASH DEPOSIT ATM", "Bank": "ANZ", "IndustryCategory": "Retail"}]})"));
  ASSERT_EQ(flat.status, 200) << flat.body.dump();
  EXPECT_EQ(flat.body["final"]["Transactions"][0]["FinalClassification"], "INCOME_CASH");
  EXPECT_EQ(api_->handle(post("/classify", R"({"transactions": [{"Sha": "X1"}]})")).status, 400);
}

TEST_F(ApiWithModel, IngestRecordsShasOnce) {
  const auto first = api_->handle(post("/ingest", read_fixture("application.json")));
  ASSERT_EQ(first.status, 200) << first.body.dump();
  EXPECT_EQ(first.body["ApplicationId"], "32000");
  EXPECT_EQ(first.body["accepted"].size(), 4u);
  EXPECT_EQ(Workspace(dir_.path()).unlabeled().size(), 4u);
  const auto again = api_->handle(post("/ingest", read_fixture("application.json")));
  ASSERT_EQ(again.status, 200);
  EXPECT_EQ(again.body["accepted"].size(), 0u);
  EXPECT_EQ(again.body["already_known"].size(), 4u);
  EXPECT_EQ(Workspace(dir_.path()).unlabeled().size(), 4u);
}

TEST_F(ApiWithModel, WhatIfAndRetrain) {
  const std::string sha = session_->get()->store.records().front().sha();
  const auto w = api_->handle(post("/whatif", nlohmann::json{{"sha", sha}, {"overrides", nlohmann::json::object()}}.dump()));
  ASSERT_EQ(w.status, 200) << w.body.dump();
  for (const auto& [k, v] : w.body["delta"].items()) EXPECT_EQ(v.get<double>(), 0.0) << k;
  EXPECT_EQ(api_->handle(post("/whatif", nlohmann::json{{"sha", sha}, {"overrides", {{"colour", 1}}}}.dump())).status,
            400);

  const std::string before = session_->get()->model_id();
  const auto t = api_->handle(post("/train", R"({"sigma": 0.9})"));
  ASSERT_EQ(t.status, 200) << t.body.dump();
  EXPECT_EQ(t.body["previous_model_id"], before);
  EXPECT_NE(t.body["model_id"], before);
  EXPECT_EQ(t.body["model_id"], session_->get()->model_id());
  EXPECT_EQ(nlohmann::json::parse(Workspace(dir_.path()).read(kModelFile))["model_id"], t.body["model_id"]);
  EXPECT_EQ(api_->handle(post("/train", R"({"sigma": -1})")).status, 400);
}

TEST_F(ApiWithModel, ImportanceIsCachedAndPersisted) {
  const auto a = api_->handle(get("/importance", {{"repeats", "2"}, {"metric", "accuracy"}}));
  ASSERT_EQ(a.status, 200) << a.body.dump();
  EXPECT_EQ(a.body["groups"].size(), kNumFeatureGroups);
  EXPECT_TRUE(a.body["feedback"].contains("retain"));
  EXPECT_TRUE(Workspace(dir_.path()).has(kImportanceFile));
  ApiService fresh(config_, session_);
  const auto b = fresh.handle(get("/importance", {{"repeats", "2"}, {"metric", "accuracy"}}));
  EXPECT_EQ(a.body["groups"], b.body["groups"]);
  EXPECT_EQ(api_->handle(get("/importance", {{"repeats", "x"}})).status, 400);
}

TEST(Http, ServesJsonAndRejectsBusyPort) {
  auto session = std::make_shared<SessionHolder>(scored_snapshot());
  auto api = std::make_shared<ApiService>(ServiceConfig{}, session, nullptr, false);
  HttpServer server(api, "127.0.0.1:0");
  std::thread t([&] { server.run(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", server.port());
  const auto res = client.Get("/transactions?class=INCOME_CASH&correct=false");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(nlohmann::json::parse(res->body)["counts"]["incorrect"], 3);
  const auto put = client.Put("/metrics", "", "application/json");
  ASSERT_TRUE(put);
  EXPECT_EQ(put->status, 405);
  EXPECT_THROW(HttpServer(api, "127.0.0.1:" + std::to_string(server.port())), Error);
  server.stop();
  t.join();
}
