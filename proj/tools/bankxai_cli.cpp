// Operator command line: builds the workspace stage by stage and serves it.

#include <csignal>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bankxai/api.hpp"
#include "bankxai/error.hpp"
#include "bankxai/explain.hpp"
#include "bankxai/ingest.hpp"
#include "bankxai/server.hpp"
#include "bankxai/service.hpp"
#include "bankxai/synthetic.hpp"

namespace {

using namespace bankxai;
using nlohmann::json;

constexpr const char* kSigmaFile = "sigma.json";

HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::shared_ptr<const EnrichmentProvider> load_provider(const std::string& path) {
  if (path.empty()) return nullptr;
  return std::make_shared<MockEnrichmentProvider>(MockEnrichmentProvider::from_json(json::parse(read_text_file(path))));
}

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

json cmd_generate(const Workspace& ws, std::uint64_t seed, std::size_t n) {
  const auto rows = generate_synthetic(default_synthetic_config(seed, n));
  ws.write(kRawFile, to_jsonl(rows));
  return {{"written", ws.path(kRawFile).string()}, {"rows", rows.size()}, {"seed", seed}};
}

json cmd_ingest(const Workspace& ws, const std::string& file, const std::string& knowledge) {
  const std::string text = read_text_file(file);
  const auto provider = load_provider(knowledge);
  std::vector<ContextualTransaction> batch;
  std::vector<std::string> warnings;
  if (ends_with(file, ".csv")) {
    auto parsed = parse_raw_csv(text);
    batch = std::move(parsed.records);
    warnings = std::move(parsed.warnings);
  } else {
    for (auto& ctx : flatten(parse_application(text))) {
      if (ctx.raw.type == TxType::kDebit) {
        warnings.push_back("debit transaction " + ctx.raw.sha + " skipped");
        continue;
      }
      batch.push_back(std::move(ctx));
    }
  }
  ShaLedger ledger = ledger_for(ws);
  const LedgerOutcome outcome = ledger.accept(batch);
  const std::set<std::string> fresh(outcome.accepted.begin(), outcome.accepted.end());

  auto corpus = ws.corpus();
  auto unlabeled = ws.unlabeled();
  std::size_t labeled_added = 0, unlabeled_added = 0;
  for (const auto& ctx : batch) {
    if (!fresh.count(ctx.raw.sha)) continue;
    EnrichedTransaction tx = without_enrichment(ctx);
    if (provider) {
      auto r = enrich(ctx, *provider);
      tx = std::move(r.tx);
      warnings.insert(warnings.end(), r.warnings.begin(), r.warnings.end());
    }
    if (ctx.actual) {
      corpus.push_back({std::move(tx), *ctx.actual});
      ++labeled_added;
    } else {
      unlabeled.push_back(std::move(tx));
      ++unlabeled_added;
    }
  }
  if (labeled_added) ws.write(kRawFile, to_jsonl(corpus));
  if (unlabeled_added) {
    std::string lines;
    for (const auto& tx : unlabeled) lines += to_json(tx).dump() + "\n";
    ws.write(kUnlabeledFile, lines);
  }
  return {{"accepted", outcome.accepted.size()},
          {"already_known", outcome.already_known.size()},
          {"labeled_added", labeled_added},
          {"unlabeled_added", unlabeled_added},
          {"warnings", warnings}};
}

json cmd_featurize(const Workspace& ws, const ServiceConfig& config) {
  const auto corpus = credit_only(ws.corpus());
  const auto fc = run_stage("featurize", [&] { return featurize_corpus(corpus, config, ws.schema()); });
  ws.write(kSchemaFile, to_json(fc.schema).dump(2));
  ws.write(kFeaturesFile, feature_store_to_jsonl(fc.vectors));
  ws.write(kSplitFile, split_to_json(fc.test_shas, config.seed, config.test_fraction).dump(2));
  return {{"schema_version", fc.schema.version},
          {"dimension", fc.schema.dimension()},
          {"vectors", fc.vectors.size()},
          {"test_rows", fc.test_shas.size()}};
}

json cmd_train(const Workspace& ws, const ServiceConfig& config) {
  const auto corpus = credit_only(ws.corpus());
  const auto vectors = feature_store_from_jsonl(ws.read(kFeaturesFile));
  const auto test_shas = split_from_json(json::parse(ws.read(kSplitFile)));
  const auto labeled = join_labels(corpus, vectors);
  const TrainedModel tm = run_stage("train", [&] { return train_on_split(labeled, test_shas, config); });
  const json sigma = sigma_search_to_json(tm.sigma_search, tm.model->sigma());
  ws.write(kModelFile, to_json(*tm.model).dump());
  ws.write(kSigmaFile, sigma.dump(2));
  return {{"model_id", tm.model->model_id()}, {"schema_version", tm.model->schema_version()}, {"sigma_selection", sigma},
          {"exemplars", tm.model->exemplar_count()}};
}

json cmd_evaluate(const Workspace& ws) {
  const auto corpus = credit_only(ws.corpus());
  const auto vectors = feature_store_from_jsonl(ws.read(kFeaturesFile));
  const auto test_shas = split_from_json(json::parse(ws.read(kSplitFile)));
  const PnnModel model = model_from_json(json::parse(ws.read(kModelFile)));
  const auto predictions = run_stage("predict", [&] { return predict_all(model, vectors); });
  const auto report = run_stage("evaluate", [&] { return holdout_report(predictions, corpus, test_shas, model.model_id()); });
  const auto store = run_stage("evidence", [&] { return build_store(corpus, vectors, predictions); });
  ws.write(kEvidenceFile, evidence_to_jsonl(store));
  json j = to_json(report);
  j["schema_version"] = model.schema_version();
  if (ws.has(kSigmaFile)) j["sigma_selection"] = json::parse(ws.read(kSigmaFile));
  ws.write(kReportFile, j.dump(2));
  std::filesystem::remove(ws.path(kImportanceFile));
  return j;
}

json cmd_importance(const Workspace& ws, const ImportanceOptions& opts) {
  const auto snap = load_snapshot(ws);
  auto rows = snap->holdout_rows();
  const auto report = permutation_importance(*snap->model, rows, opts);
  const json j = to_json(report);
  ws.write(kImportanceFile, j.dump(2));
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bankxai: evidence workbench for bank-transaction classification"};
  app.require_subcommand(1);
  app.fallthrough();

  ServiceConfig config;
  std::string data_dir;
  std::string knowledge;
  app.add_option("--data-dir", data_dir, "Workspace directory (default: $EVIDENCE_DATA_DIR, then ./evidence_data)");

  std::uint64_t gen_seed = 42;
  std::size_t gen_n = 5000;
  auto* generate = app.add_subcommand("generate", "Write a seeded synthetic labeled corpus");
  generate->add_option("--seed", gen_seed);
  generate->add_option("--n", gen_n)->check(CLI::PositiveNumber);

  std::string ingest_file;
  auto* ingest = app.add_subcommand("ingest", "Ingest an application document (.json) or raw CSV (.csv)");
  ingest->add_option("file", ingest_file)->required()->check(CLI::ExistingFile);
  ingest->add_option("--knowledge", knowledge, "Mock enrichment knowledge file")->check(CLI::ExistingFile);

  auto* featurize = app.add_subcommand("featurize", "Fit the feature schema and write the feature store");
  featurize->add_option("--text-dim", config.text_dim);
  featurize->add_option("--seed", config.seed, "Split seed");
  featurize->add_option("--test-fraction", config.test_fraction)->check(CLI::Range(0.0, 0.9));

  double sigma = 0.0;
  std::string prior_mode = "empirical";
  auto* train = app.add_subcommand("train", "Train the classifier (grid search when --sigma is absent)");
  train->add_option("--sigma", sigma)->check(CLI::PositiveNumber);
  train->add_option("--prior-mode", prior_mode)->check(CLI::IsMember({"empirical", "uniform"}));
  train->add_option("--seed", config.seed, "Validation split seed");

  app.add_subcommand("evaluate", "Predict, evaluate the holdout, and build the evidence store");

  ImportanceOptions imp;
  std::string metric = "macro_f1";
  auto* importance = app.add_subcommand("importance", "Permutation importance per feature group");
  importance->add_option("--repeats", imp.repeats)->check(CLI::PositiveNumber);
  importance->add_option("--seed", imp.seed);
  importance->add_option("--metric", metric)->check(CLI::IsMember({"macro_f1", "accuracy"}));

  auto* pipeline = app.add_subcommand("pipeline", "Run featurize, train, and evaluate in one pass");
  pipeline->add_option("--sigma", sigma)->check(CLI::PositiveNumber);
  pipeline->add_option("--seed", config.seed);
  pipeline->add_option("--text-dim", config.text_dim);

  auto* serve = app.add_subcommand("serve", "Serve the HTTP API over the workspace");
  serve->add_option("--listen", config.listen_address, "host:port");
  serve->add_option("--knowledge", knowledge, "Mock enrichment knowledge file")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  config = apply_environment(config);
  if (!data_dir.empty()) config.data_dir = data_dir;
  if (sigma > 0.0) config.sigma = sigma;
  config.prior_mode = parse_prior_mode(prior_mode);
  const Workspace ws(config.data_dir);

  try {
    if (generate->parsed()) {
      print(cmd_generate(ws, gen_seed, gen_n));
    } else if (ingest->parsed()) {
      print(cmd_ingest(ws, ingest_file, knowledge));
    } else if (featurize->parsed()) {
      print(cmd_featurize(ws, config));
    } else if (train->parsed()) {
      print(cmd_train(ws, config));
    } else if (app.got_subcommand("evaluate")) {
      print(cmd_evaluate(ws));
    } else if (importance->parsed()) {
      imp.metric = parse_importance_metric(metric);
      print(cmd_importance(ws, imp));
    } else if (pipeline->parsed()) {
      auto result = run_pipeline(ws.corpus(), config);
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
      json j = to_json(*result.snapshot->holdout);
      j["schema_version"] = result.snapshot->schema_version();
      j["sigma_selection"] = result.snapshot->sigma_info;
      print(j);
    } else if (serve->parsed()) {
      auto session = std::make_shared<SessionHolder>(load_snapshot(ws));
      auto api = std::make_shared<ApiService>(config, session, load_provider(knowledge));
      HttpServer server(api, config.listen_address);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "serving " << ws.dir().string() << " on port " << server.port() << "\n";
      server.run();
    }
  } catch (const Error& e) {
    std::cerr << "error (" << error_kind_name(e.kind()) << "): " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
