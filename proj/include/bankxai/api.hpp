#pragma once

#include <charconv>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "bankxai/error.hpp"
#include "bankxai/evidence.hpp"
#include "bankxai/explain.hpp"
#include "bankxai/ingest.hpp"
#include "bankxai/service.hpp"

namespace bankxai {

struct ApiRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

inline int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNotFound: return 404;
    case ErrorKind::kConflict: return 409;
    case ErrorKind::kIo: return 500;
    default: return 400;
  }
}

namespace detail {

inline std::optional<std::string> param(const ApiRequest& req, const std::string& key) {
  auto it = req.query.find(key);
  if (it == req.query.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

inline std::string required_param(const ApiRequest& req, const std::string& key) {
  auto v = param(req, key);
  if (!v) throw FieldError(key);
  return *v;
}

inline std::uint64_t unsigned_param(const ApiRequest& req, const std::string& key, std::uint64_t fallback) {
  auto v = param(req, key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  auto res = std::from_chars(v->data(), v->data() + v->size(), out);
  if (res.ec != std::errc{} || res.ptr != v->data() + v->size()) {
    throw Error(ErrorKind::kValidation, key + ": expected a non-negative integer, got '" + *v + "'");
  }
  return out;
}

inline std::optional<bool> bool_param(const ApiRequest& req, const std::string& key) {
  auto v = param(req, key);
  if (!v) return std::nullopt;
  if (*v == "true" || *v == "1") return true;
  if (*v == "false" || *v == "0") return false;
  throw Error(ErrorKind::kValidation, key + ": expected true or false, got '" + *v + "'");
}

inline std::vector<FeatureGroupId> group_list(const std::string& text) {
  std::vector<FeatureGroupId> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(',', start);
    if (end == std::string::npos) end = text.size();
    if (end > start) out.push_back(parse_group(text.substr(start, end - start)));
    start = end + 1;
  }
  return out;
}

inline nlohmann::json probabilities_json(const ClassProbabilities& p) {
  nlohmann::json j = nlohmann::json::object();
  for (ClassLabel label : kAllClasses) j[std::string(label_key(label))] = p[index_of(label)];
  return j;
}

inline nlohmann::json class_metrics_json(const EvaluationReport& report, ClassLabel label) {
  return to_json(report)["classes"][index_of(label)];
}

inline nlohmann::json record_summary(const EvidenceRecord& rec) {
  nlohmann::json j = {{"sha", rec.sha()},
                      {"date", format_date(rec.tx.raw.date)},
                      {"amount", rec.tx.raw.amount},
                      {"description", rec.tx.raw.description},
                      {"customer_id", rec.tx.customer_id},
                      {"bank", rec.tx.bank},
                      {"industry", rec.tx.industry},
                      {"predicted", std::string(label_name(rec.prediction.final))},
                      {"probabilities", probabilities_json(rec.prediction.probabilities)}};
  j["actual"] = rec.actual ? nlohmann::json(std::string(label_name(*rec.actual))) : nlohmann::json(nullptr);
  const auto ok = rec.correct();
  j["correct"] = ok ? nlohmann::json(*ok) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json record_list(const RecordRefs& refs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const EvidenceRecord* rec : refs) arr.push_back(record_summary(*rec));
  return arr;
}

inline std::string first_string(const nlohmann::json& j, std::initializer_list<const char*> keys) {
  for (const char* k : keys) {
    if (auto it = j.find(k); it != j.end() && it->is_string()) return it->get<std::string>();
  }
  return {};
}

// One entry of a POST /classify "transactions" array.
inline EnrichedTransaction classify_entry(const nlohmann::json& j, std::size_t i) {
  const std::string path = "transactions[" + std::to_string(i) + "]";
  if (!j.is_object()) throw Error(ErrorKind::kValidation, path + ": expected an object");
  EnrichedTransaction tx;
  tx.raw.sha = first_string(j, {"Sha", "sha"});
  if (tx.raw.sha.empty()) throw FieldError(path + ".Sha");
  const std::string date = first_string(j, {"Date", "date"});
  if (date.empty()) throw FieldError(path + ".Date");
  tx.raw.date = parse_timestamp(date);
  const nlohmann::json* amount = nullptr;
  for (const char* k : {"Amount", "amount"}) {
    if (auto it = j.find(k); it != j.end()) amount = &*it;
  }
  if (!amount) throw FieldError(path + ".Amount");
  if (!amount->is_number()) throw Error(ErrorKind::kValidation, path + ".Amount: expected a number");
  tx.raw.amount = amount->get<double>();
  if (tx.raw.amount < 0) {
    tx.raw.type = TxType::kDebit;
    tx.raw.amount = -tx.raw.amount;
  }
  tx.raw.description = first_string(j, {"Description", "description"});
  tx.bank = first_string(j, {"Bank", "bank"});
  tx.industry = first_string(j, {"IndustryCategory", "industry", "Industry"});
  return tx;
}

}  // namespace detail

// Routes requests to the current snapshot. Handlers never mutate a published
// snapshot; POST /train builds a new one behind the writer gate.
class ApiService {
 public:
  ApiService(ServiceConfig config, std::shared_ptr<SessionHolder> session,
             std::shared_ptr<const EnrichmentProvider> provider = nullptr, bool persist = true)
      : config_(std::move(config)), session_(std::move(session)), provider_(std::move(provider)), persist_(persist) {}

  ApiResponse handle(const ApiRequest& req) {
    const auto snap = session_->get();
    ApiResponse res;
    try {
      res = route(req, snap);
    } catch (const Error& e) {
      res.status = status_for(e.kind());
      res.body = {{"error", std::string(error_kind_name(e.kind()))}, {"message", e.what()}};
    } catch (const nlohmann::json::exception& e) {
      res.status = 400;
      res.body = {{"error", "parse"}, {"message", e.what()}};
    } catch (const std::exception& e) {
      res.status = 500;
      res.body = {{"error", "internal"}, {"message", e.what()}};
    }
    if (!res.body.is_object()) res.body = {{"result", res.body}};
    // A successful retrain reports the snapshot it published.
    const auto stamp = req.path == "/train" && res.status == 200 ? session_->get() : snap;
    res.body["model_id"] = stamp ? nlohmann::json(stamp->model_id()) : nlohmann::json(nullptr);
    res.body["schema_version"] = stamp ? nlohmann::json(stamp->schema_version()) : nlohmann::json(nullptr);
    return res;
  }

 private:
  using Snap = std::shared_ptr<const Snapshot>;

  ApiResponse route(const ApiRequest& req, const Snap& snap) {
    const std::string& p = req.path;
    const bool get = req.method == "GET";
    const bool post = req.method == "POST";
    static const std::map<std::string, std::string> kMethods = {
        {"/health", "GET"},        {"/ingest", "POST"},       {"/train", "POST"},  {"/classify", "POST"},
        {"/metrics", "GET"},       {"/transactions", "GET"},  {"/record", "GET"},  {"/search", "GET"},
        {"/neighbors", "GET"},     {"/visualization", "GET"}, {"/whatif", "POST"}, {"/importance", "GET"}};
    auto m = kMethods.find(p);
    if (m == kMethods.end()) return {404, {{"error", "not_found"}, {"message", "no route " + p}}};
    if (req.method != m->second) {
      return {405, {{"error", "method"}, {"message", p + " expects " + m->second}}};
    }
    if (get && p == "/health") return {200, {{"status", "ok"}, {"loaded", snap != nullptr}}};
    if (!snap) return {503, {{"error", "unavailable"}, {"message", "no session loaded"}}};
    const Snapshot& s = *snap;
    if (post && p == "/ingest") return ingest(req, s);
    if (post && p == "/train") return train_route(req, s);
    if (post && p == "/classify") return classify(req, s);
    if (get && p == "/metrics") return metrics(req, s);
    if (get && p == "/transactions") return transactions(req, s);
    if (get && p == "/record") return record(req, s);
    if (get && p == "/search") return search(req, s);
    if (get && p == "/neighbors") return neighbors(req, s);
    if (get && p == "/visualization") return visualization(req, s);
    if (post && p == "/whatif") return whatif(req, s);
    return importance(req, s);
  }

  static nlohmann::json parse_body(const ApiRequest& req) {
    if (req.body.empty()) return nlohmann::json::object();
    try {
      // Same leniency as application documents: trailing commas are accepted.
      return nlohmann::json::parse(detail::blank_trailing_commas(req.body));
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("request body is not JSON", e.byte == 0 ? 0 : e.byte - 1);
    }
  }

  static const PnnModel& require_model(const Snapshot& s) {
    if (!s.model || !s.schema) throw Error(ErrorKind::kConflict, "no model is loaded");
    return *s.model;
  }

  static const EvaluationReport& require_evaluation(const Snapshot& s) {
    if (!s.store.evaluation()) throw Error(ErrorKind::kValidation, "the evidence store has no actual classes");
    return *s.store.evaluation();
  }

  static nlohmann::json classify_documents(const Snapshot& s, std::span<const EnrichedTransaction> txs) {
    const PnnModel& model = require_model(s);
    std::vector<Prediction> preds;
    preds.reserve(txs.size());
    for (const auto& tx : txs) preds.push_back(predict_record(model, build_feature_vector(tx, *s.schema)));
    return {{"final", final_classification_document(preds)}, {"probabilities", probability_document(preds)}};
  }

  ApiResponse ingest(const ApiRequest& req, const Snapshot& s) {
    const RawApplication app = parse_application(req.body);
    const auto flat = flatten(app);
    std::vector<EnrichedTransaction> enriched;
    std::vector<ContextualTransaction> credits;
    std::vector<std::string> warnings;
    for (const auto& ctx : flat) {
      if (ctx.raw.type == TxType::kDebit) {
        warnings.push_back("debit transaction " + ctx.raw.sha + " skipped");
        continue;
      }
      credits.push_back(ctx);
      if (provider_) {
        auto r = enrich(ctx, *provider_);
        enriched.push_back(std::move(r.tx));
        warnings.insert(warnings.end(), r.warnings.begin(), r.warnings.end());
      } else {
        enriched.push_back(without_enrichment(ctx));
      }
    }
    LedgerOutcome outcome;
    {
      std::lock_guard gate(session_->writer_gate());
      if (!ledger_) ledger_ = persist_ ? ledger_for(Workspace(config_.data_dir)) : ShaLedger{};
      ShaLedger trial = *ledger_;
      outcome = trial.accept(credits);
      if (persist_ && !outcome.accepted.empty()) {
        const Workspace ws(config_.data_dir);
        std::string lines;
        for (const auto& tx : ws.unlabeled()) lines += to_json(tx).dump() + "\n";
        const std::set<std::string> fresh(outcome.accepted.begin(), outcome.accepted.end());
        for (const auto& tx : enriched) {
          if (fresh.count(tx.raw.sha)) lines += to_json(tx).dump() + "\n";
        }
        ws.write(kUnlabeledFile, lines);
      }
      *ledger_ = std::move(trial);
    }
    nlohmann::json body = classify_documents(s, enriched);
    body["ApplicationId"] = app.application_id;
    body["accepted"] = outcome.accepted;
    body["already_known"] = outcome.already_known;
    body["warnings"] = warnings;
    return {200, body};
  }

  ApiResponse train_route(const ApiRequest& req, const Snapshot&) {
    const auto body = parse_body(req);
    if (!body.is_object()) throw Error(ErrorKind::kValidation, "train body must be an object");
    ServiceConfig cfg = config_;
    if (auto it = body.find("sigma"); it != body.end() && !it->is_null()) {
      if (!it->is_number() || it->get<double>() <= 0.0) throw Error(ErrorKind::kValidation, "sigma must be a positive number");
      cfg.sigma = it->get<double>();
    }
    if (auto it = body.find("prior_mode"); it != body.end() && !it->is_null()) {
      cfg.prior_mode = parse_prior_mode(it->get<std::string>());
    }
    std::lock_guard gate(session_->writer_gate());
    const auto base = session_->get();
    if (!base->model || base->labeled.empty()) throw Error(ErrorKind::kConflict, "this session has no training data");
    auto next = retrain(*base, cfg);
    if (persist_) persist_model_artifacts(Workspace(config_.data_dir), *next);
    const std::string previous = base->model_id();
    session_->publish(next);
    {
      std::lock_guard lock(cache_mu_);
      importance_cache_.clear();
    }
    return {200,
            {{"previous_model_id", previous},
             {"sigma", next->model->sigma()},
             {"prior_mode", std::string(prior_mode_name(next->model->prior_mode()))},
             {"sigma_selection", next->sigma_info},
             {"holdout", to_json(*next->holdout)}}};
  }

  ApiResponse classify(const ApiRequest& req, const Snapshot& s) {
    const auto body = parse_body(req);
    std::vector<EnrichedTransaction> txs;
    if (body.is_object() && body.contains("BankAccounts")) {
      for (const auto& ctx : flatten(parse_application(req.body))) txs.push_back(without_enrichment(ctx));
    } else {
      const auto it = body.find("transactions");
      if (it == body.end()) throw FieldError("transactions");
      if (!it->is_array()) throw Error(ErrorKind::kValidation, "transactions must be an array");
      for (std::size_t i = 0; i < it->size(); ++i) txs.push_back(detail::classify_entry((*it)[i], i));
    }
    return {200, classify_documents(s, txs)};
  }

  ApiResponse metrics(const ApiRequest& req, const Snapshot& s) {
    const EvaluationReport& report = require_evaluation(s);
    if (auto cls = detail::param(req, "class")) {
      const ClassLabel label = parse_label(*cls);
      return {200, {{"class", std::string(label_name(label))}, {"metrics", detail::class_metrics_json(report, label)}}};
    }
    nlohmann::json body = to_json(report);
    body["scope"] = "evidence";
    if (s.holdout) body["holdout"] = to_json(*s.holdout);
    if (!s.sigma_info.empty()) body["sigma_selection"] = s.sigma_info;
    return {200, body};
  }

  ApiResponse transactions(const ApiRequest& req, const Snapshot& s) {
    const ClassLabel label = parse_label(detail::required_param(req, "class"));
    const auto correct = detail::bool_param(req, "correct");
    const ClassificationView view = s.store.filter_by_classification(label, correct);
    nlohmann::json body = {{"class", std::string(label_name(label))},
                           {"correct", detail::record_list(view.correct)},
                           {"incorrect", detail::record_list(view.incorrect)},
                           {"unlabeled", detail::record_list(view.unlabeled)},
                           {"counts",
                            {{"correct", view.correct.size()},
                             {"incorrect", view.incorrect.size()},
                             {"unlabeled", view.unlabeled.size()}}}};
    body["filter"] = correct ? nlohmann::json(*correct) : nlohmann::json(nullptr);
    body["metrics"] = view.metrics && s.store.evaluation() ? detail::class_metrics_json(*s.store.evaluation(), label)
                                                           : nlohmann::json(nullptr);
    return {200, body};
  }

  ApiResponse record(const ApiRequest& req, const Snapshot& s) {
    const EvidenceRecord& rec = s.store.at(detail::required_param(req, "sha"));
    nlohmann::json body = detail::record_summary(rec);
    nlohmann::json groups = nlohmann::json::object();
    for (FeatureGroupId g : kAllFeatureGroups) {
      const auto v = rec.features.group(g);
      groups[std::string(group_name(g))] = std::vector<double>(v.begin(), v.end());
    }
    body["features"] = groups;
    body["enrichment_tags"] = to_json(rec.tx)["enrichment_tags"];
    body["type"] = std::string(tx_type_name(rec.tx.raw.type));
    return {200, body};
  }

  ApiResponse search(const ApiRequest& req, const Snapshot& s) {
    const std::string term = detail::required_param(req, "term");
    const std::string match = detail::param(req, "match").value_or("contains");
    const SearchResult r = s.store.search(term, parse_match_mode(match));
    return {200,
            {{"term", term},
             {"match", match},
             {"correct", detail::record_list(r.correct)},
             {"incorrect", detail::record_list(r.incorrect)},
             {"unlabeled", detail::record_list(r.unlabeled)},
             {"counts", {{"correct", r.correct.size()}, {"incorrect", r.incorrect.size()}, {"unlabeled", r.unlabeled.size()}}}}};
  }

  ApiResponse neighbors(const ApiRequest& req, const Snapshot& s) {
    const std::string sha = detail::required_param(req, "sha");
    const auto groups = detail::group_list(detail::param(req, "groups").value_or(""));
    const std::size_t k = detail::unsigned_param(req, "k", 5);
    const auto found = s.store.neighbors(sha, groups, k);
    nlohmann::json list = nlohmann::json::array();
    for (const auto& n : found) {
      auto j = detail::record_summary(*n.record);
      j["distance"] = n.distance;
      list.push_back(std::move(j));
    }
    nlohmann::json names = nlohmann::json::array();
    for (FeatureGroupId g : groups.empty() ? std::vector<FeatureGroupId>(kAllFeatureGroups.begin(), kAllFeatureGroups.end()) : groups) {
      names.push_back(std::string(group_name(g)));
    }
    return {200, {{"sha", sha}, {"groups", names}, {"k", k}, {"neighbors", list}}};
  }

  ApiResponse visualization(const ApiRequest& req, const Snapshot& s) {
    const ClassLabel focus = parse_label(detail::required_param(req, "class"));
    const FeatureGroupId axis = parse_group(detail::param(req, "axis").value_or("amount"));
    const auto points = s.store.visualization_data(focus, axis);
    nlohmann::json arr = nlohmann::json::array();
    std::map<std::string, std::size_t> legend = {{"TP", 0}, {"FP", 0}, {"TN", 0}, {"FN", 0}};
    for (const auto& pt : points) {
      ++legend[std::string(outcome_name(pt.outcome))];
      arr.push_back({{"sha", pt.sha}, {"x", pt.x}, {"y", pt.probability_of_focus}, {"outcome", std::string(outcome_name(pt.outcome))}});
    }
    return {200,
            {{"class", std::string(label_name(focus))}, {"axis", std::string(group_name(axis))}, {"points", arr}, {"legend", legend}}};
  }

  ApiResponse whatif(const ApiRequest& req, const Snapshot& s) {
    const auto body = parse_body(req);
    if (!body.is_object()) throw Error(ErrorKind::kValidation, "whatif body must be an object");
    if (!body.contains("sha")) throw FieldError("sha");
    const EvidenceRecord& rec = s.store.at(body.at("sha").get<std::string>());
    Overrides overrides;
    if (auto it = body.find("overrides"); it != body.end() && !it->is_null()) {
      if (!it->is_object()) throw Error(ErrorKind::kValidation, "overrides must be an object");
      for (const auto& [k, v] : it->items()) overrides[k] = v;
    }
    return {200, to_json(what_if(require_model(s), *s.schema, rec.tx, overrides))};
  }

  ApiResponse importance(const ApiRequest& req, const Snapshot& s) {
    const PnnModel& model = require_model(s);
    ImportanceOptions opts;
    opts.repeats = detail::unsigned_param(req, "repeats", opts.repeats);
    opts.seed = detail::unsigned_param(req, "seed", opts.seed);
    if (auto m = detail::param(req, "metric")) opts.metric = parse_importance_metric(*m);
    const double threshold = detail::param(req, "threshold") ? std::stod(*detail::param(req, "threshold")) : 0.005;
    const auto key = std::make_tuple(model.model_id(), opts.repeats, opts.seed, static_cast<int>(opts.metric));

    std::optional<ImportanceReport> report;
    {
      std::lock_guard lock(cache_mu_);
      if (auto it = importance_cache_.find(key); it != importance_cache_.end()) report = it->second;
    }
    if (!report && persist_) {
      const Workspace ws(config_.data_dir);
      if (ws.has(kImportanceFile)) {
        auto cached = importance_from_json(nlohmann::json::parse(ws.read(kImportanceFile)));
        if (cached.model_id == model.model_id() && cached.seed == opts.seed && cached.metric == opts.metric &&
            !cached.groups.empty() && cached.groups.front().drops.size() == opts.repeats) {
          report = std::move(cached);
        }
      }
    }
    if (!report) {
      auto rows = s.holdout_rows();
      if (rows.empty()) rows = s.labeled;
      report = permutation_importance(model, rows, opts);
      if (persist_) Workspace(config_.data_dir).write(kImportanceFile, to_json(*report).dump(2));
    }
    {
      std::lock_guard lock(cache_mu_);
      importance_cache_.emplace(key, *report);
    }
    nlohmann::json body = to_json(*report);
    nlohmann::json keep = nlohmann::json::array();
    nlohmann::json drop = nlohmann::json::array();
    const auto kept = importance_feedback(*report, threshold);
    for (FeatureGroupId g : report->ranking()) {
      const bool k = std::find(kept.begin(), kept.end(), g) != kept.end();
      (k ? keep : drop).push_back(std::string(group_name(g)));
    }
    body["feedback"] = {{"threshold", threshold}, {"retain", keep}, {"candidates_for_removal", drop}};
    return {200, body};
  }

  ServiceConfig config_;
  std::shared_ptr<SessionHolder> session_;
  std::shared_ptr<const EnrichmentProvider> provider_;
  bool persist_;
  std::optional<ShaLedger> ledger_;  // guarded by the writer gate
  std::mutex cache_mu_;
  std::map<std::tuple<std::string, std::size_t, std::uint64_t, int>, ImportanceReport> importance_cache_;
};

}  // namespace bankxai
