#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bankxai/class_label.hpp"
#include "bankxai/error.hpp"
#include "bankxai/featurize.hpp"
#include "bankxai/hash.hpp"
#include "bankxai/metrics.hpp"
#include "bankxai/prediction.hpp"

namespace bankxai {

enum class PriorMode { kEmpirical, kUniform };

inline std::string_view prior_mode_name(PriorMode mode) {
  return mode == PriorMode::kUniform ? "uniform" : "empirical";
}

inline PriorMode parse_prior_mode(std::string_view name) {
  if (name == "uniform") return PriorMode::kUniform;
  if (name == "empirical") return PriorMode::kEmpirical;
  throw Error(ErrorKind::kValidation, "unknown prior mode '" + std::string(name) + "'");
}

inline constexpr double kDefaultSigma = 0.2;
inline constexpr std::array<double, 5> kDefaultSigmaGrid = {0.05, 0.1, 0.2, 0.5, 1.0};

// Per-class exemplar storage, row-major.
struct ExemplarBlock {
  std::vector<double> data;
  std::size_t count = 0;

  std::span<const double> row(std::size_t i, std::size_t dim) const {
    return std::span<const double>(data).subspan(i * dim, dim);
  }
  friend bool operator==(const ExemplarBlock&, const ExemplarBlock&) = default;
};

// Probabilistic neural network: one Gaussian pattern unit per stored
// exemplar, per-class averaging in the summation layer, prior-weighted
// normalization in the output layer. Immutable once trained.
class PnnModel {
 public:
  PnnModel(std::array<ExemplarBlock, kNumClasses> exemplars, std::size_t dimension, double sigma,
           ClassProbabilities priors, PriorMode prior_mode, std::uint64_t schema_version)
      : exemplars_(std::move(exemplars)),
        dimension_(dimension),
        sigma_(sigma),
        priors_(priors),
        prior_mode_(prior_mode),
        schema_version_(schema_version) {
    if (!(sigma_ > 0.0) || !std::isfinite(sigma_)) throw Error(ErrorKind::kValidation, "sigma must be positive");
    double prior_sum = 0.0;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      if (exemplars_[k].count == 0) {
        throw Error(ErrorKind::kValidation, "class " + std::string(label_name(label_at(k))) + " has no exemplars");
      }
      if (exemplars_[k].data.size() != exemplars_[k].count * dimension_) {
        throw Error(ErrorKind::kValidation, "exemplar block size mismatch");
      }
      if (!(priors_[k] >= 0.0)) throw Error(ErrorKind::kValidation, "priors must be non-negative");
      prior_sum += priors_[k];
    }
    if (std::abs(prior_sum - 1.0) > 1e-9) throw Error(ErrorKind::kValidation, "priors must sum to 1");
    model_id_ = compute_id();
  }

  const std::string& model_id() const { return model_id_; }
  std::uint64_t schema_version() const { return schema_version_; }
  std::size_t dimension() const { return dimension_; }
  double sigma() const { return sigma_; }
  PriorMode prior_mode() const { return prior_mode_; }
  const ClassProbabilities& priors() const { return priors_; }
  const ExemplarBlock& exemplars(ClassLabel label) const { return exemplars_[index_of(label)]; }
  std::size_t exemplar_count() const {
    std::size_t n = 0;
    for (const auto& b : exemplars_) n += b.count;
    return n;
  }

  void check_input(std::span<const double> x) const {
    if (x.size() != dimension_) {
      throw Error(ErrorKind::kValidation, "input length " + std::to_string(x.size()) +
                                              " does not match model dimension " + std::to_string(dimension_));
    }
  }

 private:
  std::string compute_id() const {
    std::uint64_t h = kFnvOffsetBasis;
    auto mix_bytes = [&h](const void* p, std::size_t n) {
      h = fnv1a64(std::string_view(static_cast<const char*>(p), n), h);
    };
    mix_bytes(&schema_version_, sizeof schema_version_);
    mix_bytes(&dimension_, sizeof dimension_);
    mix_bytes(&sigma_, sizeof sigma_);
    mix_bytes(priors_.data(), sizeof(double) * priors_.size());
    for (const auto& block : exemplars_) {
      mix_bytes(&block.count, sizeof block.count);
      mix_bytes(block.data.data(), sizeof(double) * block.data.size());
    }
    return "pnn-" + hex64(h);
  }

  std::array<ExemplarBlock, kNumClasses> exemplars_;
  std::size_t dimension_ = 0;
  double sigma_ = kDefaultSigma;
  ClassProbabilities priors_{};
  PriorMode prior_mode_ = PriorMode::kEmpirical;
  std::uint64_t schema_version_ = 0;
  std::string model_id_;
};

struct LabeledFeatures {
  FeatureVector features;
  ClassLabel label = ClassLabel::kOther;
};

struct TrainOptions {
  double sigma = kDefaultSigma;
  PriorMode prior_mode = PriorMode::kEmpirical;
};

// Training stores the exemplars verbatim; there is no iteration.
inline PnnModel train(std::span<const LabeledFeatures> labeled, const TrainOptions& options = {}) {
  if (labeled.empty()) throw Error(ErrorKind::kValidation, "class FUNDING has no exemplars");
  const std::size_t dim = labeled.front().features.values.size();
  const std::uint64_t version = labeled.front().features.schema_version;
  std::array<ExemplarBlock, kNumClasses> blocks;
  for (const auto& row : labeled) {
    if (row.features.values.size() != dim) {
      throw Error(ErrorKind::kValidation, "inconsistent feature vector lengths (" + std::to_string(dim) + " vs " +
                                              std::to_string(row.features.values.size()) + ")");
    }
    if (row.features.schema_version != version) {
      throw Error(ErrorKind::kValidation, "training rows span several schema versions");
    }
    ExemplarBlock& b = blocks[index_of(row.label)];
    b.data.insert(b.data.end(), row.features.values.begin(), row.features.values.end());
    ++b.count;
  }
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    if (blocks[k].count == 0) {
      throw Error(ErrorKind::kValidation, "class " + std::string(label_name(label_at(k))) + " has no exemplars");
    }
  }
  ClassProbabilities priors{};
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    priors[k] = options.prior_mode == PriorMode::kUniform
                    ? 1.0 / static_cast<double>(kNumClasses)
                    : static_cast<double>(blocks[k].count) / static_cast<double>(labeled.size());
  }
  return PnnModel(std::move(blocks), dim, options.sigma, priors, options.prior_mode, version);
}

// ---------------------------------------------------------------------------
// Pattern and summation layers.

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Squared distance from x to every exemplar, grouped by class.
using ClassDistances = std::array<std::vector<double>, kNumClasses>;

inline ClassDistances class_squared_distances(const PnnModel& model, std::span<const double> x) {
  model.check_input(x);
  ClassDistances out;
  const std::size_t dim = model.dimension();
  for (ClassLabel label : kAllClasses) {
    const ExemplarBlock& block = model.exemplars(label);
    auto& d = out[index_of(label)];
    d.resize(block.count);
    for (std::size_t i = 0; i < block.count; ++i) d[i] = squared_distance(x, block.row(i, dim));
  }
  return out;
}

using ClassDensities = std::array<double, kNumClasses>;

// f_k = (1/n_k) * sum_i exp(-d_ki^2 / (2 sigma^2))
inline ClassDensities densities_from_distances(const ClassDistances& distances, double sigma) {
  const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
  ClassDensities f{};
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    double sum = 0.0;
    for (double d2 : distances[k]) sum += std::exp(-d2 * inv_two_sigma_sq);
    f[k] = distances[k].empty() ? 0.0 : sum / static_cast<double>(distances[k].size());
  }
  return f;
}

inline ClassDensities class_densities(const PnnModel& model, std::span<const double> x) {
  return densities_from_distances(class_squared_distances(model, x), model.sigma());
}

// Output layer. Falls back to the priors when every weighted density
// underflows to zero.
inline ClassProbabilities posterior(const ClassDensities& densities, const ClassProbabilities& priors) {
  ClassProbabilities p{};
  double denom = 0.0;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    p[k] = priors[k] * densities[k];
    denom += p[k];
  }
  if (!(denom > 0.0) || !std::isfinite(denom)) return priors;
  for (double& v : p) v /= denom;
  return p;
}

inline ClassProbabilities predict_proba(const PnnModel& model, std::span<const double> x) {
  return posterior(class_densities(model, x), model.priors());
}

inline ClassLabel predict(const PnnModel& model, std::span<const double> x) {
  return argmax(predict_proba(model, x));
}

inline Prediction predict_record(const PnnModel& model, const FeatureVector& fv) {
  if (fv.schema_version != model.schema_version()) {
    throw Error(ErrorKind::kValidation, "feature vector " + fv.sha + " built under schema " +
                                            std::to_string(fv.schema_version) + ", model expects " +
                                            std::to_string(model.schema_version()));
  }
  Prediction p;
  p.sha = fv.sha;
  p.probabilities = predict_proba(model, fv.values);
  p.final = argmax(p.probabilities);
  p.model_id = model.model_id();
  return p;
}

// ---------------------------------------------------------------------------
// Smoothing-width selection.

struct SigmaCandidate {
  double sigma = 0.0;
  double macro_f1 = 0.0;
};

struct SigmaSearchResult {
  double best_sigma = kDefaultSigma;
  std::vector<SigmaCandidate> candidates;
};

// Trains on `train`, scores each grid value by macro-F1 on `validation`, and
// keeps the best (earliest grid value on ties). Distances are computed once
// and reused for every sigma.
inline SigmaSearchResult select_sigma(std::span<const LabeledFeatures> train_rows,
                                      std::span<const LabeledFeatures> validation,
                                      std::span<const double> grid, PriorMode prior_mode = PriorMode::kEmpirical) {
  if (grid.empty()) throw Error(ErrorKind::kValidation, "sigma grid is empty");
  if (validation.empty()) throw Error(ErrorKind::kValidation, "validation split is empty");
  const PnnModel base = train(train_rows, TrainOptions{grid.front(), prior_mode});
  std::vector<ClassDistances> distances;
  distances.reserve(validation.size());
  for (const auto& row : validation) distances.push_back(class_squared_distances(base, row.features.values));

  SigmaSearchResult result;
  double best = -1.0;
  for (double sigma : grid) {
    if (!(sigma > 0.0)) throw Error(ErrorKind::kValidation, "sigma grid values must be positive");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < validation.size(); ++i) {
      const auto p = posterior(densities_from_distances(distances[i], sigma), base.priors());
      cm.add(validation[i].label, argmax(p));
    }
    const double f1 = evaluate(cm).macro_f1();
    result.candidates.push_back({sigma, f1});
    if (f1 > best) {
      best = f1;
      result.best_sigma = sigma;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Persistence: {model_id, schema_version, sigma, priors, exemplars per class}.

inline nlohmann::json to_json(const PnnModel& model) {
  nlohmann::json priors = nlohmann::json::object();
  nlohmann::json exemplars = nlohmann::json::object();
  for (ClassLabel label : kAllClasses) {
    const std::string key(label_key(label));
    priors[key] = model.priors()[index_of(label)];
    nlohmann::json rows = nlohmann::json::array();
    const ExemplarBlock& block = model.exemplars(label);
    for (std::size_t i = 0; i < block.count; ++i) {
      auto r = block.row(i, model.dimension());
      rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    exemplars[key] = std::move(rows);
  }
  return {{"model_id", model.model_id()},
          {"schema_version", model.schema_version()},
          {"sigma", model.sigma()},
          {"prior_mode", std::string(prior_mode_name(model.prior_mode()))},
          {"dimension", model.dimension()},
          {"priors", priors},
          {"exemplars", exemplars}};
}

inline PnnModel model_from_json(const nlohmann::json& j) {
  const std::size_t dim = j.at("dimension").get<std::size_t>();
  std::array<ExemplarBlock, kNumClasses> blocks;
  ClassProbabilities priors{};
  for (ClassLabel label : kAllClasses) {
    const std::string key(label_key(label));
    priors[index_of(label)] = j.at("priors").at(key).get<double>();
    ExemplarBlock& block = blocks[index_of(label)];
    for (const auto& row : j.at("exemplars").at(key)) {
      auto values = row.get<std::vector<double>>();
      if (values.size() != dim) throw Error(ErrorKind::kSchema, "exemplar length does not match model dimension");
      block.data.insert(block.data.end(), values.begin(), values.end());
      ++block.count;
    }
  }
  PnnModel model(std::move(blocks), dim, j.at("sigma").get<double>(), priors,
                 parse_prior_mode(j.value("prior_mode", std::string("empirical"))),
                 j.at("schema_version").get<std::uint64_t>());
  if (auto it = j.find("model_id"); it != j.end() && it->get<std::string>() != model.model_id()) {
    throw Error(ErrorKind::kSchema, "model_id does not match model content");
  }
  return model;
}

}  // namespace bankxai
