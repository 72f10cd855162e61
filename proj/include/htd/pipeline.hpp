#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "htd/corpus.hpp"
#include "htd/evalstats.hpp"
#include "htd/persist.hpp"
#include "htd/train.hpp"

// End-to-end workflows over a corpus: fit a model on a stratified split,
// score a corpus with a saved model, and k-fold cross-validation.
namespace htd::pipeline {

/// Overlays a (possibly partial) settings document onto `base`. Accepts the
/// same sections as config.json; fields that the user cannot set (vocab_size,
/// TF-IDF document count) and unknown fields are reported in `warnings`.
persist::ModelSettings apply_overrides(persist::ModelSettings base, const nlohmann::json& overrides,
                                       std::vector<std::string>* warnings);

struct FitOutcome {
    persist::ModelBundle bundle;
    net::TrainReport report;
    std::vector<std::uint32_t> fit_indices; // examples used for gradient steps
    std::vector<std::uint32_t> val_indices; // examples used for early stopping
    // True when the training portion was too small to hold out a stratified
    // validation subset, so validation reused the fitting examples.
    bool validation_is_fit_set = false;
};

/// Fits vocabulary, TF-IDF statistics and the network on
/// examples[train_indices]. `split_tag` decorrelates the validation carve-out
/// of different callers (e.g. cross-validation folds). The fitted parameters
/// are rounded to f32, the precision of the weights archive.
FitOutcome fit_model(std::span<const corpus::LabeledExample> examples, std::span<const std::uint32_t> train_indices,
                     const persist::ModelSettings& settings, std::uint64_t split_tag = 0,
                     const net::EpochCallback& on_epoch = {});

struct Scored {
    std::vector<double> scores;
    std::vector<int> predictions;
    std::vector<int> labels;
};

/// Scores examples with a saved model. Texts without tokens are read as a
/// single out-of-vocabulary token, as during training.
Scored score_examples(const persist::ModelBundle& bundle, std::span<const corpus::LabeledExample> examples,
                      std::span<const std::uint32_t> indices = {});

struct TrainOutcome {
    FitOutcome fit;
    corpus::SplitPlan split;
    Scored test_scores;
    eval::EvaluationReport test;
    eval::EvaluationReport baseline_test; // TF-IDF logistic regression
};

TrainOutcome train_on_corpus(const corpus::Corpus& corpus, const persist::ModelSettings& settings,
                             const net::EpochCallback& on_epoch = {});

struct MetricSummary {
    double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct CrossValResult {
    std::uint32_t k = 0;
    std::vector<eval::ConfusionMatrix> confusion;
    std::vector<eval::MetricsReport> folds;
    MetricSummary mean, sd; // sample standard deviation (n - 1)
};

CrossValResult cross_validate(const corpus::Corpus& corpus, const persist::ModelSettings& settings, std::uint32_t k,
                              const net::EpochCallback& on_epoch = {});

nlohmann::json to_json(const net::TrainReport& r);
nlohmann::json to_json(const TrainOutcome& t);
nlohmann::json to_json(const CrossValResult& r);
std::string render_text(const TrainOutcome& t);
std::string render_text(const CrossValResult& r);

} // namespace htd::pipeline
