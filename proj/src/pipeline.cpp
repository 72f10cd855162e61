#include "htd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "htd/baseline.hpp"
#include "htd/rng.hpp"

namespace htd::pipeline {

namespace {

constexpr std::uint64_t kValidationTag = 0x56414C00ULL;

std::vector<text::TokenList> tokenize_all(std::span<const corpus::LabeledExample> examples,
                                          std::span<const std::uint32_t> indices)
{
    std::vector<text::TokenList> out;
    out.reserve(indices.size());
    for (auto i : indices)
        out.push_back(text::clean_and_tokenize(examples[i].text));
    return out;
}

std::vector<net::LabeledInput> to_inputs(const net::TextContext& ctx, const net::ModelConfig& config,
                                         std::span<const text::TokenList> docs,
                                         std::span<const corpus::LabeledExample> examples,
                                         std::span<const std::uint32_t> indices)
{
    std::vector<net::LabeledInput> out;
    out.reserve(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k)
        out.push_back({net::make_input(ctx, config, docs[k], true), corpus::to_int(examples[indices[k]].label)});
    return out;
}

MetricSummary summary_of(const eval::MetricsReport& r) { return {r.accuracy, r.precision, r.recall, r.f1}; }

} // namespace

persist::ModelSettings apply_overrides(persist::ModelSettings base, const nlohmann::json& overrides,
                                       std::vector<std::string>* warnings)
{
    if (!overrides.is_object())
        throw persist::PersistError(persist::PersistError::Kind::BadValue, "", "configuration must be a JSON object");
    const std::map<std::string, std::vector<std::string>> settable = {
        {"model",
         {"embed_dim", "seq_len", "kernel_widths", "filters", "gru_hidden", "dense_hidden", "use_tfidf_aux",
          "aux_dim", "dropout_rate", "seed"}},
        {"training", {"epochs", "batch_size", "learning_rate", "early_stop_patience"}},
        {"vocabulary", {"max_size", "min_df"}},
        {"split", {"seed", "ratio", "val_ratio"}},
    };
    nlohmann::json patch = nlohmann::json::object();
    for (const auto& [section, body] : overrides.items()) {
        const auto known = settable.find(section);
        if (known == settable.end() || !body.is_object()) {
            if (warnings && section != "format_version")
                warnings->push_back(fmt::format("config field '{}' ignored (not settable)", section));
            continue;
        }
        for (const auto& [key, value] : body.items()) {
            if (std::find(known->second.begin(), known->second.end(), key) == known->second.end()) {
                if (warnings)
                    warnings->push_back(fmt::format("config field '{}.{}' ignored (not settable)", section, key));
                continue;
            }
            patch[section][key] = value;
        }
    }
    auto merged = persist::to_json(base);
    merged.merge_patch(patch);
    return persist::settings_from_json(merged, nullptr);
}

FitOutcome fit_model(std::span<const corpus::LabeledExample> examples, std::span<const std::uint32_t> train_indices,
                     const persist::ModelSettings& settings, std::uint64_t split_tag, const net::EpochCallback& on_epoch)
{
    FitOutcome out;
    std::vector<corpus::Label> labels;
    for (auto i : train_indices)
        labels.push_back(examples[i].label);
    try {
        const auto carve = corpus::split_train_test(labels, settings.val_ratio,
                                                    derive_seed(settings.split_seed, kValidationTag + split_tag));
        for (auto k : carve.train_indices)
            out.fit_indices.push_back(train_indices[k]);
        for (auto k : carve.test_indices)
            out.val_indices.push_back(train_indices[k]);
    } catch (const corpus::SplitError& e) {
        if (e.kind() != corpus::SplitError::Kind::InsufficientData)
            throw;
        out.fit_indices.assign(train_indices.begin(), train_indices.end());
        out.val_indices = out.fit_indices;
        out.validation_is_fit_set = true;
    }

    const auto fit_docs = tokenize_all(examples, out.fit_indices);
    const auto val_docs = tokenize_all(examples, out.val_indices);

    auto& b = out.bundle;
    b.settings = settings;
    b.context.vocab = text::fit_vocab(fit_docs, settings.max_vocab, settings.min_df);
    // TF-IDF statistics are only ever read for vocabulary terms.
    const auto full = text::tfidf_fit(fit_docs);
    text::TfIdfModel::DocFreq df;
    for (const auto& [term, count] : full.doc_freq())
        if (b.context.vocab.find(term))
            df.emplace(term, count);
    b.context.tfidf = text::TfIdfModel(full.n_documents(), std::move(df));
    b.settings.model.vocab_size = b.context.vocab.size();
    b.settings.tfidf_documents = full.n_documents();

    const auto fit_set = to_inputs(b.context, b.settings.model, fit_docs, examples, out.fit_indices);
    const auto val_set = to_inputs(b.context, b.settings.model, val_docs, examples, out.val_indices);
    auto result = net::train(net::init_params(b.settings.model), b.settings.model, fit_set, val_set,
                             b.settings.hyper, on_epoch);
    // Keep exactly what the weights archive can hold, so a reloaded model
    // scores identically to this one.
    b.params = persist::round_to_f32(result.params);
    out.report = std::move(result.report);
    return out;
}

Scored score_examples(const persist::ModelBundle& bundle, std::span<const corpus::LabeledExample> examples,
                      std::span<const std::uint32_t> indices)
{
    std::vector<std::uint32_t> all;
    if (indices.empty()) {
        all.resize(examples.size());
        std::iota(all.begin(), all.end(), 0u);
        indices = all;
    }
    const auto docs = tokenize_all(examples, indices);
    std::vector<net::ModelInput> inputs;
    Scored s;
    for (std::size_t k = 0; k < indices.size(); ++k) {
        inputs.push_back(net::make_input(bundle.context, bundle.settings.model, docs[k], true));
        s.labels.push_back(corpus::to_int(examples[indices[k]].label));
    }
    s.scores = net::score_all(bundle.params, bundle.settings.model, inputs);
    for (double v : s.scores)
        s.predictions.push_back(net::label_for(v));
    return s;
}

TrainOutcome train_on_corpus(const corpus::Corpus& corpus, const persist::ModelSettings& settings,
                             const net::EpochCallback& on_epoch)
{
    const auto examples = corpus::expand_examples(corpus);
    TrainOutcome t;
    t.split = corpus::split_train_test(std::span<const corpus::LabeledExample>(examples), settings.split_ratio,
                                       settings.split_seed);
    t.fit = fit_model(examples, t.split.train_indices, settings, 0, on_epoch);
    t.test_scores = score_examples(t.fit.bundle, examples, t.split.test_indices);
    t.test = eval::evaluate(t.test_scores.predictions, t.test_scores.labels);

    const auto& ctx = t.fit.bundle.context;
    auto features = [&](std::span<const std::uint32_t> idx) {
        std::vector<net::SparseFeatures> f;
        for (const auto& doc : tokenize_all(examples, idx))
            f.push_back(text::tfidf_features(ctx.tfidf, ctx.vocab, doc, true));
        return f;
    };
    std::vector<int> fit_labels;
    for (auto i : t.fit.fit_indices)
        fit_labels.push_back(corpus::to_int(examples[i].label));
    const auto baseline = net::fit_baseline(features(t.fit.fit_indices), fit_labels, ctx.vocab.size());
    std::vector<int> baseline_predictions;
    for (const auto& f : features(t.split.test_indices))
        baseline_predictions.push_back(net::label_for(baseline.score(f)));
    t.baseline_test = eval::evaluate(baseline_predictions, t.test_scores.labels);
    return t;
}

CrossValResult cross_validate(const corpus::Corpus& corpus, const persist::ModelSettings& settings, std::uint32_t k,
                              const net::EpochCallback& on_epoch)
{
    const auto examples = corpus::expand_examples(corpus);
    const auto plan = corpus::kfold(std::span<const corpus::LabeledExample>(examples), k, settings.split_seed);
    CrossValResult r;
    r.k = k;
    for (std::uint32_t f = 0; f < k; ++f) {
        std::vector<std::uint32_t> train_idx;
        for (std::uint32_t g = 0; g < k; ++g)
            if (g != f)
                train_idx.insert(train_idx.end(), plan.folds[g].begin(), plan.folds[g].end());
        const auto fit = fit_model(examples, train_idx, settings, f + 1, on_epoch);
        const auto s = score_examples(fit.bundle, examples, plan.folds[f]);
        r.confusion.push_back(eval::confusion(s.predictions, s.labels));
        r.folds.push_back(eval::metrics(r.confusion.back()));
    }

    const double n = static_cast<double>(k);
    auto field = [](MetricSummary& m, int i) -> double& {
        return i == 0 ? m.accuracy : i == 1 ? m.precision : i == 2 ? m.recall : m.f1;
    };
    for (int i = 0; i < 4; ++i) {
        double sum = 0.0;
        for (const auto& fold : r.folds) {
            auto s = summary_of(fold);
            sum += field(s, i);
        }
        const double mean = sum / n;
        double sq = 0.0;
        for (const auto& fold : r.folds) {
            auto s = summary_of(fold);
            sq += (field(s, i) - mean) * (field(s, i) - mean);
        }
        field(r.mean, i) = mean;
        field(r.sd, i) = k > 1 ? std::sqrt(sq / (n - 1.0)) : 0.0;
    }
    return r;
}

nlohmann::json to_json(const net::TrainReport& r)
{
    return {{"train_loss", r.train_loss},
            {"val_accuracy", r.val_accuracy},
            {"val_loss", r.val_loss},
            {"epochs_run", r.epochs_run},
            {"best_epoch", r.best_epoch},
            {"early_stopped", r.early_stopped}};
}

nlohmann::json to_json(const TrainOutcome& t)
{
    return {{"training", to_json(t.fit.report)},
            {"split",
             {{"seed", t.split.seed},
              {"ratio", t.split.ratio},
              {"train_examples", t.split.train_indices.size()},
              {"test_examples", t.split.test_indices.size()},
              {"fit_examples", t.fit.fit_indices.size()},
              {"validation_examples", t.fit.val_indices.size()},
              {"validation_is_fit_set", t.fit.validation_is_fit_set}}},
            {"vocab_size", t.fit.bundle.context.vocab.size()},
            {"test", eval::to_json(t.test)},
            {"baseline_test", eval::to_json(t.baseline_test)}};
}

nlohmann::json to_json(const CrossValResult& r)
{
    auto summary = [](const MetricSummary& m) {
        return nlohmann::json{{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
    };
    nlohmann::json folds = nlohmann::json::array();
    for (std::size_t i = 0; i < r.folds.size(); ++i)
        folds.push_back({{"fold", i + 1}, {"confusion", eval::to_json(r.confusion[i])},
                         {"metrics", eval::to_json(r.folds[i])}});
    return {{"k", r.k}, {"folds", folds}, {"mean", summary(r.mean)}, {"sd", summary(r.sd)}};
}

std::string render_text(const TrainOutcome& t)
{
    const auto& rep = t.fit.report;
    std::string out = "Training\n";
    out += fmt::format("  examples   fit {}  validation {}{}  test {}\n", t.fit.fit_indices.size(),
                       t.fit.val_indices.size(), t.fit.validation_is_fit_set ? " (reuses fit set)" : "",
                       t.split.test_indices.size());
    out += fmt::format("  vocabulary {} ids\n", t.fit.bundle.context.vocab.size());
    out += "  epoch  train_loss  val_accuracy  val_loss\n";
    for (std::size_t e = 0; e < rep.epochs_run; ++e)
        out += fmt::format("  {:>5}  {:>10.6f}  {:>12.6f}  {:>8.6f}{}\n", e + 1, rep.train_loss[e],
                           rep.val_accuracy[e], rep.val_loss[e], e + 1 == rep.best_epoch ? "  *" : "");
    out += fmt::format("  kept epoch {}{}\n\n", rep.best_epoch, rep.early_stopped ? " (stopped early)" : "");
    out += "Held-out test split\n";
    out += eval::render_text(t.test);
    out += "\nComparison on the test split\n";
    out += eval::comparative_report({{"hybrid CNN+GRU", t.test.metrics.accuracy, t.test.metrics.f1},
                                     {"TF-IDF logistic regression", t.baseline_test.metrics.accuracy,
                                      t.baseline_test.metrics.f1}});
    return out;
}

std::string render_text(const CrossValResult& r)
{
    std::string out = fmt::format("{}-fold cross-validation\n", r.k);
    out += fmt::format("  {:<6} {:>15} {:>15} {:>15} {:>15}\n", "fold", "accuracy", "precision", "recall", "f1");
    for (std::size_t i = 0; i < r.folds.size(); ++i) {
        const auto& m = r.folds[i];
        out += fmt::format("  {:<6} {:>15.6f} {:>15.6f} {:>15.6f} {:>15.6f}\n", i + 1, m.accuracy, m.precision,
                           m.recall, m.f1);
    }
    auto cell = [](double mean, double sd) { return fmt::format("{:.4f}+-{:.4f}", mean, sd); };
    out += fmt::format("  {:<6} {:>15} {:>15} {:>15} {:>15}\n", "mean", cell(r.mean.accuracy, r.sd.accuracy),
                       cell(r.mean.precision, r.sd.precision), cell(r.mean.recall, r.sd.recall),
                       cell(r.mean.f1, r.sd.f1));
    return out;
}

} // namespace htd::pipeline
