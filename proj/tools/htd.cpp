// htd: train, evaluate, cross-validate and run the human/AI text classifier.
//
// Exit codes: 0 success, 2 usage / schema / I/O / artifact error, 3 training
// error (degenerate data, divergence), 4 input text without tokens.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <omp.h>
#include <openssl/evp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "htd/corpus.hpp"
#include "htd/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace htd;

namespace {

enum ExitCode : int { kOk = 0, kInternal = 1, kUsage = 2, kTraining = 3, kEmptyText = 4 };

class Stopwatch {
public:
    double seconds() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string sha256_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        return "";
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0)
        EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    std::string hex;
    for (unsigned int i = 0; i < len; ++i)
        hex += fmt::format("{:02x}", digest[i]);
    return hex;
}

// Run record written after every successful command.
struct Manifest {
    std::string command;
    std::vector<std::string> argv;
    json config;
    std::uint64_t seed = 0;
    json inputs = json::object();
    json outputs = json::object();
    json timings = json::object();

    json to_json() const
    {
        json sums = json::object();
        for (const auto* group : {&inputs, &outputs})
            for (const auto& [name, path] : group->items())
                if (path.is_string() && fs::is_regular_file(path.get<std::string>()))
                    sums[path.get<std::string>()] = sha256_file(path.get<std::string>());
        return {{"command", command},
                {"argv", argv},
                {"config", config},
                {"seed", seed},
                {"inputs", inputs},
                {"outputs", outputs},
                {"timings_seconds", timings},
                {"checksums_sha256", sums},
                {"threads", omp_get_max_threads()}};
    }
};

// Written to `path` when given, otherwise logged as one line on stderr.
void emit_manifest(const Manifest& m, const std::string& path)
{
    const auto doc = m.to_json();
    if (path.empty()) {
        spdlog::info("manifest {}", doc.dump());
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << doc.dump(2) << '\n';
    if (!out)
        throw persist::PersistError(persist::PersistError::Kind::Io, path, "cannot write manifest " + path);
}

void write_text(const fs::path& path, const std::string& body)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << body;
    if (!out)
        throw persist::PersistError(persist::PersistError::Kind::Io, path.string(), "cannot write " + path.string());
}

void configure_logging()
{
    auto logger = spdlog::stderr_color_mt("htd");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    const char* env = std::getenv("HTD_LOG");
    const std::string level = env ? env : "info";
    if (level == "error")
        spdlog::set_level(spdlog::level::err);
    else if (level == "debug")
        spdlog::set_level(spdlog::level::debug);
    else {
        spdlog::set_level(spdlog::level::info);
        if (level != "info")
            spdlog::warn("HTD_LOG={} not recognised (use error, info or debug); using info", level);
    }
}

struct Options {
    // shared
    std::string data, manifest, format = "both";
    std::uint64_t seed = 42;
    // train
    std::string out, config;
    double ratio = 0.7;
    // evaluate / predict
    std::string model, text, file;
    // crossval
    std::uint32_t folds = 5;
    // synth
    std::size_t records = 1000, vocab = 50, min_len = 8, max_len = 32;
};

persist::ModelSettings resolve_settings(const Options& o, const CLI::App& cmd)
{
    persist::ModelSettings s;
    if (!o.config.empty()) {
        std::ifstream in(o.config, std::ios::binary);
        if (!in)
            throw persist::PersistError(persist::PersistError::Kind::Io, o.config, "cannot open " + o.config);
        json j;
        try {
            j = json::parse(in);
        } catch (const json::parse_error& e) {
            throw persist::PersistError(persist::PersistError::Kind::BadValue, o.config,
                                        fmt::format("{}: {}", o.config, e.what()));
        }
        std::vector<std::string> warnings;
        s = pipeline::apply_overrides(s, j, &warnings);
        for (const auto& w : warnings)
            spdlog::warn("{}", w);
    }
    if (cmd.count("--seed") || o.config.empty()) {
        s.split_seed = o.seed;
        s.model.seed = o.seed;
    }
    if (cmd.get_option_no_throw("--ratio") && (cmd.count("--ratio") || o.config.empty()))
        s.split_ratio = o.ratio;
    return s;
}

net::EpochCallback epoch_logger()
{
    return [](std::size_t epoch, double loss, double acc, double val_loss) {
        spdlog::info("epoch {:>3}  train loss {:.6f}  validation accuracy {:.6f}  validation loss {:.6f}", epoch,
                     loss, acc, val_loss);
    };
}

void print_report(const std::string& format, const std::string& text, const json& doc)
{
    if (format != "json")
        std::cout << text;
    if (format == "both")
        std::cout << '\n';
    if (format != "text")
        std::cout << doc.dump(2) << '\n';
}

int cmd_train(const Options& o, const CLI::App& cmd, Manifest& m)
{
    Stopwatch total;
    const auto settings = resolve_settings(o, cmd);
    Stopwatch load;
    const auto corpus = corpus::load_corpus(o.data);
    m.timings["load"] = load.seconds();
    spdlog::info("{} records loaded from {}", corpus.size(), o.data);

    Stopwatch fit;
    const auto outcome = pipeline::train_on_corpus(corpus, settings, epoch_logger());
    m.timings["train_and_test"] = fit.seconds();

    const fs::path dir(o.out);
    persist::save_model(outcome.fit.bundle, dir);
    const auto text = pipeline::render_text(outcome);
    const auto doc = pipeline::to_json(outcome);
    write_text(dir / "train_report.txt", text);
    write_text(dir / "train_report.json", doc.dump(2) + "\n");
    std::cout << text;

    m.config = persist::to_json(outcome.fit.bundle.settings);
    m.seed = settings.split_seed;
    m.inputs = {{"data", o.data}};
    if (!o.config.empty())
        m.inputs["config"] = o.config;
    for (const char* f : {persist::kWeightsFile, persist::kTokenizerFile, persist::kConfigFile, "train_report.txt",
                          "train_report.json"})
        m.outputs[f] = (dir / f).string();
    m.outputs["manifest"] = (dir / "manifest.json").string();
    m.timings["total"] = total.seconds();
    emit_manifest(m, o.manifest.empty() ? (dir / "manifest.json").string() : o.manifest);
    return kOk;
}

int cmd_evaluate(const Options& o, Manifest& m)
{
    Stopwatch total;
    std::vector<std::string> warnings;
    const auto bundle = persist::load_model(o.model, &warnings);
    for (const auto& w : warnings)
        spdlog::warn("{}", w);
    const auto corpus = corpus::load_corpus(o.data);
    const auto examples = corpus::expand_examples(corpus);
    const auto scored = pipeline::score_examples(bundle, examples);
    const auto report = eval::evaluate(scored.predictions, scored.labels);
    print_report(o.format, eval::render_text(report), eval::to_json(report));

    m.config = persist::to_json(bundle.settings);
    m.seed = bundle.settings.split_seed;
    m.inputs = {{"data", o.data}};
    for (const char* f : {persist::kWeightsFile, persist::kTokenizerFile, persist::kConfigFile})
        m.inputs[f] = (fs::path(o.model) / f).string();
    m.timings["total"] = total.seconds();
    emit_manifest(m, o.manifest);
    return kOk;
}

int cmd_crossval(const Options& o, const CLI::App& cmd, Manifest& m)
{
    Stopwatch total;
    const auto settings = resolve_settings(o, cmd);
    const auto corpus = corpus::load_corpus(o.data);
    const auto result = pipeline::cross_validate(corpus, settings, o.folds, epoch_logger());
    print_report(o.format, pipeline::render_text(result), pipeline::to_json(result));

    m.config = persist::to_json(settings);
    m.config["folds"] = o.folds;
    m.seed = settings.split_seed;
    m.inputs = {{"data", o.data}};
    if (!o.config.empty())
        m.inputs["config"] = o.config;
    m.timings["total"] = total.seconds();
    emit_manifest(m, o.manifest);
    return kOk;
}

int cmd_predict(const Options& o, const CLI::App& cmd, Manifest& m)
{
    Stopwatch total;
    std::string text = o.text;
    if (cmd.count("--file")) {
        std::ifstream in(o.file, std::ios::binary);
        if (!in)
            throw persist::PersistError(persist::PersistError::Kind::Io, o.file, "cannot open " + o.file);
        std::ostringstream ss;
        ss << in.rdbuf();
        text = ss.str();
    }
    std::vector<std::string> warnings;
    const auto bundle = persist::load_model(o.model, &warnings);
    for (const auto& w : warnings)
        spdlog::warn("{}", w);
    const auto p = net::predict(bundle.params, bundle.settings.model, bundle.context, text);
    std::cout << fmt::format("{}\t{:.6f}\n", p.label == 1 ? "ai" : "human", p.score);

    m.config = persist::to_json(bundle.settings);
    m.seed = bundle.settings.split_seed;
    m.inputs = {{"model", o.model}};
    if (cmd.count("--file"))
        m.inputs["file"] = o.file;
    m.timings["total"] = total.seconds();
    emit_manifest(m, o.manifest);
    return kOk;
}

int cmd_synth(const Options& o, Manifest& m)
{
    Stopwatch total;
    const auto corpus = corpus::make_separable_corpus(o.records, o.vocab, o.min_len, o.max_len, o.seed);
    corpus::write_corpus(corpus, fs::path(o.out));
    spdlog::info("{} records written to {}", corpus.size(), o.out);
    m.config = {{"records", o.records}, {"vocab_per_class", o.vocab}, {"min_len", o.min_len}, {"max_len", o.max_len}};
    m.seed = o.seed;
    m.outputs = {{"data", o.out}};
    m.timings["total"] = total.seconds();
    emit_manifest(m, o.manifest);
    return kOk;
}

int run(int argc, char** argv)
{
    Options o;
    CLI::App app{"Train and apply a hybrid CNN+GRU classifier that separates human-written from AI-generated text."};
    app.require_subcommand(1);
    const auto ratio_check = CLI::Validator(
        [](std::string& s) {
            const double r = std::stod(s);
            return r > 0.0 && r < 1.0 ? std::string() : std::string("ratio must lie strictly between 0 and 1");
        },
        "(0,1)");

    auto* train = app.add_subcommand("train", "fit a model on a stratified split and save its artifacts");
    train->add_option("--data", o.data, "corpus CSV (id, human_text, ai_text, instructions)")->required();
    train->add_option("--out", o.out, "output directory for the model artifacts")->required();
    train->add_option("--config", o.config, "JSON file overriding default settings");
    train->add_option("--seed", o.seed, "seed for the split, initialisation and batch order")->capture_default_str();
    train->add_option("--ratio", o.ratio, "training share of the train/test split")->capture_default_str()->check(
        ratio_check);
    train->add_option("--manifest", o.manifest, "manifest path (default: <out>/manifest.json)");

    auto* evaluate = app.add_subcommand("evaluate", "score a labelled corpus with a saved model");
    evaluate->add_option("--model", o.model, "model directory written by train")->required();
    evaluate->add_option("--data", o.data, "corpus CSV")->required();
    evaluate->add_option("--format", o.format, "report format")->check(CLI::IsMember({"text", "json", "both"}))
        ->capture_default_str();
    evaluate->add_option("--manifest", o.manifest, "write the run manifest here instead of the log");

    auto* crossval = app.add_subcommand("crossval", "stratified k-fold cross-validation");
    crossval->add_option("--data", o.data, "corpus CSV")->required();
    crossval->add_option("--folds", o.folds, "number of folds (>= 2)")->required()->check(CLI::Range(2u, 1000000u));
    crossval->add_option("--config", o.config, "JSON file overriding default settings");
    crossval->add_option("--seed", o.seed, "seed for folds, initialisation and batch order")->capture_default_str();
    crossval->add_option("--format", o.format, "report format")->check(CLI::IsMember({"text", "json", "both"}))
        ->capture_default_str();
    crossval->add_option("--manifest", o.manifest, "write the run manifest here instead of the log");

    auto* predict = app.add_subcommand("predict", "classify one text");
    predict->add_option("--model", o.model, "model directory written by train")->required();
    auto* text_opt = predict->add_option("--text", o.text, "text to classify");
    auto* file_opt = predict->add_option("--file", o.file, "file whose whole content is classified");
    text_opt->excludes(file_opt);
    file_opt->excludes(text_opt);
    predict->add_option("--manifest", o.manifest, "write the run manifest here instead of the log");

    auto* synth = app.add_subcommand("synth", "write a synthetic corpus with disjoint per-class vocabularies");
    synth->add_option("--out", o.out, "output CSV")->required();
    synth->add_option("--records", o.records, "number of records")->capture_default_str()->check(CLI::PositiveNumber);
    synth->add_option("--vocab", o.vocab, "distinct tokens per class")->capture_default_str()->check(
        CLI::PositiveNumber);
    synth->add_option("--min-len", o.min_len, "minimum tokens per text")->capture_default_str()->check(
        CLI::PositiveNumber);
    synth->add_option("--max-len", o.max_len, "maximum tokens per text")->capture_default_str()->check(
        CLI::PositiveNumber);
    synth->add_option("--seed", o.seed, "generator seed")->capture_default_str();
    synth->add_option("--manifest", o.manifest, "write the run manifest here instead of the log");

    try {
        app.parse(argc, argv);
        if (predict->parsed() && !text_opt->count() && !file_opt->count())
            throw CLI::RequiredError("one of --text or --file");
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    Manifest m;
    m.argv.assign(argv, argv + argc);
    if (train->parsed()) {
        m.command = "train";
        return cmd_train(o, *train, m);
    }
    if (evaluate->parsed()) {
        m.command = "evaluate";
        return cmd_evaluate(o, m);
    }
    if (crossval->parsed()) {
        m.command = "crossval";
        return cmd_crossval(o, *crossval, m);
    }
    if (predict->parsed()) {
        m.command = "predict";
        return cmd_predict(o, *predict, m);
    }
    m.command = "synth";
    return cmd_synth(o, m);
}

} // namespace

int main(int argc, char** argv)
{
    configure_logging();
    try {
        return run(argc, argv);
    } catch (const corpus::CorpusError& e) {
        spdlog::error("{}", e.what());
        return kUsage;
    } catch (const corpus::SplitError& e) {
        spdlog::error("{}", e.what());
        return e.kind() == corpus::SplitError::Kind::InsufficientData ? kTraining : kUsage;
    } catch (const persist::PersistError& e) {
        spdlog::error("{}", e.what());
        return kUsage;
    } catch (const net::ModelError& e) {
        spdlog::error("{}", e.what());
        switch (e.kind()) {
        case net::ModelError::Kind::EmptyAfterTokenize:
            return kEmptyText;
        case net::ModelError::Kind::DegenerateTrainingSet:
        case net::ModelError::Kind::EmptySet:
        case net::ModelError::Kind::NonFinite:
            return kTraining;
        default:
            return kUsage;
        }
    } catch (const text::TextError& e) {
        spdlog::error("{}", e.what());
        return e.kind() == text::TextError::Kind::EmptyAfterTokenize ? kEmptyText : kTraining;
    } catch (const std::exception& e) {
        spdlog::error("internal error: {}", e.what());
        return kInternal;
    }
}
