#include "doctest.h"

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "htd/corpus.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string out; // stdout and stderr interleaved
};

Run run(const std::string& args, const char* stderr_to = "&1")
{
    const std::string cmd = fmt::format("HTD_LOG=info '{}' {} 2>{}", HTD_CLI_PATH, args, stderr_to);
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    Run r;
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0)
        r.out.append(buf.data(), n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

// Only stdout, for commands whose report is parsed.
Run run_stdout(const std::string& args)
{
    return run(args, "/dev/null");
}

fs::path scratch(const std::string& name)
{
    auto dir = fs::temp_directory_path() / ("htd_test_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_file(const fs::path& p, const std::string& body)
{
    std::ofstream(p, std::ios::binary) << body;
}

// Small network so each command finishes in well under a second.
fs::path small_config(const fs::path& dir)
{
    const json j = {{"model",
                     {{"embed_dim", 8},
                      {"seq_len", 16},
                      {"kernel_widths", {2, 3}},
                      {"filters", 4},
                      {"gru_hidden", 6},
                      {"dense_hidden", 8}}},
                    {"training", {{"epochs", 8}, {"batch_size", 8}, {"learning_rate", 0.01}}}};
    const auto p = dir / "small.json";
    write_file(p, j.dump());
    return p;
}

fs::path synth(const fs::path& dir, const std::string& name, std::size_t records, std::uint64_t seed)
{
    const auto p = dir / name;
    htd::corpus::write_corpus(htd::corpus::make_separable_corpus(records, 50, 6, 16, seed), p);
    return p;
}

const char* kFourRecordCsv =
    "id,human_text,ai_text,instructions\n"
    "r1,\"i walked to the market, it was cold and the bread was gone.\",\"The market offers a diverse selection "
    "of fresh produce and artisanal goods.\",Describe a visit to a market.\n"
    "r2,honestly the movie dragged but the ending got me,\"The film presents a compelling narrative that "
    "culminates in a memorable conclusion.\",Review a movie.\n"
    "r3,my cat knocked the plant over again lol,\"Cats are curious animals that often interact with household "
    "objects.\",Write about a pet.\n"
    "r4,\"we lost 3-1, ref was awful, whatever\",\"The match concluded with a 3-1 result, highlighting several "
    "pivotal moments.\",Summarize a football match.\n";

} // namespace

TEST_CASE("train on a four-record corpus writes the three archives")
{
    const auto dir = scratch("train4");
    write_file(dir / "four.csv", kFourRecordCsv);
    const auto r = run(fmt::format("train --data '{}' --out '{}' --seed 7 --config '{}'", (dir / "four.csv").string(),
                                   (dir / "model").string(), small_config(dir).string()));
    INFO(r.out);
    CHECK(r.code == 0);
    for (const char* f : {"weights.htdw", "tokenizer.txt", "config.json", "manifest.json", "train_report.txt",
                          "train_report.json"})
        CHECK(fs::is_regular_file(dir / "model" / f));

    const auto manifest = json::parse(slurp(dir / "model" / "manifest.json"));
    CHECK(manifest["command"] == "train");
    CHECK(manifest["seed"] == 7);
    CHECK(manifest["config"]["split"]["seed"] == 7);
    CHECK(manifest["config"]["model"]["seed"] == 7);
    CHECK(manifest["checksums_sha256"].contains((dir / "model" / "weights.htdw").string()));
}

TEST_CASE("train rejects bad input")
{
    const auto dir = scratch("bad");
    write_file(dir / "nohuman.csv", "id,ai_text,instructions\nr1,some text,do it\n");
    auto r = run(fmt::format("train --data '{}' --out '{}'", (dir / "nohuman.csv").string(), (dir / "m").string()));
    CHECK(r.code == 2);
    CHECK(r.out.find("human_text") != std::string::npos);

    write_file(dir / "four.csv", kFourRecordCsv);
    r = run(fmt::format("train --data '{}' --out '{}' --ratio 1.5", (dir / "four.csv").string(),
                        (dir / "m").string()));
    CHECK(r.code == 2);
    CHECK(r.out.find("ratio") != std::string::npos);

    CHECK(run("train --out x").code == 2);
    CHECK(run("").code == 2);
    CHECK(run("frobnicate").code == 2);
}

TEST_CASE("train, evaluate and predict on separable data")
{
    const auto dir = scratch("separable");
    const auto cfg = small_config(dir);
    const auto train_csv = synth(dir, "train.csv", 200, 1);
    const auto held_out = synth(dir, "held_out.csv", 100, 2);
    const auto model = dir / "model";
    auto r = run(fmt::format("train --data '{}' --out '{}' --config '{}'", train_csv.string(), model.string(),
                             cfg.string()));
    INFO(r.out);
    REQUIRE(r.code == 0);

    // The text report is a rendering of the JSON values.
    const auto report = json::parse(slurp(model / "train_report.json"));
    const auto text = slurp(model / "train_report.txt");
    for (const char* m : {"accuracy", "precision", "recall", "f1"})
        CHECK(text.find(fmt::format("{:.6f}", report["test"]["metrics"][m].get<double>())) != std::string::npos);

    r = run_stdout(fmt::format("evaluate --model '{}' --data '{}' --format json", model.string(), held_out.string()));
    REQUIRE(r.code == 0);
    const auto eval = json::parse(r.out);
    CHECK(eval["metrics"]["accuracy"].get<double>() >= 0.95);
    const auto& cm = eval["confusion"];
    CHECK(cm["tp"].get<int>() + cm["fp"].get<int>() + cm["fn"].get<int>() + cm["tn"].get<int>() == 200);
    CHECK(eval["chi_square"]["p"].get<double>() < 0.05);

    r = run_stdout(fmt::format("evaluate --model '{}' --data '{}' --format text", model.string(), held_out.string()));
    CHECK(r.code == 0);
    CHECK(r.out.find("[[TP, FP], [FN, TN]]") != std::string::npos);
    CHECK(r.out.find(fmt::format("{:.6f}", eval["metrics"]["accuracy"].get<double>())) != std::string::npos);

    // One record is one human and one AI example.
    write_file(dir / "one.csv", "id,human_text,ai_text,instructions\nx,hw1 hw2 hw3,aw1 aw2 aw3,n/a\n");
    r = run_stdout(fmt::format("evaluate --model '{}' --data '{}' --format json", model.string(),
                               (dir / "one.csv").string()));
    REQUIRE(r.code == 0);
    const auto one = json::parse(r.out);
    const auto& c1 = one["confusion"];
    CHECK(c1["tp"].get<int>() + c1["fp"].get<int>() + c1["fn"].get<int>() + c1["tn"].get<int>() == 2);

    const std::regex line(R"((ai|human)\t\d\.\d{6}\n)");
    r = run_stdout(fmt::format("predict --model '{}' --text 'aw1 aw7 aw12 aw30'", model.string()));
    CHECK(r.code == 0);
    CHECK(std::regex_match(r.out, line));
    CHECK(r.out.rfind("ai\t", 0) == 0);
    write_file(dir / "human.txt", "hw4 hw9 hw11 hw40\n");
    r = run_stdout(fmt::format("predict --model '{}' --file '{}'", model.string(), (dir / "human.txt").string()));
    CHECK(r.code == 0);
    CHECK(std::regex_match(r.out, line));
    CHECK(r.out.rfind("human\t", 0) == 0);

    CHECK(run(fmt::format("predict --model '{}' --text ''", model.string())).code == 4);
    CHECK(run(fmt::format("predict --model '{}' --text '?! ...'", model.string())).code == 4);
    CHECK(run(fmt::format("predict --model '{}' --text a --file '{}'", model.string(), (dir / "human.txt").string()))
              .code == 2);
    CHECK(run(fmt::format("predict --model '{}'", model.string())).code == 2);

    // Re-running with the recorded settings reproduces the weights.
    const auto manifest = json::parse(slurp(model / "manifest.json"));
    write_file(dir / "recorded.json", manifest["config"].dump());
    r = run(fmt::format("train --data '{}' --out '{}' --config '{}'", train_csv.string(), (dir / "again").string(),
                        (dir / "recorded.json").string()));
    CHECK(r.code == 0);
    CHECK(slurp(dir / "again" / "weights.htdw") == slurp(model / "weights.htdw"));

    fs::remove(model / "weights.htdw");
    r = run(fmt::format("evaluate --model '{}' --data '{}'", model.string(), held_out.string()));
    CHECK(r.code == 2);
    CHECK(run(fmt::format("predict --model '{}' --text 'aw1'", model.string())).code == 2);
}

TEST_CASE("crossval prints one row per fold and is deterministic")
{
    const auto dir = scratch("crossval");
    const auto cfg = small_config(dir);
    const auto data = synth(dir, "data.csv", 100, 3);
    const auto args = fmt::format("crossval --data '{}' --folds 5 --seed 11 --config '{}'", data.string(), cfg.string());

    auto r = run_stdout(args + " --format text");
    REQUIRE(r.code == 0);
    std::istringstream lines(r.out);
    std::string l;
    int fold_rows = 0, mean_rows = 0;
    const std::regex fold_row(R"(\s+[1-5]\s+(\d\.\d{6}\s+){3}\d\.\d{6})");
    while (std::getline(lines, l)) {
        fold_rows += std::regex_match(l, fold_row);
        mean_rows += l.find("mean") != std::string::npos && l.find("+-") != std::string::npos;
    }
    CHECK(fold_rows == 5);
    CHECK(mean_rows == 1);

    const auto a = run_stdout(args + " --format json");
    const auto b = run_stdout(args + " --format json");
    REQUIRE(a.code == 0);
    REQUIRE(b.code == 0);
    const auto ja = json::parse(a.out);
    CHECK(ja["folds"].size() == 5);
    CHECK(ja["folds"] == json::parse(b.out)["folds"]);

    CHECK(run(fmt::format("crossval --data '{}' --folds 1", data.string())).code == 2);
    CHECK(run(fmt::format("crossval --data '{}' --folds 0", data.string())).code == 2);
}

TEST_CASE("manifest goes to the log when no path is given")
{
    const auto dir = scratch("synth");
    const auto r = run(fmt::format("synth --out '{}' --records 10 --seed 5", (dir / "s.csv").string()));
    CHECK(r.code == 0);
    CHECK(r.out.find("manifest {") != std::string::npos);
    CHECK(htd::corpus::load_corpus(dir / "s.csv").size() == 10);
}
