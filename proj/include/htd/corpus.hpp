#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace htd::corpus {

class CorpusError : public std::runtime_error {
public:
    enum class Kind { MissingColumn, DuplicateId, EmptyTextField, MalformedCsv, Io };

    CorpusError(Kind kind, std::string detail, std::size_t row = 0);

    Kind kind() const noexcept { return kind_; }
    // 1-based line of the offending record (the header is row 1); 0 when not applicable.
    std::size_t row() const noexcept { return row_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    Kind kind_;
    std::string detail_;
    std::size_t row_;
};

class SplitError : public std::runtime_error {
public:
    enum class Kind { InsufficientData, BadFoldCount, BadRatio };

    SplitError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

struct CorpusRecord {
    std::string id;
    std::string human_text;
    std::string ai_text;
    std::string instructions; // carried along, never fed to a model
};

using Corpus = std::vector<CorpusRecord>;

// 1 = AI-generated (positive class), 0 = human-authored.
enum class Label : std::uint8_t { Human = 0, Ai = 1 };

inline int to_int(Label l) { return static_cast<int>(l); }

struct LabeledExample {
    std::string source_id;
    std::string text;
    Label label;
};

struct SplitPlan {
    std::vector<std::uint32_t> train_indices;
    std::vector<std::uint32_t> test_indices;
    std::uint64_t seed = 0;
    double ratio = 0.0;
};

struct FoldPlan {
    std::vector<std::vector<std::uint32_t>> folds;
    std::uint32_t k = 0;
    std::uint64_t seed = 0;
};

/// Reads a four-column corpus CSV (RFC-4180 quoting, LF or CRLF line ends).
/// The header must name exactly id, human_text, ai_text, instructions in any
/// order. Records whose human or AI text is empty after cleaning are rejected.
Corpus load_corpus(const std::filesystem::path& path);
Corpus parse_corpus(std::istream& in);

void write_corpus(const Corpus& corpus, std::ostream& out);
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);

std::vector<LabeledExample> expand_examples(const Corpus& corpus);

std::vector<Label> labels_of(std::span<const LabeledExample> examples);

/// Stratified split. Per class c the train side receives floor(ratio * n_c);
/// the shortfall against floor(ratio * n) is handed out one example per class
/// in ascending class order.
SplitPlan split_train_test(std::span<const Label> labels, double ratio, std::uint64_t seed);
SplitPlan split_train_test(std::span<const LabeledExample> examples, double ratio, std::uint64_t seed);

/// Stratified k-fold partition. Fold sizes differ by at most one.
FoldPlan kfold(std::span<const Label> labels, std::uint32_t k, std::uint64_t seed);
FoldPlan kfold(std::span<const LabeledExample> examples, std::uint32_t k, std::uint64_t seed);

// floor(ratio * n), tolerant of representation error in ratio (0.7 * 90 is
// 62.99999... in binary floating point).
std::size_t scaled_floor(double ratio, std::size_t n);

nlohmann::json to_json(const SplitPlan& plan);
nlohmann::json to_json(const FoldPlan& plan);

/// Two-class corpus whose human and AI texts draw from disjoint vocabularies of
/// `vocab_per_class` tokens each. Text lengths are uniform in [min_len, max_len].
Corpus make_separable_corpus(std::size_t records, std::size_t vocab_per_class, std::size_t min_len,
                             std::size_t max_len, std::uint64_t seed);

} // namespace htd::corpus
