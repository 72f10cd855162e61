#include "htd/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "htd/rng.hpp"
#include "htd/textproc.hpp"

namespace htd::corpus {

namespace {

const char* kind_name(CorpusError::Kind kind)
{
    switch (kind) {
    case CorpusError::Kind::MissingColumn: return "MissingColumn";
    case CorpusError::Kind::DuplicateId: return "DuplicateId";
    case CorpusError::Kind::EmptyTextField: return "EmptyTextField";
    case CorpusError::Kind::MalformedCsv: return "MalformedCsv";
    case CorpusError::Kind::Io: return "Io";
    }
    return "CorpusError";
}

std::string format_error(CorpusError::Kind kind, const std::string& detail, std::size_t row)
{
    std::string msg = kind_name(kind);
    msg += ": ";
    msg += detail;
    if (row != 0) {
        msg += " (row ";
        msg += std::to_string(row);
        msg += ")";
    }
    return msg;
}

constexpr std::array<const char*, 4> kColumns = {"id", "human_text", "ai_text", "instructions"};

struct CsvRow {
    std::vector<std::string> fields;
    std::size_t line = 0;
};

// RFC-4180 reader over a whole buffer. Newlines inside quoted fields are kept
// verbatim; a CR immediately before LF terminates the record.
std::vector<CsvRow> read_csv(const std::string& buf)
{
    std::vector<CsvRow> rows;
    std::size_t pos = 0;
    if (buf.compare(0, 3, "\xEF\xBB\xBF") == 0)
        pos = 3;

    std::size_t line = 1;
    const std::size_t n = buf.size();
    while (pos < n) {
        CsvRow row;
        row.line = line;
        std::string field;
        bool end_of_record = false;
        while (!end_of_record) {
            field.clear();
            if (pos < n && buf[pos] == '"') {
                ++pos;
                for (;;) {
                    if (pos >= n)
                        throw CorpusError(CorpusError::Kind::MalformedCsv, "unterminated quoted field", row.line);
                    const char c = buf[pos++];
                    if (c == '"') {
                        if (pos < n && buf[pos] == '"') {
                            field.push_back('"');
                            ++pos;
                        } else {
                            break;
                        }
                    } else {
                        if (c == '\n')
                            ++line;
                        field.push_back(c);
                    }
                }
                if (pos < n && buf[pos] != ',' && buf[pos] != '\n' && buf[pos] != '\r')
                    throw CorpusError(CorpusError::Kind::MalformedCsv, "text after closing quote", row.line);
            } else {
                while (pos < n && buf[pos] != ',' && buf[pos] != '\n' && buf[pos] != '\r') {
                    if (buf[pos] == '"')
                        throw CorpusError(CorpusError::Kind::MalformedCsv, "stray quote in unquoted field", row.line);
                    field.push_back(buf[pos++]);
                }
            }
            row.fields.push_back(field);

            if (pos >= n) {
                end_of_record = true;
            } else if (buf[pos] == ',') {
                ++pos;
            } else if (buf[pos] == '\r') {
                if (pos + 1 < n && buf[pos + 1] == '\n') {
                    pos += 2;
                    ++line;
                    end_of_record = true;
                } else {
                    throw CorpusError(CorpusError::Kind::MalformedCsv, "bare carriage return", row.line);
                }
            } else { // '\n'
                ++pos;
                ++line;
                end_of_record = true;
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string quote_field(const std::string& s)
{
    if (s.find_first_of(",\"\r\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += "\"\"";
        else
            out.push_back(c);
    }
    out += '"';
    return out;
}

void check_ratio(double ratio)
{
    if (!(ratio > 0.0 && ratio < 1.0))
        throw SplitError(SplitError::Kind::BadRatio, "ratio must lie in (0, 1), got " + std::to_string(ratio));
}

// Indices per class, ascending within each class.
std::array<std::vector<std::uint32_t>, 2> by_class(std::span<const Label> labels)
{
    std::array<std::vector<std::uint32_t>, 2> out;
    for (std::size_t i = 0; i < labels.size(); ++i)
        out[static_cast<std::size_t>(labels[i])].push_back(static_cast<std::uint32_t>(i));
    return out;
}

} // namespace

CorpusError::CorpusError(Kind kind, std::string detail, std::size_t row)
    : std::runtime_error(format_error(kind, detail, row)), kind_(kind), detail_(std::move(detail)), row_(row)
{
}

Corpus parse_corpus(std::istream& in)
{
    const std::string buf{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    const auto rows = read_csv(buf);
    if (rows.empty())
        throw CorpusError(CorpusError::Kind::MalformedCsv, "missing header line", 1);

    const auto& header = rows.front().fields;
    std::array<std::size_t, 4> column_of{};
    for (std::size_t c = 0; c < kColumns.size(); ++c) {
        const auto it = std::find(header.begin(), header.end(), kColumns[c]);
        if (it == header.end())
            throw CorpusError(CorpusError::Kind::MissingColumn, kColumns[c], 1);
        column_of[c] = static_cast<std::size_t>(it - header.begin());
    }
    std::unordered_set<std::string> seen;
    for (const auto& name : header) {
        if (!seen.insert(name).second)
            throw CorpusError(CorpusError::Kind::MalformedCsv, "duplicate column '" + name + "'", 1);
        if (std::find(kColumns.begin(), kColumns.end(), name) == kColumns.end())
            throw CorpusError(CorpusError::Kind::MalformedCsv, "unexpected column '" + name + "'", 1);
    }

    Corpus corpus;
    corpus.reserve(rows.size() - 1);
    std::unordered_map<std::string, std::size_t> id_rows;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.fields.size() != header.size())
            throw CorpusError(CorpusError::Kind::MalformedCsv,
                              "expected " + std::to_string(header.size()) + " fields, found " +
                                  std::to_string(row.fields.size()),
                              row.line);
        CorpusRecord rec{row.fields[column_of[0]], row.fields[column_of[1]], row.fields[column_of[2]],
                         row.fields[column_of[3]]};
        if (rec.id.empty())
            throw CorpusError(CorpusError::Kind::MalformedCsv, "empty id", row.line);
        if (text::clean(rec.human_text).empty())
            throw CorpusError(CorpusError::Kind::EmptyTextField, "human_text", row.line);
        if (text::clean(rec.ai_text).empty())
            throw CorpusError(CorpusError::Kind::EmptyTextField, "ai_text", row.line);
        const auto [it, inserted] = id_rows.emplace(rec.id, row.line);
        if (!inserted)
            throw CorpusError(CorpusError::Kind::DuplicateId,
                              rec.id + " (first seen at row " + std::to_string(it->second) + ")", row.line);
        corpus.push_back(std::move(rec));
    }
    return corpus;
}

Corpus load_corpus(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw CorpusError(CorpusError::Kind::Io, "cannot open " + path.string());
    return parse_corpus(in);
}

void write_corpus(const Corpus& corpus, std::ostream& out)
{
    out << "id,human_text,ai_text,instructions\n";
    for (const auto& r : corpus)
        out << quote_field(r.id) << ',' << quote_field(r.human_text) << ',' << quote_field(r.ai_text) << ','
            << quote_field(r.instructions) << '\n';
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw CorpusError(CorpusError::Kind::Io, "cannot write " + path.string());
    write_corpus(corpus, out);
}

std::vector<LabeledExample> expand_examples(const Corpus& corpus)
{
    std::vector<LabeledExample> out;
    out.reserve(2 * corpus.size());
    for (const auto& r : corpus) {
        out.push_back({r.id, r.human_text, Label::Human});
        out.push_back({r.id, r.ai_text, Label::Ai});
    }
    return out;
}

std::vector<Label> labels_of(std::span<const LabeledExample> examples)
{
    std::vector<Label> out;
    out.reserve(examples.size());
    for (const auto& e : examples)
        out.push_back(e.label);
    return out;
}

std::size_t scaled_floor(double ratio, std::size_t n)
{
    return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

SplitPlan split_train_test(std::span<const Label> labels, double ratio, std::uint64_t seed)
{
    check_ratio(ratio);
    auto classes = by_class(labels);
    for (std::size_t c = 0; c < classes.size(); ++c)
        if (classes[c].empty())
            throw SplitError(SplitError::Kind::InsufficientData, "class " + std::to_string(c) + " has no examples");

    SplitMix64 rng(seed);
    std::array<std::size_t, 2> train_count{};
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        shuffle(std::span<std::uint32_t>(classes[c]), rng);
        train_count[c] = scaled_floor(ratio, classes[c].size());
        assigned += train_count[c];
    }
    const std::size_t target = scaled_floor(ratio, labels.size());
    std::size_t remainder = target > assigned ? target - assigned : 0;
    for (std::size_t c = 0; c < classes.size() && remainder > 0; ++c) {
        if (train_count[c] < classes[c].size()) {
            ++train_count[c];
            --remainder;
        }
    }

    SplitPlan plan;
    plan.seed = seed;
    plan.ratio = ratio;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        if (train_count[c] == 0 || train_count[c] == classes[c].size())
            throw SplitError(SplitError::Kind::InsufficientData,
                             "class " + std::to_string(c) + " would have an empty " +
                                 (train_count[c] == 0 ? "train" : "test") + " side");
        const auto cut = classes[c].begin() + static_cast<std::ptrdiff_t>(train_count[c]);
        plan.train_indices.insert(plan.train_indices.end(), classes[c].begin(), cut);
        plan.test_indices.insert(plan.test_indices.end(), cut, classes[c].end());
    }
    return plan;
}

SplitPlan split_train_test(std::span<const LabeledExample> examples, double ratio, std::uint64_t seed)
{
    const auto labels = labels_of(examples);
    return split_train_test(std::span<const Label>(labels), ratio, seed);
}

FoldPlan kfold(std::span<const Label> labels, std::uint32_t k, std::uint64_t seed)
{
    if (k < 2 || k > labels.size())
        throw SplitError(SplitError::Kind::BadFoldCount,
                         "fold count " + std::to_string(k) + " outside [2, " + std::to_string(labels.size()) + "]");
    auto classes = by_class(labels);
    SplitMix64 rng(seed);
    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.folds.resize(k);
    // Deal the class-ordered shuffled sequence round-robin: overall sizes differ
    // by at most one and each class is spread evenly.
    std::size_t position = 0;
    for (auto& members : classes) {
        shuffle(std::span<std::uint32_t>(members), rng);
        for (auto idx : members)
            plan.folds[position++ % k].push_back(idx);
    }
    return plan;
}

FoldPlan kfold(std::span<const LabeledExample> examples, std::uint32_t k, std::uint64_t seed)
{
    const auto labels = labels_of(examples);
    return kfold(std::span<const Label>(labels), k, seed);
}

nlohmann::json to_json(const SplitPlan& plan)
{
    return {{"seed", plan.seed}, {"ratio", plan.ratio}, {"train", plan.train_indices}, {"test", plan.test_indices}};
}

nlohmann::json to_json(const FoldPlan& plan)
{
    return {{"seed", plan.seed}, {"k", plan.k}, {"folds", plan.folds}};
}

Corpus make_separable_corpus(std::size_t records, std::size_t vocab_per_class, std::size_t min_len,
                             std::size_t max_len, std::uint64_t seed)
{
    SplitMix64 rng(seed);
    auto words = [&](char prefix) {
        std::vector<std::string> v;
        for (std::size_t i = 0; i < vocab_per_class; ++i)
            v.push_back(prefix + std::string("w") + std::to_string(i));
        return v;
    };
    const auto human_words = words('h');
    const auto ai_words = words('a');
    auto sentence = [&](const std::vector<std::string>& vocab) {
        const auto len = min_len + static_cast<std::size_t>(rng.below(max_len - min_len + 1));
        std::string s;
        for (std::size_t i = 0; i < len; ++i) {
            if (i)
                s += ' ';
            s += vocab[rng.below(vocab.size())];
        }
        return s;
    };

    Corpus corpus;
    corpus.reserve(records);
    for (std::size_t r = 0; r < records; ++r) {
        std::ostringstream id;
        id << std::hex << rng.next();
        CorpusRecord rec;
        rec.id = id.str() + "-" + std::to_string(r);
        rec.human_text = sentence(human_words);
        rec.ai_text = sentence(ai_words);
        rec.instructions = "Task: synthetic record " + std::to_string(r);
        corpus.push_back(std::move(rec));
    }
    return corpus;
}

} // namespace htd::corpus
