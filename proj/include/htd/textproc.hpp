#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace htd::text {

// Bumped whenever clean() or tokenize() change behaviour; persisted with the
// tokenizer so that a model is never fed differently-normalised text.
inline constexpr std::string_view kRuleVersion = "wctype-c.utf8-r1";

class TextError : public std::runtime_error {
public:
    enum class Kind { EmptyCorpus, EmptyAfterTokenize, BadArgument };

    TextError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

using TokenList = std::vector<std::string>;

/// Lowercases (Unicode simple case mapping), drops control characters,
/// collapses whitespace runs to one space and trims both ends. Invalid UTF-8
/// bytes are dropped.
std::string clean(std::string_view text);

/// Maximal runs of Unicode alphanumerics; everything else separates.
TokenList tokenize(std::string_view cleaned);

inline TokenList clean_and_tokenize(std::string_view raw) { return tokenize(clean(raw)); }

using TokenId = std::uint32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kOovId = 1;
inline constexpr std::size_t kReservedIds = 2;

class Vocabulary {
public:
    Vocabulary();

    /// Builds from tokens listed in id order, starting at id 2.
    static Vocabulary from_tokens(std::vector<std::string> tokens_in_id_order);

    std::size_t size() const noexcept { return id_to_token_.size(); }
    TokenId lookup(std::string_view token) const;
    std::optional<TokenId> find(std::string_view token) const;
    const std::string& token(TokenId id) const { return id_to_token_.at(id); }
    const std::vector<std::string>& tokens() const noexcept { return id_to_token_; }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.id_to_token_ == b.id_to_token_; }

private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, TokenId> token_to_id_;
};

/// Keeps tokens with document frequency >= min_df, ordered by descending DF
/// then lexicographically, and truncates so that size() <= max_size (the two
/// reserved ids count towards max_size).
Vocabulary fit_vocab(std::span<const TokenList> docs, std::size_t max_size, std::size_t min_df);

struct EncodedSequence {
    std::vector<TokenId> ids; // length L, PAD after true_length
    std::size_t true_length = 0;
};

EncodedSequence encode(std::span<const std::string> tokens, const Vocabulary& vocab, std::size_t seq_len);

class TfIdfModel {
public:
    TfIdfModel() = default;
    using DocFreq = std::map<std::string, std::uint32_t, std::less<>>;

    TfIdfModel(std::size_t n_documents, DocFreq doc_freq);

    std::size_t n_documents() const noexcept { return n_documents_; }
    const DocFreq& doc_freq() const noexcept { return doc_freq_; }
    std::optional<std::uint32_t> df(std::string_view term) const;

private:
    std::size_t n_documents_ = 0;
    DocFreq doc_freq_;
};

using SparseWeights = std::map<std::string, double>;

TfIdfModel tfidf_fit(std::span<const TokenList> docs);

/// weight(t) = count(t in doc) * ln(N / DF(t)) for every fitted term present in
/// the document. Terms unseen at fit time are omitted.
SparseWeights tfidf_transform(const TfIdfModel& model, std::span<const std::string> tokens);

/// Same weights keyed by vocabulary id, sorted by id, L2-normalised when
/// `normalize` is set. Terms missing from the vocabulary are dropped.
std::vector<std::pair<TokenId, double>> tfidf_features(const TfIdfModel& model, const Vocabulary& vocab,
                                                       std::span<const std::string> tokens, bool normalize);

} // namespace htd::text
