#include "htd/textproc.hpp"

#include <algorithm>
#include <cmath>
#include <locale.h>
#include <set>
#include <wctype.h>

namespace htd::text {

namespace {

// Character classification uses glibc's C.UTF-8 tables, which cover the full
// Unicode range. Without that locale we fall back to ASCII-only rules.
class CharClass {
public:
    CharClass() : loc_(newlocale(LC_CTYPE_MASK, "C.UTF-8", static_cast<locale_t>(nullptr))) {}
    ~CharClass()
    {
        if (loc_)
            freelocale(loc_);
    }
    CharClass(const CharClass&) = delete;
    CharClass& operator=(const CharClass&) = delete;

    bool space(char32_t c) const
    {
        if (c < 0x80 || !loc_)
            return c == ' ' || (c >= 0x09 && c <= 0x0D);
        return iswspace_l(static_cast<wint_t>(c), loc_) != 0;
    }
    bool control(char32_t c) const { return c < 0x20 || (c >= 0x7F && c <= 0x9F); }
    bool alnum(char32_t c) const
    {
        if (c < 0x80 || !loc_)
            return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
        return iswalnum_l(static_cast<wint_t>(c), loc_) != 0;
    }
    char32_t lower(char32_t c) const
    {
        if (c < 0x80 || !loc_)
            return (c >= 'A' && c <= 'Z') ? c + 32 : c;
        return static_cast<char32_t>(towlower_l(static_cast<wint_t>(c), loc_));
    }

private:
    locale_t loc_;
};

const CharClass& chars()
{
    static const CharClass instance;
    return instance;
}

// Decodes one code point at pos; returns false (and skips one byte) on an
// invalid or overlong sequence.
bool decode(std::string_view s, std::size_t& pos, char32_t& out)
{
    const auto b0 = static_cast<unsigned char>(s[pos]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
        out = b0;
        ++pos;
        return true;
    } else if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++pos;
        return false;
    }
    if (pos + len > s.size()) {
        ++pos;
        return false;
    }
    for (std::size_t i = 1; i < len; ++i) {
        const auto b = static_cast<unsigned char>(s[pos + i]);
        if ((b & 0xC0) != 0x80) {
            ++pos;
            return false;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    static constexpr char32_t min_for_len[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < min_for_len[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
        ++pos;
        return false;
    }
    pos += len;
    out = cp;
    return true;
}

void append_utf8(std::string& out, char32_t cp)
{
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::set<std::string_view> distinct(std::span<const std::string> tokens)
{
    return {tokens.begin(), tokens.end()};
}

} // namespace

std::string clean(std::string_view text)
{
    const auto& cc = chars();
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    std::size_t pos = 0;
    while (pos < text.size()) {
        char32_t cp;
        if (!decode(text, pos, cp))
            continue;
        if (cc.space(cp)) {
            pending_space = !out.empty();
            continue;
        }
        if (cc.control(cp))
            continue;
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        append_utf8(out, cc.lower(cp));
    }
    return out;
}

TokenList tokenize(std::string_view cleaned)
{
    const auto& cc = chars();
    TokenList tokens;
    std::string current;
    std::size_t pos = 0;
    while (pos < cleaned.size()) {
        char32_t cp;
        if (decode(cleaned, pos, cp) && cc.alnum(cp)) {
            append_utf8(current, cp);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty())
        tokens.push_back(std::move(current));
    return tokens;
}

Vocabulary::Vocabulary() : id_to_token_{"<pad>", "<oov>"} {}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens_in_id_order)
{
    Vocabulary v;
    for (auto& t : tokens_in_id_order) {
        if (t.empty())
            throw TextError(TextError::Kind::BadArgument, "empty vocabulary token");
        const auto id = static_cast<TokenId>(v.id_to_token_.size());
        if (!v.token_to_id_.emplace(t, id).second)
            throw TextError(TextError::Kind::BadArgument, "duplicate vocabulary token '" + t + "'");
        v.id_to_token_.push_back(std::move(t));
    }
    return v;
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const
{
    const auto it = token_to_id_.find(std::string(token));
    if (it == token_to_id_.end())
        return std::nullopt;
    return it->second;
}

TokenId Vocabulary::lookup(std::string_view token) const { return find(token).value_or(kOovId); }

Vocabulary fit_vocab(std::span<const TokenList> docs, std::size_t max_size, std::size_t min_df)
{
    if (docs.empty())
        throw TextError(TextError::Kind::EmptyCorpus, "cannot fit a vocabulary on zero documents");
    std::map<std::string_view, std::size_t> df;
    for (const auto& doc : docs)
        for (auto t : distinct(doc))
            ++df[t];

    std::vector<std::pair<std::string_view, std::size_t>> ranked;
    for (const auto& [tok, count] : df)
        if (count >= min_df)
            ranked.emplace_back(tok, count);
    // df is already in lexicographic order, so a stable sort on DF alone keeps
    // the lexicographic tie-break.
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

    const std::size_t keep = max_size > kReservedIds ? std::min(ranked.size(), max_size - kReservedIds) : 0;
    std::vector<std::string> tokens;
    tokens.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i)
        tokens.emplace_back(ranked[i].first);
    return Vocabulary::from_tokens(std::move(tokens));
}

EncodedSequence encode(std::span<const std::string> tokens, const Vocabulary& vocab, std::size_t seq_len)
{
    if (seq_len == 0)
        throw TextError(TextError::Kind::BadArgument, "sequence length must be positive");
    EncodedSequence seq;
    seq.ids.assign(seq_len, kPadId);
    seq.true_length = std::min(tokens.size(), seq_len);
    for (std::size_t i = 0; i < seq.true_length; ++i)
        seq.ids[i] = vocab.lookup(tokens[i]);
    return seq;
}

TfIdfModel::TfIdfModel(std::size_t n_documents, DocFreq doc_freq)
    : n_documents_(n_documents), doc_freq_(std::move(doc_freq))
{
    for (const auto& [term, count] : doc_freq_)
        if (count == 0 || count > n_documents_)
            throw TextError(TextError::Kind::BadArgument, "document frequency of '" + term + "' out of range");
}

std::optional<std::uint32_t> TfIdfModel::df(std::string_view term) const
{
    const auto it = doc_freq_.find(term);
    if (it == doc_freq_.end())
        return std::nullopt;
    return it->second;
}

TfIdfModel tfidf_fit(std::span<const TokenList> docs)
{
    if (docs.empty())
        throw TextError(TextError::Kind::EmptyCorpus, "cannot fit TF-IDF on zero documents");
    TfIdfModel::DocFreq df;
    for (const auto& doc : docs)
        for (auto t : distinct(doc))
            ++df[std::string(t)];
    return TfIdfModel(docs.size(), std::move(df));
}

SparseWeights tfidf_transform(const TfIdfModel& model, std::span<const std::string> tokens)
{
    std::map<std::string_view, std::size_t> tf;
    for (const auto& t : tokens)
        ++tf[t];
    SparseWeights out;
    const auto n = static_cast<double>(model.n_documents());
    for (const auto& [term, count] : tf) {
        const auto df = model.df(term);
        if (!df)
            continue;
        out.emplace(std::string(term), static_cast<double>(count) * std::log(n / static_cast<double>(*df)));
    }
    return out;
}

std::vector<std::pair<TokenId, double>> tfidf_features(const TfIdfModel& model, const Vocabulary& vocab,
                                                       std::span<const std::string> tokens, bool normalize)
{
    std::vector<std::pair<TokenId, double>> out;
    for (const auto& [term, w] : tfidf_transform(model, tokens))
        if (const auto id = vocab.find(term))
            out.emplace_back(*id, w);
    std::sort(out.begin(), out.end());
    if (normalize) {
        double sq = 0.0;
        for (const auto& [id, w] : out)
            sq += w * w;
        if (sq > 0.0) {
            const double inv = 1.0 / std::sqrt(sq);
            for (auto& [id, w] : out)
                w *= inv;
        }
    }
    return out;
}

} // namespace htd::text
