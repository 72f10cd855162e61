#include "htd/persist.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace htd::persist {

namespace {

using Kind = PersistError::Kind;

void put_u32(std::ostream& out, std::uint32_t v)
{
    const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                       static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
    out.write(b, 4);
}

std::uint32_t to_u32(std::size_t v, const char* what)
{
    if (v > std::numeric_limits<std::uint32_t>::max())
        throw PersistError(Kind::BadValue, what, fmt::format("{} {} does not fit in 32 bits", what, v));
    return static_cast<std::uint32_t>(v);
}

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    void bytes(char* dst, std::size_t n, const std::string& context)
    {
        in_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw PersistError(Kind::TruncatedFile, context,
                               fmt::format("TruncatedFile: file ends inside {}", context));
    }

    std::uint32_t u32(const std::string& context)
    {
        unsigned char b[4];
        bytes(reinterpret_cast<char*>(b), 4, context);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }

private:
    std::istream& in_;
};

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode)
{
    std::ofstream out(path, mode | std::ios::trunc);
    if (!out)
        throw PersistError(Kind::Io, path.string(), "cannot open " + path.string() + " for writing");
    return out;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode)
{
    std::ifstream in(path, mode);
    if (!in)
        throw PersistError(Kind::Io, path.string(), "cannot open " + path.string());
    return in;
}

void finish(std::ofstream& out, const std::filesystem::path& path)
{
    out.flush();
    if (!out)
        throw PersistError(Kind::Io, path.string(), "failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// JSON helpers

const nlohmann::json& need(const nlohmann::json& obj, const char* name)
{
    const auto it = obj.find(name);
    if (it == obj.end() || it->is_null())
        throw PersistError(Kind::MissingField, name, fmt::format("MissingField({})", name));
    return *it;
}

template <typename T>
T get(const nlohmann::json& obj, const char* name)
{
    const auto& v = need(obj, name);
    try {
        return v.get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw PersistError(Kind::BadValue, name, fmt::format("field {}: {}", name, e.what()));
    }
}

std::size_t get_size(const nlohmann::json& obj, const char* name)
{
    const auto& v = need(obj, name);
    if (!v.is_number_unsigned())
        throw PersistError(Kind::BadValue, name, fmt::format("field {} must be a non-negative integer", name));
    return v.get<std::size_t>();
}

void note_unknown(const nlohmann::json& obj, std::initializer_list<const char*> known, const std::string& where,
                  std::vector<std::string>* warnings)
{
    if (!warnings || !obj.is_object())
        return;
    for (const auto& [key, value] : obj.items())
        if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
            warnings->push_back(fmt::format("unknown config field '{}{}' ignored", where, key));
}

} // namespace

// ---------------------------------------------------------------------------
// Weights

Tensor round_to_f32(const Tensor& t)
{
    Tensor out = t;
    for (auto& v : out.data())
        v = static_cast<double>(static_cast<float>(v));
    return out;
}

net::HybridModelParams round_to_f32(const net::HybridModelParams& p)
{
    net::HybridModelParams out = p;
    for (auto& [name, t] : out.named())
        *t = round_to_f32(*t);
    return out;
}

void write_tensors(const std::vector<NamedTensor>& tensors, std::ostream& out)
{
    std::set<std::string> seen;
    for (const auto& t : tensors)
        if (!seen.insert(t.name).second)
            throw PersistError(Kind::DuplicateTensorName, t.name, "DuplicateTensorName: " + t.name);
    out.write(kWeightsMagic, 4);
    put_u32(out, kWeightsVersion);
    put_u32(out, to_u32(tensors.size(), "tensor count"));
    for (const auto& t : tensors) {
        put_u32(out, to_u32(t.name.size(), "name length"));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        put_u32(out, to_u32(t.value.rank(), "rank"));
        for (auto d : t.value.dims())
            put_u32(out, to_u32(d, "dimension"));
        for (double v : t.value.data())
            put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
}

std::vector<NamedTensor> read_tensors(std::istream& in)
{
    Reader r(in);
    char magic[4];
    r.bytes(magic, 4, "magic");
    if (std::memcmp(magic, kWeightsMagic, 4) != 0)
        throw PersistError(Kind::BadMagic, "", "BadMagic: not a weights archive");
    const auto version = r.u32("version");
    if (version != kWeightsVersion)
        throw PersistError(Kind::UnsupportedVersion, "",
                           fmt::format("UnsupportedVersion: weights format {} (supported: {})", version,
                                       kWeightsVersion));
    const auto count = r.u32("tensor count");
    std::vector<NamedTensor> out;
    std::set<std::string> seen;
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto len = r.u32("tensor header");
        std::string name(len, '\0');
        r.bytes(name.data(), len, "tensor name");
        if (!seen.insert(name).second)
            throw PersistError(Kind::DuplicateTensorName, name, "DuplicateTensorName: " + name);
        const auto rank = r.u32(name);
        if (rank == 0 || rank > 8)
            throw PersistError(Kind::BadValue, name, fmt::format("tensor {} has rank {}", name, rank));
        Tensor::Dims dims(rank);
        std::size_t n = 1;
        for (auto& d : dims) {
            d = r.u32(name);
            if (d == 0 || n > (std::size_t{1} << 40) / d)
                throw PersistError(Kind::BadValue, name, fmt::format("tensor {} has bad dimension {}", name, d));
            n *= d;
        }
        // Read in bounded chunks so that a corrupt header cannot trigger a
        // huge allocation before the truncation is noticed.
        std::vector<double> values;
        values.reserve(std::min<std::size_t>(n, 1 << 16));
        std::vector<char> raw;
        for (std::size_t done = 0; done < n;) {
            const std::size_t chunk = std::min<std::size_t>(n - done, 1 << 16);
            raw.resize(chunk * 4);
            r.bytes(raw.data(), raw.size(), name);
            for (std::size_t i = 0; i < chunk; ++i) {
                const auto* b = reinterpret_cast<const unsigned char*>(raw.data() + 4 * i);
                const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) |
                                           (static_cast<std::uint32_t>(b[1]) << 8) |
                                           (static_cast<std::uint32_t>(b[2]) << 16) |
                                           (static_cast<std::uint32_t>(b[3]) << 24);
                values.push_back(static_cast<double>(std::bit_cast<float>(bits)));
            }
            done += chunk;
        }
        out.push_back({std::move(name), Tensor(std::move(dims), std::move(values))});
    }
    return out;
}

void save_weights(const net::HybridModelParams& params, const std::filesystem::path& path,
                  const std::vector<NamedTensor>& extra)
{
    std::vector<NamedTensor> all;
    for (const auto& [name, t] : params.named())
        all.push_back({name, *t});
    all.insert(all.end(), extra.begin(), extra.end());
    auto out = open_out(path, std::ios::binary);
    write_tensors(all, out);
    finish(out, path);
}

net::HybridModelParams params_from_tensors(std::vector<NamedTensor> tensors, std::vector<NamedTensor>* extra)
{
    net::HybridModelParams p;
    std::set<std::string> found;
    auto take = [&](const std::string& name, Tensor& into) {
        found.insert(name);
        into = std::move(std::find_if(tensors.begin(), tensors.end(), [&](const NamedTensor& t) {
                             return t.name == name;
                         })->value);
    };
    auto has = [&](const std::string& name) {
        return std::any_of(tensors.begin(), tensors.end(), [&](const NamedTensor& t) { return t.name == name; });
    };
    auto require = [&](const std::string& name, Tensor& into) {
        if (!has(name))
            throw PersistError(Kind::MissingField, name, "MissingField(" + name + "): tensor absent from archive");
        take(name, into);
    };

    require("embedding", p.embedding);
    // Convolution banks in archive order.
    for (const auto& t : tensors) {
        unsigned width = 0;
        char tail[16] = {};
        if (std::sscanf(t.name.c_str(), "conv.w%u.%15s", &width, tail) == 2 && std::string(tail) == "kernel")
            p.convs.push_back({width, {}, {}});
    }
    if (p.convs.empty())
        throw PersistError(Kind::MissingField, "conv", "MissingField(conv): no convolution kernels in archive");
    for (auto& c : p.convs) {
        require(fmt::format("conv.w{}.kernel", c.width), c.kernels);
        require(fmt::format("conv.w{}.bias", c.width), c.bias);
    }
    require("gru.W_z", p.gru.w_z);
    require("gru.U_z", p.gru.u_z);
    require("gru.b_z", p.gru.b_z);
    require("gru.W_r", p.gru.w_r);
    require("gru.U_r", p.gru.u_r);
    require("gru.b_r", p.gru.b_r);
    require("gru.W_h", p.gru.w_h);
    require("gru.U_h", p.gru.u_h);
    require("gru.b_h", p.gru.b_h);
    if (has("aux.table"))
        take("aux.table", p.aux_table);
    require("dense.W", p.dense_w);
    require("dense.b", p.dense_b);
    require("out.W", p.out_w);
    require("out.b", p.out_b);

    if (extra)
        for (auto& t : tensors)
            if (!found.count(t.name))
                extra->push_back(std::move(t));
    return p;
}

net::HybridModelParams load_weights(const std::filesystem::path& path, std::vector<NamedTensor>* extra)
{
    auto in = open_in(path, std::ios::binary);
    return params_from_tensors(read_tensors(in), extra);
}

// ---------------------------------------------------------------------------
// Tokenizer

void write_tokenizer(const text::Vocabulary& vocab, std::ostream& out)
{
    out << kTokenizerTag << ' ' << kTokenizerVersion << ' ' << text::kRuleVersion << '\n';
    const auto& tokens = vocab.tokens();
    for (std::size_t id = text::kReservedIds; id < tokens.size(); ++id)
        out << id << '\t' << tokens[id] << '\n';
}

text::Vocabulary read_tokenizer(std::istream& in)
{
    std::string header;
    if (!std::getline(in, header))
        throw PersistError(Kind::TruncatedFile, "header", "TruncatedFile: tokenizer file is empty");
    std::istringstream hs(header);
    std::string tag, version, rules;
    hs >> tag >> version >> rules;
    if (tag != kTokenizerTag)
        throw PersistError(Kind::BadMagic, "", "BadMagic: not a tokenizer file");
    if (version != kTokenizerVersion)
        throw PersistError(Kind::VersionMismatch, "version",
                           fmt::format("VersionMismatch: tokenizer format {} (supported: {})", version,
                                       kTokenizerVersion));
    if (rules != text::kRuleVersion)
        throw PersistError(Kind::VersionMismatch, "rules",
                           fmt::format("VersionMismatch: tokenizer built with text rules '{}', this build uses '{}'",
                                       rules, text::kRuleVersion));
    std::vector<std::string> tokens;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        const auto tab = line.find('\t');
        std::size_t id = 0;
        const auto id_text = line.substr(0, tab);
        const auto [ptr, ec] = std::from_chars(id_text.data(), id_text.data() + id_text.size(), id);
        if (tab == std::string::npos || ec != std::errc() || ptr != id_text.data() + id_text.size() ||
            tab + 1 == line.size())
            throw PersistError(Kind::BadValue, "line " + std::to_string(line_no),
                               fmt::format("tokenizer line {} is not 'id<TAB>token'", line_no));
        if (id != text::kReservedIds + tokens.size())
            throw PersistError(Kind::BadValue, "line " + std::to_string(line_no),
                               fmt::format("tokenizer line {}: id {} out of sequence", line_no, id));
        tokens.push_back(line.substr(tab + 1));
    }
    try {
        return text::Vocabulary::from_tokens(std::move(tokens));
    } catch (const text::TextError& e) {
        throw PersistError(Kind::BadValue, "", e.what());
    }
}

void save_tokenizer(const text::Vocabulary& vocab, const std::filesystem::path& path)
{
    auto out = open_out(path, std::ios::binary);
    write_tokenizer(vocab, out);
    finish(out, path);
}

text::Vocabulary load_tokenizer(const std::filesystem::path& path)
{
    auto in = open_in(path, std::ios::binary);
    return read_tokenizer(in);
}

// ---------------------------------------------------------------------------
// Configuration

nlohmann::json to_json(const ModelSettings& s)
{
    const auto& m = s.model;
    return {
        {"format_version", kConfigVersion},
        {"model",
         {{"vocab_size", m.vocab_size},
          {"embed_dim", m.embed_dim},
          {"seq_len", m.seq_len},
          {"kernel_widths", m.kernel_widths},
          {"filters", m.filters},
          {"gru_hidden", m.gru_hidden},
          {"dense_hidden", m.dense_hidden},
          {"use_tfidf_aux", m.use_tfidf_aux},
          {"aux_dim", m.aux_dim},
          {"dropout_rate", m.dropout},
          {"seed", m.seed}}},
        {"training",
         {{"epochs", s.hyper.epochs},
          {"batch_size", s.hyper.batch_size},
          {"learning_rate", s.hyper.learning_rate},
          {"early_stop_patience", s.hyper.early_stop_patience}}},
        {"vocabulary", {{"max_size", s.max_vocab}, {"min_df", s.min_df}}},
        {"split", {{"seed", s.split_seed}, {"ratio", s.split_ratio}, {"val_ratio", s.val_ratio}}},
        {"tfidf", {{"documents", s.tfidf_documents}, {"log_base", "e"}}},
        {"text_rules", text::kRuleVersion},
        {"positive_class", "ai"},
        {"threshold", net::kDecisionThreshold},
    };
}

ModelSettings settings_from_json(const nlohmann::json& j, std::vector<std::string>* warnings)
{
    if (!j.is_object())
        throw PersistError(Kind::BadValue, "", "configuration must be a JSON object");
    const int version = get<int>(j, "format_version");
    if (version != kConfigVersion)
        throw PersistError(Kind::VersionMismatch, "format_version",
                           fmt::format("VersionMismatch: config format {} (supported: {})", version, kConfigVersion));
    note_unknown(j,
                 {"format_version", "model", "training", "vocabulary", "split", "tfidf", "text_rules",
                  "positive_class", "threshold"},
                 "", warnings);

    ModelSettings s;
    const auto& m = need(j, "model");
    note_unknown(m,
                 {"vocab_size", "embed_dim", "seq_len", "kernel_widths", "filters", "gru_hidden", "dense_hidden",
                  "use_tfidf_aux", "aux_dim", "dropout_rate", "seed"},
                 "model.", warnings);
    s.model.vocab_size = get_size(m, "vocab_size");
    s.model.embed_dim = get_size(m, "embed_dim");
    s.model.seq_len = get_size(m, "seq_len");
    s.model.kernel_widths = get<std::vector<std::size_t>>(m, "kernel_widths");
    s.model.filters = get_size(m, "filters");
    s.model.gru_hidden = get_size(m, "gru_hidden");
    s.model.dense_hidden = get_size(m, "dense_hidden");
    s.model.use_tfidf_aux = get<bool>(m, "use_tfidf_aux");
    s.model.aux_dim = get_size(m, "aux_dim");
    s.model.dropout = get<double>(m, "dropout_rate");
    s.model.seed = get<std::uint64_t>(m, "seed");

    const auto& t = need(j, "training");
    note_unknown(t, {"epochs", "batch_size", "learning_rate", "early_stop_patience"}, "training.", warnings);
    s.hyper.epochs = get_size(t, "epochs");
    s.hyper.batch_size = get_size(t, "batch_size");
    s.hyper.learning_rate = get<double>(t, "learning_rate");
    s.hyper.early_stop_patience = get_size(t, "early_stop_patience");

    const auto& v = need(j, "vocabulary");
    note_unknown(v, {"max_size", "min_df"}, "vocabulary.", warnings);
    s.max_vocab = get_size(v, "max_size");
    s.min_df = get_size(v, "min_df");

    const auto& sp = need(j, "split");
    note_unknown(sp, {"seed", "ratio", "val_ratio"}, "split.", warnings);
    s.split_seed = get<std::uint64_t>(sp, "seed");
    s.split_ratio = get<double>(sp, "ratio");
    s.val_ratio = get<double>(sp, "val_ratio");

    const auto& tf = need(j, "tfidf");
    note_unknown(tf, {"documents", "log_base"}, "tfidf.", warnings);
    s.tfidf_documents = get_size(tf, "documents");
    if (get<std::string>(tf, "log_base") != "e")
        throw PersistError(Kind::BadValue, "log_base", "only natural-log TF-IDF weights are supported");

    if (get<std::string>(j, "text_rules") != text::kRuleVersion)
        throw PersistError(Kind::VersionMismatch, "text_rules",
                           fmt::format("VersionMismatch: config written for text rules '{}', this build uses '{}'",
                                       get<std::string>(j, "text_rules"), text::kRuleVersion));
    if (get<std::string>(j, "positive_class") != "ai")
        throw PersistError(Kind::BadValue, "positive_class", "positive_class must be \"ai\"");
    if (get<double>(j, "threshold") != net::kDecisionThreshold)
        throw PersistError(Kind::BadValue, "threshold",
                           fmt::format("threshold must be {}", net::kDecisionThreshold));
    return s;
}

void save_config(const ModelSettings& settings, const std::filesystem::path& path)
{
    auto out = open_out(path, std::ios::binary);
    out << to_json(settings).dump(2) << '\n';
    finish(out, path);
}

ModelSettings load_config(const std::filesystem::path& path, std::vector<std::string>* warnings)
{
    auto in = open_in(path, std::ios::binary);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw PersistError(Kind::BadValue, "", fmt::format("{}: {}", path.string(), e.what()));
    }
    return settings_from_json(j, warnings);
}

// ---------------------------------------------------------------------------
// Bundle

namespace {

constexpr const char* kDocFreqTensor = "tfidf.doc_freq";

} // namespace

void save_model(const ModelBundle& b, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw PersistError(Kind::Io, dir.string(), "cannot create " + dir.string() + ": " + ec.message());

    // Document frequencies indexed by vocabulary id; reserved ids hold 0.
    const auto& vocab = b.context.vocab;
    Tensor df({vocab.size()});
    for (std::size_t id = text::kReservedIds; id < vocab.size(); ++id)
        df[id] = b.context.tfidf.df(vocab.token(static_cast<text::TokenId>(id))).value_or(0);
    save_weights(b.params, dir / kWeightsFile, {{kDocFreqTensor, df}});
    save_tokenizer(vocab, dir / kTokenizerFile);
    save_config(b.settings, dir / kConfigFile);
}

ModelBundle load_model(const std::filesystem::path& dir, std::vector<std::string>* warnings)
{
    ModelBundle b;
    b.settings = load_config(dir / kConfigFile, warnings);
    b.context.vocab = load_tokenizer(dir / kTokenizerFile);
    std::vector<NamedTensor> extra;
    b.params = load_weights(dir / kWeightsFile, &extra);

    const auto it = std::find_if(extra.begin(), extra.end(), [](const NamedTensor& t) { return t.name == kDocFreqTensor; });
    if (it == extra.end())
        throw PersistError(Kind::MissingField, kDocFreqTensor, "MissingField(tfidf.doc_freq)");
    if (it->value.dims() != Tensor::Dims{b.context.vocab.size()})
        throw PersistError(Kind::BadValue, kDocFreqTensor, "document-frequency table does not match the vocabulary");
    text::TfIdfModel::DocFreq df;
    for (std::size_t id = text::kReservedIds; id < b.context.vocab.size(); ++id)
        if (it->value[id] > 0.0)
            df.emplace(b.context.vocab.token(static_cast<text::TokenId>(id)),
                       static_cast<std::uint32_t>(it->value[id]));
    try {
        b.context.tfidf = text::TfIdfModel(b.settings.tfidf_documents, std::move(df));
    } catch (const text::TextError& e) {
        throw PersistError(Kind::BadValue, "tfidf", e.what());
    }
    if (b.settings.model.vocab_size != b.context.vocab.size())
        throw PersistError(Kind::BadValue, "vocab_size",
                           fmt::format("config vocab_size {} but tokenizer has {} entries",
                                       b.settings.model.vocab_size, b.context.vocab.size()));
    try {
        net::check_params(b.params, b.settings.model);
    } catch (const net::ModelError& e) {
        throw PersistError(Kind::BadValue, e.field(), e.what());
    }
    return b;
}

} // namespace htd::persist
