#include "htd/hybridnet.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include <fmt/format.h>

#include "htd/rng.hpp"

namespace htd::net {

namespace {

using grad::Tape;
using grad::Var;

// Keeps the sigmoid output strictly inside (0, 1) even when the logit
// saturates in double precision.
constexpr double kProbabilityMargin = 1e-12;

[[noreturn]] void bad_config(const std::string& field, const std::string& detail)
{
    throw ModelError(ModelError::Kind::BadConfig, field, fmt::format("BadConfig({}): {}", field, detail));
}

Tensor glorot(SplitMix64 rng, Tensor::Dims dims, std::size_t fan_in, std::size_t fan_out)
{
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t(std::move(dims));
    for (auto& v : t.data())
        v = rng.uniform(-a, a);
    return t;
}

// Square matrix with orthonormal rows: modified Gram-Schmidt on a Gaussian
// draw. A row that collapses numerically is redrawn.
Tensor orthogonal(SplitMix64 rng, std::size_t n)
{
    Tensor q({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (;;) {
            std::vector<double> v(n);
            for (auto& x : v)
                x = rng.normal();
            for (std::size_t j = 0; j < i; ++j) {
                double dot = 0.0;
                for (std::size_t c = 0; c < n; ++c)
                    dot += v[c] * q.at(j, c);
                for (std::size_t c = 0; c < n; ++c)
                    v[c] -= dot * q.at(j, c);
            }
            double norm = 0.0;
            for (double x : v)
                norm += x * x;
            norm = std::sqrt(norm);
            if (norm < 1e-6)
                continue;
            for (std::size_t c = 0; c < n; ++c)
                q.at(i, c) = v[c] / norm;
            break;
        }
    }
    return q;
}

void expect_dims(const std::string& name, const Tensor& t, const Tensor::Dims& want)
{
    if (t.dims() != want)
        throw ModelError(ModelError::Kind::ShapeMismatch, "",
                         fmt::format("ShapeMismatch: {} is {}, expected {}", name, dims_to_string(t.dims()),
                                     dims_to_string(want)));
}

void add_rows(grad::RowGrads& into, const grad::RowGrads& from)
{
    for (const auto& [id, src] : from.rows) {
        auto& dst = into.row(id);
        for (std::size_t e = 0; e < src.size(); ++e)
            dst[e] += src[e];
    }
}

void add_dense(Tensor& into, const Tensor& from)
{
    auto d = into.data();
    const auto s = from.data();
    for (std::size_t i = 0; i < d.size(); ++i)
        d[i] += s[i];
}

Tensor* sink(ParamGrads* g, Tensor ParamGrads::*member) { return g ? &(g->*member) : nullptr; }

} // namespace

void validate(const ModelConfig& c)
{
    if (c.vocab_size < text::kReservedIds)
        bad_config("vocab_size", fmt::format("{} leaves no room for the reserved PAD and OOV ids", c.vocab_size));
    if (c.embed_dim == 0)
        bad_config("embed_dim", "must be positive");
    if (c.seq_len == 0)
        bad_config("seq_len", "must be positive");
    if (c.kernel_widths.empty())
        bad_config("kernel width", "at least one convolution width is required");
    for (std::size_t i = 0; i < c.kernel_widths.size(); ++i) {
        const auto w = c.kernel_widths[i];
        if (w == 0 || w > c.seq_len)
            bad_config("kernel width", fmt::format("width {} must be in [1, seq_len={}]", w, c.seq_len));
        if (std::count(c.kernel_widths.begin(), c.kernel_widths.end(), w) > 1)
            bad_config("kernel width", fmt::format("width {} listed twice", w));
    }
    if (c.filters == 0)
        bad_config("filters", "must be positive");
    if (c.gru_hidden == 0)
        bad_config("gru_hidden", "must be positive");
    if (c.dense_hidden == 0)
        bad_config("dense_hidden", "must be positive");
    if (c.use_tfidf_aux && c.aux_dim == 0)
        bad_config("aux_dim", "must be positive when the TF-IDF block is enabled");
    if (!(c.dropout >= 0.0 && c.dropout < 1.0))
        bad_config("dropout", fmt::format("{} is outside [0, 1)", c.dropout));
}

std::vector<std::pair<std::string, Tensor*>> HybridModelParams::named()
{
    std::vector<std::pair<std::string, Tensor*>> out;
    out.emplace_back("embedding", &embedding);
    for (auto& c : convs) {
        out.emplace_back(fmt::format("conv.w{}.kernel", c.width), &c.kernels);
        out.emplace_back(fmt::format("conv.w{}.bias", c.width), &c.bias);
    }
    out.emplace_back("gru.W_z", &gru.w_z);
    out.emplace_back("gru.U_z", &gru.u_z);
    out.emplace_back("gru.b_z", &gru.b_z);
    out.emplace_back("gru.W_r", &gru.w_r);
    out.emplace_back("gru.U_r", &gru.u_r);
    out.emplace_back("gru.b_r", &gru.b_r);
    out.emplace_back("gru.W_h", &gru.w_h);
    out.emplace_back("gru.U_h", &gru.u_h);
    out.emplace_back("gru.b_h", &gru.b_h);
    if (!aux_table.empty())
        out.emplace_back("aux.table", &aux_table);
    out.emplace_back("dense.W", &dense_w);
    out.emplace_back("dense.b", &dense_b);
    out.emplace_back("out.W", &out_w);
    out.emplace_back("out.b", &out_b);
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> HybridModelParams::named() const
{
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (auto& [name, t] : const_cast<HybridModelParams*>(this)->named())
        out.emplace_back(std::move(name), t);
    return out;
}

bool operator==(const HybridModelParams& a, const HybridModelParams& b)
{
    const auto na = a.named(), nb = b.named();
    if (na.size() != nb.size())
        return false;
    for (std::size_t i = 0; i < na.size(); ++i)
        if (na[i].first != nb[i].first || !(*na[i].second == *nb[i].second))
            return false;
    return true;
}

HybridModelParams init_params(const ModelConfig& c)
{
    validate(c);
    const std::size_t V = c.vocab_size, E = c.embed_dim, F = c.filters, H = c.gru_hidden, D = c.dense_hidden;
    // Each tensor draws from its own derived stream so that toggling one
    // block does not shift the values of the others.
    std::uint64_t tag = 0;
    auto stream = [&] { return SplitMix64(derive_seed(c.seed, ++tag)); };

    HybridModelParams p;
    p.embedding = glorot(stream(), {V, E}, V, E);
    std::fill_n(p.embedding.data().begin(), E, 0.0);
    for (const auto w : c.kernel_widths)
        p.convs.push_back({w, glorot(stream(), {F, w, E}, w * E, w * F), Tensor({F})});
    p.gru.w_z = glorot(stream(), {H, E}, E, H);
    p.gru.u_z = orthogonal(stream(), H);
    p.gru.b_z = Tensor({H});
    p.gru.w_r = glorot(stream(), {H, E}, E, H);
    p.gru.u_r = orthogonal(stream(), H);
    p.gru.b_r = Tensor({H});
    p.gru.w_h = glorot(stream(), {H, E}, E, H);
    p.gru.u_h = orthogonal(stream(), H);
    p.gru.b_h = Tensor({H});
    p.dense_w = glorot(stream(), {D, c.hybrid_dim()}, c.hybrid_dim(), D);
    p.dense_b = Tensor({D});
    p.out_w = glorot(stream(), {1, D}, D, 1);
    p.out_b = Tensor({1});
    if (c.use_tfidf_aux)
        p.aux_table = glorot(SplitMix64(derive_seed(c.seed, 1000)), {V, c.aux_dim}, V, c.aux_dim);
    return p;
}

void check_params(const HybridModelParams& p, const ModelConfig& c)
{
    validate(c);
    const std::size_t V = c.vocab_size, E = c.embed_dim, F = c.filters, H = c.gru_hidden, D = c.dense_hidden;
    expect_dims("embedding", p.embedding, {V, E});
    if (p.convs.size() != c.kernel_widths.size())
        throw ModelError(ModelError::Kind::ShapeMismatch, "",
                         fmt::format("ShapeMismatch: {} convolution banks for {} widths", p.convs.size(),
                                     c.kernel_widths.size()));
    for (std::size_t i = 0; i < p.convs.size(); ++i) {
        const auto w = c.kernel_widths[i];
        if (p.convs[i].width != w)
            throw ModelError(ModelError::Kind::ShapeMismatch, "",
                             fmt::format("ShapeMismatch: convolution bank {} has width {}, config says {}", i,
                                         p.convs[i].width, w));
        expect_dims(fmt::format("conv.w{}.kernel", w), p.convs[i].kernels, {F, w, E});
        expect_dims(fmt::format("conv.w{}.bias", w), p.convs[i].bias, {F});
    }
    for (const auto* m : {&p.gru.w_z, &p.gru.w_r, &p.gru.w_h})
        expect_dims("gru.W", *m, {H, E});
    for (const auto* m : {&p.gru.u_z, &p.gru.u_r, &p.gru.u_h})
        expect_dims("gru.U", *m, {H, H});
    for (const auto* m : {&p.gru.b_z, &p.gru.b_r, &p.gru.b_h})
        expect_dims("gru.b", *m, {H});
    if (c.use_tfidf_aux)
        expect_dims("aux.table", p.aux_table, {V, c.aux_dim});
    else if (!p.aux_table.empty())
        throw ModelError(ModelError::Kind::ShapeMismatch, "", "ShapeMismatch: aux.table present but disabled");
    expect_dims("dense.W", p.dense_w, {D, c.hybrid_dim()});
    expect_dims("dense.b", p.dense_b, {D});
    expect_dims("out.W", p.out_w, {1, D});
    expect_dims("out.b", p.out_b, {1});
    for (const auto& [name, t] : p.named())
        if (!t->all_finite())
            throw ModelError(ModelError::Kind::NonFinite, "", "NonFinite: " + name + " holds NaN or Inf");
}

ParamGrads ParamGrads::zeros_for(const HybridModelParams& p)
{
    ParamGrads g;
    g.embedding.width = p.embedding.empty() ? 0 : p.embedding.dim(1);
    for (const auto& c : p.convs) {
        g.conv_kernels.push_back(c.kernels.zeros_like());
        g.conv_bias.push_back(c.bias.zeros_like());
    }
    for (const auto* t : {&p.gru.w_z, &p.gru.u_z, &p.gru.b_z, &p.gru.w_r, &p.gru.u_r, &p.gru.b_r, &p.gru.w_h,
                          &p.gru.u_h, &p.gru.b_h})
        g.gru.push_back(t->zeros_like());
    g.aux_table.width = p.aux_table.empty() ? 0 : p.aux_table.dim(1);
    g.dense_w = p.dense_w.zeros_like();
    g.dense_b = p.dense_b.zeros_like();
    g.out_w = p.out_w.zeros_like();
    g.out_b = p.out_b.zeros_like();
    return g;
}

void ParamGrads::accumulate(const ParamGrads& o)
{
    add_rows(embedding, o.embedding);
    for (std::size_t i = 0; i < conv_kernels.size(); ++i) {
        add_dense(conv_kernels[i], o.conv_kernels[i]);
        add_dense(conv_bias[i], o.conv_bias[i]);
    }
    for (std::size_t i = 0; i < gru.size(); ++i)
        add_dense(gru[i], o.gru[i]);
    add_rows(aux_table, o.aux_table);
    add_dense(dense_w, o.dense_w);
    add_dense(dense_b, o.dense_b);
    add_dense(out_w, o.out_w);
    add_dense(out_b, o.out_b);
}

ForwardGraph build_forward(Tape& tape, const HybridModelParams& p, const ModelConfig& c, const ModelInput& input,
                           ParamGrads* grads, std::optional<Dropout> dropout)
{
    const auto& seq = input.sequence;
    if (seq.ids.size() != c.seq_len)
        throw ModelError(ModelError::Kind::ShapeMismatch, "",
                         fmt::format("ShapeMismatch: sequence of length {} for seq_len {}", seq.ids.size(), c.seq_len));
    if (seq.true_length == 0 || seq.true_length > c.seq_len)
        throw ModelError(ModelError::Kind::ShapeMismatch, "",
                         fmt::format("ShapeMismatch: true_length {} outside [1, {}]", seq.true_length, c.seq_len));

    const text::TokenId frozen[] = {text::kPadId};
    const Var x = grad::embedding_lookup(tape, p.embedding, seq.ids, grads ? &grads->embedding : nullptr, frozen);

    std::vector<Var> parts;
    for (std::size_t i = 0; i < p.convs.size(); ++i) {
        const Var k = tape.parameter(p.convs[i].kernels, grads ? &grads->conv_kernels[i] : nullptr);
        const Var b = tape.parameter(p.convs[i].bias, grads ? &grads->conv_bias[i] : nullptr);
        parts.push_back(grad::global_max_pool(tape, grad::relu(tape, grad::conv1d(tape, x, k, b))));
    }

    const GruParams& g = p.gru;
    const Tensor* gru_tensors[] = {&g.w_z, &g.u_z, &g.b_z, &g.w_r, &g.u_r, &g.b_r, &g.w_h, &g.u_h, &g.b_h};
    Var gv[9];
    for (std::size_t i = 0; i < 9; ++i)
        gv[i] = tape.parameter(*gru_tensors[i], grads ? &grads->gru[i] : nullptr);
    const grad::GruWeights w{gv[0], gv[1], gv[2], gv[3], gv[4], gv[5], gv[6], gv[7], gv[8]};
    Var h = tape.constant(Tensor({c.gru_hidden}));
    for (std::size_t t = 0; t < seq.true_length; ++t)
        h = grad::gru_step(tape, grad::row(tape, x, t), h, w);
    parts.push_back(h);

    if (c.use_tfidf_aux) {
        std::vector<std::uint32_t> ids;
        std::vector<double> weights;
        for (const auto& [id, wt] : input.tfidf) {
            ids.push_back(id);
            weights.push_back(wt);
        }
        parts.push_back(
            grad::embedding_bag(tape, p.aux_table, ids, weights, grads ? &grads->aux_table : nullptr));
    }

    const Var hybrid = grad::concat_last_dim(tape, parts);
    const std::size_t n = c.hybrid_dim(), D = c.dense_hidden;

    const Var dw = tape.parameter(p.dense_w, sink(grads, &ParamGrads::dense_w));
    const Var db = tape.parameter(p.dense_b, sink(grads, &ParamGrads::dense_b));
    Var hidden = grad::reshape(tape, grad::matmul(tape, dw, grad::reshape(tape, hybrid, {n, 1})), {D});
    hidden = grad::relu(tape, grad::add(tape, hidden, db));
    if (dropout && dropout->rate > 0.0) {
        SplitMix64 rng(dropout->seed);
        const double keep_scale = 1.0 / (1.0 - dropout->rate);
        Tensor mask({D});
        for (auto& m : mask.data())
            m = rng.uniform() < dropout->rate ? 0.0 : keep_scale;
        hidden = grad::mul(tape, hidden, tape.constant(std::move(mask)));
    }

    const Var ow = tape.parameter(p.out_w, sink(grads, &ParamGrads::out_w));
    const Var ob = tape.parameter(p.out_b, sink(grads, &ParamGrads::out_b));
    Var logit = grad::reshape(tape, grad::matmul(tape, ow, grad::reshape(tape, hidden, {D, 1})), {1});
    logit = grad::add(tape, logit, ob);
    const Var prob = grad::clamp(tape, grad::sigmoid(tape, logit), kProbabilityMargin, 1.0 - kProbabilityMargin);
    return {hybrid, prob};
}

double forward(const HybridModelParams& params, const ModelConfig& config, const ModelInput& input)
{
    Tape tape;
    return tape.value(build_forward(tape, params, config, input).probability)[0];
}

ModelInput make_input(const TextContext& ctx, const ModelConfig& config, const text::TokenList& tokens,
                      bool empty_as_oov)
{
    ModelInput in;
    if (tokens.empty()) {
        if (!empty_as_oov)
            throw ModelError(ModelError::Kind::EmptyAfterTokenize, "",
                             "EmptyAfterTokenize: no tokens survive cleaning");
        in.sequence.ids.assign(config.seq_len, text::kPadId);
        in.sequence.ids[0] = text::kOovId;
        in.sequence.true_length = 1;
        return in;
    }
    in.sequence = text::encode(tokens, ctx.vocab, config.seq_len);
    if (config.use_tfidf_aux)
        in.tfidf = text::tfidf_features(ctx.tfidf, ctx.vocab, tokens, true);
    return in;
}

Prediction predict(const HybridModelParams& params, const ModelConfig& config, const TextContext& ctx,
                   std::string_view text)
{
    const auto tokens = text::clean_and_tokenize(text);
    const double score = forward(params, config, make_input(ctx, config, tokens));
    return {label_for(score), score};
}

std::vector<double> score_all(const HybridModelParams& params, const ModelConfig& config,
                              std::span<const ModelInput> inputs)
{
    std::vector<double> scores(inputs.size());
    std::vector<std::exception_ptr> errors(inputs.size());
    const auto n = static_cast<std::ptrdiff_t>(inputs.size());
#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            scores[i] = forward(params, config, inputs[i]);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    return scores;
}

} // namespace htd::net
