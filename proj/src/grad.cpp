#include "htd/grad.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "htd/kernels.hpp"

namespace htd::grad {

namespace kern = htd::kernels::parallel;

namespace {

std::string error_message(GradError::Kind kind, const std::string& op, const std::string& detail)
{
    const char* name = "GradError";
    switch (kind) {
    case GradError::Kind::ShapeMismatch: name = "ShapeMismatch"; break;
    case GradError::Kind::NonFinite: name = "NonFinite"; break;
    case GradError::Kind::NotScalarLoss: name = "NotScalarLoss"; break;
    case GradError::Kind::BadArgument: name = "BadArgument"; break;
    }
    return std::string(name) + " in " + op + (detail.empty() ? "" : ": " + detail);
}

void expect_dims(std::string_view op, const Tensor& t, const Tensor::Dims& want)
{
    if (t.dims() != want)
        throw GradError(GradError::Kind::ShapeMismatch, std::string(op),
                        "got " + dims_to_string(t.dims()) + ", expected " + dims_to_string(want));
}

void expect_rank(std::string_view op, const Tensor& t, std::size_t rank)
{
    if (t.rank() != rank)
        throw GradError(GradError::Kind::ShapeMismatch, std::string(op),
                        "got " + dims_to_string(t.dims()) + ", expected rank " + std::to_string(rank));
}

double sigmoid_scalar(double x)
{
    if (x >= 0.0)
        return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

GradError::GradError(Kind kind, std::string op, const std::string& detail)
    : std::runtime_error(error_message(kind, op, detail)), kind_(kind), op_(std::move(op))
{
}

std::vector<double>& RowGrads::row(std::uint32_t id)
{
    auto [it, inserted] = rows.try_emplace(id);
    if (inserted)
        it->second.assign(width, 0.0);
    return it->second;
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::push(Node node)
{
    nodes_.push_back(std::move(node));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value)
{
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::variable(Tensor value)
{
    Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    return push(std::move(n));
}

Var Tape::parameter(const Tensor& value, Tensor* grad_sink)
{
    if (grad_sink && grad_sink->dims() != value.dims())
        throw GradError(GradError::Kind::ShapeMismatch, "parameter",
                        "gradient sink " + dims_to_string(grad_sink->dims()) + " vs value " +
                            dims_to_string(value.dims()));
    Node n;
    n.external = &value;
    n.grad_sink = grad_sink;
    n.requires_grad = grad_sink != nullptr;
    return push(std::move(n));
}

const Tensor& Tape::value(Var v) const
{
    const auto& n = nodes_.at(v.index);
    return n.external ? *n.external : n.value;
}

Tensor Tape::grad(Var v) const
{
    const auto& n = nodes_.at(v.index);
    if (n.grad_sink)
        return *n.grad_sink;
    if (n.grad.empty())
        return value(v).zeros_like();
    return n.grad;
}

Tensor& Tape::grad_buffer(Var v)
{
    auto& n = nodes_.at(v.index);
    if (n.grad_sink)
        return *n.grad_sink;
    if (n.grad.empty())
        n.grad = value(v).zeros_like();
    return n.grad;
}

Var Tape::record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn backward)
{
    if (!value.all_finite())
        throw GradError(GradError::Kind::NonFinite, std::string(op), "forward value");
    Node n;
    n.value = std::move(value);
    n.op = op;
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(), [&](Var v) { return requires_grad(v); });
    if (n.requires_grad)
        n.backward = std::move(backward);
    return push(std::move(n));
}

Var Tape::record_source(std::string_view op, Tensor value, BackwardFn backward)
{
    if (!value.all_finite())
        throw GradError(GradError::Kind::NonFinite, std::string(op), "forward value");
    Node n;
    n.value = std::move(value);
    n.op = op;
    n.requires_grad = static_cast<bool>(backward);
    n.backward = std::move(backward);
    return push(std::move(n));
}

void Tape::backward(Var loss)
{
    if (value(loss).size() != 1)
        throw GradError(GradError::Kind::NotScalarLoss, "backward",
                        "loss has dims " + dims_to_string(value(loss).dims()));
    grad_buffer(loss)[0] += 1.0;
    for (std::size_t i = loss.index + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.backward || n.grad.empty())
            continue;
        if (!n.grad.all_finite())
            throw GradError(GradError::Kind::NonFinite, std::string(n.op), "incoming gradient");
        n.backward(*this, n.grad);
    }
}

// ---------------------------------------------------------------------------
// Elementwise

Var add(Tape& tape, Var a, Var b)
{
    const Tensor& va = tape.value(a);
    expect_dims("add", tape.value(b), va.dims());
    Tensor out = va;
    const auto vb = tape.value(b).data();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] += vb[i];
    return tape.record("add", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        for (Var v : {a, b})
            if (t.requires_grad(v)) {
                auto d = t.grad_buffer(v).data();
                for (std::size_t i = 0; i < g.size(); ++i)
                    d[i] += g[i];
            }
    });
}

Var mul(Tape& tape, Var a, Var b)
{
    const Tensor& va = tape.value(a);
    expect_dims("mul", tape.value(b), va.dims());
    Tensor out = va;
    const auto vb = tape.value(b).data();
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] *= vb[i];
    return tape.record("mul", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
        const auto va = t.value(a).data();
        const auto vb = t.value(b).data();
        if (t.requires_grad(a)) {
            auto d = t.grad_buffer(a).data();
            for (std::size_t i = 0; i < g.size(); ++i)
                d[i] += g[i] * vb[i];
        }
        if (t.requires_grad(b)) {
            auto d = t.grad_buffer(b).data();
            for (std::size_t i = 0; i < g.size(); ++i)
                d[i] += g[i] * va[i];
        }
    });
}

Var relu(Tape& tape, Var a)
{
    Tensor out = tape.value(a);
    for (auto& v : out.data())
        v = v > 0.0 ? v : 0.0;
    return tape.record("relu", std::move(out), {a}, [a](Tape& t, const Tensor& g) {
        const auto x = t.value(a).data();
        auto d = t.grad_buffer(a).data();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] > 0.0)
                d[i] += g[i];
    });
}

Var tanh(Tape& tape, Var a)
{
    Tensor out = tape.value(a);
    for (auto& v : out.data())
        v = std::tanh(v);
    auto y = std::make_shared<Tensor>(out);
    return tape.record("tanh", std::move(out), {a}, [a, y](Tape& t, const Tensor& g) {
        auto d = t.grad_buffer(a).data();
        for (std::size_t i = 0; i < g.size(); ++i)
            d[i] += g[i] * (1.0 - (*y)[i] * (*y)[i]);
    });
}

Var sigmoid(Tape& tape, Var a)
{
    Tensor out = tape.value(a);
    for (auto& v : out.data())
        v = sigmoid_scalar(v);
    auto y = std::make_shared<Tensor>(out);
    return tape.record("sigmoid", std::move(out), {a}, [a, y](Tape& t, const Tensor& g) {
        auto d = t.grad_buffer(a).data();
        for (std::size_t i = 0; i < g.size(); ++i)
            d[i] += g[i] * (*y)[i] * (1.0 - (*y)[i]);
    });
}

// ---------------------------------------------------------------------------
// Shape and linear algebra

Var matmul(Tape& tape, Var a, Var b)
{
    const Tensor& va = tape.value(a);
    const Tensor& vb = tape.value(b);
    expect_rank("matmul", va, 2);
    expect_rank("matmul", vb, 2);
    const std::size_t m = va.dim(0), k = va.dim(1), n = vb.dim(1);
    expect_dims("matmul", vb, {k, n});
    Tensor out({m, n});
    kern::matmul(va.data(), vb.data(), out.data(), m, k, n);
    return tape.record("matmul", std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Tensor& g) {
        if (t.requires_grad(a)) // dA[m,k] += g[m,n] * B[k,n]^T
            kern::matmul_bt(g.data(), t.value(b).data(), t.grad_buffer(a).data(), m, n, k);
        if (t.requires_grad(b)) // dB[k,n] += A[m,k]^T * g[m,n]
            kern::matmul_at(t.value(a).data(), g.data(), t.grad_buffer(b).data(), k, m, n);
    });
}

Var reshape(Tape& tape, Var a, Tensor::Dims dims)
{
    Tensor out = tape.value(a);
    if (element_count(dims) != out.size())
        throw GradError(GradError::Kind::ShapeMismatch, "reshape",
                        dims_to_string(out.dims()) + " to " + dims_to_string(dims));
    out.reshape(std::move(dims));
    return tape.record("reshape", std::move(out), {a}, [a](Tape& t, const Tensor& g) {
        auto d = t.grad_buffer(a).data();
        for (std::size_t i = 0; i < g.size(); ++i)
            d[i] += g[i];
    });
}

Var concat_last_dim(Tape& tape, std::span<const Var> parts)
{
    if (parts.empty())
        throw GradError(GradError::Kind::BadArgument, "concat_last_dim", "no inputs");
    const Tensor& first = tape.value(parts[0]);
    Tensor::Dims lead(first.dims().begin(), first.dims().end() - 1);
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (Var p : parts) {
        const Tensor& v = tape.value(p);
        if (v.rank() != first.rank() || !std::equal(lead.begin(), lead.end(), v.dims().begin()))
            throw GradError(GradError::Kind::ShapeMismatch, "concat_last_dim",
                            dims_to_string(v.dims()) + " vs " + dims_to_string(first.dims()));
        widths.push_back(v.dims().back());
        total += v.dims().back();
    }
    const std::size_t rows = element_count(first.dims()) / first.dims().back();
    Tensor::Dims out_dims = lead;
    out_dims.push_back(total);
    Tensor out(out_dims);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const auto src = tape.value(parts[p]).data();
        for (std::size_t r = 0; r < rows; ++r)
            std::copy_n(src.data() + r * widths[p], widths[p], out.data().data() + r * total + offset);
        offset += widths[p];
    }

    std::vector<Var> inputs(parts.begin(), parts.end());
    return tape.record("concat_last_dim", std::move(out), parts, [inputs, widths, rows, total](Tape& t, const Tensor& g) {
        std::size_t off = 0;
        for (std::size_t p = 0; p < inputs.size(); ++p) {
            if (t.requires_grad(inputs[p])) {
                auto d = t.grad_buffer(inputs[p]).data();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < widths[p]; ++c)
                        d[r * widths[p] + c] += g[r * total + off + c];
            }
            off += widths[p];
        }
    });
}

Var concat_last_dim(Tape& tape, Var a, Var b)
{
    const Var parts[] = {a, b};
    return concat_last_dim(tape, std::span<const Var>(parts));
}

Var sum(Tape& tape, Var a)
{
    double s = 0.0;
    for (double v : tape.value(a).data())
        s += v;
    return tape.record("sum", Tensor::scalar(s), {a}, [a](Tape& t, const Tensor& g) {
        for (auto& d : t.grad_buffer(a).data())
            d += g[0];
    });
}

Var row(Tape& tape, Var a, std::size_t i)
{
    const Tensor& va = tape.value(a);
    expect_rank("row", va, 2);
    if (i >= va.dim(0))
        throw GradError(GradError::Kind::BadArgument, "row", "index " + std::to_string(i) + " out of range");
    const std::size_t cols = va.dim(1);
    std::vector<double> vals(va.data().begin() + i * cols, va.data().begin() + (i + 1) * cols);
    return tape.record("row", Tensor::vector(std::move(vals)), {a}, [a, i, cols](Tape& t, const Tensor& g) {
        auto d = t.grad_buffer(a).data();
        for (std::size_t c = 0; c < cols; ++c)
            d[i * cols + c] += g[c];
    });
}

// ---------------------------------------------------------------------------
// Convolution and pooling

Var conv1d(Tape& tape, Var input, Var kernels, Var bias)
{
    const Tensor& x = tape.value(input);
    const Tensor& k = tape.value(kernels);
    expect_rank("conv1d", x, 2);
    expect_rank("conv1d", k, 3);
    const kernels::ConvShape s{x.dim(0), x.dim(1), k.dim(0), k.dim(1)};
    expect_dims("conv1d", k, {s.filters, s.width, s.channels});
    expect_dims("conv1d", tape.value(bias), {s.filters});
    if (s.width > s.length)
        throw GradError(GradError::Kind::ShapeMismatch, "conv1d",
                        "kernel width " + std::to_string(s.width) + " exceeds length " + std::to_string(s.length));
    Tensor out({s.out_length(), s.filters});
    kern::conv1d_forward(x.data(), k.data(), tape.value(bias).data(), out.data(), s);
    return tape.record("conv1d", std::move(out), {input, kernels, bias},
                       [input, kernels, bias, s](Tape& t, const Tensor& g) {
                           if (t.requires_grad(input))
                               kern::conv1d_backward_input(t.value(kernels).data(), g.data(),
                                                           t.grad_buffer(input).data(), s);
                           const bool dk = t.requires_grad(kernels), db = t.requires_grad(bias);
                           if (dk || db) {
                               Tensor kbuf, bbuf;
                               auto kd = dk ? t.grad_buffer(kernels).data()
                                            : (kbuf = t.value(kernels).zeros_like()).data();
                               auto bd = db ? t.grad_buffer(bias).data() : (bbuf = t.value(bias).zeros_like()).data();
                               kern::conv1d_backward_params(t.value(input).data(), g.data(), kd, bd, s);
                           }
                       });
}

Var global_max_pool(Tape& tape, Var a)
{
    const Tensor& x = tape.value(a);
    expect_rank("global_max_pool", x, 2);
    const std::size_t T = x.dim(0), F = x.dim(1);
    Tensor out({F});
    std::vector<std::size_t> argmax(F, 0);
    for (std::size_t f = 0; f < F; ++f) {
        double best = x.at(0, f);
        for (std::size_t r = 1; r < T; ++r)
            if (x.at(r, f) > best) {
                best = x.at(r, f);
                argmax[f] = r;
            }
        out[f] = best;
    }
    return tape.record("global_max_pool", std::move(out), {a}, [a, F, argmax](Tape& t, const Tensor& g) {
        auto d = t.grad_buffer(a).data();
        for (std::size_t f = 0; f < F; ++f)
            d[argmax[f] * F + f] += g[f];
    });
}

// ---------------------------------------------------------------------------
// Recurrent cell

Var gru_step(Tape& tape, Var x, Var h, const GruWeights& w)
{
    const Tensor& vx = tape.value(x);
    const Tensor& vh = tape.value(h);
    expect_rank("gru_step", vx, 1);
    expect_rank("gru_step", vh, 1);
    const std::size_t E = vx.size(), H = vh.size();
    for (Var m : {w.w_z, w.w_r, w.w_h})
        expect_dims("gru_step", tape.value(m), {H, E});
    for (Var m : {w.u_z, w.u_r, w.u_h})
        expect_dims("gru_step", tape.value(m), {H, H});
    for (Var m : {w.b_z, w.b_r, w.b_h})
        expect_dims("gru_step", tape.value(m), {H});

    // Pre-activation of one gate: W x + U in + b, accumulated in that order.
    auto gate = [&](Var wm, Var um, Var bm, std::span<const double> in) {
        std::vector<double> acc(tape.value(bm).data().begin(), tape.value(bm).data().end());
        std::vector<double> wx(H, 0.0), uh(H, 0.0);
        kern::matmul(tape.value(wm).data(), vx.data(), wx, H, E, 1);
        kern::matmul(tape.value(um).data(), in, uh, H, H, 1);
        for (std::size_t i = 0; i < H; ++i)
            acc[i] = wx[i] + uh[i] + acc[i];
        return acc;
    };

    struct Saved {
        std::vector<double> z, r, c, rh;
    };
    auto saved = std::make_shared<Saved>();
    saved->z = gate(w.w_z, w.u_z, w.b_z, vh.data());
    saved->r = gate(w.w_r, w.u_r, w.b_r, vh.data());
    for (auto& v : saved->z)
        v = sigmoid_scalar(v);
    for (auto& v : saved->r)
        v = sigmoid_scalar(v);
    saved->rh.resize(H);
    for (std::size_t i = 0; i < H; ++i)
        saved->rh[i] = saved->r[i] * vh[i];
    saved->c = gate(w.w_h, w.u_h, w.b_h, saved->rh);
    for (auto& v : saved->c)
        v = std::tanh(v);

    Tensor out({H});
    for (std::size_t i = 0; i < H; ++i)
        out[i] = (1.0 - saved->z[i]) * vh[i] + saved->z[i] * saved->c[i];

    const std::initializer_list<Var> inputs = {x, h, w.w_z, w.u_z, w.b_z, w.w_r, w.u_r, w.b_r, w.w_h, w.u_h, w.b_h};
    return tape.record("gru_step", std::move(out), inputs, [x, h, w, saved, E, H](Tape& t, const Tensor& g) {
        const auto hv = t.value(h).data();
        const auto xv = t.value(x).data();
        const auto& z = saved->z;
        const auto& r = saved->r;
        const auto& c = saved->c;

        std::vector<double> dh(H, 0.0), dx(E, 0.0);
        std::vector<double> da_z(H), da_r(H), da_c(H), drh(H, 0.0);
        for (std::size_t i = 0; i < H; ++i) {
            da_c[i] = g[i] * z[i] * (1.0 - c[i] * c[i]);
            da_z[i] = g[i] * (c[i] - hv[i]) * z[i] * (1.0 - z[i]);
            dh[i] = g[i] * (1.0 - z[i]);
        }
        // Candidate path: U_h sees r*h.
        kern::matmul_at(t.value(w.u_h).data(), da_c, drh, H, H, 1);
        for (std::size_t i = 0; i < H; ++i) {
            da_r[i] = drh[i] * hv[i] * r[i] * (1.0 - r[i]);
            dh[i] += drh[i] * r[i];
        }

        auto param_grads = [&](Var wm, Var um, Var bm, const std::vector<double>& da, std::span<const double> in) {
            if (t.requires_grad(wm))
                kern::matmul_bt(da, xv, t.grad_buffer(wm).data(), H, 1, E);
            if (t.requires_grad(um))
                kern::matmul_bt(da, in, t.grad_buffer(um).data(), H, 1, H);
            if (t.requires_grad(bm)) {
                auto d = t.grad_buffer(bm).data();
                for (std::size_t i = 0; i < H; ++i)
                    d[i] += da[i];
            }
            kern::matmul_at(t.value(wm).data(), da, dx, E, H, 1);
        };
        param_grads(w.w_h, w.u_h, w.b_h, da_c, saved->rh);
        param_grads(w.w_r, w.u_r, w.b_r, da_r, hv);
        param_grads(w.w_z, w.u_z, w.b_z, da_z, hv);
        kern::matmul_at(t.value(w.u_r).data(), da_r, dh, H, H, 1);
        kern::matmul_at(t.value(w.u_z).data(), da_z, dh, H, H, 1);

        if (t.requires_grad(x)) {
            auto d = t.grad_buffer(x).data();
            for (std::size_t i = 0; i < E; ++i)
                d[i] += dx[i];
        }
        if (t.requires_grad(h)) {
            auto d = t.grad_buffer(h).data();
            for (std::size_t i = 0; i < H; ++i)
                d[i] += dh[i];
        }
    });
}

Var clamp(Tape& tape, Var a, double lo, double hi)
{
    Tensor out = tape.value(a);
    for (auto& v : out.data())
        v = std::clamp(v, lo, hi);
    return tape.record("clamp", std::move(out), {a}, [a, lo, hi](Tape& t, const Tensor& g) {
        const auto x = t.value(a).data();
        auto d = t.grad_buffer(a).data();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] > lo && x[i] < hi)
                d[i] += g[i];
    });
}

// ---------------------------------------------------------------------------
// Loss

Var bce_loss(Tape& tape, Var p, double y)
{
    const Tensor& vp = tape.value(p);
    expect_dims("bce_loss", vp, {1});
    if (y != 0.0 && y != 1.0)
        throw GradError(GradError::Kind::BadArgument, "bce_loss", "label must be 0 or 1");
    const double prob = vp[0];
    if (!(prob > 0.0 && prob < 1.0))
        throw GradError(GradError::Kind::NonFinite, "bce_loss", "probability " + std::to_string(prob) +
                                                                    " outside (0, 1)");
    const double loss = -(y * std::log(prob) + (1.0 - y) * std::log(1.0 - prob));
    return tape.record("bce_loss", Tensor::scalar(loss), {p}, [p, y, prob](Tape& t, const Tensor& g) {
        t.grad_buffer(p)[0] += g[0] * (-(y / prob) + (1.0 - y) / (1.0 - prob));
    });
}

// ---------------------------------------------------------------------------
// Lookup tables

Var embedding_lookup(Tape& tape, const Tensor& table, std::span<const std::uint32_t> ids, RowGrads* sink,
                     std::span<const std::uint32_t> frozen_rows)
{
    expect_rank("embedding_lookup", table, 2);
    if (ids.empty())
        throw GradError(GradError::Kind::BadArgument, "embedding_lookup", "no ids");
    const std::size_t V = table.dim(0), E = table.dim(1);
    Tensor out({ids.size(), E});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= V)
            throw GradError(GradError::Kind::BadArgument, "embedding_lookup",
                            "id " + std::to_string(ids[i]) + " >= table rows " + std::to_string(V));
        std::copy_n(table.data().data() + ids[i] * E, E, out.data().data() + i * E);
    }
    if (!sink)
        return tape.record_source("embedding_lookup", std::move(out), nullptr);
    if (sink->width != E)
        throw GradError(GradError::Kind::ShapeMismatch, "embedding_lookup", "row sink width");

    std::vector<std::uint32_t> id_copy(ids.begin(), ids.end());
    std::vector<std::uint32_t> frozen(frozen_rows.begin(), frozen_rows.end());
    return tape.record_source("embedding_lookup", std::move(out),
                       [id_copy, frozen, sink, E](Tape&, const Tensor& g) {
                           for (std::size_t i = 0; i < id_copy.size(); ++i) {
                               if (std::find(frozen.begin(), frozen.end(), id_copy[i]) != frozen.end())
                                   continue;
                               auto& r = sink->row(id_copy[i]);
                               for (std::size_t e = 0; e < E; ++e)
                                   r[e] += g[i * E + e];
                           }
                       });
}

Var embedding_bag(Tape& tape, const Tensor& table, std::span<const std::uint32_t> ids,
                  std::span<const double> weights, RowGrads* sink)
{
    expect_rank("embedding_bag", table, 2);
    if (ids.size() != weights.size())
        throw GradError(GradError::Kind::ShapeMismatch, "embedding_bag", "ids and weights differ in length");
    const std::size_t V = table.dim(0), E = table.dim(1);
    Tensor out({E});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= V)
            throw GradError(GradError::Kind::BadArgument, "embedding_bag",
                            "id " + std::to_string(ids[i]) + " >= table rows " + std::to_string(V));
        for (std::size_t e = 0; e < E; ++e)
            out[e] += weights[i] * table.at(ids[i], e);
    }
    if (!sink)
        return tape.record_source("embedding_bag", std::move(out), nullptr);
    if (sink->width != E)
        throw GradError(GradError::Kind::ShapeMismatch, "embedding_bag", "row sink width");

    std::vector<std::uint32_t> id_copy(ids.begin(), ids.end());
    std::vector<double> w_copy(weights.begin(), weights.end());
    return tape.record_source("embedding_bag", std::move(out), [id_copy, w_copy, sink, E](Tape&, const Tensor& g) {
        for (std::size_t i = 0; i < id_copy.size(); ++i) {
            auto& r = sink->row(id_copy[i]);
            for (std::size_t e = 0; e < E; ++e)
                r[e] += w_copy[i] * g[e];
        }
    });
}

} // namespace htd::grad
