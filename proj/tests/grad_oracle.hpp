#pragma once

// Central finite-difference oracle for the autodiff ops, shared by the unit
// and acceptance suites. Each op is wrapped into the scalar probe
// loss = sum(op(inputs) * R) with a fixed random R, so every output element
// contributes to every checked derivative.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "htd/grad.hpp"
#include "htd/rng.hpp"

namespace htd::testing {

using grad::Tape;
using grad::Var;

struct OpCase {
    std::vector<Tensor> inputs;
    std::function<Var(Tape&, const std::vector<Var>&)> build;
};

inline Tensor random_tensor(SplitMix64& rng, Tensor::Dims dims, double lo = -1.0, double hi = 1.0)
{
    Tensor t(std::move(dims));
    for (auto& v : t.data())
        v = rng.uniform(lo, hi);
    return t;
}

inline std::size_t small_dim(SplitMix64& rng) { return 1 + static_cast<std::size_t>(rng.below(5)); }

inline double probe_loss(const OpCase& c, const std::vector<Tensor>& inputs, const Tensor& weights)
{
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : inputs)
        vars.push_back(tape.constant(t));
    const Tensor& out = tape.value(c.build(tape, vars));
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i)
        s += out[i] * weights[i];
    return s;
}

struct OracleResult {
    double worst = 0.0; // max |ad - fd| / max(1, |fd|)
    std::size_t checked = 0;
};

inline OracleResult check_gradients(const OpCase& c, SplitMix64& rng, double step = 1e-5)
{
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : c.inputs)
        vars.push_back(tape.variable(t));
    Var out = c.build(tape, vars);
    const Tensor weights = random_tensor(rng, tape.value(out).dims());
    Var loss = grad::sum(tape, grad::mul(tape, out, tape.constant(weights)));
    tape.backward(loss);

    OracleResult r;
    std::vector<Tensor> probe = c.inputs;
    for (std::size_t in = 0; in < c.inputs.size(); ++in) {
        const Tensor ad = tape.grad(vars[in]);
        for (std::size_t i = 0; i < probe[in].size(); ++i) {
            const double x0 = probe[in][i];
            probe[in][i] = x0 + step;
            const double up = probe_loss(c, probe, weights);
            probe[in][i] = x0 - step;
            const double down = probe_loss(c, probe, weights);
            probe[in][i] = x0;
            const double fd = (up - down) / (2.0 * step);
            r.worst = std::max(r.worst, std::abs(ad[i] - fd) / std::max(1.0, std::abs(fd)));
            ++r.checked;
        }
    }
    return r;
}

// Values kept at least `gap` away from zero (relu kink).
inline Tensor away_from_zero(SplitMix64& rng, Tensor::Dims dims, double gap = 1e-2)
{
    Tensor t(std::move(dims));
    for (auto& v : t.data()) {
        const double mag = rng.uniform(gap, 1.0);
        v = rng.below(2) ? mag : -mag;
    }
    return t;
}

// Columns whose top two entries differ by at least `gap` (no argmax ties).
inline Tensor distinct_columns(SplitMix64& rng, std::size_t rows, std::size_t cols, double gap = 1e-2)
{
    for (;;) {
        Tensor t = random_tensor(rng, {rows, cols});
        bool ok = true;
        for (std::size_t c = 0; c < cols && ok; ++c) {
            std::vector<double> col;
            for (std::size_t r = 0; r < rows; ++r)
                col.push_back(t.at(r, c));
            std::sort(col.begin(), col.end());
            if (rows > 1 && col[rows - 1] - col[rows - 2] < gap)
                ok = false;
        }
        if (ok)
            return t;
    }
}

inline Tensor::Dims random_dims(SplitMix64& rng)
{
    if (rng.below(2))
        return {small_dim(rng)};
    return {small_dim(rng), small_dim(rng)};
}

struct NamedGenerator {
    std::string name;
    std::function<OpCase(SplitMix64&)> make;
};

inline std::vector<NamedGenerator> core_op_generators()
{
    using namespace grad;
    std::vector<NamedGenerator> g;
    g.push_back({"add", [](SplitMix64& rng) {
                     auto d = random_dims(rng);
                     return OpCase{{random_tensor(rng, d), random_tensor(rng, d)},
                                   [](Tape& t, const std::vector<Var>& v) { return add(t, v[0], v[1]); }};
                 }});
    g.push_back({"mul", [](SplitMix64& rng) {
                     auto d = random_dims(rng);
                     return OpCase{{random_tensor(rng, d), random_tensor(rng, d)},
                                   [](Tape& t, const std::vector<Var>& v) { return mul(t, v[0], v[1]); }};
                 }});
    g.push_back({"matmul", [](SplitMix64& rng) {
                     const auto m = small_dim(rng), k = small_dim(rng), n = small_dim(rng);
                     return OpCase{{random_tensor(rng, {m, k}), random_tensor(rng, {k, n})},
                                   [](Tape& t, const std::vector<Var>& v) { return matmul(t, v[0], v[1]); }};
                 }});
    g.push_back({"concat_last_dim", [](SplitMix64& rng) {
                     const bool rank2 = rng.below(2);
                     const auto lead = small_dim(rng);
                     auto dims = [&](std::size_t w) { return rank2 ? Tensor::Dims{lead, w} : Tensor::Dims{w}; };
                     return OpCase{{random_tensor(rng, dims(small_dim(rng))), random_tensor(rng, dims(small_dim(rng)))},
                                   [](Tape& t, const std::vector<Var>& v) { return concat_last_dim(t, v[0], v[1]); }};
                 }});
    g.push_back({"relu", [](SplitMix64& rng) {
                     return OpCase{{away_from_zero(rng, random_dims(rng))},
                                   [](Tape& t, const std::vector<Var>& v) { return relu(t, v[0]); }};
                 }});
    g.push_back({"tanh", [](SplitMix64& rng) {
                     return OpCase{{random_tensor(rng, random_dims(rng), -2.0, 2.0)},
                                   [](Tape& t, const std::vector<Var>& v) { return grad::tanh(t, v[0]); }};
                 }});
    g.push_back({"sigmoid", [](SplitMix64& rng) {
                     return OpCase{{random_tensor(rng, random_dims(rng), -3.0, 3.0)},
                                   [](Tape& t, const std::vector<Var>& v) { return sigmoid(t, v[0]); }};
                 }});
    g.push_back({"conv1d", [](SplitMix64& rng) {
                     const auto L = small_dim(rng), E = small_dim(rng), F = small_dim(rng);
                     const auto w = 1 + static_cast<std::size_t>(rng.below(L));
                     return OpCase{{random_tensor(rng, {L, E}), random_tensor(rng, {F, w, E}), random_tensor(rng, {F})},
                                   [](Tape& t, const std::vector<Var>& v) { return conv1d(t, v[0], v[1], v[2]); }};
                 }});
    g.push_back({"global_max_pool", [](SplitMix64& rng) {
                     return OpCase{{distinct_columns(rng, small_dim(rng), small_dim(rng))},
                                   [](Tape& t, const std::vector<Var>& v) { return global_max_pool(t, v[0]); }};
                 }});
    g.push_back({"gru_step", [](SplitMix64& rng) {
                     const auto E = small_dim(rng), H = small_dim(rng);
                     std::vector<Tensor> in{random_tensor(rng, {E}), random_tensor(rng, {H})};
                     for (int gate = 0; gate < 3; ++gate) {
                         in.push_back(random_tensor(rng, {H, E}));
                         in.push_back(random_tensor(rng, {H, H}));
                         in.push_back(random_tensor(rng, {H}));
                     }
                     return OpCase{std::move(in), [](Tape& t, const std::vector<Var>& v) {
                                       const GruWeights w{v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10]};
                                       return gru_step(t, v[0], v[1], w);
                                   }};
                 }});
    g.push_back({"bce_loss", [](SplitMix64& rng) {
                     const double y = static_cast<double>(rng.below(2));
                     return OpCase{{random_tensor(rng, {1}, 0.05, 0.95)},
                                   [y](Tape& t, const std::vector<Var>& v) { return bce_loss(t, v[0], y); }};
                 }});
    return g;
}

} // namespace htd::testing
