#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "htd/tensor.hpp"

// Reverse-mode differentiation over a flat, append-only tape. Nodes are
// recorded in creation order, which is a topological order, so the backward
// pass is a single reverse sweep.
namespace htd::grad {

class GradError : public std::runtime_error {
public:
    enum class Kind { ShapeMismatch, NonFinite, NotScalarLoss, BadArgument };

    GradError(Kind kind, std::string op, const std::string& detail);
    Kind kind() const noexcept { return kind_; }
    const std::string& op() const noexcept { return op_; }

private:
    Kind kind_;
    std::string op_;
};

struct Var {
    std::uint32_t index = 0;
};

// Row-sparse gradient accumulator for lookup tables. Only rows that were
// read receive an entry.
struct RowGrads {
    std::size_t width = 0;
    std::map<std::uint32_t, std::vector<double>> rows;

    std::vector<double>& row(std::uint32_t id);
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    Var constant(Tensor value);
    Var variable(Tensor value);
    // Leaf that reads `value` in place and adds its gradient into `grad_sink`
    // (same dims). Both must outlive the tape. A null sink makes the leaf a
    // constant that is not copied.
    Var parameter(const Tensor& value, Tensor* grad_sink);

    const Tensor& value(Var v) const;
    // Gradient of a variable after backward(); zeros when it received none.
    Tensor grad(Var v) const;
    bool requires_grad(Var v) const { return nodes_.at(v.index).requires_grad; }

    /// Seeds d(loss)/d(loss) = 1 and sweeps the tape backwards once.
    void backward(Var loss);

    std::size_t size() const noexcept { return nodes_.size(); }

    // Op plumbing: records a result. The backward callback is dropped when no
    // input requires a gradient. `op` must have static storage duration.
    Var record(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn backward);
    Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward)
    {
        return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
    }
    // A result with no tape inputs whose backward writes somewhere outside the
    // tape (e.g. a row-sparse table gradient).
    Var record_source(std::string_view op, Tensor value, BackwardFn backward);
    // Gradient buffer of an input, allocated (zeroed) on first use.
    Tensor& grad_buffer(Var v);

private:
    struct Node {
        Tensor value;
        const Tensor* external = nullptr;
        Tensor grad;
        Tensor* grad_sink = nullptr;
        bool requires_grad = false;
        std::string_view op;
        BackwardFn backward;
    };

    Var push(Node node);

    std::vector<Node> nodes_;
};

// Elementwise, identical dims.
Var add(Tape& tape, Var a, Var b);
Var mul(Tape& tape, Var a, Var b);
Var relu(Tape& tape, Var a);
Var tanh(Tape& tape, Var a);
Var sigmoid(Tape& tape, Var a);

// a[m,k] x b[k,n] -> [m,n]
Var matmul(Tape& tape, Var a, Var b);
Var reshape(Tape& tape, Var a, Tensor::Dims dims);
// Concatenates along the last axis; leading dims must agree.
Var concat_last_dim(Tape& tape, std::span<const Var> parts);
Var concat_last_dim(Tape& tape, Var a, Var b);
// Sum of all elements -> [1].
Var sum(Tape& tape, Var a);
// Row i of a rank-2 tensor -> [cols].
Var row(Tape& tape, Var a, std::size_t i);

// input[L,E], kernels[F,w,E], bias[F] -> [L-w+1, F]
Var conv1d(Tape& tape, Var input, Var kernels, Var bias);
// [T,F] -> [F], max over T. Ties route the gradient to the first maximum.
Var global_max_pool(Tape& tape, Var a);

struct GruWeights {
    Var w_z, u_z, b_z;
    Var w_r, u_r, b_r;
    Var w_h, u_h, b_h;
};

/// One GRU step. x[E], h[H]; W_* are [H,E], U_* are [H,H], b_* are [H].
///   z = sigmoid(W_z x + U_z h + b_z)
///   r = sigmoid(W_r x + U_r h + b_r)
///   c = tanh(W_h x + U_h (r*h) + b_h)
///   h' = (1 - z) * h + z * c
Var gru_step(Tape& tape, Var x, Var h, const GruWeights& w);

// Clamps into [lo, hi]; the gradient passes only where lo < x < hi.
Var clamp(Tape& tape, Var a, double lo, double hi);

/// -[y ln p + (1-y) ln(1-p)] for a single probability p ([1]) and y in {0,1}.
Var bce_loss(Tape& tape, Var p, double y);

/// Gathers rows of `table` ([V,E]) -> [ids.size(), E]. The backward pass adds
/// into `sink` (may be null for inference). Rows listed in `frozen_rows`
/// never receive gradient.
Var embedding_lookup(Tape& tape, const Tensor& table, std::span<const std::uint32_t> ids, RowGrads* sink,
                     std::span<const std::uint32_t> frozen_rows = {});

/// sum_i weights[i] * table[ids[i], :] -> [E].
Var embedding_bag(Tape& tape, const Tensor& table, std::span<const std::uint32_t> ids,
                  std::span<const double> weights, RowGrads* sink);

} // namespace htd::grad
