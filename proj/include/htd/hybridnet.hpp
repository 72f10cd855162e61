#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "htd/grad.hpp"
#include "htd/tensor.hpp"
#include "htd/textproc.hpp"

// Hybrid text classifier: token embeddings feed a bank of 1-D convolutions
// (max-pooled per filter) and a GRU in parallel; the pooled features and the
// final hidden state are concatenated and passed through a dense relu layer
// and a single sigmoid unit giving P(ai).
namespace htd::net {

class ModelError : public std::runtime_error {
public:
    enum class Kind { BadConfig, ShapeMismatch, EmptyAfterTokenize, DegenerateTrainingSet, EmptySet, NonFinite };

    ModelError(Kind kind, std::string field, const std::string& what)
        : std::runtime_error(what), kind_(kind), field_(std::move(field))
    {
    }
    Kind kind() const noexcept { return kind_; }
    // Offending config field for BadConfig, empty otherwise.
    const std::string& field() const noexcept { return field_; }

private:
    Kind kind_;
    std::string field_;
};

struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t embed_dim = 64;
    std::size_t seq_len = 256;
    std::vector<std::size_t> kernel_widths{3, 4, 5};
    std::size_t filters = 32;
    std::size_t gru_hidden = 64;
    std::size_t dense_hidden = 64;
    // Adds a learned projection of the document's L2-normalised TF-IDF
    // vector to the concatenated features.
    bool use_tfidf_aux = false;
    std::size_t aux_dim = 16;
    double dropout = 0.2;
    std::uint64_t seed = 42;

    std::size_t conv_features() const { return kernel_widths.size() * filters; }
    // Width of the CNN and GRU concatenation, plus the auxiliary block.
    std::size_t hybrid_dim() const { return conv_features() + gru_hidden + (use_tfidf_aux ? aux_dim : 0); }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Throws ModelError(BadConfig) naming the first invalid field.
void validate(const ModelConfig& config);

struct ConvParams {
    std::size_t width = 0;
    Tensor kernels; // [F, width, E]
    Tensor bias;    // [F]
};

struct GruParams {
    Tensor w_z, u_z, b_z;
    Tensor w_r, u_r, b_r;
    Tensor w_h, u_h, b_h;
};

struct HybridModelParams {
    Tensor embedding; // [V, E]; row 0 (PAD) stays zero
    std::vector<ConvParams> convs;
    GruParams gru;
    Tensor aux_table; // [V, aux_dim], only with use_tfidf_aux
    Tensor dense_w;   // [D, hybrid_dim]
    Tensor dense_b;   // [D]
    Tensor out_w;     // [1, D]
    Tensor out_b;     // [1]

    // Stable (name, tensor) listing used by the optimiser and by persistence.
    std::vector<std::pair<std::string, Tensor*>> named();
    std::vector<std::pair<std::string, const Tensor*>> named() const;

    friend bool operator==(const HybridModelParams& a, const HybridModelParams& b);
};

HybridModelParams init_params(const ModelConfig& config);

/// Checks every tensor against the config; throws ShapeMismatch or NonFinite.
void check_params(const HybridModelParams& params, const ModelConfig& config);

// One encoded document plus its sparse TF-IDF features (only read when the
// auxiliary block is enabled).
struct ModelInput {
    text::EncodedSequence sequence;
    std::vector<std::pair<text::TokenId, double>> tfidf;
};

// Gradient buffers mirroring HybridModelParams. Lookup tables get row-sparse
// accumulators; everything else is dense.
struct ParamGrads {
    grad::RowGrads embedding;
    std::vector<Tensor> conv_kernels, conv_bias;
    std::vector<Tensor> gru; // w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h
    grad::RowGrads aux_table;
    Tensor dense_w, dense_b, out_w, out_b;

    static ParamGrads zeros_for(const HybridModelParams& params);
    // this += other, in a fixed element order.
    void accumulate(const ParamGrads& other);
};

struct Dropout {
    double rate = 0.0;
    std::uint64_t seed = 0;
};

// Nodes of one recorded forward pass.
struct ForwardGraph {
    grad::Var hybrid;
    grad::Var probability;
};

/// Records the forward pass on `tape`. With `grads` non-null every parameter
/// gradient lands there after tape.backward(); `dropout` enables training-mode
/// dropout on the dense hidden layer.
ForwardGraph build_forward(grad::Tape& tape, const HybridModelParams& params, const ModelConfig& config,
                           const ModelInput& input, ParamGrads* grads = nullptr,
                           std::optional<Dropout> dropout = std::nullopt);

/// Inference-mode probability in (0, 1).
double forward(const HybridModelParams& params, const ModelConfig& config, const ModelInput& input);

// Everything needed to turn raw text into a ModelInput.
struct TextContext {
    text::Vocabulary vocab;
    text::TfIdfModel tfidf; // document frequencies restricted to vocab terms
};

/// Builds the model input for a token list. An empty list is rejected unless
/// `empty_as_oov`, in which case it becomes a single OOV token.
ModelInput make_input(const TextContext& ctx, const ModelConfig& config, const text::TokenList& tokens,
                      bool empty_as_oov = false);

inline constexpr double kDecisionThreshold = 0.5;

struct Prediction {
    int label = 0; // 1 = ai
    double score = 0.0;
};

inline int label_for(double score) { return score >= kDecisionThreshold ? 1 : 0; }

/// Throws ModelError(EmptyAfterTokenize) when no token survives cleaning.
Prediction predict(const HybridModelParams& params, const ModelConfig& config, const TextContext& ctx,
                   std::string_view text);

/// Scores many inputs; parallel across inputs, each result independent of
/// the thread count.
std::vector<double> score_all(const HybridModelParams& params, const ModelConfig& config,
                              std::span<const ModelInput> inputs);

} // namespace htd::net
