#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "htd/hybridnet.hpp"

namespace htd::net {

struct TrainHyper {
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    // Stop after this many epochs without a strict gain in validation
    // accuracy; 0 disables early stopping.
    std::size_t early_stop_patience = 3;

    friend bool operator==(const TrainHyper&, const TrainHyper&) = default;
};

struct LabeledInput {
    ModelInput input;
    int label = 0; // 1 = ai
};

struct TrainReport {
    std::vector<double> train_loss;   // mean BCE over each epoch's batches
    std::vector<double> val_accuracy; // after each epoch
    std::vector<double> val_loss;     // mean BCE on the validation set, no dropout
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0; // 1-based epoch whose parameters were kept
    bool early_stopped = false;
};

struct TrainResult {
    HybridModelParams params;
    TrainReport report;
};

using EpochCallback =
    std::function<void(std::size_t epoch, double train_loss, double val_accuracy, double val_loss)>;

/// Adam on mean BCE with seeded per-epoch shuffling. Per-example gradients of
/// a batch may be computed in parallel; they are summed in batch order, so the
/// result does not depend on the thread count. Returns the parameters of the
/// epoch with the best validation accuracy; ties go to the lower validation
/// loss, then to the earlier epoch. Patience counts only strict accuracy gains.
TrainResult train(HybridModelParams params, const ModelConfig& config, std::span<const LabeledInput> train_set,
                  std::span<const LabeledInput> val_set, const TrainHyper& hyper, const EpochCallback& on_epoch = {});

struct Evaluation {
    double accuracy = 0.0; // fraction of thresholded scores equal to the label
    double loss = 0.0;     // mean BCE
};

Evaluation evaluate(const HybridModelParams& params, const ModelConfig& config, std::span<const LabeledInput> data);

inline double accuracy(const HybridModelParams& params, const ModelConfig& config, std::span<const LabeledInput> data)
{
    return evaluate(params, config, data).accuracy;
}

// Adam state for one parameter set; exposed for single-step tests.
class Adam {
public:
    Adam(const HybridModelParams& params, double learning_rate);

    /// One update with gradient `scale * grads` (scale = 1/batch size for a
    /// summed batch).
    void step(HybridModelParams& params, const ParamGrads& grads, double scale = 1.0);

private:
    double lr_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

} // namespace htd::net
