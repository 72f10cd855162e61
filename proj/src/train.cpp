#include "htd/train.hpp"

#include <cmath>
#include <exception>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "htd/rng.hpp"

namespace htd::net {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEpsilon = 1e-8;

// Stream tags for derive_seed; arbitrary but fixed.
constexpr std::uint64_t kShuffleTag = 0x5348'5546'0000'0000ULL;
constexpr std::uint64_t kDropoutTag = 0x4452'4F50'0000'0000ULL;

// Visits every parameter tensor in named() order together with a function
// returning its gradient at a flat index.
template <typename Visit>
void for_each_gradient(HybridModelParams& p, const ParamGrads& g, Visit&& visit)
{
    auto rows = [](const grad::RowGrads& r, std::size_t width) {
        return [&r, width](std::size_t i) {
            const auto it = r.rows.find(static_cast<std::uint32_t>(i / width));
            return it == r.rows.end() ? 0.0 : it->second[i % width];
        };
    };
    auto dense = [](const Tensor& t) { return [&t](std::size_t i) { return t[i]; }; };

    visit(p.embedding, rows(g.embedding, p.embedding.dim(1)));
    for (std::size_t i = 0; i < p.convs.size(); ++i) {
        visit(p.convs[i].kernels, dense(g.conv_kernels[i]));
        visit(p.convs[i].bias, dense(g.conv_bias[i]));
    }
    Tensor* gru[] = {&p.gru.w_z, &p.gru.u_z, &p.gru.b_z, &p.gru.w_r, &p.gru.u_r,
                     &p.gru.b_r, &p.gru.w_h, &p.gru.u_h, &p.gru.b_h};
    for (std::size_t i = 0; i < 9; ++i)
        visit(*gru[i], dense(g.gru[i]));
    if (!p.aux_table.empty())
        visit(p.aux_table, rows(g.aux_table, p.aux_table.dim(1)));
    visit(p.dense_w, dense(g.dense_w));
    visit(p.dense_b, dense(g.dense_b));
    visit(p.out_w, dense(g.out_w));
    visit(p.out_b, dense(g.out_b));
}

void check_sets(std::span<const LabeledInput> train_set, std::span<const LabeledInput> val_set)
{
    if (train_set.empty())
        throw ModelError(ModelError::Kind::EmptySet, "", "EmptySet: training set is empty");
    if (val_set.empty())
        throw ModelError(ModelError::Kind::EmptySet, "", "EmptySet: validation set is empty");
    bool seen[2] = {false, false};
    for (const auto& ex : train_set) {
        if (ex.label != 0 && ex.label != 1)
            throw ModelError(ModelError::Kind::DegenerateTrainingSet, "",
                             fmt::format("DegenerateTrainingSet: label {} is not binary", ex.label));
        seen[ex.label] = true;
    }
    if (!seen[0] || !seen[1])
        throw ModelError(ModelError::Kind::DegenerateTrainingSet, "",
                         fmt::format("DegenerateTrainingSet: every training example has label {}", seen[1] ? 1 : 0));
}

} // namespace

Adam::Adam(const HybridModelParams& params, double learning_rate) : lr_(learning_rate)
{
    for (const auto& [name, t] : params.named()) {
        m_.emplace_back(t->size(), 0.0);
        v_.emplace_back(t->size(), 0.0);
    }
}

void Adam::step(HybridModelParams& params, const ParamGrads& grads, double scale)
{
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    std::size_t k = 0;
    for_each_gradient(params, grads, [&](Tensor& p, auto&& grad_at) {
        auto& m = m_.at(k);
        auto& v = v_.at(k);
        ++k;
        auto data = p.data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double g = scale * grad_at(i);
            m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g;
            v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g * g;
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            data[i] -= lr_ * m_hat / (std::sqrt(v_hat) + kEpsilon);
        }
    });
}

Evaluation evaluate(const HybridModelParams& params, const ModelConfig& config, std::span<const LabeledInput> data)
{
    if (data.empty())
        return {};
    std::vector<ModelInput> inputs;
    inputs.reserve(data.size());
    for (const auto& ex : data)
        inputs.push_back(ex.input);
    const auto scores = score_all(params, config, inputs);
    std::size_t correct = 0;
    double loss = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        correct += label_for(scores[i]) == data[i].label;
        loss -= data[i].label == 1 ? std::log(scores[i]) : std::log1p(-scores[i]);
    }
    const double n = static_cast<double>(data.size());
    return {static_cast<double>(correct) / n, loss / n};
}

TrainResult train(HybridModelParams params, const ModelConfig& config, std::span<const LabeledInput> train_set,
                  std::span<const LabeledInput> val_set, const TrainHyper& hyper, const EpochCallback& on_epoch)
{
    check_params(params, config);
    check_sets(train_set, val_set);
    if (hyper.batch_size == 0)
        throw ModelError(ModelError::Kind::BadConfig, "batch_size", "BadConfig(batch_size): must be positive");
    if (!(hyper.learning_rate >= 0.0) || !std::isfinite(hyper.learning_rate))
        throw ModelError(ModelError::Kind::BadConfig, "learning_rate",
                         "BadConfig(learning_rate): must be finite and non-negative");

    TrainResult result{params, {}};
    Adam adam(params, hyper.learning_rate);
    const std::size_t n = train_set.size();
    std::vector<std::size_t> order(n);
    double best_accuracy = -1.0;
    double best_loss = std::numeric_limits<double>::infinity();
    double patience_mark = -1.0; // accuracy that the patience counter must beat
    std::size_t stale = 0;

    for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        SplitMix64 shuffle_rng(derive_seed(config.seed, kShuffleTag + epoch));
        shuffle(std::span<std::size_t>(order), shuffle_rng);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += hyper.batch_size) {
            const std::size_t batch = std::min(hyper.batch_size, n - start);
            std::vector<ParamGrads> grads(batch);
            std::vector<double> losses(batch);
            std::vector<std::exception_ptr> errors(batch);

#pragma omp parallel for schedule(dynamic, 1)
            for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(batch); ++b) {
                try {
                    const std::size_t position = start + static_cast<std::size_t>(b);
                    const LabeledInput& ex = train_set[order[position]];
                    grads[b] = ParamGrads::zeros_for(params);
                    grad::Tape tape;
                    const Dropout drop{config.dropout,
                                       derive_seed(config.seed, kDropoutTag + (epoch - 1) * n + position)};
                    const auto graph = build_forward(tape, params, config, ex.input, &grads[b], drop);
                    const grad::Var loss = grad::bce_loss(tape, graph.probability, ex.label);
                    losses[b] = tape.value(loss)[0];
                    tape.backward(loss);
                } catch (...) {
                    errors[b] = std::current_exception();
                }
            }
            for (std::size_t b = 0; b < batch; ++b) {
                if (!errors[b])
                    continue;
                try {
                    std::rethrow_exception(errors[b]);
                } catch (const grad::GradError& e) {
                    if (e.kind() == grad::GradError::Kind::NonFinite)
                        throw ModelError(ModelError::Kind::NonFinite, "",
                                         fmt::format("NonFinite: training diverged in epoch {} ({})", epoch, e.what()));
                    throw;
                }
            }

            for (std::size_t b = 1; b < batch; ++b)
                grads[0].accumulate(grads[b]);
            for (std::size_t b = 0; b < batch; ++b)
                loss_sum += losses[b];
            if (!std::isfinite(loss_sum))
                throw ModelError(ModelError::Kind::NonFinite, "",
                                 fmt::format("NonFinite: training loss diverged in epoch {}", epoch));
            adam.step(params, grads[0], 1.0 / static_cast<double>(batch));
        }
        for (const auto& [name, t] : params.named())
            if (!t->all_finite())
                throw ModelError(ModelError::Kind::NonFinite, "",
                                 fmt::format("NonFinite: {} diverged in epoch {}", name, epoch));

        const double mean_loss = loss_sum / static_cast<double>(n);
        const auto val = evaluate(params, config, val_set);
        auto& rep = result.report;
        rep.train_loss.push_back(mean_loss);
        rep.val_accuracy.push_back(val.accuracy);
        rep.val_loss.push_back(val.loss);
        rep.epochs_run = epoch;
        if (on_epoch)
            on_epoch(epoch, mean_loss, val.accuracy, val.loss);

        if (val.accuracy > best_accuracy || (val.accuracy == best_accuracy && val.loss < best_loss)) {
            best_accuracy = val.accuracy;
            best_loss = val.loss;
            result.params = params;
            rep.best_epoch = epoch;
        }
        if (val.accuracy > patience_mark) {
            patience_mark = val.accuracy;
            stale = 0;
        } else if (hyper.early_stop_patience > 0 && ++stale >= hyper.early_stop_patience) {
            rep.early_stopped = true;
            break;
        }
    }
    return result;
}

} // namespace htd::net
