#include "htd/baseline.hpp"

#include <cmath>
#include <stdexcept>

namespace htd::net {

namespace {

double logistic(double x)
{
    if (x >= 0)
        return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

double LogisticBaseline::score(const SparseFeatures& x) const
{
    double z = bias;
    for (const auto& [id, v] : x)
        if (id < weights.size())
            z += weights[id] * v;
    return logistic(z);
}

LogisticBaseline fit_baseline(std::span<const SparseFeatures> features, std::span<const int> labels,
                              std::size_t vocab_size, const BaselineHyper& hyper)
{
    if (features.size() != labels.size() || features.empty())
        throw std::invalid_argument("fit_baseline: need equally many (non-zero) feature rows and labels");
    LogisticBaseline m;
    m.weights.assign(vocab_size, 0.0);
    std::vector<double> g(vocab_size);
    const double inv_n = 1.0 / static_cast<double>(features.size());
    for (std::size_t it = 0; it < hyper.iterations; ++it) {
        std::fill(g.begin(), g.end(), 0.0);
        double gb = 0.0;
        for (std::size_t i = 0; i < features.size(); ++i) {
            const double err = m.score(features[i]) - labels[i];
            for (const auto& [id, v] : features[i])
                if (id < vocab_size)
                    g[id] += err * v;
            gb += err;
        }
        for (std::size_t k = 0; k < vocab_size; ++k)
            m.weights[k] -= hyper.learning_rate * g[k] * inv_n;
        m.bias -= hyper.learning_rate * gb * inv_n;
    }
    return m;
}

} // namespace htd::net
