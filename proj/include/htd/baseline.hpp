#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "htd/textproc.hpp"

// Reference classifier for comparison tables: logistic regression on
// L2-normalised TF-IDF vectors, fitted by full-batch gradient descent.
namespace htd::net {

using SparseFeatures = std::vector<std::pair<text::TokenId, double>>;

struct LogisticBaseline {
    std::vector<double> weights; // one per vocabulary id
    double bias = 0.0;

    double score(const SparseFeatures& x) const;
};

struct BaselineHyper {
    std::size_t iterations = 300;
    double learning_rate = 1.0;
};

LogisticBaseline fit_baseline(std::span<const SparseFeatures> features, std::span<const int> labels,
                              std::size_t vocab_size, const BaselineHyper& hyper = {});

} // namespace htd::net
