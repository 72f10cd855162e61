#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace htd::eval {

class EvalError : public std::runtime_error {
public:
    enum class Kind { LengthMismatch, EmptyInput, EmptyMatrix, NonPositiveExpected, ZeroDf, DegenerateMarginals, BadArgument };

    EvalError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

// Binary confusion counts with class 1 as the positive class. Rendered as
// [[TP, FP], [FN, TN]]: rows are predictions, columns are true labels.
struct ConfusionMatrix {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    std::uint64_t tn = 0;

    std::uint64_t total() const { return tp + fp + fn + tn; }
    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct MetricsReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    // Names of metrics whose denominator was zero; those are reported as 0.
    std::vector<std::string> undefined;

    bool is_undefined(const std::string& name) const;
};

struct ChiSquareResult {
    double statistic = 0.0;
    unsigned degrees_of_freedom = 0;
    double p_value = 1.0;
};

/// Predictions and labels are 0/1 values of equal, non-zero length.
ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels);

MetricsReport metrics(const ConfusionMatrix& m);

/// Pearson statistic sum (O - E)^2 / E with p = Q(df/2, statistic/2).
ChiSquareResult chi_square(std::span<const double> observed, std::span<const double> expected, unsigned df);

/// Upper tail of the chi-square distribution.
double chi_square_survival(double statistic, unsigned df);

/// 2x2 test of independence between predicted and true class: expected cell
/// counts come from the marginals, df = 1, no continuity correction.
ChiSquareResult independence_test(const ConfusionMatrix& m);

struct ComparativeEntry {
    std::string name;
    double accuracy;
    double f1;
};

/// Plain-text table sorted by accuracy (descending, stable), percentages to
/// one decimal.
std::string comparative_report(std::vector<ComparativeEntry> entries);

// Figures quoted for a confusion matrix by some external source.
struct ReportedMetrics {
    std::optional<double> accuracy, precision, recall, f1;
};

struct MetricDiscrepancy {
    std::string metric;
    double reported;
    double recomputed;
};

/// Lists every reported figure that differs from the value recomputed from
/// the matrix once the latter is rounded to `decimals` places.
std::vector<MetricDiscrepancy> check_reported(const MetricsReport& recomputed, const ReportedMetrics& reported,
                                              int decimals);

struct EvaluationReport {
    ConfusionMatrix confusion;
    MetricsReport metrics;
    std::optional<ChiSquareResult> chi_square;
    std::string chi_square_note; // why chi_square is absent, if it is
};

EvaluationReport evaluate(std::span<const int> predictions, std::span<const int> labels);

nlohmann::json to_json(const ConfusionMatrix& m);
nlohmann::json to_json(const MetricsReport& r);
nlohmann::json to_json(const ChiSquareResult& r);
nlohmann::json to_json(const EvaluationReport& r);

/// Aligned text rendering of the same numbers as to_json.
std::string render_text(const EvaluationReport& r);
std::string render_confusion(const ConfusionMatrix& m);

} // namespace htd::eval
