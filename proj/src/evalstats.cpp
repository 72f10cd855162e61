#include "htd/evalstats.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/special_functions/gamma.hpp>
#include <fmt/format.h>

namespace htd::eval {

namespace {

double ratio(std::uint64_t num, std::uint64_t den) { return static_cast<double>(num) / static_cast<double>(den); }

} // namespace

bool MetricsReport::is_undefined(const std::string& name) const
{
    return std::find(undefined.begin(), undefined.end(), name) != undefined.end();
}

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels)
{
    if (predictions.size() != labels.size())
        throw EvalError(EvalError::Kind::LengthMismatch, fmt::format("LengthMismatch: {} predictions vs {} labels",
                                                                     predictions.size(), labels.size()));
    if (predictions.empty())
        throw EvalError(EvalError::Kind::EmptyInput, "EmptyInput: no predictions");
    ConfusionMatrix m;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const int p = predictions[i], y = labels[i];
        if ((p != 0 && p != 1) || (y != 0 && y != 1))
            throw EvalError(EvalError::Kind::BadArgument, fmt::format("non-binary value at position {}", i));
        if (p == 1 && y == 1)
            ++m.tp;
        else if (p == 1)
            ++m.fp;
        else if (y == 1)
            ++m.fn;
        else
            ++m.tn;
    }
    return m;
}

MetricsReport metrics(const ConfusionMatrix& m)
{
    if (m.total() == 0)
        throw EvalError(EvalError::Kind::EmptyMatrix, "EmptyMatrix: confusion matrix has no observations");
    MetricsReport r;
    r.accuracy = ratio(m.tp + m.tn, m.total());
    if (m.tp + m.fp > 0)
        r.precision = ratio(m.tp, m.tp + m.fp);
    else
        r.undefined.push_back("precision");
    if (m.tp + m.fn > 0)
        r.recall = ratio(m.tp, m.tp + m.fn);
    else
        r.undefined.push_back("recall");
    if (r.undefined.empty() && r.precision + r.recall > 0.0)
        r.f1 = ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn); // 2PR/(P+R) without intermediate rounding
    else
        r.undefined.push_back("f1");
    return r;
}

double chi_square_survival(double statistic, unsigned df)
{
    if (df == 0)
        throw EvalError(EvalError::Kind::ZeroDf, "ZeroDf: degrees of freedom must be positive");
    if (statistic <= 0.0)
        return 1.0;
    return boost::math::gamma_q(0.5 * df, 0.5 * statistic);
}

ChiSquareResult chi_square(std::span<const double> observed, std::span<const double> expected, unsigned df)
{
    if (observed.size() != expected.size())
        throw EvalError(EvalError::Kind::LengthMismatch,
                        fmt::format("LengthMismatch: {} observed vs {} expected", observed.size(), expected.size()));
    if (observed.size() < 2)
        throw EvalError(EvalError::Kind::EmptyInput, "EmptyInput: need at least two cells");
    if (df == 0)
        throw EvalError(EvalError::Kind::ZeroDf, "ZeroDf: degrees of freedom must be positive");
    double stat = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        if (!(expected[i] > 0.0) || !std::isfinite(expected[i]))
            throw EvalError(EvalError::Kind::NonPositiveExpected,
                            fmt::format("NonPositiveExpected: expected[{}] = {}", i, expected[i]));
        if (observed[i] < 0.0 || !std::isfinite(observed[i]))
            throw EvalError(EvalError::Kind::BadArgument, fmt::format("observed[{}] = {} is not a count", i, observed[i]));
        const double d = observed[i] - expected[i];
        stat += d * d / expected[i];
    }
    return {stat, df, chi_square_survival(stat, df)};
}

ChiSquareResult independence_test(const ConfusionMatrix& m)
{
    const double total = static_cast<double>(m.total());
    const double row_pos = static_cast<double>(m.tp + m.fp);
    const double row_neg = static_cast<double>(m.fn + m.tn);
    const double col_pos = static_cast<double>(m.tp + m.fn);
    const double col_neg = static_cast<double>(m.fp + m.tn);
    if (total == 0.0 || row_pos == 0.0 || row_neg == 0.0 || col_pos == 0.0 || col_neg == 0.0)
        throw EvalError(EvalError::Kind::DegenerateMarginals,
                        "DegenerateMarginals: every row and column of the 2x2 table needs a non-zero total");
    const double observed[] = {static_cast<double>(m.tp), static_cast<double>(m.fp), static_cast<double>(m.fn),
                               static_cast<double>(m.tn)};
    const double expected[] = {row_pos * col_pos / total, row_pos * col_neg / total, row_neg * col_pos / total,
                               row_neg * col_neg / total};
    return chi_square(observed, expected, 1);
}

std::string comparative_report(std::vector<ComparativeEntry> entries)
{
    std::stable_sort(entries.begin(), entries.end(),
                     [](const ComparativeEntry& a, const ComparativeEntry& b) { return a.accuracy > b.accuracy; });
    std::size_t name_width = 5;
    for (const auto& e : entries)
        name_width = std::max(name_width, e.name.size());
    std::string out = fmt::format("{:<{}}  {:>12}  {:>10}\n", "Model", name_width, "Accuracy (%)", "F1 (%)");
    for (const auto& e : entries)
        out += fmt::format("{:<{}}  {:>12.1f}  {:>10.1f}\n", e.name, name_width, 100.0 * e.accuracy, 100.0 * e.f1);
    return out;
}

std::vector<MetricDiscrepancy> check_reported(const MetricsReport& recomputed, const ReportedMetrics& reported,
                                              int decimals)
{
    const double scale = std::pow(10.0, decimals);
    std::vector<MetricDiscrepancy> out;
    auto check = [&](const char* name, const std::optional<double>& value, double actual) {
        if (!value)
            return;
        const double rounded = std::round(actual * scale) / scale;
        if (std::abs(rounded - *value) > 0.5 / scale)
            out.push_back({name, *value, actual});
    };
    check("accuracy", reported.accuracy, recomputed.accuracy);
    check("precision", reported.precision, recomputed.precision);
    check("recall", reported.recall, recomputed.recall);
    check("f1", reported.f1, recomputed.f1);
    return out;
}

EvaluationReport evaluate(std::span<const int> predictions, std::span<const int> labels)
{
    EvaluationReport r;
    r.confusion = confusion(predictions, labels);
    r.metrics = metrics(r.confusion);
    try {
        r.chi_square = independence_test(r.confusion);
    } catch (const EvalError& e) {
        r.chi_square_note = e.what();
    }
    return r;
}

nlohmann::json to_json(const ConfusionMatrix& m)
{
    return {{"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}, {"tn", m.tn}, {"layout", "[[TP, FP], [FN, TN]]"}};
}

nlohmann::json to_json(const MetricsReport& r)
{
    return {{"accuracy", r.accuracy}, {"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1},
            {"undefined", r.undefined}};
}

nlohmann::json to_json(const ChiSquareResult& r)
{
    return {{"statistic", r.statistic}, {"df", r.degrees_of_freedom}, {"p", r.p_value}};
}

nlohmann::json to_json(const EvaluationReport& r)
{
    nlohmann::json j = {{"confusion", to_json(r.confusion)}, {"metrics", to_json(r.metrics)}};
    if (r.chi_square)
        j["chi_square"] = to_json(*r.chi_square);
    else
        j["chi_square"] = {{"statistic", nullptr}, {"df", 1}, {"p", nullptr}, {"note", r.chi_square_note}};
    return j;
}

std::string render_confusion(const ConfusionMatrix& m)
{
    const auto w = std::max<std::size_t>(
        {fmt::formatted_size("{}", m.tp), fmt::formatted_size("{}", m.fp), fmt::formatted_size("{}", m.fn),
         fmt::formatted_size("{}", m.tn), 2});
    std::string out;
    out += fmt::format("[[{:>{}}, {:>{}}],\n", m.tp, w, m.fp, w);
    out += fmt::format(" [{:>{}}, {:>{}}]]\n", m.fn, w, m.tn, w);
    out += "legend: [[TP, FP], [FN, TN]]; rows = predicted (ai, human), columns = actual (ai, human); "
           "positive class = ai\n";
    return out;
}

std::string render_text(const EvaluationReport& r)
{
    std::string out = "Confusion matrix\n";
    out += render_confusion(r.confusion);
    out += "\nMetrics\n";
    auto line = [&](const char* name, double v) {
        out += fmt::format("  {:<10} {:.6f}{}\n", name, v, r.metrics.is_undefined(name) ? "  (undefined)" : "");
    };
    line("accuracy", r.metrics.accuracy);
    line("precision", r.metrics.precision);
    line("recall", r.metrics.recall);
    line("f1", r.metrics.f1);
    out += "\nChi-square independence test (predicted vs actual)\n";
    if (r.chi_square)
        out += fmt::format("  statistic  {:.6f}\n  df         {}\n  p-value    {:.6g}\n", r.chi_square->statistic,
                           r.chi_square->degrees_of_freedom, r.chi_square->p_value);
    else
        out += "  not computed: " + r.chi_square_note + "\n";
    return out;
}

} // namespace htd::eval
