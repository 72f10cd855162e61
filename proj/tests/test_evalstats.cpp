#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "htd/evalstats.hpp"
#include "htd/rng.hpp"

using namespace htd::eval;

namespace {

// Survival function of chi-square(df) by composite Simpson integration of the
// density over [x, x + 400]; independent of the incomplete-gamma route.
double survival_by_quadrature(double x, unsigned df)
{
    const double k = 0.5 * df;
    const double norm = std::pow(2.0, k) * std::tgamma(k);
    auto density = [&](double t) { return std::pow(t, k - 1.0) * std::exp(-0.5 * t) / norm; };
    const int n = 400000;
    const double hi = x + 400.0, h = (hi - x) / n;
    double s = density(x) + density(hi);
    for (int i = 1; i < n; ++i)
        s += density(x + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

std::string fmt_six(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

EvalError::Kind kind_of(auto&& f)
{
    try {
        f();
    } catch (const EvalError& e) {
        return e.kind();
    }
    FAIL("expected EvalError");
    return EvalError::Kind::BadArgument;
}

} // namespace

TEST_CASE("confusion counts")
{
    const int p1[] = {1, 1, 0, 0}, l1[] = {1, 0, 1, 0};
    CHECK(confusion(p1, l1) == ConfusionMatrix{1, 1, 1, 1});
    const int p2[] = {1, 0};
    CHECK(confusion(p2, p2) == ConfusionMatrix{1, 0, 0, 1});
    const int a3[] = {1, 0, 1}, a4[] = {1, 0, 1, 1};
    CHECK(kind_of([&] { confusion(a3, a4); }) == EvalError::Kind::LengthMismatch);
    CHECK(kind_of([&] { confusion({}, {}); }) == EvalError::Kind::EmptyInput);
    const int bad[] = {2};
    CHECK(kind_of([&] { confusion(bad, bad); }) == EvalError::Kind::BadArgument);
}

TEST_CASE("metrics of the reference matrix")
{
    const auto r = metrics({1850, 150, 140, 1620});
    CHECK(r.accuracy == doctest::Approx(3470.0 / 3760.0).epsilon(1e-15));
    CHECK(std::abs(r.accuracy - 0.922872) < 1e-6);
    CHECK(std::abs(r.precision - 0.925000) < 1e-6);
    CHECK(std::abs(r.recall - 0.929648) < 1e-6);
    CHECK(std::abs(r.f1 - 0.927319) < 1e-6);
    CHECK(r.undefined.empty());
}

TEST_CASE("metric edge cases")
{
    const auto perfect = metrics({5, 0, 0, 5});
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f1 == 1.0);

    const auto no_positive_predictions = metrics({0, 0, 3, 4});
    CHECK(no_positive_predictions.precision == 0.0);
    CHECK(no_positive_predictions.is_undefined("precision"));
    CHECK(no_positive_predictions.is_undefined("f1"));
    CHECK_FALSE(no_positive_predictions.is_undefined("recall"));

    const auto all_wrong = metrics({0, 2, 2, 0});
    CHECK(all_wrong.is_undefined("f1"));
    CHECK(all_wrong.f1 == 0.0);

    CHECK(kind_of([] { metrics({}); }) == EvalError::Kind::EmptyMatrix);
}

TEST_CASE("metrics properties over random predictions")
{
    htd::SplitMix64 rng(99);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.below(200);
        std::vector<int> p(n), l(n);
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = static_cast<int>(rng.below(2));
            l[i] = static_cast<int>(rng.below(2));
        }
        const auto m = confusion(p, l);
        const auto r = metrics(m);
        CHECK(std::llround(r.accuracy * static_cast<double>(m.total())) == static_cast<long long>(m.tp + m.tn));
        for (double v : {r.accuracy, r.precision, r.recall, r.f1}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        if (r.undefined.empty() && r.precision > 0 && r.recall > 0) {
            CHECK(r.f1 >= std::min(r.precision, r.recall) - 1e-15);
            CHECK(r.f1 <= std::max(r.precision, r.recall) + 1e-15);
        }
    }
}

TEST_CASE("chi_square statistic and p-value")
{
    const double o[] = {50, 50}, e[] = {45, 55};
    const auto r = chi_square(o, e, 1);
    CHECK(std::abs(r.statistic - 1.010101) < 1e-6);
    CHECK(r.statistic == doctest::Approx(25.0 / 45.0 + 25.0 / 55.0).epsilon(1e-15));

    const auto same = chi_square(e, e, 1);
    CHECK(same.statistic == 0.0);
    CHECK(same.p_value == 1.0);

    CHECK(std::abs(chi_square_survival(3.841, 1) - 0.05) < 1e-3);
    CHECK(std::abs(chi_square_survival(3.841, 1) - survival_by_quadrature(3.841, 1)) < 1e-8);
}

TEST_CASE("chi-square survival agrees with quadrature")
{
    for (unsigned df = 1; df <= 6; ++df)
        for (double x : {0.5, 1.0, 2.7, 3.841, 7.0, 12.5, 30.0}) {
            INFO("df=" << df << " x=" << x);
            CHECK(std::abs(chi_square_survival(x, df) - survival_by_quadrature(x, df)) < 1e-8);
        }
}

TEST_CASE("chi_square errors")
{
    const double o2[] = {1, 2}, o3[] = {1, 2, 3}, e0[] = {1, 0}, o1[] = {1};
    CHECK(kind_of([&] { chi_square(o2, o3, 1); }) == EvalError::Kind::LengthMismatch);
    CHECK(kind_of([&] { chi_square(o2, e0, 1); }) == EvalError::Kind::NonPositiveExpected);
    CHECK(kind_of([&] { chi_square(o2, o2, 0); }) == EvalError::Kind::ZeroDf);
    CHECK(kind_of([&] { chi_square(o1, o1, 1); }) == EvalError::Kind::EmptyInput);
}

TEST_CASE("chi_square invariances")
{
    htd::SplitMix64 rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.below(6);
        std::vector<double> o(n), e(n);
        for (std::size_t i = 0; i < n; ++i) {
            o[i] = static_cast<double>(rng.below(100));
            e[i] = 1.0 + rng.uniform() * 99.0;
        }
        const auto base = chi_square(o, e, static_cast<unsigned>(n - 1));
        std::vector<std::size_t> perm(n);
        for (std::size_t i = 0; i < n; ++i)
            perm[i] = i;
        htd::shuffle(std::span<std::size_t>(perm), rng);
        std::vector<double> po(n), pe(n);
        for (std::size_t i = 0; i < n; ++i) {
            po[i] = o[perm[i]];
            pe[i] = e[perm[i]];
        }
        CHECK(chi_square(po, pe, static_cast<unsigned>(n - 1)).statistic == doctest::Approx(base.statistic).epsilon(1e-12));
    }
    for (unsigned df = 1; df <= 4; ++df) {
        double prev = 1.0;
        for (double x = 0.0; x < 40.0; x += 0.25) {
            const double p = chi_square_survival(x, df);
            CHECK(p <= prev);
            prev = p;
        }
    }
}

TEST_CASE("independence test")
{
    const auto r = independence_test({1850, 150, 140, 1620});
    const double total = 3760;
    const double expected[] = {2000 * 1990 / total, 2000 * 1770 / total, 1760 * 1990 / total, 1760 * 1770 / total};
    const double observed[] = {1850, 150, 140, 1620};
    double stat = 0;
    for (int i = 0; i < 4; ++i)
        stat += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
    CHECK(r.statistic == doctest::Approx(stat).epsilon(1e-12));
    CHECK(r.statistic == doctest::Approx(2685.868169816726).epsilon(1e-10));
    CHECK(r.statistic > 3.841);
    CHECK(r.p_value < 0.05);
    CHECK(r.degrees_of_freedom == 1);

    const auto flat = independence_test({10, 10, 10, 10});
    CHECK(flat.statistic == 0.0);
    CHECK(flat.p_value == 1.0);

    CHECK(kind_of([] { independence_test({5, 0, 5, 0}); }) == EvalError::Kind::DegenerateMarginals);
}

TEST_CASE("comparative report")
{
    const auto table = comparative_report(
        {{"system C", .885, .893}, {"hybrid", .925, .921}, {"system B", .897, .902}});
    const auto a = table.find("hybrid"), b = table.find("system B"), c = table.find("system C");
    CHECK(a < b);
    CHECK(b < c);
    CHECK(table.find("92.5") != std::string::npos);
    CHECK(table.find("92.1") != std::string::npos);
    CHECK(table.find("89.7") != std::string::npos);
    CHECK(table.find("90.2") != std::string::npos);
    CHECK(table.find("88.5") != std::string::npos);
    CHECK(table.find("89.3") != std::string::npos);

    const auto single = comparative_report({{"Only", .5, .5}});
    CHECK(std::count(single.begin(), single.end(), '\n') == 2);

    const auto tie = comparative_report({{"first", .8, .1}, {"second", .8, .2}});
    CHECK(tie.find("first") < tie.find("second"));
}

TEST_CASE("reported figures are checked against the matrix")
{
    const auto r = metrics({1850, 150, 140, 1620});
    const auto d = check_reported(r, {0.925, 0.913, 0.930, 0.921}, 3);
    REQUIRE(d.size() == 3);
    CHECK(d[0].metric == "accuracy");
    CHECK(d[1].metric == "precision");
    CHECK(d[2].metric == "f1");
    CHECK(check_reported(r, {0.923, 0.925, 0.930, 0.927}, 3).empty());
}

TEST_CASE("evaluation report renders the same numbers as json")
{
    const int p[] = {1, 1, 0, 0, 1, 0}, l[] = {1, 0, 0, 0, 1, 1};
    const auto rep = evaluate(p, l);
    const auto j = to_json(rep);
    CHECK(j["confusion"]["tp"] == 2);
    CHECK(j["metrics"]["accuracy"].get<double>() == rep.metrics.accuracy);
    const auto text = render_text(rep);
    CHECK(text.find(fmt_six(rep.metrics.accuracy)) != std::string::npos);
    CHECK(text.find("[[TP, FP], [FN, TN]]") != std::string::npos);

    const int ones[] = {1, 1};
    const auto degenerate = evaluate(ones, ones);
    CHECK_FALSE(degenerate.chi_square);
    CHECK(to_json(degenerate)["chi_square"]["p"].is_null());
}
