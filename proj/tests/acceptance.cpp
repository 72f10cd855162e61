// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Every check runs at its full tolerance.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "grad_oracle.hpp"
#include "htd/corpus.hpp"
#include "htd/evalstats.hpp"
#include "htd/persist.hpp"
#include "htd/pipeline.hpp"
#include "htd/rng.hpp"
#include "htd/textproc.hpp"

using namespace htd;

namespace {

struct Outcome {
    bool pass = true;
    std::vector<std::string> notes;

    void require(bool ok, std::string what)
    {
        if (!ok) {
            pass = false;
            notes.push_back("failed: " + std::move(what));
        }
    }
    void note(std::string what) { notes.push_back(std::move(what)); }
};

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

// Reference confusion matrix tp=1850, fp=150, fn=140, tn=1620.
Outcome reference_metrics()
{
    Outcome o;
    const eval::ConfusionMatrix m{1850, 150, 140, 1620};
    const auto r = eval::metrics(m);
    // Direct evaluation from the counts.
    const double acc = (1850.0 + 1620.0) / 3760.0, prec = 1850.0 / 2000.0, rec = 1850.0 / 1990.0;
    const double f1 = 2.0 * prec * rec / (prec + rec);
    o.require(near(r.accuracy, 0.922872, 1e-6) && near(r.accuracy, acc, 1e-12), fmt::format("accuracy {}", r.accuracy));
    o.require(near(r.precision, 0.925000, 1e-6) && near(r.precision, prec, 1e-12),
              fmt::format("precision {}", r.precision));
    o.require(near(r.recall, 0.929648, 1e-6) && near(r.recall, rec, 1e-12), fmt::format("recall {}", r.recall));
    o.require(near(r.f1, 0.927319, 1e-6) && near(r.f1, f1, 1e-12), fmt::format("f1 {}", r.f1));
    o.require(std::round(r.recall * 1000.0) / 1000.0 == 0.930, "recall does not round to 0.930");

    const auto flagged = eval::check_reported(r, {0.925, 0.913, 0.930, 0.921}, 3);
    std::vector<std::string> names;
    for (const auto& d : flagged) {
        names.push_back(d.metric);
        o.note(fmt::format("published {} {:.3f} does not follow from the matrix (recomputed {:.6f})", d.metric,
                           d.reported, d.recomputed));
    }
    o.require(names == std::vector<std::string>{"accuracy", "precision", "f1"},
              "published 0.925/0.913/0.921 not all flagged, or recall flagged");
    o.note(fmt::format("accuracy {:.6f} precision {:.6f} recall {:.6f} f1 {:.6f}", r.accuracy, r.precision, r.recall,
                       r.f1));
    return o;
}

Outcome separable_corpus()
{
    Outcome o;
    persist::ModelSettings s;
    s.model.seq_len = 32;
    s.model.seed = 42;
    s.split_seed = 42;
    const auto corpus = corpus::make_separable_corpus(1000, 50, 8, 32, 42);
    const auto t = pipeline::train_on_corpus(corpus, s);
    const auto& m = t.test.metrics;
    o.require(m.accuracy >= 0.95, fmt::format("held-out accuracy {:.6f}", m.accuracy));
    o.require(m.f1 >= 0.95, fmt::format("held-out f1 {:.6f}", m.f1));
    o.note(fmt::format("held-out examples {}  accuracy {:.6f}  f1 {:.6f}  epochs {} (kept {})",
                       t.split.test_indices.size(), m.accuracy, m.f1, t.fit.report.epochs_run,
                       t.fit.report.best_epoch));
    return o;
}

Outcome gradient_oracle()
{
    Outcome o;
    SplitMix64 rng(20240607);
    for (const auto& gen : testing::core_op_generators()) {
        double worst = 0.0;
        std::size_t checked = 0;
        for (int i = 0; i < 100; ++i) {
            const auto r = testing::check_gradients(gen.make(rng), rng, 1e-5);
            worst = std::max(worst, r.worst);
            checked += r.checked;
        }
        o.require(worst < 1e-4, fmt::format("{} worst relative error {:.3e}", gen.name, worst));
        o.note(fmt::format("{:<16} 100 instances, {:>5} derivatives, worst {:.2e}", gen.name, checked, worst));
    }
    return o;
}

Outcome metrics_recount()
{
    Outcome o;
    SplitMix64 rng(4242);
    std::size_t mismatches = 0, undefined_seen = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.below(200);
        std::vector<int> p(n), l(n);
        for (std::size_t i = 0; i < n; ++i) {
            // Skewed rates so that zero denominators occur too.
            p[i] = rng.uniform() < (trial % 5 == 0 ? 0.02 : 0.5);
            l[i] = rng.uniform() < (trial % 7 == 0 ? 0.02 : 0.5);
        }
        const auto r = eval::metrics(eval::confusion(p, l));

        std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (p[i] == 1 && l[i] == 1)
                ++tp;
            else if (p[i] == 1)
                ++fp;
            else if (l[i] == 1)
                ++fn;
            else
                ++tn;
        }
        auto frac = [](std::uint64_t a, std::uint64_t b) { return static_cast<double>(a) / static_cast<double>(b); };
        bool ok = r.accuracy == frac(tp + tn, n);
        ok = ok && (tp + fp == 0 ? r.is_undefined("precision") && r.precision == 0.0 : r.precision == frac(tp, tp + fp));
        ok = ok && (tp + fn == 0 ? r.is_undefined("recall") && r.recall == 0.0 : r.recall == frac(tp, tp + fn));
        ok = ok && (tp == 0 ? r.is_undefined("f1") && r.f1 == 0.0 : r.f1 == frac(2 * tp, 2 * tp + fp + fn));
        mismatches += !ok;
        undefined_seen += !r.undefined.empty();
    }
    o.require(mismatches == 0, fmt::format("{} of 1000 sequences disagree with the recount", mismatches));
    o.note(fmt::format("1000 sequences, {} with an undefined metric, {} mismatches", undefined_seen, mismatches));
    return o;
}

Outcome tfidf_recount()
{
    Outcome o;
    SplitMix64 rng(9001);
    double worst = 0.0;
    std::size_t weights = 0, everywhere = 0, everywhere_nonzero = 0;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<text::TokenList> docs(1 + rng.below(20));
        const bool shared = trial % 2 == 0;
        for (auto& d : docs) {
            const auto len = shared ? 1 + rng.below(50) : rng.below(51);
            for (std::size_t i = 0; i < len; ++i)
                d.push_back("w" + std::to_string(rng.below(12)));
            if (shared)
                d[rng.below(d.size())] = "common";
        }
        const auto model = text::tfidf_fit(docs);
        for (const auto& d : docs) {
            const auto got = text::tfidf_transform(model, d);
            std::size_t distinct = 0;
            for (std::size_t i = 0; i < d.size(); ++i) {
                const auto& term = d[i];
                if (std::find(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(i), term) !=
                    d.begin() + static_cast<std::ptrdiff_t>(i))
                    continue;
                ++distinct;
                double tf = 0.0, df = 0.0;
                for (const auto& t : d)
                    tf += t == term;
                for (const auto& other : docs)
                    df += std::find(other.begin(), other.end(), term) != other.end();
                const double want = tf * std::log(static_cast<double>(docs.size()) / df);
                const auto it = got.find(term);
                const double have = it == got.end() ? std::nan("") : it->second;
                worst = std::max(worst, std::isnan(have) ? INFINITY : std::abs(have - want));
                ++weights;
                if (df == static_cast<double>(docs.size())) {
                    ++everywhere;
                    everywhere_nonzero += have != 0.0;
                }
            }
            o.require(got.size() == distinct || !o.pass, "transform has terms the document lacks");
        }
    }
    o.require(worst <= 1e-12, fmt::format("worst absolute error {:.3e}", worst));
    o.require(everywhere > 0 && everywhere_nonzero == 0,
              fmt::format("{} of {} all-document terms weigh non-zero", everywhere_nonzero, everywhere));
    o.note(fmt::format("200 corpora, {} weights, worst error {:.2e}, {} all-document terms all exactly 0", weights,
                       worst, everywhere));
    return o;
}

// Survival function of chi-square(df) by composite Simpson integration of the
// density; does not share code with the incomplete-gamma route.
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

Outcome chi_square()
{
    Outcome o;
    const double obs[] = {50, 50}, exp[] = {45, 55};
    const auto r = eval::chi_square(obs, exp, 1);
    const double by_hand = 25.0 / 45.0 + 25.0 / 55.0;
    o.require(near(r.statistic, 1.010101, 1e-6) && near(r.statistic, by_hand, 1e-12),
              fmt::format("statistic {:.9f}", r.statistic));

    const double p = eval::chi_square_survival(3.841, 1);
    const double quad = survival_by_quadrature(3.841, 1);
    o.require(near(p, 0.0500, 0.001) && near(quad, 0.0500, 0.001) && near(p, quad, 1e-8),
              fmt::format("p(3.841, df 1) = {:.8f}, quadrature {:.8f}", p, quad));

    const auto ind = eval::independence_test({1850, 150, 140, 1620});
    o.require(ind.p_value < 0.05, fmt::format("independence p {}", ind.p_value));
    o.note(fmt::format("statistic {:.6f}; p(3.841) {:.6f} (quadrature {:.6f}); reference matrix chi2 {:.2f}, p {:.3e}",
                       r.statistic, p, quad, ind.statistic, ind.p_value));
    return o;
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome determinism_and_persistence()
{
    Outcome o;
    persist::ModelSettings s;
    s.model.seq_len = 32;
    s.hyper.epochs = 3;
    const auto corpus = corpus::make_separable_corpus(200, 50, 8, 32, 7);
    const auto base = std::filesystem::temp_directory_path() / "htd_acceptance";
    std::filesystem::remove_all(base);

    const auto first = pipeline::train_on_corpus(corpus, s);
    const auto second = pipeline::train_on_corpus(corpus, s);
    persist::save_model(first.fit.bundle, base / "a");
    persist::save_model(second.fit.bundle, base / "b");
    const auto wa = slurp(base / "a" / persist::kWeightsFile);
    const auto wb = slurp(base / "b" / persist::kWeightsFile);
    o.require(!wa.empty() && wa == wb, "weights archives of two identical runs differ");

    const auto& before = first.fit.bundle;
    const auto after = persist::load_model(base / "a");
    SplitMix64 rng(31337);
    std::size_t differ = 0;
    for (int i = 0; i < 100; ++i) {
        std::string text;
        const auto len = 1 + rng.below(40);
        for (std::size_t k = 0; k < len; ++k) {
            const auto pick = rng.below(3);
            text += pick == 0 ? "hw" : pick == 1 ? "aw" : "zz";
            text += std::to_string(rng.below(60)) + " ";
        }
        const auto p = net::predict(before.params, before.settings.model, before.context, text);
        const auto q = net::predict(after.params, after.settings.model, after.context, text);
        differ += p.score != q.score || p.label != q.label;
    }
    o.require(differ == 0, fmt::format("{} of 100 reloaded predictions differ", differ));
    o.note(fmt::format("weights archive {} bytes identical across runs; 100 reloaded predictions bit-identical",
                       wa.size()));
    std::filesystem::remove_all(base);
    return o;
}

Outcome partitions()
{
    Outcome o;
    std::size_t fold_plans = 0, splits = 0, refused = 0;
    for (std::size_t n = 2; n <= 100; ++n) {
        std::vector<corpus::Label> labels(n);
        for (std::size_t i = 0; i < n; ++i)
            labels[i] = i % 2 ? corpus::Label::Ai : corpus::Label::Human;
        std::vector<std::uint32_t> all(n);
        std::iota(all.begin(), all.end(), 0u);

        for (std::uint32_t k = 2; k <= std::min<std::size_t>(10, n); ++k) {
            const auto plan = corpus::kfold(labels, k, n * 1000 + k);
            std::vector<std::uint32_t> seen;
            std::size_t lo = n, hi = 0;
            for (const auto& f : plan.folds) {
                seen.insert(seen.end(), f.begin(), f.end());
                lo = std::min(lo, f.size());
                hi = std::max(hi, f.size());
            }
            std::sort(seen.begin(), seen.end());
            o.require(plan.folds.size() == k && seen == all && hi - lo <= 1,
                      fmt::format("fold plan n={} k={}", n, k));
            ++fold_plans;
        }

        // Rounding rule in integers: per class floor(7 n_c / 10), then one
        // extra per class in ascending order until floor(7 n / 10) is reached.
        const std::size_t n_class[2] = {(n + 1) / 2, n / 2};
        std::size_t want[2] = {7 * n_class[0] / 10, 7 * n_class[1] / 10};
        std::size_t missing = 7 * n / 10 - want[0] - want[1];
        for (int c = 0; c < 2 && missing > 0; ++c)
            if (want[c] < n_class[c]) {
                ++want[c];
                --missing;
            }
        const bool feasible = want[0] > 0 && want[1] > 0 && want[0] < n_class[0] && want[1] < n_class[1];
        try {
            const auto plan = corpus::split_train_test(labels, 0.7, n);
            std::size_t got[2] = {0, 0};
            for (auto i : plan.train_indices)
                ++got[corpus::to_int(labels[i])];
            std::vector<std::uint32_t> seen = plan.train_indices;
            seen.insert(seen.end(), plan.test_indices.begin(), plan.test_indices.end());
            std::sort(seen.begin(), seen.end());
            o.require(feasible && got[0] == want[0] && got[1] == want[1] && seen == all,
                      fmt::format("70/30 split n={}: train {}+{}, rule {}+{}", n, got[0], got[1], want[0], want[1]));
            ++splits;
        } catch (const corpus::SplitError& e) {
            o.require(!feasible && e.kind() == corpus::SplitError::Kind::InsufficientData,
                      fmt::format("70/30 split n={} refused: {}", n, e.what()));
            ++refused;
        }
    }
    o.note(fmt::format("{} fold plans; {} splits follow the rounding rule, {} correctly refused", fold_plans, splits,
                       refused));
    return o;
}

} // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"reference confusion matrix metrics", reference_metrics},
        {"separable corpus held-out accuracy and F1 >= 0.95", separable_corpus},
        {"reverse-mode gradients match central differences", gradient_oracle},
        {"metrics equal per-example recounts", metrics_recount},
        {"TF-IDF equals brute-force recount", tfidf_recount},
        {"chi-square statistic and p-value", chi_square},
        {"deterministic training and lossless persistence", determinism_and_persistence},
        {"fold and split partition properties", partitions},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.notes.push_back(std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s  criterion %zu: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    secs);
        for (const auto& n : o.notes)
            std::printf("      %s\n", n.c_str());
        std::fflush(stdout);
        failed += !o.pass;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
