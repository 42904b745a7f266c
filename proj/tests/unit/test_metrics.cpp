#include <doctest.h>

#include <cmath>

#include "ecgbench/error.hpp"
#include "ecgbench/metrics.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace ecgbench;
using testing::make_instance;

namespace {

oracle::Rows rows_of(const Matrix& m) {
    oracle::Rows out(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) out[i].assign(m.row(i).begin(), m.row(i).end());
    return out;
}

// Truths {A,B} and {C}; scores (0.9,0.4,0.2) and (0.3,0.1,0.8).
testing::Instance two_records() { return make_instance({{0.9, 0.4, 0.2}, {0.3, 0.1, 0.8}}, {{1, 1, 0}, {0, 0, 1}}); }

}  // namespace

TEST_CASE("class AUC") {
    const std::vector<double> y{1, 0, 1, 0};
    CHECK(class_auc(std::vector<double>{0.9, 0.8, 0.7, 0.1}, y) == 0.75);
    CHECK(class_auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, y) == 0.5);
    CHECK(class_auc(std::vector<double>{0.9, 0.1, 0.8, 0.2}, y) == 1.0);
    CHECK(class_auc(std::vector<double>{0.1, 0.9, 0.2, 0.8}, y) == 0.0);
    CHECK_THROWS_WITH_AS(class_auc(std::vector<double>{0.1, 0.2}, std::vector<double>{1, 1}),
                         doctest::Contains("AUC undefined"), UndefinedMetric);
    CHECK_THROWS_AS(class_auc(std::vector<double>{0.1, 0.2}, std::vector<double>{1, 0.5}), DataError);
}

TEST_CASE("macro AUC") {
    // class 0 -> 0.75, class 1 -> 0.5 by the pair oracle
    auto inst = make_instance({{0.9, 0.2}, {0.8, 0.2}, {0.7, 0.2}, {0.1, 0.2}}, {{1, 1}, {0, 0}, {1, 0}, {0, 1}});
    CHECK(*oracle::pair_auc({0.9, 0.8, 0.7, 0.1}, {1, 0, 1, 0}) == 0.75);
    const auto m = macro_auc(inst.preds, inst.labels);
    CHECK(m.macro == 0.625);
    CHECK(*m.per_class[0] == 0.75);

    auto perfect = inst.preds;
    perfect.scores = inst.labels.values;
    CHECK(macro_auc(perfect, inst.labels).macro == 1.0);

    auto bad = make_instance({{0.1, 0.2}, {0.3, 0.4}}, {{1, 1}, {0, 1}});
    CHECK_THROWS_WITH_AS(macro_auc(bad.preds, bad.labels), doctest::Contains("c1"), UndefinedMetric);
    const auto ex = macro_auc(bad.preds, bad.labels, UndefinedClassPolicy::exclude);
    CHECK(ex.excluded == std::vector<std::string>{"c1"});
    CHECK_FALSE(ex.per_class[1].has_value());
    CHECK(ex.macro == 0.0);
}

TEST_CASE("naive constant predictor gives exactly 0.5 macro AUC") {
    SplitMix64 rng(3);
    for (int t = 0; t < 20; ++t) {
        auto inst = testing::random_instance(rng, 30, 6);
        // make each class two-sided
        for (std::size_t c = 0; c < inst.labels.num_classes(); ++c) {
            inst.labels.values(0, c) = 1;
            inst.labels.values(1, c) = 0;
        }
        for (std::size_t c = 0; c < inst.labels.num_classes(); ++c) {
            const double prior = rng.uniform();
            for (std::size_t i = 0; i < inst.preds.num_records(); ++i) inst.preds.scores(i, c) = prior;
        }
        CHECK(macro_auc(inst.preds, inst.labels).macro == 0.5);
    }
}

TEST_CASE("sample precision and recall") {
    const auto inst = two_records();
    auto r = sample_pr_rc(inst.preds, inst.labels, 0.5);
    CHECK(*r.precision == 1.0);
    CHECK(r.recall == 0.75);
    CHECK(r.n_predicting == 2);
    r = sample_pr_rc(inst.preds, inst.labels, 0.35);
    CHECK(*r.precision == 1.0);
    CHECK(r.recall == 1.0);
    r = sample_pr_rc(inst.preds, inst.labels, 0.0);
    CHECK(*r.precision == doctest::Approx(0.5).epsilon(1e-15));  // mean of 2/3 and 1/3
    CHECK(r.recall == 1.0);
    r = sample_pr_rc(inst.preds, inst.labels, 0.95);
    CHECK_FALSE(r.precision.has_value());
    CHECK(r.n_predicting == 0);
    CHECK(r.f1() == 0.0);

    auto empty = make_instance({{0.1}}, {{0}});
    CHECK_THROWS_AS(sample_pr_rc(empty.preds, empty.labels, 0.5), DataError);
}

TEST_CASE("Fmax on the two-record instance") {
    const auto inst = two_records();
    const auto sweep = oracle::fmax(rows_of(inst.preds.scores), rows_of(inst.labels.values),
                                    ThresholdGrid::standard().values());
    const auto r = fmax(inst.preds, inst.labels);
    CHECK(r.fmax == 1.0);
    CHECK(r.fmax == sweep.first);
    // F1 = 1 on (0.30, 0.40]; the tie rule picks the smallest grid point.
    CHECK(r.tau == 0.31);
    CHECK(r.tau == sweep.second);
    CHECK(fmax(inst.preds, inst.labels, ThresholdGrid::exact(inst.preds)).tau == 0.4);

    auto perfect = inst.preds;
    perfect.scores = inst.labels.values;
    CHECK(fmax(perfect, inst.labels).fmax == 1.0);
    CHECK_THROWS_AS(ThresholdGrid({}), ArgumentError);
    CHECK_THROWS_AS(ThresholdGrid({0.2, 0.1}), ArgumentError);
}

TEST_CASE("weighted confusion") {
    auto one = make_instance({{0.9, 0.1}}, {{1, 1}});
    auto k = weighted_confusion(one.preds, one.labels, 0.5);
    CHECK(k.tp[0] == 0.5);
    CHECK(k.fn[1] == 0.5);
    CHECK(k.fp[0] + k.fp[1] + k.tn[0] + k.tn[1] + k.tp[1] + k.fn[0] == 0.0);

    auto none = make_instance({{0.9, 0.1}}, {{0, 0}});
    k = weighted_confusion(none.preds, none.labels, 0.5);
    CHECK(k.fp[0] == 1.0);
    CHECK(k.tn[1] == 1.0);

    auto single = make_instance({{0.9, 0.1}, {0.8, 0.7}, {0.2, 0.6}}, {{1, 0}, {0, 1}, {1, 0}});
    k = weighted_confusion(single.preds, single.labels, 0.5);
    CHECK(k.tp[0] == 1.0);
    CHECK(k.fp[0] == 1.0);
    CHECK(k.fn[0] == 1.0);
    CHECK(k.tp[1] == 1.0);
    CHECK(k.fp[1] == 1.0);
    CHECK(k.tn[1] == 1.0);
}

TEST_CASE("F-beta and G-beta") {
    ConfusionCounts k{{1.0}, {1.0}, {1.0}, {0.0}};
    CHECK(f_beta(k, 2).per_class[0] == 0.5);
    CHECK(g_beta(k, 2).per_class[0] == 0.25);
    ConfusionCounts perfect{{3.0}, {0.0}, {0.0}, {1.0}};
    CHECK(f_beta(perfect, 2).macro == 1.0);
    CHECK(g_beta(perfect, 2).macro == 1.0);
    ConfusionCounts empty{{0.0}, {0.0}, {0.0}, {4.0}};
    CHECK(f_beta(empty, 2).macro == 0.0);
    CHECK(g_beta(empty, 2).macro == 0.0);
    CHECK_THROWS_AS(f_beta(k, 0.0), ArgumentError);
}

TEST_CASE("threshold optimization") {
    const auto inst = two_records();
    const double tau = optimize_threshold(inst.preds, inst.labels, ThresholdMetric::f_beta, 2.0);
    CHECK(tau > 0.30);
    CHECK(tau <= 0.40);
    double best = -1, oracle_tau = 0;
    for (double t : ThresholdGrid::standard().values()) {
        const double v = oracle::macro_fbeta(
            oracle::weighted_counts(rows_of(inst.preds.scores), rows_of(inst.labels.values), t), 2.0);
        if (v > best + 1e-12) best = v, oracle_tau = t;
    }
    CHECK(tau == oracle_tau);

    auto perfect = inst.preds;
    perfect.scores = inst.labels.values;
    CHECK(optimize_threshold(perfect, inst.labels, ThresholdMetric::g_beta) == 0.01);

    // every record positive for the single class: recall-only metric, lowest tau wins
    auto mono = make_instance({{0.2}, {0.5}, {0.9}}, {{1}, {1}, {1}});
    CHECK(optimize_threshold(mono.preds, mono.labels, ThresholdMetric::g_beta) == 0.0);
}

TEST_CASE("regression and binary metrics") {
    auto r = regression_metrics(std::vector<double>{12, 18, 33}, std::vector<double>{10, 20, 30});
    CHECK(r.mae == doctest::Approx(7.0 / 3.0).epsilon(1e-15));
    CHECK(r.r2 == doctest::Approx(0.915).epsilon(1e-15));
    r = regression_metrics(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3});
    CHECK(r.mae == 0.0);
    CHECK(r.r2 == 1.0);
    r = regression_metrics(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3});
    CHECK(r.r2 == 0.0);
    CHECK_THROWS_AS(regression_metrics(std::vector<double>{1, 2}, std::vector<double>{5, 5}), UndefinedMetric);
    CHECK_THROWS_AS(regression_metrics(std::vector<double>{1}, std::vector<double>{5}), DataError);

    auto b = binary_metrics(std::vector<double>{0.9, 0.1}, std::vector<double>{1, 0});
    CHECK(b.accuracy == 1.0);
    CHECK(b.auc == 1.0);
    b = binary_metrics(std::vector<double>{0.4, 0.6}, std::vector<double>{1, 0});
    CHECK(b.accuracy == 0.0);
    CHECK(b.auc == 0.0);
}

TEST_CASE("random permutations average to AUC 0.5") {
    SplitMix64 rng(11);
    std::vector<double> y(200), s(200);
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = i % 3 == 0;
        s[i] = rng.uniform();
    }
    double sum = 0;
    const int reps = 400;
    for (int r = 0; r < reps; ++r) {
        shuffle(y, rng);
        sum += class_auc(s, y);
    }
    // sd of one AUC is about 0.04; of the mean about 0.002
    CHECK(std::fabs(sum / reps - 0.5) < 0.01);
}

TEST_CASE("properties on random instances") {
    SplitMix64 rng(2024);
    const auto grid = ThresholdGrid::standard();
    for (int trial = 0; trial < 150; ++trial) {
        const auto inst = testing::random_instance(rng, 20, 6);
        const auto S = rows_of(inst.preds.scores);
        const auto L = rows_of(inst.labels.values);

        for (std::size_t c = 0; c < inst.labels.num_classes(); ++c) {
            const auto s = inst.preds.scores.column(c);
            const auto y = inst.labels.values.column(c);
            const auto o = oracle::pair_auc(s, y);
            if (!o) continue;
            CHECK(class_auc(s, y) == doctest::Approx(*o).epsilon(1e-12));
            // strictly increasing transform
            std::vector<double> t(s.size()), neg(s.size());
            for (std::size_t i = 0; i < s.size(); ++i) {
                t[i] = std::exp(3 * s[i]) - 7;
                neg[i] = -s[i];
            }
            CHECK(class_auc(t, y) == class_auc(s, y));
            const std::set<double> distinct(s.begin(), s.end());
            if (distinct.size() == s.size()) CHECK(class_auc(s, y) + class_auc(neg, y) == doctest::Approx(1.0));
        }

        double prev_rc = 2.0;
        const auto fm = fmax(inst.preds, inst.labels);
        for (double tau : grid.values()) {
            const auto r = sample_pr_rc(inst.preds, inst.labels, tau);
            const auto o = oracle::pr_rc(S, L, tau);
            CHECK(r.n_predicting == o.n_tau);
            CHECK(r.precision.has_value() == o.pr.has_value());
            if (o.pr) CHECK(std::fabs(*r.precision - *o.pr) < 1e-12);
            CHECK(std::fabs(r.recall - o.rc) < 1e-12);
            CHECK(r.recall <= prev_rc);
            prev_rc = r.recall;
            const double f = r.f1();
            CHECK(f >= 0.0);
            CHECK(f <= 1.0);
            CHECK(fm.fmax >= f);

            const auto k = weighted_confusion(inst.preds, inst.labels, tau);
            double positives = 0.0, expected = 0.0;
            for (std::size_t c = 0; c < k.num_classes(); ++c) {
                positives += k.tp[c] + k.fn[c];
                CHECK(k.tp[c] + k.fp[c] + k.fn[c] + k.tn[c] == doctest::Approx(
                          [&] {
                              double w = 0;
                              for (std::size_t i = 0; i < inst.labels.num_records(); ++i)
                                  w += 1.0 / std::max<double>(1.0, double(inst.labels.row_count(i)));
                              return w;
                          }()));
            }
            for (std::size_t i = 0; i < inst.labels.num_records(); ++i) {
                const double n_true = double(inst.labels.row_count(i));
                expected += n_true / std::max(1.0, n_true);
            }
            CHECK(positives == doctest::Approx(expected).epsilon(1e-12));

            const auto f1 = f_beta(k, 1.0);
            for (std::size_t c = 0; c < k.num_classes(); ++c) {
                const double p = k.tp[c] + k.fp[c] > 0 ? k.tp[c] / (k.tp[c] + k.fp[c]) : 0.0;
                const double rr = k.tp[c] + k.fn[c] > 0 ? k.tp[c] / (k.tp[c] + k.fn[c]) : 0.0;
                CHECK(f1.per_class[c] == doctest::Approx(p + rr > 0 ? 2 * p * rr / (p + rr) : 0.0).epsilon(1e-12));
                const double fb = f_beta(k, 2).per_class[c], gb = g_beta(k, 2).per_class[c];
                CHECK(fb >= 0.0);
                CHECK(fb <= 1.0 + 1e-15);
                CHECK(gb >= 0.0);
                CHECK(gb <= 1.0 + 1e-15);
                const bool perfect = k.fp[c] == 0 && k.fn[c] == 0 && k.tp[c] > 0;
                CHECK((fb == doctest::Approx(1.0)) == perfect);
                CHECK((gb == doctest::Approx(1.0)) == perfect);
            }
        }
    }
}

TEST_CASE("resample tables agree with direct evaluation") {
    SplitMix64 rng(99);
    for (int trial = 0; trial < 40; ++trial) {
        auto inst = testing::random_instance(rng, 25, 5);
        for (std::size_t c = 0; c < inst.labels.num_classes(); ++c) {
            inst.labels.values(0, c) = 1;
            inst.labels.values(1, c) = 0;
        }
        inst.labels.values(1, 0) = 1;
        const std::size_t n = inst.labels.num_records();
        std::vector<std::uint32_t> rows(n);
        for (auto& r : rows) r = static_cast<std::uint32_t>(rng.below(n));
        std::vector<std::size_t> rows_z(rows.begin(), rows.end());
        const auto sub_p = inst.preds.select_rows(rows_z);
        const auto sub_l = inst.labels.select_rows(rows_z);

        const FmaxTable ft(inst.preds, inst.labels, ThresholdGrid::standard());
        const auto a = ft.evaluate(rows);
        const auto b = fmax(sub_p, sub_l);
        CHECK(a.fmax == b.fmax);
        CHECK(a.tau == b.tau);

        const AucTable at(inst.preds, inst.labels);
        const auto m = at.macro(rows);
        bool defined = true;
        for (std::size_t c = 0; c < sub_l.num_classes(); ++c) {
            const auto col = sub_l.values.column(c);
            double s = 0;
            for (double v : col) s += v;
            defined = defined && s > 0 && s < double(col.size());
        }
        REQUIRE(m.has_value() == defined);
        if (m) CHECK(*m == doctest::Approx(macro_auc(sub_p, sub_l).macro).epsilon(1e-12));
    }
}
