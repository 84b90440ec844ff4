#include <cmath>

#include <gtest/gtest.h>

#include "exactct/ml/metrics.hpp"
#include "exactct/rng.hpp"
#include "oracles.hpp"

using namespace exactct;

namespace {

struct Scores
{
    std::vector<double> s;
    std::vector<int> y;
};

// Both classes present; coarse rounding gives plenty of ties.
Scores random_scores(Rng& rng, std::size_t n, double grid)
{
    Scores r;
    while (true) {
        r.s.clear();
        r.y.clear();
        int pos = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const int y = rng.uniform() < 0.4 ? 1 : 0;
            const double shift = y ? rng.uniform(-0.5, 1.0) : 0.0;
            double v = rng.normal() + shift;
            if (grid > 0.0)
                v = std::round(v / grid) * grid;
            r.s.push_back(v);
            r.y.push_back(y);
            pos += y;
        }
        if (pos > 0 && pos < static_cast<int>(n))
            return r;
    }
}

} // namespace

TEST(Roc, PointsMatchCountingOracle)
{
    Rng rng(1);
    const Scores d = random_scores(rng, 200, 0.1);
    const RocCurve c = roc_curve(d.s, d.y, Orientation::higher_positive);
    EXPECT_EQ(c.points.front().tp, 0);
    EXPECT_EQ(c.points.front().fp, 0);
    EXPECT_EQ(c.points.back().tpr, 1.0);
    EXPECT_EQ(c.points.back().fpr, 1.0);
    for (std::size_t i = 1; i < c.points.size(); ++i) {
        const RocPoint& p = c.points[i];
        std::int64_t tp = 0, fp = 0;
        for (std::size_t n = 0; n < d.s.size(); ++n)
            if (d.s[n] >= p.threshold)
                (d.y[n] ? tp : fp) += 1;
        ASSERT_EQ(p.tp, tp);
        ASSERT_EQ(p.fp, fp);
        ASSERT_EQ(p.tpr, static_cast<double>(tp) / c.positives);
        ASSERT_EQ(p.fpr, static_cast<double>(fp) / c.negatives);
        ASSERT_GE(p.tp, c.points[i - 1].tp);
        ASSERT_GE(p.fp, c.points[i - 1].fp);
    }
}

TEST(Roc, DegenerateAndSeparated)
{
    const std::vector<double> same{0.3, 0.3, 0.3, 0.3};
    const std::vector<int> y{1, 0, 1, 0};
    const RocCurve flat = roc_curve(same, y);
    EXPECT_EQ(flat.points.size(), 2u);
    EXPECT_EQ(auc(flat), 0.5);

    const std::vector<double> sep{0.1, 0.2, 0.8, 0.9};
    const std::vector<int> ys{0, 0, 1, 1};
    const RocCurve c = roc_curve(sep, ys);
    EXPECT_FALSE(c.flipped);
    EXPECT_EQ(auc(c), 1.0);
    bool corner = false;
    for (const auto& p : c.points)
        corner = corner || (p.tpr == 1.0 && p.fpr == 0.0);
    EXPECT_TRUE(corner);
    const YoudenPoint j = youden_threshold(c);
    EXPECT_EQ(j.j, 1.0);
    EXPECT_EQ(j.threshold, 0.8);

    const std::vector<double> two{0.9, 0.1};
    const std::vector<int> y2{1, 0};
    EXPECT_EQ(auc(roc_curve(two, y2)), 1.0);
}

TEST(Roc, AutomaticOrientationFlips)
{
    const std::vector<double> s{0.1, 0.2, 0.8, 0.9};
    const std::vector<int> y{1, 1, 0, 0};
    const RocCurve c = roc_curve(s, y);
    EXPECT_TRUE(c.flipped);
    EXPECT_EQ(auc(c), 1.0);
    const YoudenPoint j = youden_threshold(c);
    EXPECT_EQ(j.threshold, 0.2);
    EXPECT_TRUE(c.predict(0.15, j.threshold));
    EXPECT_FALSE(c.predict(0.8, j.threshold));
    EXPECT_EQ(classify_by_threshold(0.15, j.threshold, true), 1);
    EXPECT_EQ(auc(roc_curve(s, y, Orientation::higher_positive)), 0.0);
}

TEST(Roc, Errors)
{
    const std::vector<double> s{0.1, 0.2};
    EXPECT_THROW(roc_curve(s, std::vector<int>{1, 1}), ArgumentError);
    EXPECT_THROW(roc_curve(s, std::vector<int>{1}), ArgumentError);
    EXPECT_THROW(roc_curve(s, std::vector<int>{1, 2}), ArgumentError);
    EXPECT_THROW(roc_curve(std::vector<double>{0.1, NAN}, std::vector<int>{1, 0}), NumericError);
}

TEST(Auc, MatchesMannWhitney)
{
    Rng rng(2);
    for (double grid : {0.0, 0.25}) {
        const Scores d = random_scores(rng, 500, grid);
        const double want = oracle::mann_whitney(d.s, d.y);
        EXPECT_NEAR(auc(roc_curve(d.s, d.y, Orientation::higher_positive)), want, 1e-12);
        EXPECT_NEAR(auc(roc_curve(d.s, d.y)), std::max(want, 1.0 - want), 1e-12);
    }
}

TEST(Youden, ReferenceOperatingPoint)
{
    // Table 3, Ratio row: sensitivity 0.8485, specificity 0.4783.
    EXPECT_NEAR(0.8485 - (1.0 - 0.4783), 0.3268, 1e-12);
    // The same J arises from a curve point with those rates.
    RocCurve c;
    c.positives = 10000;
    c.negatives = 10000;
    c.points = {{INFINITY, 0, 0, 0.0, 0.0}, {0.5, 8485, 5217, 0.8485, 0.5217}, {0.1, 10000, 10000, 1.0, 1.0}};
    const YoudenPoint j = youden_threshold(c);
    EXPECT_EQ(j.index, 1u);
    EXPECT_NEAR(j.j, 0.3268, 1e-12);
    EXPECT_NEAR(j.specificity, 0.4783, 1e-12);
}

TEST(Youden, MatchesSweepOracle)
{
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const Scores d = random_scores(rng, 5 + rng.index(60), trial % 2 ? 0.2 : 0.0);
        const RocCurve c = roc_curve(d.s, d.y);
        const YoudenPoint j = youden_threshold(c);
        const auto want = oracle::youden_sweep(d.s, d.y, c.flipped);
        ASSERT_EQ(j.threshold, want.threshold) << "trial " << trial;
        ASSERT_EQ(c.points[j.index].tp, want.tp);
        ASSERT_EQ(c.points[j.index].fp, want.fp);
    }
}

TEST(Confusion, HandCases)
{
    const std::vector<int> y{1, 1, 1, 1, 1, 0, 0, 0};
    const std::vector<int> p{1, 1, 1, 0, 0, 1, 0, 0};
    const Metrics m = confusion_metrics(p, y);
    EXPECT_EQ(m.tp, 3);
    EXPECT_EQ(m.fp, 1);
    EXPECT_EQ(m.tn, 2);
    EXPECT_EQ(m.fn, 2);
    // (3*2 - 1*2) / sqrt((3+1)(3+2)(2+1)(2+2)) = 4 / sqrt(240)
    EXPECT_NEAR(m.mcc, 4.0 / std::sqrt(240.0), 1e-15);
    EXPECT_NEAR(m.mcc, oracle::mcc(3, 1, 2, 2), 1e-15);
    EXPECT_DOUBLE_EQ(m.accuracy, 5.0 / 8.0);
    EXPECT_DOUBLE_EQ(m.recall, 0.6);
    EXPECT_DOUBLE_EQ(m.specificity, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(m.ppv, 0.75);
    EXPECT_DOUBLE_EQ(m.f1, 2.0 * 0.75 * 0.6 / 1.35);
    EXPECT_DOUBLE_EQ(m.balanced_accuracy, 0.5 * (0.6 + 2.0 / 3.0));

    const Metrics perfect = confusion_metrics(y, y);
    EXPECT_EQ(perfect.accuracy, 1.0);
    EXPECT_EQ(perfect.mcc, 1.0);

    const std::vector<int> yb{1, 1, 0, 0}, ones(4, 1), zeros(4, 0);
    const Metrics all = confusion_metrics(ones, yb);
    EXPECT_EQ(all.specificity, 0.0);
    EXPECT_EQ(all.recall, 1.0);
    EXPECT_EQ(all.balanced_accuracy, 0.5);
    EXPECT_EQ(all.mcc, 0.0);
    const Metrics none = confusion_metrics(zeros, yb);
    EXPECT_TRUE(none.ppv_undefined);
    EXPECT_EQ(none.ppv, 0.0);
    EXPECT_EQ(none.mcc, 0.0);
    EXPECT_THROW(confusion_metrics(ones, std::vector<int>{1}), ArgumentError);
}

TEST(Confusion, RandomAgainstFormula)
{
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<int> p(30), y(30);
        for (std::size_t i = 0; i < 30; ++i) {
            p[i] = rng.uniform() < 0.5;
            y[i] = rng.uniform() < 0.5;
        }
        const Metrics m = confusion_metrics(p, y);
        ASSERT_NEAR(m.mcc, oracle::mcc(m.tp, m.fp, m.tn, m.fn), 1e-15);
        ASSERT_GE(m.mcc, -1.0);
        ASSERT_LE(m.mcc, 1.0);
    }
}
