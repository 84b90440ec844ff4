#ifndef EXACTCT_ML_METRICS_HPP
#define EXACTCT_ML_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "../error.hpp"

namespace exactct {

struct RocPoint
{
    double threshold = 0.0;
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    double tpr = 0.0;
    double fpr = 0.0;
};

/// Operating points from the strictest threshold to the loosest. When `flipped`
/// is set, lower scores indicate the positive class and a sample is called
/// positive iff score <= threshold.
struct RocCurve
{
    std::vector<RocPoint> points; ///< points[0] is the (0, 0) sentinel
    std::int64_t positives = 0;
    std::int64_t negatives = 0;
    bool flipped = false;

    bool predict(double score, double threshold) const noexcept
    {
        return flipped ? score <= threshold : score >= threshold;
    }
};

namespace roc_detail {

/// Points for "positive iff oriented score >= t" over the distinct oriented scores.
inline std::vector<RocPoint> sweep(const std::vector<double>& s, std::span<const int> y, std::int64_t p,
                                   std::int64_t n)
{
    std::vector<std::size_t> order(s.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    std::vector<RocPoint> pts;
    pts.push_back({std::numeric_limits<double>::infinity(), 0, 0, 0.0, 0.0});
    std::int64_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double t = s[order[i]];
        for (; i < order.size() && s[order[i]] == t; ++i)
            (y[order[i]] ? tp : fp) += 1;
        pts.push_back({t, tp, fp, static_cast<double>(tp) / static_cast<double>(p),
                       static_cast<double>(fp) / static_cast<double>(n)});
    }
    return pts;
}

/// Twice the trapezoid area times P*N; an exact integer.
inline std::int64_t twice_area_count(const std::vector<RocPoint>& pts)
{
    std::int64_t a = 0;
    for (std::size_t i = 1; i < pts.size(); ++i)
        a += (pts[i].fp - pts[i - 1].fp) * (pts[i].tp + pts[i - 1].tp);
    return a;
}

} // namespace roc_detail

enum class Orientation
{
    automatic, ///< flip when that gives the larger area
    higher_positive,
    lower_positive,
};

inline RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels,
                          Orientation orientation = Orientation::automatic)
{
    if (scores.size() != labels.size())
        throw ArgumentError("roc_curve: scores and labels differ in length");
    RocCurve c;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1)
            throw ArgumentError("roc_curve: labels must be 0 or 1");
        if (!std::isfinite(scores[i]))
            throw NumericError("roc_curve: non-finite score");
        (labels[i] ? c.positives : c.negatives) += 1;
    }
    if (c.positives == 0 || c.negatives == 0)
        throw ArgumentError("roc_curve: both classes must be present");

    std::vector<double> s(scores.begin(), scores.end());
    c.points = roc_detail::sweep(s, labels, c.positives, c.negatives);
    const bool flip = orientation == Orientation::lower_positive ||
                      (orientation == Orientation::automatic &&
                       roc_detail::twice_area_count(c.points) < c.positives * c.negatives);
    if (flip) {
        for (auto& v : s)
            v = -v;
        c.points = roc_detail::sweep(s, labels, c.positives, c.negatives);
        for (auto& pt : c.points)
            pt.threshold = -pt.threshold;
        c.flipped = true;
    }
    return c;
}

inline double auc(const RocCurve& c)
{
    return static_cast<double>(roc_detail::twice_area_count(c.points)) /
           (2.0 * static_cast<double>(c.positives) * static_cast<double>(c.negatives));
}

struct YoudenPoint
{
    double threshold = 0.0;
    double j = 0.0;
    double sensitivity = 0.0;
    double specificity = 0.0;
    std::size_t index = 0; ///< into RocCurve::points
};

/// Maximises J = TPR - FPR over the finite thresholds; ties go to the higher TPR.
inline YoudenPoint youden_threshold(const RocCurve& c)
{
    if (c.points.size() < 2)
        throw ArgumentError("youden_threshold: curve has no operating points");
    std::size_t best = 1;
    auto key = [&](const RocPoint& p) { return p.tp * c.negatives - p.fp * c.positives; };
    for (std::size_t i = 2; i < c.points.size(); ++i) {
        const auto ki = key(c.points[i]), kb = key(c.points[best]);
        if (ki > kb || (ki == kb && c.points[i].tp > c.points[best].tp))
            best = i;
    }
    const RocPoint& p = c.points[best];
    return {p.threshold, p.tpr - p.fpr, p.tpr, 1.0 - p.fpr, best};
}

struct Metrics
{
    double accuracy = 0.0;
    double balanced_accuracy = 0.0;
    double recall = 0.0;
    double specificity = 0.0;
    double ppv = 0.0;
    double f1 = 0.0;
    double mcc = 0.0;
    double auc = std::numeric_limits<double>::quiet_NaN();
    bool ppv_undefined = false;
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

inline Metrics confusion_metrics(std::span<const int> pred, std::span<const int> labels)
{
    if (pred.size() != labels.size())
        throw ArgumentError("confusion_metrics: predictions and labels differ in length");
    if (pred.empty())
        throw ArgumentError("confusion_metrics: no samples");
    Metrics m;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] != 0, y = labels[i] != 0;
        if (p && y)
            ++m.tp;
        else if (p)
            ++m.fp;
        else if (y)
            ++m.fn;
        else
            ++m.tn;
    }
    const auto d = [](std::int64_t a) { return static_cast<double>(a); };
    const std::int64_t pos = m.tp + m.fn, neg = m.tn + m.fp, called = m.tp + m.fp;
    m.accuracy = d(m.tp + m.tn) / d(pos + neg);
    m.recall = pos ? d(m.tp) / d(pos) : 0.0;
    m.specificity = neg ? d(m.tn) / d(neg) : 0.0;
    m.balanced_accuracy = 0.5 * (m.recall + m.specificity);
    m.ppv_undefined = called == 0;
    m.ppv = called ? d(m.tp) / d(called) : 0.0;
    m.f1 = m.ppv + m.recall > 0.0 ? 2.0 * m.ppv * m.recall / (m.ppv + m.recall) : 0.0;
    const std::int64_t f1 = m.tp + m.fp, f2 = m.tp + m.fn, f3 = m.tn + m.fp, f4 = m.tn + m.fn;
    if (f1 && f2 && f3 && f4)
        m.mcc = (d(m.tp) * d(m.tn) - d(m.fp) * d(m.fn)) / std::sqrt(d(f1) * d(f2) * d(f3) * d(f4));
    return m;
}

/// Call positive by comparing against a Youden threshold in the curve's orientation.
inline int classify_by_threshold(double value, double threshold, bool flipped = false)
{
    return (flipped ? value <= threshold : value >= threshold) ? 1 : 0;
}

} // namespace exactct

#endif // EXACTCT_ML_METRICS_HPP
