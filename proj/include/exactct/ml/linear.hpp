#ifndef EXACTCT_ML_LINEAR_HPP
#define EXACTCT_ML_LINEAR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "../error.hpp"
#include "../rng.hpp"
#include "dataset.hpp"

namespace exactct {

/// Training-set z-scores; constant columns keep scale 1.
struct Standardizer
{
    std::vector<double> mean;
    std::vector<double> scale;

    static Standardizer fit(const Dataset& d)
    {
        Standardizer s;
        const std::size_t m = d.cols();
        s.mean.assign(m, 0.0);
        s.scale.assign(m, 1.0);
        for (std::size_t j = 0; j < m; ++j) {
            long double mu = 0;
            for (const auto& r : d.x)
                mu += r[j];
            mu /= static_cast<long double>(d.rows());
            long double var = 0;
            for (const auto& r : d.x)
                var += (r[j] - mu) * (r[j] - mu);
            var /= static_cast<long double>(d.rows());
            s.mean[j] = static_cast<double>(mu);
            const double sd = std::sqrt(static_cast<double>(var));
            s.scale[j] = sd > 0.0 ? sd : 1.0;
        }
        return s;
    }

    std::vector<std::vector<double>> apply(const std::vector<std::vector<double>>& x) const
    {
        std::vector<std::vector<double>> out = x;
        for (auto& r : out)
            for (std::size_t j = 0; j < r.size(); ++j)
                r[j] = (r[j] - mean[j]) / scale[j];
        return out;
    }
};

enum class LinearKind
{
    logistic,
    svm,
};

/// w.x + b on raw features. Both heads train on z-scores and fold the
/// standardisation back into w and b.
struct LinearModel
{
    LinearKind kind = LinearKind::logistic;
    std::vector<double> w;
    double b = 0.0;
    Standardizer standardizer;
    std::vector<double> trace; ///< training objective per iteration

    double margin(const std::vector<double>& x) const
    {
        require_arity(w.size(), x.size());
        long double s = b;
        for (std::size_t j = 0; j < w.size(); ++j)
            s += static_cast<long double>(w[j]) * x[j];
        return static_cast<double>(s);
    }

    /// Probability for logistic heads, signed margin for the SVM.
    double score(const std::vector<double>& x) const
    {
        const double m = margin(x);
        return kind == LinearKind::logistic ? sigmoid(m) : m;
    }

    int predict(const std::vector<double>& x) const
    {
        return kind == LinearKind::logistic ? (score(x) >= 0.5) : (margin(x) >= 0.0);
    }
};

namespace linear_detail {

inline void fold_back(LinearModel& m, const std::vector<double>& ws, double bs)
{
    const auto& st = m.standardizer;
    m.w.resize(ws.size());
    long double b = bs;
    for (std::size_t j = 0; j < ws.size(); ++j) {
        m.w[j] = ws[j] / st.scale[j];
        b -= static_cast<long double>(ws[j]) * st.mean[j] / st.scale[j];
    }
    m.b = static_cast<double>(b);
}

} // namespace linear_detail

// ---------------------------------------------------------------------------
// Logistic regression

struct LogisticParams
{
    double l2 = 0.01;
    double lr = 1.0;   ///< initial step; halved until the Armijo condition holds
    int iters = 2000;
    double tol = 1e-10; ///< stop when the gradient norm drops below this
};

/// sum_i CE(y_i, sigmoid(w.x_i + b)) + (l2 / 2) |w|^2
inline double logistic_loss(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                            const std::vector<double>& w, double b, double l2)
{
    long double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        long double z = b;
        for (std::size_t j = 0; j < w.size(); ++j)
            z += static_cast<long double>(w[j]) * x[i][j];
        s += y[i] ? softplus(-static_cast<double>(z)) : softplus(static_cast<double>(z));
    }
    long double r = 0;
    for (double v : w)
        r += static_cast<long double>(v) * v;
    return static_cast<double>(s + 0.5L * l2 * r);
}

/// Gradient of logistic_loss; the last entry is d/db.
inline std::vector<double> logistic_gradient(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                                             const std::vector<double>& w, double b, double l2)
{
    std::vector<long double> g(w.size() + 1, 0.0L);
    for (std::size_t i = 0; i < x.size(); ++i) {
        long double z = b;
        for (std::size_t j = 0; j < w.size(); ++j)
            z += static_cast<long double>(w[j]) * x[i][j];
        const long double r = sigmoid(static_cast<double>(z)) - y[i];
        for (std::size_t j = 0; j < w.size(); ++j)
            g[j] += r * x[i][j];
        g[w.size()] += r;
    }
    std::vector<double> out(g.size());
    for (std::size_t j = 0; j < w.size(); ++j)
        out[j] = static_cast<double>(g[j] + static_cast<long double>(l2) * w[j]);
    out[w.size()] = static_cast<double>(g[w.size()]);
    return out;
}

inline LinearModel train_logistic(const Dataset& data, const LogisticParams& params = {})
{
    data.require_both_classes();
    if (!(params.l2 >= 0.0) || !(params.lr > 0.0) || params.iters < 0)
        throw ArgumentError("train_logistic: need l2 >= 0, lr > 0, iters >= 0");
    LinearModel m;
    m.kind = LinearKind::logistic;
    m.standardizer = Standardizer::fit(data);
    const auto xs = m.standardizer.apply(data.x);
    const std::size_t d = data.cols();
    std::vector<double> w(d, 0.0);
    double b = 0.0;
    double loss = logistic_loss(xs, data.y, w, b, params.l2);
    m.trace.push_back(loss);
    for (int it = 0; it < params.iters; ++it) {
        const auto g = logistic_gradient(xs, data.y, w, b, params.l2);
        double gn2 = 0.0;
        for (double v : g)
            gn2 += v * v;
        if (std::sqrt(gn2) < params.tol)
            break;
        double step = params.lr;
        bool accepted = false;
        for (int halving = 0; halving < 60; ++halving, step *= 0.5) {
            std::vector<double> wn(d);
            for (std::size_t j = 0; j < d; ++j)
                wn[j] = w[j] - step * g[j];
            const double bn = b - step * g[d];
            const double ln = logistic_loss(xs, data.y, wn, bn, params.l2);
            if (!std::isfinite(ln))
                throw NumericError("train_logistic: non-finite loss");
            if (ln <= loss - 1e-4 * step * gn2) {
                w = std::move(wn);
                b = bn;
                loss = ln;
                accepted = true;
                break;
            }
        }
        if (!accepted)
            break;
        m.trace.push_back(loss);
    }
    linear_detail::fold_back(m, w, b);
    return m;
}

// ---------------------------------------------------------------------------
// Linear SVM: exact dual coordinate ascent (SMO with the maximal violating pair)

struct SvmParams
{
    double c = 1.0;
    int max_iter = 100000;
    double tol = 1e-9; ///< KKT violation at which SMO stops
    std::uint64_t seed = 0;
};

/// Primal objective 1/2 |w|^2 + C sum hinge on the standardised training rows.
inline double svm_primal_objective(const std::vector<std::vector<double>>& xs, const std::vector<int>& y,
                                   const std::vector<double>& ws, double bs, double c)
{
    long double w2 = 0, hinge = 0;
    for (double v : ws)
        w2 += static_cast<long double>(v) * v;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        long double f = bs;
        for (std::size_t j = 0; j < ws.size(); ++j)
            f += static_cast<long double>(ws[j]) * xs[i][j];
        const long double yi = y[i] ? 1.0L : -1.0L;
        hinge += std::max(0.0L, 1.0L - yi * f);
    }
    return static_cast<double>(0.5L * w2 + c * hinge);
}

inline LinearModel train_svm(const Dataset& data, const SvmParams& params = {})
{
    data.require_both_classes();
    if (!(params.c > 0.0))
        throw ArgumentError("train_svm: C must be positive");
    LinearModel m;
    m.kind = LinearKind::svm;
    m.standardizer = Standardizer::fit(data);
    const auto xs = m.standardizer.apply(data.x);
    const std::size_t n = data.rows(), d = data.cols();
    const double c = params.c;

    std::vector<double> yv(n);
    for (std::size_t i = 0; i < n; ++i)
        yv[i] = data.y[i] ? 1.0 : -1.0;
    std::vector<std::vector<double>> k(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            long double s = 0;
            for (std::size_t t = 0; t < d; ++t)
                s += static_cast<long double>(xs[i][t]) * xs[j][t];
            k[i][j] = k[j][i] = static_cast<double>(s);
        }

    // Seeded visiting order decides ties between equally violating indices.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(params.seed, 0x73766dULL);
    rng.shuffle(order);

    std::vector<double> alpha(n, 0.0), grad(n, -1.0); // grad of the dual: Q alpha - 1
    auto dual = [&]() {
        long double s = 0;
        for (std::size_t i = 0; i < n; ++i)
            s += alpha[i] * (0.5L * (grad[i] + 1.0L) - 1.0L);
        return static_cast<double>(s);
    };
    auto in_up = [&](std::size_t t) { return (yv[t] > 0 && alpha[t] < c) || (yv[t] < 0 && alpha[t] > 0); };
    auto in_low = [&](std::size_t t) { return (yv[t] > 0 && alpha[t] > 0) || (yv[t] < 0 && alpha[t] < c); };

    m.trace.push_back(dual());
    for (int it = 0; it < params.max_iter; ++it) {
        std::size_t i = n, j = n;
        double gmax = -std::numeric_limits<double>::infinity(), gmin = std::numeric_limits<double>::infinity();
        for (std::size_t t : order) {
            const double v = -yv[t] * grad[t];
            if (in_up(t) && v > gmax) {
                gmax = v;
                i = t;
            }
            if (in_low(t) && v < gmin) {
                gmin = v;
                j = t;
            }
        }
        if (i == n || j == n || gmax - gmin < params.tol)
            break;

        const double quad = std::max(k[i][i] + k[j][j] - 2.0 * k[i][j], 1e-12);
        const double ai = alpha[i], aj = alpha[j];
        // Move along y_i d_i = -y_j d_j, which keeps sum alpha y fixed.
        double step = (gmax - gmin) / quad;
        // Box limits for alpha_i + y_i step and alpha_j - y_j step.
        const double lim_i = yv[i] > 0 ? c - ai : ai;
        const double lim_j = yv[j] > 0 ? aj : c - aj;
        step = std::min({step, lim_i, lim_j});
        alpha[i] = std::clamp(ai + yv[i] * step, 0.0, c);
        alpha[j] = std::clamp(aj - yv[j] * step, 0.0, c);
        const double di = alpha[i] - ai, dj = alpha[j] - aj;
        for (std::size_t t = 0; t < n; ++t)
            grad[t] += yv[t] * (yv[i] * k[t][i] * di + yv[j] * k[t][j] * dj);
        m.trace.push_back(dual());
    }

    // Bias from the free support vectors, else the middle of [max_up, min_low].
    long double sum = 0;
    std::size_t free = 0;
    double up = -std::numeric_limits<double>::infinity(), low = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
        const double v = -yv[t] * grad[t];
        if (alpha[t] > 0.0 && alpha[t] < c) {
            sum += v;
            ++free;
        }
        if (in_up(t))
            up = std::max(up, v);
        if (in_low(t))
            low = std::min(low, v);
    }
    double bs = 0.0;
    if (free > 0)
        bs = static_cast<double>(sum / static_cast<long double>(free));
    else if (std::isfinite(up) && std::isfinite(low))
        bs = 0.5 * (up + low);

    std::vector<double> ws(d, 0.0);
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t j = 0; j < d; ++j)
            ws[j] += alpha[t] * yv[t] * xs[t][j];
    linear_detail::fold_back(m, ws, bs);
    return m;
}

} // namespace exactct

#endif // EXACTCT_ML_LINEAR_HPP
