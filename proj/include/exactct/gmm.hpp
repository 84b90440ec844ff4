#ifndef EXACTCT_GMM_HPP
#define EXACTCT_GMM_HPP

// One-dimensional Gaussian mixtures fitted by EM, with BIC model-order selection,
// and the intestinal-wall posterior built on top of them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "error.hpp"
#include "rng.hpp"
#include "volume.hpp"

namespace exactct {

/// How BIC counts model complexity.
enum class BicPenalty
{
    parameters, ///< p = 3k - 1 free parameters (weights, means, variances)
    components, ///< literal "k ln N"
};

struct GmmOptions
{
    double tol = 1e-6;             ///< relative log-likelihood gain that stops EM
    int max_iter = 500;
    double variance_floor = 0.25;  ///< (0.5 HU)^2
    int restarts = 1;              ///< independent seeded initialisations, best likelihood kept
    BicPenalty penalty = BicPenalty::parameters;
    double bin_width = 0.0;        ///< > 0: fit on a histogram with this bin width (HU)
};

struct GmmModel
{
    int k = 0;
    std::vector<double> weights;
    std::vector<double> means;
    std::vector<double> variances;
    double log_likelihood = 0.0;
    double n = 0.0; ///< sample count N
    int iterations = 0;
    std::vector<double> log_likelihood_trace;

    /// Per-component posterior responsibilities at x (sum to 1).
    std::vector<double> responsibilities(double x) const
    {
        std::vector<double> lp(static_cast<std::size_t>(k));
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < k; ++j) {
            const double d = x - means[j];
            lp[j] = std::log(weights[j]) - 0.5 * std::log(2.0 * std::numbers::pi * variances[j]) -
                    0.5 * d * d / variances[j];
            mx = std::max(mx, lp[j]);
        }
        double s = 0.0;
        for (auto& v : lp) {
            v = std::exp(v - mx);
            s += v;
        }
        for (auto& v : lp)
            v /= s;
        return lp;
    }
};

/// Distinct sample values with multiplicities. EM on this form is identical to EM on
/// the raw samples; with a bin width it becomes a histogram fit.
struct WeightedSamples
{
    std::vector<double> values;
    std::vector<double> counts;
    double total = 0.0;
};

inline WeightedSamples compress_samples(std::span<const double> samples, double bin_width = 0.0)
{
    std::vector<double> s;
    s.reserve(samples.size());
    for (double x : samples) {
        if (!std::isfinite(x))
            throw NumericError("gmm: non-finite sample");
        s.push_back(bin_width > 0.0 ? (std::floor(x / bin_width) + 0.5) * bin_width : x);
    }
    std::sort(s.begin(), s.end());
    WeightedSamples w;
    for (std::size_t i = 0; i < s.size();) {
        std::size_t j = i;
        while (j < s.size() && s[j] == s[i])
            ++j;
        w.values.push_back(s[i]);
        w.counts.push_back(static_cast<double>(j - i));
        i = j;
    }
    w.total = static_cast<double>(s.size());
    return w;
}

namespace gmm_detail {

struct EStep
{
    double log_likelihood = 0.0;
    std::vector<double> resp; ///< values.size() x k, row-major
};

inline EStep expectation(const WeightedSamples& d, const GmmModel& m)
{
    const std::size_t u = d.values.size();
    const auto k = static_cast<std::size_t>(m.k);
    EStep e;
    e.resp.resize(u * k);
    std::vector<double> log_norm(k);
    for (std::size_t j = 0; j < k; ++j)
        log_norm[j] = std::log(m.weights[j]) - 0.5 * std::log(2.0 * std::numbers::pi * m.variances[j]);
    for (std::size_t i = 0; i < u; ++i) {
        double* r = &e.resp[i * k];
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j) {
            const double dx = d.values[i] - m.means[j];
            r[j] = log_norm[j] - 0.5 * dx * dx / m.variances[j];
            mx = std::max(mx, r[j]);
        }
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            r[j] = std::exp(r[j] - mx);
            s += r[j];
        }
        for (std::size_t j = 0; j < k; ++j)
            r[j] /= s;
        e.log_likelihood += d.counts[i] * (mx + std::log(s));
    }
    return e;
}

inline void maximization(const WeightedSamples& d, const EStep& e, GmmModel& m, double floor)
{
    const std::size_t u = d.values.size();
    const auto k = static_cast<std::size_t>(m.k);
    for (std::size_t j = 0; j < k; ++j) {
        double nj = 0.0, sj = 0.0;
        for (std::size_t i = 0; i < u; ++i) {
            const double w = d.counts[i] * e.resp[i * k + j];
            nj += w;
            sj += w * d.values[i];
        }
        if (nj <= 1e-12 * d.total) {
            // Collapsed component: keep its mean, reset to the floor, give it a tiny weight.
            m.weights[j] = 1e-12;
            m.variances[j] = floor;
            continue;
        }
        const double mu = sj / nj;
        double ss = 0.0;
        for (std::size_t i = 0; i < u; ++i) {
            const double dx = d.values[i] - mu;
            ss += d.counts[i] * e.resp[i * k + j] * dx * dx;
        }
        m.weights[j] = nj / d.total;
        m.means[j] = mu;
        m.variances[j] = std::max(ss / nj, floor);
    }
    const double wsum = std::accumulate(m.weights.begin(), m.weights.end(), 0.0);
    for (auto& w : m.weights)
        w /= wsum;
}

/// Weighted k-means++ seeding followed by one hard assignment.
inline GmmModel initialise(const WeightedSamples& d, int k, Rng& rng, double floor)
{
    const std::size_t u = d.values.size();
    auto pick = [&](const std::vector<double>& mass) -> std::size_t {
        const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
        if (!(total > 0.0))
            return rng.index(u);
        double t = rng.uniform() * total;
        for (std::size_t i = 0; i < u; ++i) {
            t -= mass[i];
            if (t < 0.0)
                return i;
        }
        return u - 1;
    };
    std::vector<double> centers;
    centers.push_back(d.values[pick(d.counts)]);
    std::vector<double> dist2(u, std::numeric_limits<double>::infinity());
    while (static_cast<int>(centers.size()) < k) {
        std::vector<double> mass(u);
        for (std::size_t i = 0; i < u; ++i) {
            const double dx = d.values[i] - centers.back();
            dist2[i] = std::min(dist2[i], dx * dx);
            mass[i] = d.counts[i] * dist2[i];
        }
        centers.push_back(d.values[pick(mass)]);
    }
    std::sort(centers.begin(), centers.end());

    GmmModel m;
    m.k = k;
    m.n = d.total;
    m.weights.assign(k, 0.0);
    m.means.assign(k, 0.0);
    m.variances.assign(k, 0.0);
    std::vector<double> sx(k, 0.0), sxx(k, 0.0);
    for (std::size_t i = 0; i < u; ++i) {
        int best = 0;
        for (int j = 1; j < k; ++j)
            if (std::fabs(d.values[i] - centers[j]) < std::fabs(d.values[i] - centers[best]))
                best = j;
        m.weights[best] += d.counts[i];
        sx[best] += d.counts[i] * d.values[i];
    }
    for (int j = 0; j < k; ++j)
        m.means[j] = m.weights[j] > 0.0 ? sx[j] / m.weights[j] : centers[j];
    for (std::size_t i = 0; i < u; ++i) {
        int best = 0;
        for (int j = 1; j < k; ++j)
            if (std::fabs(d.values[i] - centers[j]) < std::fabs(d.values[i] - centers[best]))
                best = j;
        const double dx = d.values[i] - m.means[best];
        sxx[best] += d.counts[i] * dx * dx;
    }
    double global_mean = 0.0;
    for (std::size_t i = 0; i < u; ++i)
        global_mean += d.counts[i] * d.values[i];
    global_mean /= d.total;
    double global_var = 0.0;
    for (std::size_t i = 0; i < u; ++i)
        global_var += d.counts[i] * (d.values[i] - global_mean) * (d.values[i] - global_mean);
    global_var = std::max(global_var / d.total, floor);
    for (int j = 0; j < k; ++j) {
        m.variances[j] = m.weights[j] > 1.0 ? std::max(sxx[j] / m.weights[j], floor) : global_var;
        m.weights[j] = std::max(m.weights[j], 1.0) / d.total;
    }
    const double wsum = std::accumulate(m.weights.begin(), m.weights.end(), 0.0);
    for (auto& w : m.weights)
        w /= wsum;
    return m;
}

inline GmmModel run_em(const WeightedSamples& d, GmmModel m, const GmmOptions& opt)
{
    EStep e = expectation(d, m);
    double ll = e.log_likelihood;
    m.log_likelihood_trace.assign(1, ll);
    m.iterations = 0;
    for (int it = 0; it < opt.max_iter; ++it) {
        maximization(d, e, m, opt.variance_floor);
        e = expectation(d, m);
        const double next = e.log_likelihood;
        m.log_likelihood_trace.push_back(next);
        ++m.iterations;
        const double gain = next - ll;
        ll = next;
        if (gain < opt.tol * std::fabs(ll))
            break;
    }
    m.log_likelihood = ll;
    if (!std::isfinite(ll))
        throw NumericError("gmm: log-likelihood is not finite");
    return m;
}

} // namespace gmm_detail

inline GmmModel fit_gmm(const WeightedSamples& data, int k, std::uint64_t seed, const GmmOptions& opt = {})
{
    if (k < 1)
        throw ArgumentError("fit_gmm: k must be >= 1");
    if (data.total < 2.0 * k)
        throw ArgumentError("fit_gmm: need at least 2k samples (have " + std::to_string(data.total) + ", k = " +
                            std::to_string(k) + ")");
    GmmModel best;
    bool have = false;
    for (int r = 0; r < std::max(1, opt.restarts); ++r) {
        Rng rng(seed, static_cast<std::uint64_t>(1000 * k + r));
        GmmModel m = gmm_detail::run_em(data, gmm_detail::initialise(data, k, rng, opt.variance_floor), opt);
        if (!have || m.log_likelihood > best.log_likelihood) {
            best = std::move(m);
            have = true;
        }
    }
    return best;
}

inline GmmModel fit_gmm(std::span<const double> samples, int k, std::uint64_t seed, const GmmOptions& opt = {})
{
    return fit_gmm(compress_samples(samples, opt.bin_width), k, seed, opt);
}

/// -2 ln L + p ln N
inline double bic(const GmmModel& m, BicPenalty penalty = BicPenalty::parameters)
{
    const double p = penalty == BicPenalty::parameters ? 3.0 * m.k - 1.0 : static_cast<double>(m.k);
    return -2.0 * m.log_likelihood + p * std::log(m.n);
}

/// Fits every k in `k_range` and keeps the BIC minimiser; ties go to the smaller k.
inline GmmModel select_k_by_bic(const WeightedSamples& data, std::span<const int> k_range, std::uint64_t seed,
                                const GmmOptions& opt = {})
{
    if (k_range.empty())
        throw ArgumentError("select_k_by_bic: k range is empty");
    std::vector<int> ks(k_range.begin(), k_range.end());
    std::sort(ks.begin(), ks.end());
    GmmModel best;
    double best_bic = std::numeric_limits<double>::infinity();
    for (int k : ks) {
        GmmModel m = fit_gmm(data, k, seed, opt);
        const double b = bic(m, opt.penalty);
        if (b < best_bic) {
            best_bic = b;
            best = std::move(m);
        }
    }
    return best;
}

inline GmmModel select_k_by_bic(std::span<const double> samples, std::span<const int> k_range, std::uint64_t seed,
                                const GmmOptions& opt = {})
{
    return select_k_by_bic(compress_samples(samples, opt.bin_width), k_range, seed, opt);
}

/// Enhanced-wall component: of the two heaviest components, the brighter one.
inline int wall_component(const GmmModel& m)
{
    if (m.k == 1)
        return 0;
    std::vector<int> order(static_cast<std::size_t>(m.k));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return m.weights[a] > m.weights[b]; });
    const int a = order[0], b = order[1];
    return m.means[a] >= m.means[b] ? a : b;
}

struct WallOptions
{
    std::vector<int> k_range{1, 2, 3, 4, 5, 6};
    std::size_t max_samples = 2'000'000;
    GmmOptions gmm{.restarts = 5, .bin_width = 0.25};
};

struct WallFit
{
    ProbabilityVolume posterior;
    GmmModel model;
    int wall = 0;
};

/// Posterior responsibility of the enhanced-wall component inside the intestine mask, 0 outside.
inline WallFit fit_wall_posterior(const CtVolume& vol, const BinaryMask& intestine, std::uint64_t seed,
                                  const WallOptions& opt = {})
{
    require_compatible(vol.grid(), intestine.grid(), "wall_posterior");
    std::vector<std::size_t> inside;
    for (std::size_t v = 0; v < intestine.size(); ++v)
        if (intestine[v])
            inside.push_back(v);
    if (inside.empty())
        throw ArgumentError("wall_posterior: intestine mask is empty");

    std::vector<std::size_t> chosen = inside;
    if (chosen.size() > opt.max_samples) {
        Rng rng(seed, 0x73756273ULL);
        for (std::size_t i = 0; i < opt.max_samples; ++i)
            std::swap(chosen[i], chosen[i + rng.index(chosen.size() - i)]);
        chosen.resize(opt.max_samples);
    }
    std::vector<double> samples;
    samples.reserve(chosen.size());
    for (std::size_t v : chosen)
        samples.push_back(vol[v]);

    WallFit fit{ProbabilityVolume(vol.grid(), 0.0f), select_k_by_bic(samples, opt.k_range, seed, opt.gmm), 0};
    fit.wall = wall_component(fit.model);
    for (std::size_t v : inside) {
        const auto r = fit.model.responsibilities(vol[v]);
        fit.posterior[v] = std::clamp(static_cast<float>(r[static_cast<std::size_t>(fit.wall)]), 0.0f, 1.0f);
    }
    return fit;
}

inline ProbabilityVolume wall_posterior(const CtVolume& vol, const BinaryMask& intestine, std::uint64_t seed,
                                        const WallOptions& opt = {})
{
    return fit_wall_posterior(vol, intestine, seed, opt).posterior;
}

} // namespace exactct

#endif // EXACTCT_GMM_HPP
