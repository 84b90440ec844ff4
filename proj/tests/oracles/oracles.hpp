#ifndef EXACTCT_TESTS_ORACLES_HPP
#define EXACTCT_TESTS_ORACLES_HPP

// Slow, obvious reference implementations the library is checked against.
// Nothing here calls into the code under test except for plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

#include "exactct/volume.hpp"
#include "exactct/xgb.hpp"

namespace oracle {

using exactct::BinaryMask;
using exactct::Dims;
using exactct::ProbabilityVolume;

/// Offsets of a cube (Chebyshev ball) or cross (L1 ball of radius 1).
inline std::vector<std::array<long, 3>> offsets(bool cube, long r)
{
    std::vector<std::array<long, 3>> o;
    for (long dz = -r; dz <= r; ++dz)
        for (long dy = -r; dy <= r; ++dy)
            for (long dx = -r; dx <= r; ++dx)
                if (cube || std::abs(dx) + std::abs(dy) + std::abs(dz) <= r)
                    o.push_back({dx, dy, dz});
    return o;
}

/// One erosion or dilation step: out-of-bounds voxels are background.
inline BinaryMask morph_step(const BinaryMask& m, const std::vector<std::array<long, 3>>& off, bool dilate)
{
    const Dims& d = m.dims();
    BinaryMask out(m.grid(), 0);
    for (long k = 0; k < static_cast<long>(d.nz); ++k)
        for (long j = 0; j < static_cast<long>(d.ny); ++j)
            for (long i = 0; i < static_cast<long>(d.nx); ++i) {
                bool any = false, all = true;
                for (const auto& o : off) {
                    const long a = i + o[0], b = j + o[1], c = k + o[2];
                    const bool in = m.grid().contains(a, b, c) &&
                                    m.at(static_cast<std::size_t>(a), static_cast<std::size_t>(b),
                                         static_cast<std::size_t>(c));
                    any = any || in;
                    all = all && in;
                }
                out.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j), static_cast<std::size_t>(k)) =
                    (dilate ? any : all) ? 1 : 0;
            }
    return out;
}

inline BinaryMask morph(BinaryMask m, bool cube, long r, int iters, bool dilate)
{
    const auto off = offsets(cube, r);
    for (int t = 0; t < iters; ++t)
        m = morph_step(m, off, dilate);
    return m;
}

/// Component id per voxel (0 = background) by explicit-stack flood fill in raster order.
inline std::vector<int> flood_labels(const BinaryMask& m, int connectivity)
{
    const Dims& d = m.dims();
    std::vector<int> lab(m.size(), 0);
    std::vector<std::array<long, 3>> nb;
    for (long dz = -1; dz <= 1; ++dz)
        for (long dy = -1; dy <= 1; ++dy)
            for (long dx = -1; dx <= 1; ++dx) {
                const long l1 = std::abs(dx) + std::abs(dy) + std::abs(dz);
                if (l1 == 0 || (connectivity == 6 && l1 != 1))
                    continue;
                nb.push_back({dx, dy, dz});
            }
    int next = 0;
    for (std::size_t v = 0; v < m.size(); ++v) {
        if (!m[v] || lab[v])
            continue;
        lab[v] = ++next;
        std::vector<std::size_t> stack{v};
        while (!stack.empty()) {
            const std::size_t u = stack.back();
            stack.pop_back();
            const long i = static_cast<long>(u % d.nx), j = static_cast<long>((u / d.nx) % d.ny),
                       k = static_cast<long>(u / (d.nx * d.ny));
            for (const auto& o : nb) {
                if (!m.grid().contains(i + o[0], j + o[1], k + o[2]))
                    continue;
                const std::size_t w = m.grid().index(static_cast<std::size_t>(i + o[0]),
                                                     static_cast<std::size_t>(j + o[1]),
                                                     static_cast<std::size_t>(k + o[2]));
                if (m[w] && !lab[w]) {
                    lab[w] = next;
                    stack.push_back(w);
                }
            }
        }
    }
    return lab;
}

/// Nearest-rank percentile: the smallest rank r with 100 r >= p n (first when p is 0).
inline float nearest_rank(std::vector<float> v, double p)
{
    std::sort(v.begin(), v.end());
    std::size_t rank = 1;
    while (100.0 * static_cast<double>(rank) < p * static_cast<double>(v.size()))
        ++rank;
    return v[rank - 1];
}

inline ProbabilityVolume max_filter(const ProbabilityVolume& p)
{
    const Dims& d = p.dims();
    ProbabilityVolume out(p.grid(), 0.0f);
    for (long k = 0; k < static_cast<long>(d.nz); ++k)
        for (long j = 0; j < static_cast<long>(d.ny); ++j)
            for (long i = 0; i < static_cast<long>(d.nx); ++i) {
                float m = 0.0f;
                for (long c = k - 1; c <= k + 1; ++c)
                    for (long b = j - 1; b <= j + 1; ++b)
                        for (long a = i - 1; a <= i + 1; ++a)
                            if (p.grid().contains(a, b, c))
                                m = std::max(m, p.at(static_cast<std::size_t>(a), static_cast<std::size_t>(b),
                                                     static_cast<std::size_t>(c)));
                out.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j), static_cast<std::size_t>(k)) = m;
            }
    return out;
}

/// P(s_pos > s_neg) + 1/2 P(tie) over all pairs.
inline double mann_whitney(const std::vector<double>& s, const std::vector<int>& y)
{
    double wins = 0.0, pairs = 0.0;
    for (std::size_t a = 0; a < s.size(); ++a)
        for (std::size_t b = 0; b < s.size(); ++b)
            if (y[a] == 1 && y[b] == 0) {
                pairs += 1.0;
                wins += s[a] > s[b] ? 1.0 : (s[a] == s[b] ? 0.5 : 0.0);
            }
    return wins / pairs;
}

struct SweepResult
{
    double threshold = 0.0;
    long tp = 0, fp = 0;
};

/// Tries every observed score as a threshold in the given direction and keeps the best
/// J = tp/P - fp/N, ties to the larger tp. Compares J by cross-multiplication.
inline SweepResult youden_sweep(const std::vector<double>& s, const std::vector<int>& y, bool lower_positive)
{
    const long P = std::count(y.begin(), y.end(), 1), N = static_cast<long>(y.size()) - P;
    SweepResult best;
    bool have = false;
    for (double t : s) {
        long tp = 0, fp = 0;
        for (std::size_t i = 0; i < s.size(); ++i)
            if (lower_positive ? s[i] <= t : s[i] >= t)
                (y[i] ? tp : fp) += 1;
        const long key = tp * N - fp * P, best_key = best.tp * N - best.fp * P;
        if (!have || key > best_key || (key == best_key && tp > best.tp)) {
            best = {t, tp, fp};
            have = true;
        }
    }
    return best;
}

inline double mcc(double tp, double fp, double tn, double fn)
{
    const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    return den == 0.0 ? 0.0 : (tp * tn - fp * fn) / std::sqrt(den);
}

struct SplitChoice
{
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

/// Every (feature, midpoint) pair scored from scratch. Gains within `tol` of the best
/// count as equal; the lowest feature, then the lowest threshold, wins among them.
inline SplitChoice exhaustive_split(const std::vector<std::vector<double>>& x, const std::vector<double>& g,
                                    const std::vector<double>& h, double lambda, double gamma, double min_child,
                                    double tol)
{
    struct Cand
    {
        int f;
        double t, gain;
    };
    std::vector<Cand> all;
    const std::size_t d = x.front().size();
    auto score = [&](double gs, double hs) { return gs * gs / (hs + lambda); };
    for (std::size_t f = 0; f < d; ++f) {
        std::vector<double> vals;
        for (const auto& r : x)
            vals.push_back(r[f]);
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        for (std::size_t q = 0; q + 1 < vals.size(); ++q) {
            const double t = vals[q] + (vals[q + 1] - vals[q]) / 2.0;
            double gl = 0, hl = 0, gr = 0, hr = 0;
            for (std::size_t i = 0; i < x.size(); ++i)
                if (x[i][f] < t) {
                    gl += g[i];
                    hl += h[i];
                } else {
                    gr += g[i];
                    hr += h[i];
                }
            if (hl < min_child || hr < min_child)
                continue;
            const double gain = 0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr)) - gamma;
            if (gain > 0.0)
                all.push_back({static_cast<int>(f), t, gain});
        }
    }
    SplitChoice best;
    double top = 0.0;
    for (const auto& c : all)
        top = std::max(top, c.gain);
    for (const auto& c : all)
        if (c.gain >= top - tol * std::max(1.0, top)) {
            if (best.feature < 0 || c.f < best.feature || (c.f == best.feature && c.t < best.threshold))
                best = {c.f, c.t, c.gain};
        }
    return best;
}

/// Interventional value function: mean ensemble margin over background rows with the
/// features in `coalition` taken from x.
inline double coalition_value(const exactct::TreeEnsemble& ens, const std::vector<double>& x,
                              const std::vector<std::vector<double>>& background, const std::vector<bool>& coalition)
{
    double s = 0.0;
    for (const auto& z : background) {
        std::vector<double> hybrid = z;
        for (std::size_t j = 0; j < x.size(); ++j)
            if (coalition[j])
                hybrid[j] = x[j];
        s += ens.margin(hybrid);
    }
    return s / static_cast<double>(background.size());
}

/// Shapley values as the average marginal contribution over all M! feature orders.
inline std::vector<double> permutation_shapley(const exactct::TreeEnsemble& ens, const std::vector<double>& x,
                                               const std::vector<std::vector<double>>& background)
{
    const std::size_t m = x.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> phi(m, 0.0);
    double count = 0.0;
    do {
        std::vector<bool> in(m, false);
        double prev = coalition_value(ens, x, background, in);
        for (std::size_t j : order) {
            in[j] = true;
            const double cur = coalition_value(ens, x, background, in);
            phi[j] += cur - prev;
            prev = cur;
        }
        count += 1.0;
    } while (std::next_permutation(order.begin(), order.end()));
    for (auto& p : phi)
        p /= count;
    return phi;
}

} // namespace oracle

#endif // EXACTCT_TESTS_ORACLES_HPP
