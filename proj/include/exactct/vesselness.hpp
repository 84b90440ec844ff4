#ifndef EXACTCT_VESSELNESS_HPP
#define EXACTCT_VESSELNESS_HPP

// Multiscale Hessian tube enhancement (Frangi measure), neighbourhood-max
// probability refinement, and wall-proximity weighting for the comb-sign map.
//
// The Gaussian-derivative convolutions run in 64-bit fixed point: integer sums are
// exact, so the result does not depend on the order the axes are processed in and
// the filter commutes exactly with 90-degree lattice rotations. Eigenvalues are
// recovered from the characteristic-polynomial invariants, each evaluated with a
// canonical operand order, for the same reason.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "error.hpp"
#include "morphology.hpp"
#include "volume.hpp"

namespace exactct {

enum class Polarity
{
    bright, ///< contrast-filled vessels on a darker background
    dark,
};

enum class StructurenessScale
{
    per_scale, ///< c = half the largest Hessian norm at each scale
    global,    ///< c = half the largest Hessian norm over all scales
};

struct VesselParams
{
    double s_min = 1.0; ///< mm
    double s_max = 4.0; ///< mm
    int scale_count = 5;
    double alpha = 0.5;
    double beta = 0.5;
    std::optional<double> c; ///< fixed structureness constant; derived from the data when unset
    StructurenessScale c_mode = StructurenessScale::per_scale;
    Polarity polarity = Polarity::bright;

    void validate() const
    {
        if (!(s_min > 0.0) || !(s_max >= s_min) || scale_count < 1)
            throw ArgumentError("vesselness: need 0 < s_min <= s_max and at least one scale");
        if (!(alpha > 0.0) || !(beta > 0.0) || (c && !(*c > 0.0)))
            throw ArgumentError("vesselness: alpha, beta and c must be positive");
    }

    /// Geometric sequence s_min .. s_max.
    std::vector<double> scales() const
    {
        std::vector<double> s;
        if (scale_count == 1) {
            s.push_back(s_min);
            return s;
        }
        const double ratio = std::pow(s_max / s_min, 1.0 / (scale_count - 1));
        for (int i = 0; i < scale_count; ++i)
            s.push_back(i == scale_count - 1 ? s_max : s_min * std::pow(ratio, i));
        return s;
    }
};

namespace vessel_detail {

/// Input HU is quantised to half-HU steps and clamped to +-4096 HU (13 bits).
constexpr double input_scale = 2.0;
constexpr double input_limit = 4096.0;

struct Kernel
{
    int radius = 0;
    std::vector<std::int64_t> taps; ///< size 2 * radius + 1, centred
};

struct KernelSet
{
    Kernel d0, d1, d2;
    int bits = 0;
};

/// Sampled Gaussian (sum 1), first derivative (sum x k = -1) and second derivative
/// (sum k = 0, sum x^2 k = 2) for a voxel-unit sigma.
inline std::array<std::vector<double>, 3> gaussian_derivatives(double sigma, int radius)
{
    const std::size_t n = static_cast<std::size_t>(2 * radius + 1);
    std::vector<double> g(n), g1(n), g2(n);
    double s0 = 0.0;
    for (int x = -radius; x <= radius; ++x) {
        g[static_cast<std::size_t>(x + radius)] = std::exp(-0.5 * x * x / (sigma * sigma));
        s0 += g[static_cast<std::size_t>(x + radius)];
    }
    for (auto& v : g)
        v /= s0;
    double m1 = 0.0, sum2 = 0.0;
    for (int x = -radius; x <= radius; ++x) {
        const auto i = static_cast<std::size_t>(x + radius);
        g1[i] = -x / (sigma * sigma) * g[i];
        g2[i] = (static_cast<double>(x) * x / (sigma * sigma * sigma * sigma) - 1.0 / (sigma * sigma)) * g[i];
        m1 += x * g1[i];
        sum2 += g2[i];
    }
    double m2 = 0.0;
    for (int x = -radius; x <= radius; ++x) {
        const auto i = static_cast<std::size_t>(x + radius);
        g1[i] *= -1.0 / m1;
        g2[i] -= sum2 * g[i];
        m2 += static_cast<double>(x) * x * g2[i];
    }
    for (auto& v : g2)
        v *= 2.0 / m2;
    return {g, g1, g2};
}

inline double l1(const std::vector<double>& k)
{
    double s = 0.0;
    for (double v : k)
        s += std::fabs(v);
    return s;
}

inline Kernel quantise(const std::vector<double>& k, int bits, bool zero_sum)
{
    Kernel q;
    q.radius = static_cast<int>(k.size() / 2);
    q.taps.resize(k.size());
    const double scale = std::ldexp(1.0, bits);
    for (std::size_t i = 0; i < k.size(); ++i)
        q.taps[i] = std::llround(k[i] * scale);
    if (zero_sum) {
        std::int64_t s = 0;
        for (auto t : q.taps)
            s += t;
        q.taps[static_cast<std::size_t>(q.radius)] -= s;
    }
    return q;
}

inline KernelSet make_kernels(double sigma)
{
    sigma = std::max(sigma, 0.5);
    const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
    const auto k = gaussian_derivatives(sigma, radius);
    // Worst-case magnitude of any separable product must stay below 2^61.
    const double worst = std::max({l1(k[2]) * l1(k[0]) * l1(k[0]), l1(k[1]) * l1(k[1]) * l1(k[0])});
    int bits = 16;
    while (bits > 8 && 13.0 + 3.0 * bits + std::log2(worst) + 1.0 > 61.0)
        --bits;
    return {quantise(k[0], bits, false), quantise(k[1], bits, false), quantise(k[2], bits, true), bits};
}

using IntField = std::vector<std::int64_t>;

/// Integer 1D convolution along `axis` with edge replication.
inline IntField convolve_axis(const IntField& src, const Dims& d, int axis, const Kernel& k)
{
    IntField out(src.size());
    const long n = static_cast<long>(d[axis]);
    const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? d.nx : d.nx * d.ny);
    const std::size_t lines = d.count() / d[axis];
    std::vector<std::int64_t> line(static_cast<std::size_t>(n));
    for (std::size_t l = 0; l < lines; ++l) {
        std::size_t base;
        if (axis == 0)
            base = l * d.nx;
        else if (axis == 1)
            base = (l % d.nx) + (l / d.nx) * d.nx * d.ny;
        else
            base = l;
        for (long t = 0; t < n; ++t)
            line[static_cast<std::size_t>(t)] = src[base + static_cast<std::size_t>(t) * stride];
        for (long t = 0; t < n; ++t) {
            std::int64_t acc = 0;
            for (int o = -k.radius; o <= k.radius; ++o) {
                const long p = std::clamp(t - o, 0L, n - 1);
                acc += k.taps[static_cast<std::size_t>(o + k.radius)] * line[static_cast<std::size_t>(p)];
            }
            out[base + static_cast<std::size_t>(t) * stride] = acc;
        }
    }
    return out;
}

struct HessianField
{
    // xx, yy, zz, xy, xz, yz
    std::array<IntField, 6> h;
    std::array<double, 6> to_mm{}; ///< integer -> scale-normalised mm^-2 factor per component
};

inline HessianField hessian_at_scale(const CtVolume& vol, double s_mm)
{
    const Dims& d = vol.dims();
    const auto& sp = vol.grid().spacing;
    std::array<KernelSet, 3> ks{make_kernels(s_mm / sp[0]), make_kernels(s_mm / sp[1]), make_kernels(s_mm / sp[2])};

    IntField q(vol.size());
    for (std::size_t v = 0; v < vol.size(); ++v) {
        const double hu = std::clamp(static_cast<double>(vol[v]), -input_limit, input_limit - 0.5);
        q[v] = std::llround(hu * input_scale);
    }
    const IntField x0 = convolve_axis(q, d, 0, ks[0].d0);
    const IntField x1 = convolve_axis(q, d, 0, ks[0].d1);
    const IntField x2 = convolve_axis(q, d, 0, ks[0].d2);
    const IntField y00 = convolve_axis(x0, d, 1, ks[1].d0);
    const IntField y01 = convolve_axis(x0, d, 1, ks[1].d1);
    const IntField y02 = convolve_axis(x0, d, 1, ks[1].d2);
    const IntField y10 = convolve_axis(x1, d, 1, ks[1].d0);
    const IntField y11 = convolve_axis(x1, d, 1, ks[1].d1);
    const IntField y20 = convolve_axis(x2, d, 1, ks[1].d0);

    HessianField f;
    f.h[0] = convolve_axis(y20, d, 2, ks[2].d0);
    f.h[1] = convolve_axis(y02, d, 2, ks[2].d0);
    f.h[2] = convolve_axis(y00, d, 2, ks[2].d2);
    f.h[3] = convolve_axis(y11, d, 2, ks[2].d0);
    f.h[4] = convolve_axis(y10, d, 2, ks[2].d1);
    f.h[5] = convolve_axis(y01, d, 2, ks[2].d1);

    const double s2 = s_mm * s_mm;
    const int pairs[6][2] = {{0, 0}, {1, 1}, {2, 2}, {0, 1}, {0, 2}, {1, 2}};
    for (int c = 0; c < 6; ++c) {
        const int a = pairs[c][0], b = pairs[c][1];
        const int bits = ks[0].bits + ks[1].bits + ks[2].bits;
        f.to_mm[c] = s2 / (sp[a] * sp[b]) / (input_scale * std::ldexp(1.0, bits));
    }
    return f;
}

using Real = long double;

inline Real sum3(Real a, Real b, Real c)
{
    if (a > b)
        std::swap(a, b);
    if (b > c)
        std::swap(b, c);
    if (a > b)
        std::swap(a, b);
    return (a + b) + c;
}

inline Real prod3(Real a, Real b, Real c)
{
    if (a > b)
        std::swap(a, b);
    if (b > c)
        std::swap(b, c);
    if (a > b)
        std::swap(a, b);
    return (a * b) * c;
}

/// Eigenvalues of the symmetric matrix [[a d e][d b f][e f c]], sorted by |lambda|
/// ascending. Invariant (bit for bit) under signed permutations of the axes.
inline std::array<double, 3> symmetric_eigenvalues(Real a, Real b, Real c, Real d, Real e, Real f)
{
    const Real tr = sum3(a, b, c);
    const Real m2 = sum3(a * b, a * c, b * c) - sum3(d * d, e * e, f * f);
    const Real off_sign = (d < 0) != (e < 0) ? ((f < 0) ? 1 : -1) : ((f < 0) ? -1 : 1);
    const Real det = prod3(a, b, c) + 2 * off_sign * prod3(std::fabs(d), std::fabs(e), std::fabs(f)) -
                     sum3(a * f * f, b * e * e, c * d * d);

    const Real q = tr / 3;
    // tr(B^2)/6 with B = A - qI.
    const Real p2 = ((tr * tr - 2 * m2) - 3 * q * q) / 6;
    std::array<Real, 3> ev;
    if (p2 <= 0) {
        ev = {q, q, q};
    } else {
        const Real p = std::sqrt(p2);
        // det(B) = det - q m2 + q^2 tr - q^3
        const Real det_b = det - q * m2 + q * q * tr - q * q * q;
        Real r = det_b / (2 * p * p * p);
        r = std::clamp(r, Real(-1), Real(1));
        const Real phi = std::acos(r) / 3;
        const Real two_pi_3 = 2 * std::numbers::pi_v<Real> / 3;
        ev[0] = q + 2 * p * std::cos(phi);
        ev[2] = q + 2 * p * std::cos(phi + two_pi_3);
        ev[1] = 3 * q - ev[0] - ev[2];
    }
    std::array<double, 3> out{static_cast<double>(ev[0]), static_cast<double>(ev[1]), static_cast<double>(ev[2])};
    std::sort(out.begin(), out.end(), [](double x, double y) {
        const double ax = std::fabs(x), ay = std::fabs(y);
        return ax < ay || (ax == ay && x < y);
    });
    return out;
}

/// Frangi tube measure from |l1| <= |l2| <= |l3|.
inline double tube_measure(const std::array<double, 3>& l, double alpha, double beta, double c, Polarity pol)
{
    const double l1 = l[0], l2 = l[1], l3 = l[2];
    if (pol == Polarity::bright ? (l2 > 0.0 || l3 > 0.0) : (l2 < 0.0 || l3 < 0.0))
        return 0.0;
    if (l2 == 0.0 || l3 == 0.0)
        return 0.0;
    const double ra = std::fabs(l2) / std::fabs(l3);
    const double rb = std::fabs(l1) / std::sqrt(std::fabs(l2 * l3));
    const double s2 = l1 * l1 + l2 * l2 + l3 * l3;
    return (1.0 - std::exp(-ra * ra / (2.0 * alpha * alpha))) * std::exp(-rb * rb / (2.0 * beta * beta)) *
           (1.0 - std::exp(-s2 / (2.0 * c * c)));
}

} // namespace vessel_detail

struct FrangiResult
{
    ProbabilityVolume response;               ///< max over scales, divided by its global max
    std::vector<double> scales;               ///< mm
    std::vector<Volume<float, HuTag>> per_scale; ///< raw tube measure at each scale
    Volume<std::uint8_t, MaskTag> best_scale; ///< index of the winning scale per voxel
};

inline FrangiResult frangi_filter(const CtVolume& vol, const VesselParams& params = {})
{
    params.validate();
    const Dims& d = vol.dims();
    if (d.nx < 8 || d.ny < 8 || d.nz < 8)
        throw ArgumentError("frangi_response: volume must have at least 8 voxels per axis");

    FrangiResult res;
    res.scales = params.scales();
    const std::size_t n = vol.size();
    std::vector<std::vector<std::array<double, 3>>> eig(res.scales.size());
    std::vector<double> max_norm(res.scales.size(), 0.0);

    for (std::size_t si = 0; si < res.scales.size(); ++si) {
        const auto hf = vessel_detail::hessian_at_scale(vol, res.scales[si]);
        eig[si].resize(n);
        for (std::size_t v = 0; v < n; ++v) {
            using vessel_detail::Real;
            const Real a = static_cast<Real>(static_cast<double>(hf.h[0][v]) * hf.to_mm[0]);
            const Real b = static_cast<Real>(static_cast<double>(hf.h[1][v]) * hf.to_mm[1]);
            const Real c = static_cast<Real>(static_cast<double>(hf.h[2][v]) * hf.to_mm[2]);
            const Real xy = static_cast<Real>(static_cast<double>(hf.h[3][v]) * hf.to_mm[3]);
            const Real xz = static_cast<Real>(static_cast<double>(hf.h[4][v]) * hf.to_mm[4]);
            const Real yz = static_cast<Real>(static_cast<double>(hf.h[5][v]) * hf.to_mm[5]);
            const auto l = vessel_detail::symmetric_eigenvalues(a, b, c, xy, xz, yz);
            eig[si][v] = l;
            max_norm[si] = std::max(max_norm[si], std::sqrt(l[0] * l[0] + l[1] * l[1] + l[2] * l[2]));
        }
    }

    const double global_norm = *std::max_element(max_norm.begin(), max_norm.end());
    std::vector<float> best(n, 0.0f);
    res.best_scale = Volume<std::uint8_t, MaskTag>(vol.grid(), 0);
    for (std::size_t si = 0; si < res.scales.size(); ++si) {
        double c;
        if (params.c)
            c = *params.c;
        else
            c = 0.5 * (params.c_mode == StructurenessScale::per_scale ? max_norm[si] : global_norm);
        Volume<float, HuTag> layer(vol.grid(), 0.0f);
        if (c > 0.0)
            for (std::size_t v = 0; v < n; ++v)
                layer[v] = static_cast<float>(
                    vessel_detail::tube_measure(eig[si][v], params.alpha, params.beta, c, params.polarity));
        for (std::size_t v = 0; v < n; ++v)
            if (layer[v] > best[v]) {
                best[v] = layer[v];
                res.best_scale[v] = static_cast<std::uint8_t>(si);
            }
        res.per_scale.push_back(std::move(layer));
    }

    const float peak = *std::max_element(best.begin(), best.end());
    res.response = ProbabilityVolume(vol.grid(), 0.0f);
    if (peak > 0.0f)
        for (std::size_t v = 0; v < n; ++v)
            res.response[v] = std::clamp(best[v] / peak, 0.0f, 1.0f);
    return res;
}

/// F(x) = max over scales of the tube measure, rescaled to [0, 1].
inline ProbabilityVolume frangi_response(const CtVolume& vol, const VesselParams& params = {})
{
    return frangi_filter(vol, params).response;
}

struct RefineSchedule
{
    std::vector<double> lambdas; ///< one mixing weight per iteration

    static RefineSchedule constant(double lambda, int iterations)
    {
        return {std::vector<double>(static_cast<std::size_t>(std::max(0, iterations)), lambda)};
    }

    void validate() const
    {
        for (double l : lambdas)
            if (!(l >= 0.0 && l <= 1.0))
                throw ArgumentError("refine schedule: every lambda must lie in [0, 1]");
    }
};

/// 3x3x3 neighbourhood maximum (neighbours outside the grid are ignored).
inline ProbabilityVolume max_filter3(const ProbabilityVolume& p)
{
    ProbabilityVolume out = p;
    const Dims& d = p.dims();
    for (int axis = 0; axis < 3; ++axis) {
        const ProbabilityVolume src = out;
        const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? d.nx : d.nx * d.ny);
        const std::size_t n = d[axis];
        for (std::size_t k = 0; k < d.nz; ++k)
            for (std::size_t j = 0; j < d.ny; ++j)
                for (std::size_t i = 0; i < d.nx; ++i) {
                    const std::size_t idx = p.grid().index(i, j, k);
                    const std::size_t pos = axis == 0 ? i : (axis == 1 ? j : k);
                    float m = src[idx];
                    if (pos > 0)
                        m = std::max(m, src[idx - stride]);
                    if (pos + 1 < n)
                        m = std::max(m, src[idx + stride]);
                    out[idx] = m;
                }
    }
    return out;
}

/// P(k+1) = M(k)^(1 - lambda_k) * P(k)^lambda_k with M the 3x3x3 local maximum.
inline ProbabilityVolume refine_probability(const ProbabilityVolume& p0, const RefineSchedule& sched)
{
    sched.validate();
    ProbabilityVolume p = p0;
    for (double lambda : sched.lambdas) {
        const ProbabilityVolume m = max_filter3(p);
        for (std::size_t v = 0; v < p.size(); ++v) {
            const float pv = p[v], mv = m[v];
            if (mv == pv)
                continue;
            const double mixed = std::pow(static_cast<double>(mv), 1.0 - lambda) *
                                 std::pow(static_cast<double>(pv), lambda);
            p[v] = std::clamp(static_cast<float>(mixed), pv, mv);
        }
    }
    return p;
}

/// Separable Gaussian blur with sigma in mm; zero outside the grid.
inline std::vector<double> gaussian_blur(std::span<const float> field, const Grid& g, double sigma_mm)
{
    std::vector<double> cur(field.begin(), field.end());
    const Dims& d = g.dims;
    for (int axis = 0; axis < 3; ++axis) {
        const double sv = sigma_mm / g.spacing[axis];
        const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sv)));
        std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
        for (int x = -radius; x <= radius; ++x)
            k[static_cast<std::size_t>(x + radius)] = std::exp(-0.5 * x * x / (sv * sv));
        std::vector<double> next(cur.size(), 0.0);
        const long n = static_cast<long>(d[axis]);
        const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? d.nx : d.nx * d.ny);
        for (std::size_t kk = 0; kk < d.nz; ++kk)
            for (std::size_t j = 0; j < d.ny; ++j)
                for (std::size_t i = 0; i < d.nx; ++i) {
                    const std::size_t idx = g.index(i, j, kk);
                    const long pos = static_cast<long>(axis == 0 ? i : (axis == 1 ? j : kk));
                    double acc = 0.0;
                    for (int o = -radius; o <= radius; ++o) {
                        const long q = pos + o;
                        if (q < 0 || q >= n)
                            continue;
                        acc += k[static_cast<std::size_t>(o + radius)] *
                               cur[static_cast<std::size_t>(static_cast<long>(idx) + o * static_cast<long>(stride))];
                    }
                    next[idx] = acc;
                }
        cur.swap(next);
    }
    return cur;
}

struct DistanceParams
{
    double sigma = 10.0;            ///< mm
    double keep_percentile = 95.0;  ///< responses below this percentile of the nonzero ones are dropped

    void validate() const
    {
        if (!(sigma > 0.0))
            throw ArgumentError("distance params: sigma must be positive");
        if (!(keep_percentile >= 0.0 && keep_percentile <= 100.0))
            throw ArgumentError("distance params: keep_percentile must lie in [0, 100]");
    }
};

/// Gaussian-smoothed wall probability, normalised to peak 1 (all zero if the wall field is).
inline ProbabilityVolume proximity_field(const ProbabilityVolume& wall, double sigma_mm)
{
    const auto blurred = gaussian_blur(wall.values(), wall.grid(), sigma_mm);
    const double peak = *std::max_element(blurred.begin(), blurred.end());
    ProbabilityVolume out(wall.grid(), 0.0f);
    if (peak > 0.0)
        for (std::size_t v = 0; v < out.size(); ++v)
            out[v] = std::clamp(static_cast<float>(blurred[v] / peak), 0.0f, 1.0f);
    return out;
}

/// Keeps responses at or above the given percentile of the nonzero population.
inline ProbabilityVolume keep_top_percentile(const ProbabilityVolume& p, double percentile)
{
    ProbabilityVolume out = p;
    if (std::none_of(p.values().begin(), p.values().end(), [](float v) { return v != 0.0f; }))
        return out;
    const float thr = percentile_threshold(p, percentile, Population::nonzero);
    for (auto& v : out.storage())
        if (v < thr)
            v = 0.0f;
    return out;
}

/// vessel * proximity, blanked inside the intestine.
inline ProbabilityVolume apply_proximity(const ProbabilityVolume& vessel, const ProbabilityVolume& proximity,
                                         const BinaryMask& intestine)
{
    require_compatible(vessel.grid(), proximity.grid(), "wall_distance_weight");
    require_compatible(vessel.grid(), intestine.grid(), "wall_distance_weight");
    ProbabilityVolume out(vessel.grid(), 0.0f);
    for (std::size_t v = 0; v < out.size(); ++v)
        out[v] = intestine[v] ? 0.0f : vessel[v] * proximity[v];
    return out;
}

inline ProbabilityVolume wall_distance_weight(const ProbabilityVolume& p, const ProbabilityVolume& wall,
                                              const BinaryMask& intestine, const DistanceParams& params = {})
{
    params.validate();
    require_compatible(p.grid(), wall.grid(), "wall_distance_weight");
    require_compatible(p.grid(), intestine.grid(), "wall_distance_weight");
    return apply_proximity(keep_top_percentile(p, params.keep_percentile), proximity_field(wall, params.sigma),
                           intestine);
}

} // namespace exactct

#endif // EXACTCT_VESSELNESS_HPP
