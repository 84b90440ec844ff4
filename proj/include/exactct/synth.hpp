#ifndef EXACTCT_SYNTH_HPP
#define EXACTCT_SYNTH_HPP

// Analytic CT phantoms and the augmentation stack (rigid rotation, uniform scaling,
// cubic B-spline free-form deformation, translation, additive Gaussian noise).
// All geometric transforms are backward warps with trilinear sampling.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "error.hpp"
#include "rng.hpp"
#include "volume.hpp"

namespace exactct {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

/// HU assigned to samples that fall outside the field of view.
constexpr float air_hu = -1000.0f;

struct Sphere
{
    Vec3 center;
    double radius;
    float hu;
};

/// Circular cylinder along a grid axis (0 = x, 1 = y, 2 = z).
struct Cylinder
{
    Vec3 center;
    double radius;
    double half_length;
    int axis = 2;
    float hu;
};

/// Ring inner_radius <= r <= outer_radius in the axial plane, extruded +-half_thickness along z.
struct AnnulusSlab
{
    Vec3 center;
    double inner_radius;
    double outer_radius;
    double half_thickness;
    float hu;
};

struct Box
{
    Vec3 center;
    Vec3 half_size;
    float hu;
};

using Primitive = std::variant<Sphere, Cylinder, AnnulusSlab, Box>;

struct PhantomSpec
{
    Dims dims;
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    float background = air_hu;
    std::vector<Primitive> primitives; ///< later entries overwrite earlier ones
};

namespace synth_detail {

inline bool contains(const Sphere& s, const Vec3& p)
{
    const double dx = p[0] - s.center[0], dy = p[1] - s.center[1], dz = p[2] - s.center[2];
    return dx * dx + dy * dy + dz * dz <= s.radius * s.radius;
}

inline bool contains(const Cylinder& c, const Vec3& p)
{
    double r2 = 0.0;
    for (int a = 0; a < 3; ++a) {
        const double d = p[a] - c.center[a];
        if (a == c.axis) {
            if (std::fabs(d) > c.half_length)
                return false;
        } else {
            r2 += d * d;
        }
    }
    return r2 <= c.radius * c.radius;
}

inline bool contains(const AnnulusSlab& a, const Vec3& p)
{
    if (std::fabs(p[2] - a.center[2]) > a.half_thickness)
        return false;
    const double dx = p[0] - a.center[0], dy = p[1] - a.center[1];
    const double r2 = dx * dx + dy * dy;
    return r2 >= a.inner_radius * a.inner_radius && r2 <= a.outer_radius * a.outer_radius;
}

inline bool contains(const Box& b, const Vec3& p)
{
    for (int a = 0; a < 3; ++a)
        if (std::fabs(p[a] - b.center[a]) > b.half_size[a])
            return false;
    return true;
}

/// Axis-aligned mm extent that bounds a primitive.
inline std::pair<Vec3, Vec3> bounds(const Primitive& prim)
{
    return std::visit(
        [](const auto& s) -> std::pair<Vec3, Vec3> {
            using T = std::decay_t<decltype(s)>;
            Vec3 half{};
            if constexpr (std::is_same_v<T, Sphere>) {
                half = {s.radius, s.radius, s.radius};
            } else if constexpr (std::is_same_v<T, Cylinder>) {
                half = {s.radius, s.radius, s.radius};
                half[s.axis] = s.half_length;
            } else if constexpr (std::is_same_v<T, AnnulusSlab>) {
                half = {s.outer_radius, s.outer_radius, s.half_thickness};
            } else {
                half = s.half_size;
            }
            return {Vec3{s.center[0] - half[0], s.center[1] - half[1], s.center[2] - half[2]},
                    Vec3{s.center[0] + half[0], s.center[1] + half[1], s.center[2] + half[2]}};
        },
        prim);
}

/// Coordinates within this distance of a lattice point are snapped onto it, so
/// lattice-preserving motions reproduce index permutations exactly.
constexpr double snap_tolerance = 1e-9;

inline double snap(double x) noexcept
{
    const double r = std::nearbyint(x);
    return std::fabs(x - r) < snap_tolerance ? r : x;
}

} // namespace synth_detail

/// Each voxel takes the fill of the last primitive containing its centre (index * spacing, mm).
inline CtVolume make_phantom(const PhantomSpec& spec)
{
    Grid grid(spec.dims, spec.spacing);
    CtVolume vol(grid, spec.background);
    for (const auto& prim : spec.primitives) {
        const auto [lo, hi] = synth_detail::bounds(prim);
        std::array<long, 3> a{}, b{};
        for (int ax = 0; ax < 3; ++ax) {
            a[ax] = std::max(0L, static_cast<long>(std::floor(lo[ax] / spec.spacing[ax])) - 1);
            b[ax] = std::min(static_cast<long>(spec.dims[ax]) - 1,
                             static_cast<long>(std::ceil(hi[ax] / spec.spacing[ax])) + 1);
        }
        for (long k = a[2]; k <= b[2]; ++k)
            for (long j = a[1]; j <= b[1]; ++j)
                for (long i = a[0]; i <= b[0]; ++i) {
                    const Vec3 p{static_cast<double>(i) * spec.spacing[0], static_cast<double>(j) * spec.spacing[1],
                                 static_cast<double>(k) * spec.spacing[2]};
                    std::visit(
                        [&](const auto& s) {
                            if (synth_detail::contains(s, p))
                                vol.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                                       static_cast<std::size_t>(k)) = s.hu;
                        },
                        prim);
                }
    }
    return vol;
}

/// Geometric centre of the grid in mm.
inline Vec3 grid_center(const Grid& g)
{
    return {0.5 * static_cast<double>(g.dims.nx - 1) * g.spacing[0],
            0.5 * static_cast<double>(g.dims.ny - 1) * g.spacing[1],
            0.5 * static_cast<double>(g.dims.nz - 1) * g.spacing[2]};
}

/// Trilinear sample at a continuous voxel coordinate; `fill` outside [0, n-1] on any axis.
inline float sample_trilinear(const CtVolume& vol, double x, double y, double z, float fill = air_hu)
{
    const Dims& d = vol.dims();
    const double c[3] = {synth_detail::snap(x), synth_detail::snap(y), synth_detail::snap(z)};
    std::size_t i0[3], i1[3];
    double f[3];
    for (int a = 0; a < 3; ++a) {
        const double n = static_cast<double>(d[a]);
        if (!(c[a] >= 0.0 && c[a] <= n - 1.0))
            return fill;
        const double fl = std::floor(c[a]);
        i0[a] = static_cast<std::size_t>(fl);
        f[a] = c[a] - fl;
        i1[a] = std::min(i0[a] + 1, d[a] - 1);
    }
    auto v = [&](std::size_t i, std::size_t j, std::size_t k) { return static_cast<double>(vol.at(i, j, k)); };
    auto lerp = [](double a, double b, double t) { return t == 0.0 ? a : a + t * (b - a); };
    const double c00 = lerp(v(i0[0], i0[1], i0[2]), v(i1[0], i0[1], i0[2]), f[0]);
    const double c10 = lerp(v(i0[0], i1[1], i0[2]), v(i1[0], i1[1], i0[2]), f[0]);
    const double c01 = lerp(v(i0[0], i0[1], i1[2]), v(i1[0], i0[1], i1[2]), f[0]);
    const double c11 = lerp(v(i0[0], i1[1], i1[2]), v(i1[0], i1[1], i1[2]), f[0]);
    const double c0 = lerp(c00, c10, f[1]);
    const double c1 = lerp(c01, c11, f[1]);
    return static_cast<float>(lerp(c0, c1, f[2]));
}

/// Backward warp: out(x) = in(source(x)) where `source` maps output mm to input mm.
template <typename SourceFn>
CtVolume warp(const CtVolume& vol, SourceFn&& source)
{
    const Grid& g = vol.grid();
    CtVolume out(g);
    for (std::size_t k = 0; k < g.dims.nz; ++k)
        for (std::size_t j = 0; j < g.dims.ny; ++j)
            for (std::size_t i = 0; i < g.dims.nx; ++i) {
                const Vec3 x{static_cast<double>(i) * g.spacing[0], static_cast<double>(j) * g.spacing[1],
                             static_cast<double>(k) * g.spacing[2]};
                const Vec3 s = source(x);
                out.at(i, j, k) =
                    sample_trilinear(vol, s[0] / g.spacing[0], s[1] / g.spacing[1], s[2] / g.spacing[2]);
            }
    return out;
}

inline Mat3 multiply(const Mat3& a, const Mat3& b)
{
    Mat3 m{};
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            for (int k = 0; k < 3; ++k)
                m[r][c] += a[r][k] * b[k][c];
    return m;
}

/// R(alpha, beta, gamma) = Rz(gamma) Ry(beta) Rx(alpha).
inline Mat3 euler_rotation(double alpha, double beta, double gamma)
{
    const double ca = std::cos(alpha), sa = std::sin(alpha);
    const double cb = std::cos(beta), sb = std::sin(beta);
    const double cg = std::cos(gamma), sg = std::sin(gamma);
    const Mat3 rx{{{1, 0, 0}, {0, ca, -sa}, {0, sa, ca}}};
    const Mat3 ry{{{cb, 0, sb}, {0, 1, 0}, {-sb, 0, cb}}};
    const Mat3 rz{{{cg, -sg, 0}, {sg, cg, 0}, {0, 0, 1}}};
    return multiply(rz, multiply(ry, rx));
}

/// Rotates content by `r` about `center` (mm): out(x) = in(R^T (x - c) + c).
inline CtVolume rotate_matrix(const CtVolume& vol, const Mat3& r, const Vec3& center)
{
    return warp(vol, [&](const Vec3& x) {
        const Vec3 d{x[0] - center[0], x[1] - center[1], x[2] - center[2]};
        Vec3 s{};
        for (int a = 0; a < 3; ++a)
            s[a] = r[0][a] * d[0] + r[1][a] * d[1] + r[2][a] * d[2] + center[a];
        return s;
    });
}

inline CtVolume rotate_rigid(const CtVolume& vol, double alpha, double beta, double gamma,
                             std::optional<Vec3> center = std::nullopt)
{
    if (alpha == 0.0 && beta == 0.0 && gamma == 0.0)
        return vol;
    return rotate_matrix(vol, euler_rotation(alpha, beta, gamma), center.value_or(grid_center(vol.grid())));
}

/// x' = c + s (x - c); out(x) = in(c + (x - c) / s).
inline CtVolume scale_uniform(const CtVolume& vol, double s, std::optional<Vec3> center = std::nullopt)
{
    if (!(s > 0.0) || !std::isfinite(s))
        throw ArgumentError("scale_uniform: scale factor must be positive");
    if (s == 1.0)
        return vol;
    const Vec3 c = center.value_or(grid_center(vol.grid()));
    return warp(vol, [&](const Vec3& x) {
        return Vec3{c[0] + (x[0] - c[0]) / s, c[1] + (x[1] - c[1]) / s, c[2] + (x[2] - c[2]) / s};
    });
}

/// out(x) = in(x - delta), delta in mm.
inline CtVolume translate(const CtVolume& vol, const Vec3& delta)
{
    if (delta[0] == 0.0 && delta[1] == 0.0 && delta[2] == 0.0)
        return vol;
    return warp(vol, [&](const Vec3& x) { return Vec3{x[0] - delta[0], x[1] - delta[1], x[2] - delta[2]}; });
}

/// Per-axis offset drawn uniformly from [-max_shift, max_shift] mm.
inline Vec3 sample_translation(double max_shift, std::uint64_t seed)
{
    if (!(max_shift >= 0.0))
        throw ArgumentError("random_translate: max_shift must be >= 0");
    Rng rng(seed, 0x7472616e73ULL);
    Vec3 d{};
    for (auto& v : d)
        v = max_shift == 0.0 ? 0.0 : rng.uniform(-max_shift, max_shift);
    return d;
}

inline CtVolume random_translate(const CtVolume& vol, double max_shift, std::uint64_t seed)
{
    return translate(vol, sample_translation(max_shift, seed));
}

/// Cubic B-spline control lattice. Control point a sits at (a - 1) * spacing mm on
/// each axis, so a lattice of n points covers [0, (n - 3) * spacing].
struct ElasticGrid
{
    std::array<std::size_t, 3> n{4, 4, 4};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::vector<Vec3> phi; ///< displacement (mm) per control point, x-fastest

    std::size_t index(std::size_t a, std::size_t b, std::size_t c) const noexcept
    {
        return a + n[0] * (b + n[1] * c);
    }

    void validate() const
    {
        for (int ax = 0; ax < 3; ++ax) {
            if (n[ax] < 4)
                throw ArgumentError("elastic control grid needs >= 4 points per axis");
            if (!(spacing[ax] > 0.0))
                throw ArgumentError("elastic control grid spacing must be positive");
        }
        if (phi.size() != n[0] * n[1] * n[2])
            throw ArgumentError("elastic control grid: displacement count does not match lattice size");
    }

    bool is_zero() const noexcept
    {
        for (const auto& p : phi)
            if (p[0] != 0.0 || p[1] != 0.0 || p[2] != 0.0)
                return false;
        return true;
    }
};

/// Zero-displacement lattice of `points` per axis whose support covers the whole grid.
inline ElasticGrid covering_elastic_grid(const Grid& g, std::size_t points)
{
    if (points < 4)
        throw ArgumentError("elastic control grid needs >= 4 points per axis");
    ElasticGrid e;
    e.n = {points, points, points};
    for (int ax = 0; ax < 3; ++ax) {
        const double extent = static_cast<double>(g.dims[ax] - 1) * g.spacing[ax];
        e.spacing[ax] = extent > 0.0 ? extent / static_cast<double>(points - 3) : 1.0;
    }
    e.phi.assign(points * points * points, Vec3{0.0, 0.0, 0.0});
    return e;
}

/// Lattice with independent N(0, magnitude^2) displacements per control point and axis.
inline ElasticGrid random_elastic_grid(const Grid& g, std::size_t points, double magnitude, std::uint64_t seed)
{
    ElasticGrid e = covering_elastic_grid(g, points);
    Rng rng(seed, 0x656c6173ULL);
    for (auto& p : e.phi)
        for (auto& c : p)
            c = magnitude * rng.normal();
    return e;
}

inline std::array<double, 4> cubic_bspline_weights(double u) noexcept
{
    const double u2 = u * u, u3 = u2 * u;
    const double om = 1.0 - u;
    return {om * om * om / 6.0, (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0, (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
            u3 / 6.0};
}

/// u(x) = sum_ijk Phi_ijk B_i(x) B_j(y) B_k(z). Control points outside the lattice contribute nothing.
inline Vec3 bspline_displacement(const ElasticGrid& e, const Vec3& x)
{
    long base[3];
    std::array<double, 4> w[3];
    for (int ax = 0; ax < 3; ++ax) {
        const double s = x[ax] / e.spacing[ax];
        const double l = std::floor(s);
        base[ax] = static_cast<long>(l);
        w[ax] = cubic_bspline_weights(s - l);
    }
    Vec3 u{0.0, 0.0, 0.0};
    for (int c = 0; c < 4; ++c) {
        const long kc = base[2] + c;
        if (kc < 0 || kc >= static_cast<long>(e.n[2]))
            continue;
        for (int b = 0; b < 4; ++b) {
            const long kb = base[1] + b;
            if (kb < 0 || kb >= static_cast<long>(e.n[1]))
                continue;
            for (int a = 0; a < 4; ++a) {
                const long ka = base[0] + a;
                if (ka < 0 || ka >= static_cast<long>(e.n[0]))
                    continue;
                const double wt = w[0][a] * w[1][b] * w[2][c];
                const Vec3& p = e.phi[e.index(static_cast<std::size_t>(ka), static_cast<std::size_t>(kb),
                                              static_cast<std::size_t>(kc))];
                u[0] += wt * p[0];
                u[1] += wt * p[1];
                u[2] += wt * p[2];
            }
        }
    }
    return u;
}

/// out(x) = in(x - u(x)).
inline CtVolume elastic_deform(const CtVolume& vol, const ElasticGrid& e)
{
    e.validate();
    if (e.is_zero())
        return vol;
    return warp(vol, [&](const Vec3& x) {
        const Vec3 u = bspline_displacement(e, x);
        return Vec3{x[0] - u[0], x[1] - u[1], x[2] - u[2]};
    });
}

/// I'(x) = I(x) + eta(x), eta ~ N(0, sigma^2), one counter-indexed draw per voxel.
inline CtVolume add_noise(const CtVolume& vol, double sigma, std::uint64_t seed)
{
    if (!(sigma >= 0.0))
        throw ArgumentError("add_noise: sigma must be >= 0");
    if (sigma == 0.0)
        return vol;
    CtVolume out = vol;
    const Rng rng(seed, 0x6e6f697365ULL);
    for (std::size_t v = 0; v < out.size(); ++v)
        out[v] = static_cast<float>(static_cast<double>(out[v]) + sigma * rng.normal_at(v));
    return out;
}

struct AugmentSpec
{
    double alpha = 0.0, beta = 0.0, gamma = 0.0; ///< radians
    Vec3 translation{0.0, 0.0, 0.0};             ///< mm
    double scale = 1.0;
    std::optional<Vec3> center; ///< mm; grid centre when unset
    std::optional<ElasticGrid> elastic;
    double noise_sigma = 0.0; ///< HU
    std::uint64_t seed = 0;

    void validate() const
    {
        if (!(scale > 0.0))
            throw ArgumentError("augment: scale must be positive");
        if (elastic)
            elastic->validate();
        if (!(noise_sigma >= 0.0))
            throw ArgumentError("augment: noise sigma must be >= 0");
    }
};

/// Fixed order: rotation, scaling, elastic, translation, noise.
inline CtVolume compose_augment(const CtVolume& vol, const AugmentSpec& spec)
{
    spec.validate();
    CtVolume out = rotate_rigid(vol, spec.alpha, spec.beta, spec.gamma, spec.center);
    out = scale_uniform(out, spec.scale, spec.center);
    if (spec.elastic)
        out = elastic_deform(out, *spec.elastic);
    out = translate(out, spec.translation);
    return add_noise(out, spec.noise_sigma, spec.seed);
}

} // namespace exactct

#endif // EXACTCT_SYNTH_HPP
