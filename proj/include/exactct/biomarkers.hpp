#ifndef EXACTCT_BIOMARKERS_HPP
#define EXACTCT_BIOMARKERS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "gmm.hpp"
#include "morphology.hpp"
#include "vesselness.hpp"
#include "volume.hpp"

namespace exactct {

// ---------------------------------------------------------------------------
// Regions

/// Inclusive slice interval.
struct AxialRange
{
    std::size_t first = 0;
    std::size_t last = 0;

    std::size_t count() const noexcept { return last - first + 1; }
    bool contains(std::size_t k) const noexcept { return k >= first && k <= last; }
};

inline AxialRange whole_range(const Grid& g) { return {0, g.dims.nz - 1}; }

/// Slices holding at least one voxel of any of the masks.
inline std::optional<AxialRange> axial_extent(std::span<const BinaryMask* const> masks)
{
    std::optional<AxialRange> r;
    for (const BinaryMask* m : masks) {
        if (!m)
            continue;
        const std::size_t plane = m->dims().nx * m->dims().ny;
        for (std::size_t k = 0; k < m->dims().nz; ++k) {
            const auto first = m->storage().begin() + static_cast<std::ptrdiff_t>(k * plane);
            if (std::any_of(first, first + static_cast<std::ptrdiff_t>(plane), [](std::uint8_t v) { return v != 0; })) {
                if (!r)
                    r = AxialRange{k, k};
                r->first = std::min(r->first, k);
                r->last = std::max(r->last, k);
            }
        }
    }
    return r;
}

inline BinaryMask body_mask_from_hu(const CtVolume& vol, float threshold = -500.0f)
{
    BinaryMask m(vol.grid(), 0);
    for (std::size_t v = 0; v < vol.size(); ++v)
        m[v] = vol[v] >= threshold ? 1 : 0;
    return m;
}

struct BodyGeometry
{
    double centroid_x = 0.0; ///< voxel index units
    double centroid_y = 0.0;
    std::size_t x0 = 0, x1 = 0, y0 = 0, y1 = 0; ///< inclusive bounding box
};

inline BodyGeometry body_geometry(const BinaryMask& body)
{
    const Dims& d = body.dims();
    long double sx = 0, sy = 0;
    std::size_t n = 0;
    BodyGeometry g{0.0, 0.0, d.nx, 0, d.ny, 0};
    for (std::size_t k = 0; k < d.nz; ++k)
        for (std::size_t j = 0; j < d.ny; ++j)
            for (std::size_t i = 0; i < d.nx; ++i)
                if (body.at(i, j, k)) {
                    sx += i;
                    sy += j;
                    ++n;
                    g.x0 = std::min(g.x0, i);
                    g.x1 = std::max(g.x1, i);
                    g.y0 = std::min(g.y0, j);
                    g.y1 = std::max(g.y1, j);
                }
    if (n == 0)
        throw ArgumentError("body mask is empty");
    g.centroid_x = static_cast<double>(sx / n);
    g.centroid_y = static_cast<double>(sy / n);
    return g;
}

enum class LateralRule
{
    all,
    left_of_midline,
    right_of_midline,
    central_band,
};

struct RegionSpec
{
    std::string name = "custom";
    AxialRange axial;
    LateralRule lateral = LateralRule::all;
    double midline = 0.0; ///< x voxel coordinate of the sagittal split
    int left_sign = 1;    ///< +1 when image-left lies at larger x index
    std::size_t band_x0 = 0, band_x1 = 0, band_y0 = 0, band_y1 = 0; ///< inclusive central band

    void validate(const Grid& g) const
    {
        if (axial.first > axial.last || axial.last >= g.dims.nz)
            throw ArgumentError("region " + name + ": axial range empty or outside the volume");
    }

    bool contains(std::size_t i, std::size_t j, std::size_t k) const noexcept
    {
        if (!axial.contains(k))
            return false;
        const double side = (static_cast<double>(i) - midline) * left_sign;
        switch (lateral) {
        case LateralRule::all:
            return true;
        case LateralRule::left_of_midline:
            return side > 0.0;
        case LateralRule::right_of_midline:
            return side < 0.0;
        case LateralRule::central_band:
            return i >= band_x0 && i <= band_x1 && j >= band_y0 && j <= band_y1;
        }
        return false;
    }
};

/// Radiological convention: image left is the patient's right, which is +x in
/// the NIfTI (RAS) world frame.
inline int image_left_sign(const Grid& g) { return g.affine[0] < 0.0 ? -1 : 1; }

struct Vertebrae
{
    std::optional<BinaryMask> l3, l4, l5, s1;
};

inline AxialRange vertebra_range(const Grid& g, std::initializer_list<const std::optional<BinaryMask>*> masks)
{
    std::vector<const BinaryMask*> ptrs;
    for (const auto* m : masks)
        if (m->has_value()) {
            require_compatible(g, (*m)->grid(), "vertebra mask");
            ptrs.push_back(&**m);
        }
    if (ptrs.empty())
        return whole_range(g);
    const auto r = axial_extent(ptrs);
    if (!r)
        throw ArgumentError("vertebra masks are empty");
    return *r;
}

/// Named regions: L3S1_left, L3S1_right, anterior_central, L4L5.
inline RegionSpec make_region(const std::string& name, const Grid& g, const BodyGeometry& body, const Vertebrae& vb)
{
    RegionSpec r;
    r.name = name;
    r.midline = body.centroid_x;
    r.left_sign = image_left_sign(g);
    const AxialRange l3s1 = vertebra_range(g, {&vb.l3, &vb.l4, &vb.l5, &vb.s1});
    if (name == "L3S1_left") {
        r.axial = l3s1;
        r.lateral = LateralRule::left_of_midline;
    } else if (name == "L3S1_right") {
        r.axial = l3s1;
        r.lateral = LateralRule::right_of_midline;
    } else if (name == "anterior_central") {
        r.axial = l3s1;
        r.lateral = LateralRule::central_band;
        const std::size_t w = body.x1 - body.x0 + 1, h = body.y1 - body.y0 + 1;
        r.band_x0 = body.x0 + w / 3;
        r.band_x1 = body.x0 + (2 * w) / 3 - 1;
        r.band_y0 = body.y0 + h / 3;
        r.band_y1 = body.y0 + (2 * h) / 3 - 1;
        if (w < 3 || h < 3)
            throw ArgumentError("region anterior_central: body too small for a central band");
    } else if (name == "L4L5") {
        r.axial = vertebra_range(g, {&vb.l4, &vb.l5});
    } else {
        throw ArgumentError("unknown region name: " + name);
    }
    r.validate(g);
    return r;
}

struct RegionSum
{
    double sum = 0.0;
    double ratio = 0.0;
    std::size_t voxels = 0;
};

inline RegionSum region_aggregate(const ProbabilityVolume& p, const RegionSpec& region)
{
    region.validate(p.grid());
    const Dims& d = p.dims();
    long double s = 0;
    std::size_t n = 0;
    for (std::size_t k = region.axial.first; k <= region.axial.last; ++k)
        for (std::size_t j = 0; j < d.ny; ++j)
            for (std::size_t i = 0; i < d.nx; ++i)
                if (region.contains(i, j, k)) {
                    s += p.at(i, j, k);
                    ++n;
                }
    if (n == 0)
        throw ArgumentError("region " + region.name + " contains no voxels");
    return {static_cast<double>(s), static_cast<double>(s / n), n};
}

// ---------------------------------------------------------------------------
// Comb sign

struct CombParams
{
    VesselParams vessel;
    RefineSchedule refine = RefineSchedule::constant(0.5, 3);
    DistanceParams distance;
    WallOptions wall;
};

struct CombMaps
{
    ProbabilityVolume vessel;    ///< refined vessel probability
    ProbabilityVolume wall;      ///< enhanced-wall posterior
    ProbabilityVolume comb;      ///< final map
};

inline CombMaps comb_sign_maps(const CtVolume& vol, const BinaryMask& intestine, const CombParams& params,
                               std::uint64_t seed)
{
    require_compatible(vol.grid(), intestine.grid(), "comb_sign_map");
    if (count_set(intestine) == 0)
        throw ArgumentError("comb_sign_map: intestine mask is empty");
    CombMaps m;
    m.vessel = refine_probability(frangi_response(vol, params.vessel), params.refine);
    m.wall = wall_posterior(vol, intestine, seed, params.wall);
    m.comb = wall_distance_weight(m.vessel, m.wall, intestine, params.distance);
    return m;
}

inline ProbabilityVolume comb_sign_map(const CtVolume& vol, const BinaryMask& intestine, const CombParams& params,
                                       std::uint64_t seed)
{
    return comb_sign_maps(vol, intestine, params, seed).comb;
}

// ---------------------------------------------------------------------------
// Fat ratio

inline BinaryMask fat_mask(const CtVolume& vol)
{
    BinaryMask m = threshold_range(vol, -500.0f, -50.0f);
    const auto cube = StructuringElement::cube(1);
    for (int cycle = 0; cycle < 2; ++cycle)
        m = dilate(erode(m, cube), cube);
    return m;
}

struct RayProfile
{
    double theta = 0.0;
    double d_out = 0.0; ///< px; 0 when the ray meets no fat band
    double d_in = 0.0;
};

struct PolarScan
{
    double a_subcut = 0.0; ///< px^2, sum of 1/2 (d_out^2 - d_in^2) dtheta
    long ci = 0, cj = 0;   ///< centre pixel
    std::vector<RayProfile> rays;

    /// Ray whose direction is nearest to the offset (di, dj).
    const RayProfile& nearest_ray(double di, double dj) const
    {
        const double dtheta = 2.0 * std::numbers::pi / static_cast<double>(rays.size());
        double a = std::atan2(dj, di);
        if (a < 0.0)
            a += 2.0 * std::numbers::pi;
        const auto t = static_cast<std::size_t>(std::lround(a / dtheta)) % rays.size();
        return rays[t];
    }
};

namespace fat_detail {

/// Pixels visited by a Bresenham line from (x0, y0) to (x1, y1), clipped to the slice.
inline std::vector<std::array<long, 2>> bresenham(const SliceMask& s, long x0, long y0, long x1, long y1)
{
    std::vector<std::array<long, 2>> out;
    const long dx = std::labs(x1 - x0), dy = -std::labs(y1 - y0);
    const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    long err = dx + dy, x = x0, y = y0;
    while (s.inside(x, y)) {
        out.push_back({x, y});
        if (x == x1 && y == y1)
            break;
        const long e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y += sy;
        }
    }
    return out;
}

} // namespace fat_detail

/// Outer fat band along g rays cast from the centre. Band edges sit halfway between
/// the last band pixel and its neighbour on the ray.
inline PolarScan polar_subcutaneous_area(const SliceMask& fat, double cx, double cy, int g = 720)
{
    if (g < 8)
        throw ArgumentError("polar_subcutaneous_area: need at least 8 rays");
    PolarScan scan;
    scan.ci = std::lround(cx);
    scan.cj = std::lround(cy);
    if (!std::isfinite(cx) || !std::isfinite(cy) || !fat.inside(scan.ci, scan.cj))
        throw ArgumentError("polar_subcutaneous_area: centre outside the slice");

    const double dtheta = 2.0 * std::numbers::pi / g;
    const double reach = static_cast<double>(fat.nx + fat.ny);
    long double area = 0;
    scan.rays.resize(static_cast<std::size_t>(g));
    for (int t = 0; t < g; ++t) {
        RayProfile& ray = scan.rays[static_cast<std::size_t>(t)];
        ray.theta = t * dtheta;
        const long ex = scan.ci + std::lround(reach * std::cos(ray.theta));
        const long ey = scan.cj + std::lround(reach * std::sin(ray.theta));
        const auto px = fat_detail::bresenham(fat, scan.ci, scan.cj, ex, ey);
        const std::size_t n = px.size();
        std::vector<double> dist(n);
        for (std::size_t p = 0; p < n; ++p)
            dist[p] = std::hypot(static_cast<double>(px[p][0] - scan.ci), static_cast<double>(px[p][1] - scan.cj));
        auto is_fat = [&](std::size_t p) {
            return fat.at(static_cast<std::size_t>(px[p][0]), static_cast<std::size_t>(px[p][1])) != 0;
        };

        // Scan from outside in for the first run of at least two fat pixels.
        std::size_t p = n;
        bool found = false;
        std::size_t outer = 0, inner = 0;
        while (p > 0) {
            --p;
            if (!is_fat(p))
                continue;
            std::size_t q = p;
            while (q > 0 && is_fat(q - 1))
                --q;
            if (p - q + 1 >= 2) {
                outer = p;
                inner = q;
                found = true;
                break;
            }
            p = q;
        }
        if (!found)
            continue;
        if (outer + 1 < n)
            ray.d_out = 0.5 * (dist[outer] + dist[outer + 1]);
        else
            ray.d_out = dist[outer] + 0.5 * (outer > 0 ? dist[outer] - dist[outer - 1] : 1.0);
        ray.d_in = inner == 0 ? 0.0 : 0.5 * (dist[inner] + dist[inner - 1]);
        area += 0.5L * (static_cast<long double>(ray.d_out) * ray.d_out -
                        static_cast<long double>(ray.d_in) * ray.d_in) * dtheta;
    }
    scan.a_subcut = static_cast<double>(area);
    return scan;
}

/// Fat pixels lying inside the polar band of their nearest ray.
inline std::size_t band_pixel_count(const SliceMask& fat, const PolarScan& scan)
{
    std::size_t n = 0;
    for (std::size_t j = 0; j < fat.ny; ++j)
        for (std::size_t i = 0; i < fat.nx; ++i) {
            if (!fat.at(i, j))
                continue;
            const double di = static_cast<double>(static_cast<long>(i) - scan.ci);
            const double dj = static_cast<double>(static_cast<long>(j) - scan.cj);
            const double r = std::hypot(di, dj);
            const RayProfile& ray = scan.nearest_ray(di, dj);
            if (ray.d_out > 0.0 && r >= ray.d_in && r <= ray.d_out)
                ++n;
        }
    return n;
}

struct SliceFat
{
    std::size_t k = 0;
    double a_total = 0.0;  ///< fat pixels in the slice
    double a_subcut = 0.0; ///< fat pixels inside the subcutaneous band
    double a_polar = 0.0;  ///< polar integral of the band
    double ratio = 0.0;
    bool degenerate = false; ///< no subcutaneous band; left out of the aggregate
    PolarScan scan;
};

struct FatResult
{
    std::vector<SliceFat> slices;
    double fat_ratio = 0.0;
    double ratio_min = 0.0;
    double ratio_max = 0.0;
};

struct FatParams
{
    int rays = 720;
};

inline FatResult fat_ratio_from_mask(const BinaryMask& fat, const BinaryMask& body, const AxialRange& range,
                                     const FatParams& params = {})
{
    require_compatible(fat.grid(), body.grid(), "fat_ratio_volume");
    if (range.first > range.last || range.last >= fat.dims().nz)
        throw ArgumentError("fat_ratio_volume: slice range empty or outside the volume");
    FatResult res;
    long double total = 0, subcut = 0;
    bool any = false;
    for (std::size_t k = range.first; k <= range.last; ++k) {
        SliceFat sf;
        sf.k = k;
        const SliceMask fs = axial_slice(fat, k);
        const SliceMask bs = axial_slice(body, k);
        long double sx = 0, sy = 0;
        std::size_t nb = 0;
        for (std::size_t j = 0; j < bs.ny; ++j)
            for (std::size_t i = 0; i < bs.nx; ++i) {
                if (bs.at(i, j)) {
                    sx += i;
                    sy += j;
                    ++nb;
                }
                if (fs.at(i, j))
                    sf.a_total += 1.0;
            }
        if (nb > 0) {
            sf.scan = polar_subcutaneous_area(fs, static_cast<double>(sx / nb), static_cast<double>(sy / nb),
                                              params.rays);
            sf.a_polar = sf.scan.a_subcut;
            sf.a_subcut = static_cast<double>(band_pixel_count(fs, sf.scan));
        }
        sf.degenerate = sf.a_subcut == 0.0;
        if (!sf.degenerate) {
            sf.ratio = sf.a_total / sf.a_subcut - 1.0;
            total += sf.a_total;
            subcut += sf.a_subcut;
            res.ratio_min = any ? std::min(res.ratio_min, sf.ratio) : sf.ratio;
            res.ratio_max = any ? std::max(res.ratio_max, sf.ratio) : sf.ratio;
            any = true;
        }
        res.slices.push_back(std::move(sf));
    }
    if (!any)
        throw ArgumentError("fat_ratio_volume: no slice in range has a subcutaneous fat band");
    res.fat_ratio = static_cast<double>(total / subcut - 1.0L);
    return res;
}

/// Fat ratio over the slice range; the body mask defaults to HU >= -500.
inline FatResult fat_ratio_volume(const CtVolume& vol, const AxialRange& range, const FatParams& params = {},
                                  const BinaryMask* body = nullptr)
{
    const BinaryMask derived = body ? BinaryMask{} : body_mask_from_hu(vol);
    return fat_ratio_from_mask(fat_mask(vol), body ? *body : derived, range, params);
}

// ---------------------------------------------------------------------------
// Calcified and necrotic nodes

struct CalcifiedParams
{
    float h_calc = 0.0f;
    float t_calc = 130.0f;
    int dilation_radius = 2;
    std::optional<AxialRange> abdominal_range; ///< whole volume when unset
    int edge_margin = 2;

    void validate() const
    {
        if (dilation_radius < 0 || edge_margin < 0)
            throw ArgumentError("calcified params: radii must be non-negative");
        if (!(t_calc >= 100.0f))
            throw ArgumentError("calcified params: T_calc must be at least 100 HU");
    }
};

struct CalcifiedResult
{
    BinaryMask mask;
    BinaryMask excluded; ///< the dilated organ mask
    double volume_mm3 = 0.0;
    std::vector<Component> components;
};

inline BinaryMask merged_organs(const Grid& g, std::span<const BinaryMask> organs, int radius)
{
    for (const auto& m : organs)
        require_compatible(g, m.grid(), "organ mask");
    BinaryMask merged = organs.empty() ? BinaryMask(g, 0) : union_masks(organs);
    return radius > 0 ? dilate(merged, StructuringElement::cube(radius)) : merged;
}

inline CalcifiedResult detect_calcified(const CtVolume& vol, std::span<const BinaryMask> organs,
                                        const CalcifiedParams& params = {})
{
    params.validate();
    CalcifiedResult res;
    res.excluded = merged_organs(vol.grid(), organs, params.dilation_radius);
    const Dims& d = vol.dims();
    const AxialRange range = params.abdominal_range.value_or(whole_range(vol.grid()));
    if (range.first > range.last || range.last >= d.nz)
        throw ArgumentError("calcified params: abdominal range outside the volume");
    const auto m = static_cast<std::size_t>(params.edge_margin);
    auto interior = [m](std::size_t i, std::size_t n) { return i >= m && i + m < n; };

    res.mask = BinaryMask(vol.grid(), 0);
    for (std::size_t k = range.first; k <= range.last; ++k) {
        if (!interior(k, d.nz))
            continue;
        for (std::size_t j = m; j + m < d.ny; ++j)
            for (std::size_t i = m; i + m < d.nx; ++i) {
                const std::size_t v = vol.grid().index(i, j, k);
                const float hu = res.excluded[v] ? params.h_calc : vol[v];
                res.mask[v] = hu >= params.t_calc ? 1 : 0;
            }
    }
    res.components = connected_components(res.mask, 26);
    res.volume_mm3 = static_cast<double>(count_set(res.mask)) * vol.grid().voxel_volume();
    return res;
}

struct NecroticParams
{
    float t_low = 0.0f;
    float t_high = 30.0f;
    int roi_dilation = 2;   ///< cube radius applied to the merged organs
    int erosion_iters = 2;  ///< 6-neighbourhood steps
    int dilation_radius = 2;

    void validate() const
    {
        if (!(t_low <= t_high))
            throw ArgumentError("necrotic params: T_low must not exceed T_high");
        if (roi_dilation < 0 || erosion_iters < 0 || dilation_radius < 0)
            throw ArgumentError("necrotic params: radii must be non-negative");
    }
};

struct NecroticResult
{
    BinaryMask mask;
    BinaryMask roi;
    double volume_mm3 = 0.0;
};

inline NecroticResult detect_necrotic(const CtVolume& vol, std::span<const BinaryMask> organs,
                                      const BinaryMask& visceral_fat, const NecroticParams& params = {})
{
    params.validate();
    require_compatible(vol.grid(), visceral_fat.grid(), "detect_necrotic");
    NecroticResult res;
    res.roi = subtract_mask(merged_organs(vol.grid(), organs, params.roi_dilation), visceral_fat);
    BinaryMask cand(vol.grid(), 0);
    for (std::size_t v = 0; v < vol.size(); ++v)
        cand[v] = res.roi[v] && vol[v] >= params.t_low && vol[v] <= params.t_high ? 1 : 0;
    if (params.erosion_iters > 0)
        cand = erode(cand, StructuringElement::cross(1), params.erosion_iters);
    if (params.dilation_radius > 0)
        cand = dilate(cand, StructuringElement::cross(params.dilation_radius));
    res.mask = std::move(cand);
    res.volume_mm3 = static_cast<double>(count_set(res.mask)) * vol.grid().voxel_volume();
    return res;
}

// ---------------------------------------------------------------------------
// PTB and the feature vector

inline double ptb_probability(double z)
{
    if (!std::isfinite(z))
        throw NumericError("ptb_probability: logit must be finite");
    if (z >= 0.0)
        return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

struct FeatureVector
{
    static constexpr std::size_t size = 12;
    static constexpr std::array<const char*, size> names{
        "comb_left_sum",  "comb_left_ratio", "comb_right_sum", "comb_right_ratio",
        "comb_center_sum", "comb_center_ratio", "fat_ratio",   "fat_ratio_min",
        "fat_ratio_max",  "ptb_prob",        "calcified_volume", "necrotic_volume",
    };

    std::string case_id;
    std::array<double, size> values{};

    double& operator[](std::string_view name);
    double operator[](std::string_view name) const;

    friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

inline std::size_t feature_index(std::string_view name)
{
    for (std::size_t i = 0; i < FeatureVector::size; ++i)
        if (name == FeatureVector::names[i])
            return i;
    throw ArgumentError("unknown feature: " + std::string(name));
}

inline double& FeatureVector::operator[](std::string_view name) { return values[feature_index(name)]; }
inline double FeatureVector::operator[](std::string_view name) const { return values[feature_index(name)]; }

struct CombAggregates
{
    RegionSum left, right, center;
};

inline FeatureVector assemble_features(const std::string& case_id, const CombAggregates& comb, const FatResult& fat,
                                       double ptb_prob, double calcified_mm3, double necrotic_mm3)
{
    FeatureVector f;
    f.case_id = case_id;
    f.values = {comb.left.sum,   comb.left.ratio, comb.right.sum, comb.right.ratio,
                comb.center.sum, comb.center.ratio, fat.fat_ratio, fat.ratio_min,
                fat.ratio_max,   ptb_prob,          calcified_mm3, necrotic_mm3};
    for (std::size_t i = 0; i < FeatureVector::size; ++i)
        if (!std::isfinite(f.values[i]))
            throw NumericError(std::string("assemble_features: non-finite ") + FeatureVector::names[i]);
    if (!(ptb_prob >= 0.0 && ptb_prob <= 1.0))
        throw ArgumentError("assemble_features: ptb_prob outside [0, 1]");
    if (calcified_mm3 < 0.0 || necrotic_mm3 < 0.0)
        throw ArgumentError("assemble_features: negative volume");
    return f;
}

} // namespace exactct

#endif // EXACTCT_BIOMARKERS_HPP
