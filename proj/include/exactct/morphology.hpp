#ifndef EXACTCT_MORPHOLOGY_HPP
#define EXACTCT_MORPHOLOGY_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "error.hpp"
#include "volume.hpp"

namespace exactct {

enum class ElementShape
{
    cube,  ///< Chebyshev ball: (2r+1)^3 block
    cross, ///< L1 ball ("diamond"); radius 1 is the 6-neighbourhood
};

struct StructuringElement
{
    ElementShape shape = ElementShape::cube;
    int radius = 1;

    static StructuringElement cube(int r) { return {ElementShape::cube, r}; }
    static StructuringElement cross(int r) { return {ElementShape::cross, r}; }

    void validate() const
    {
        if (radius < 1)
            throw ArgumentError("structuring element radius must be >= 1");
    }
};

/// mask(x) = 1 iff lo <= HU(x) <= hi.
inline BinaryMask threshold_range(const CtVolume& vol, float lo, float hi)
{
    if (!(lo <= hi))
        throw ArgumentError("threshold_range: lo must not exceed hi");
    BinaryMask m(vol.grid());
    for (std::size_t v = 0; v < vol.size(); ++v)
        m[v] = (vol[v] >= lo && vol[v] <= hi) ? 1 : 0;
    return m;
}

namespace morph_detail {

// One pass of a 1D running max (dilate) or min (erode) along `axis` with half-width r.
// Out-of-grid samples count as background for both operations.
inline void line_pass(std::vector<std::uint8_t>& data, const Dims& d, int axis, int r, bool dilate)
{
    const std::size_t n = d[axis];
    const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? d.nx : d.nx * d.ny);
    const std::size_t lines = d.count() / n;
    std::vector<std::uint8_t> line(n);
    std::vector<std::size_t> prefix(n + 1);
    for (std::size_t l = 0; l < lines; ++l) {
        std::size_t base;
        if (axis == 0)
            base = l * d.nx;
        else if (axis == 1)
            base = (l % d.nx) + (l / d.nx) * d.nx * d.ny;
        else
            base = l;
        for (std::size_t t = 0; t < n; ++t)
            line[t] = data[base + t * stride];
        prefix[0] = 0;
        for (std::size_t t = 0; t < n; ++t)
            prefix[t + 1] = prefix[t] + (line[t] ? 1 : 0);
        for (std::size_t t = 0; t < n; ++t) {
            const long lo = static_cast<long>(t) - r;
            const long hi = static_cast<long>(t) + r;
            const std::size_t a = static_cast<std::size_t>(std::max(0L, lo));
            const std::size_t b = static_cast<std::size_t>(std::min<long>(static_cast<long>(n) - 1, hi));
            const std::size_t set = prefix[b + 1] - prefix[a];
            std::uint8_t out;
            if (dilate)
                out = set > 0;
            else
                out = (lo >= 0 && hi < static_cast<long>(n) && set == static_cast<std::size_t>(2 * r + 1));
            data[base + t * stride] = out;
        }
    }
}

inline void cube_step(std::vector<std::uint8_t>& data, const Dims& d, int r, bool dilate)
{
    for (int axis = 0; axis < 3; ++axis)
        line_pass(data, d, axis, r, dilate);
}

// 6-neighbourhood step (radius-1 cross).
inline void cross_step(std::vector<std::uint8_t>& data, const Dims& d, bool dilate)
{
    std::vector<std::uint8_t> src = data;
    const long nx = static_cast<long>(d.nx), ny = static_cast<long>(d.ny), nz = static_cast<long>(d.nz);
    auto get = [&](long i, long j, long k) -> std::uint8_t {
        if (i < 0 || j < 0 || k < 0 || i >= nx || j >= ny || k >= nz)
            return 0;
        return src[static_cast<std::size_t>(i + nx * (j + ny * k))];
    };
    for (long k = 0; k < nz; ++k)
        for (long j = 0; j < ny; ++j)
            for (long i = 0; i < nx; ++i) {
                const std::uint8_t c = get(i, j, k);
                const std::uint8_t nb[6] = {get(i - 1, j, k), get(i + 1, j, k), get(i, j - 1, k),
                                            get(i, j + 1, k), get(i, j, k - 1), get(i, j, k + 1)};
                std::uint8_t out;
                if (dilate) {
                    out = c;
                    for (auto x : nb)
                        out |= x;
                } else {
                    out = c;
                    for (auto x : nb)
                        out &= x;
                }
                data[static_cast<std::size_t>(i + nx * (j + ny * k))] = out ? 1 : 0;
            }
}

inline void apply(BinaryMask& m, const StructuringElement& e, int iters, bool dilate)
{
    if (iters < 0)
        throw ArgumentError("morphology: iteration count must be >= 0");
    if (iters == 0)
        return;
    e.validate();
    auto& data = m.storage();
    for (auto& v : data)
        v = v ? 1 : 0;
    for (int it = 0; it < iters; ++it) {
        if (e.shape == ElementShape::cube)
            cube_step(data, m.dims(), e.radius, dilate);
        else
            for (int s = 0; s < e.radius; ++s)
                cross_step(data, m.dims(), dilate);
    }
}

} // namespace morph_detail

/// Minkowski erosion, `iters` times. Voxels outside the grid are background.
inline BinaryMask erode(const BinaryMask& mask, const StructuringElement& elem, int iters = 1)
{
    BinaryMask out = mask;
    morph_detail::apply(out, elem, iters, false);
    return out;
}

/// Minkowski dilation, `iters` times, clipped at the grid boundary.
inline BinaryMask dilate(const BinaryMask& mask, const StructuringElement& elem, int iters = 1)
{
    BinaryMask out = mask;
    morph_detail::apply(out, elem, iters, true);
    return out;
}

/// Voxelwise OR; all masks must share the grid of the first one.
inline BinaryMask union_masks(std::span<const BinaryMask> masks)
{
    if (masks.empty())
        throw ArgumentError("union_masks: at least one mask is required");
    BinaryMask out(masks.front().grid());
    for (const auto& m : masks) {
        require_compatible(out.grid(), m.grid(), "union_masks");
        for (std::size_t v = 0; v < m.size(); ++v)
            out[v] |= (m[v] != 0);
    }
    return out;
}

inline BinaryMask union_masks(std::initializer_list<BinaryMask> masks)
{
    return union_masks(std::span<const BinaryMask>(masks.begin(), masks.size()));
}

/// a AND NOT b
inline BinaryMask subtract_mask(const BinaryMask& a, const BinaryMask& b)
{
    require_compatible(a.grid(), b.grid(), "subtract_mask");
    BinaryMask out(a.grid());
    for (std::size_t v = 0; v < a.size(); ++v)
        out[v] = (a[v] && !b[v]) ? 1 : 0;
    return out;
}

struct BoundingBox
{
    std::array<std::size_t, 3> lo{};
    std::array<std::size_t, 3> hi{}; ///< inclusive
    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Component
{
    std::uint32_t label = 0; ///< 1-based, in raster order of each component's first voxel
    std::size_t voxel_count = 0;
    BoundingBox bbox;
};

struct Labeling
{
    Volume<std::uint32_t, MaskTag> labels; ///< 0 = background
    std::vector<Component> components;
};

namespace morph_detail {

struct UnionFind
{
    std::vector<std::uint32_t> parent;

    std::uint32_t make()
    {
        parent.push_back(static_cast<std::uint32_t>(parent.size()));
        return parent.back();
    }
    std::uint32_t find(std::uint32_t x)
    {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(std::uint32_t a, std::uint32_t b)
    {
        a = find(a);
        b = find(b);
        if (a == b)
            return;
        if (a < b)
            parent[b] = a;
        else
            parent[a] = b;
    }
};

} // namespace morph_detail

/// Two-pass raster labelling with union-find. connectivity is 6 or 26.
inline Labeling label_components(const BinaryMask& mask, int connectivity = 26)
{
    if (connectivity != 6 && connectivity != 26)
        throw ArgumentError("connected_components: connectivity must be 6 or 26");
    const Dims d = mask.dims();
    const long nx = static_cast<long>(d.nx), ny = static_cast<long>(d.ny), nz = static_cast<long>(d.nz);

    // Already-visited neighbours in raster order.
    std::vector<std::array<int, 3>> back;
    for (int dk = -1; dk <= 0; ++dk)
        for (int dj = -1; dj <= 1; ++dj)
            for (int di = -1; di <= 1; ++di) {
                if (dk == 0 && (dj > 0 || (dj == 0 && di >= 0)))
                    continue;
                const int manhattan = std::abs(di) + std::abs(dj) + std::abs(dk);
                if (connectivity == 6 && manhattan != 1)
                    continue;
                back.push_back({di, dj, dk});
            }

    Volume<std::uint32_t, MaskTag> provisional(mask.grid(), 0u);
    morph_detail::UnionFind uf;
    uf.make(); // slot 0 = background

    for (long k = 0; k < nz; ++k)
        for (long j = 0; j < ny; ++j)
            for (long i = 0; i < nx; ++i) {
                const std::size_t idx = static_cast<std::size_t>(i + nx * (j + ny * k));
                if (!mask[idx])
                    continue;
                std::uint32_t assigned = 0;
                for (const auto& o : back) {
                    const long a = i + o[0], b = j + o[1], c = k + o[2];
                    if (a < 0 || b < 0 || c < 0 || a >= nx || b >= ny)
                        continue;
                    const std::uint32_t lbl = provisional[static_cast<std::size_t>(a + nx * (b + ny * c))];
                    if (!lbl)
                        continue;
                    if (!assigned)
                        assigned = lbl;
                    else
                        uf.unite(assigned, lbl);
                }
                provisional[idx] = assigned ? assigned : uf.make();
            }

    Labeling out{Volume<std::uint32_t, MaskTag>(mask.grid(), 0u), {}};
    std::vector<std::uint32_t> final_label(uf.parent.size(), 0);
    for (long k = 0; k < nz; ++k)
        for (long j = 0; j < ny; ++j)
            for (long i = 0; i < nx; ++i) {
                const std::size_t idx = static_cast<std::size_t>(i + nx * (j + ny * k));
                if (!provisional[idx])
                    continue;
                const std::uint32_t root = uf.find(provisional[idx]);
                if (!final_label[root]) {
                    final_label[root] = static_cast<std::uint32_t>(out.components.size() + 1);
                    Component c;
                    c.label = final_label[root];
                    c.bbox.lo = {static_cast<std::size_t>(i), static_cast<std::size_t>(j), static_cast<std::size_t>(k)};
                    c.bbox.hi = c.bbox.lo;
                    out.components.push_back(c);
                }
                const std::uint32_t lbl = final_label[root];
                out.labels[idx] = lbl;
                Component& c = out.components[lbl - 1];
                ++c.voxel_count;
                const std::size_t p[3] = {static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                                          static_cast<std::size_t>(k)};
                for (int a = 0; a < 3; ++a) {
                    c.bbox.lo[a] = std::min(c.bbox.lo[a], p[a]);
                    c.bbox.hi[a] = std::max(c.bbox.hi[a], p[a]);
                }
            }
    return out;
}

inline std::vector<Component> connected_components(const BinaryMask& mask, int connectivity = 26)
{
    return label_components(mask, connectivity).components;
}

enum class Population
{
    all,
    nonzero,
};

/// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value (rank clamped to >= 1).
inline float percentile_threshold(const ProbabilityVolume& prob, double p, Population over = Population::all)
{
    if (!(p >= 0.0 && p <= 100.0))
        throw ArgumentError("percentile_threshold: p must lie in [0, 100]");
    std::vector<float> pop;
    pop.reserve(prob.size());
    for (float v : prob.values())
        if (over == Population::all || v != 0.0f)
            pop.push_back(v);
    if (pop.empty())
        throw NumericError("percentile_threshold: the selected voxel population is empty");
    auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(pop.size()) / 100.0));
    rank = std::clamp<std::size_t>(rank, 1, pop.size());
    std::nth_element(pop.begin(), pop.begin() + static_cast<std::ptrdiff_t>(rank - 1), pop.end());
    return pop[rank - 1];
}

} // namespace exactct

#endif // EXACTCT_MORPHOLOGY_HPP
