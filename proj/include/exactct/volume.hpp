#ifndef EXACTCT_VOLUME_HPP
#define EXACTCT_VOLUME_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"

namespace exactct {

struct Dims
{
    std::size_t nx = 0, ny = 0, nz = 0;

    constexpr std::size_t count() const noexcept { return nx * ny * nz; }
    constexpr std::size_t operator[](int axis) const noexcept
    {
        return axis == 0 ? nx : (axis == 1 ? ny : nz);
    }
    friend constexpr bool operator==(const Dims&, const Dims&) = default;
};

/// Row-major 4x4 voxel-index -> world (mm) transform.
using Affine = std::array<double, 16>;

inline Affine diagonal_affine(const std::array<double, 3>& spacing)
{
    Affine a{};
    a[0] = spacing[0];
    a[5] = spacing[1];
    a[10] = spacing[2];
    a[15] = 1.0;
    return a;
}

/// Voxel lattice shared by a CT volume and everything derived from it.
struct Grid
{
    Dims dims;
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    Affine affine = diagonal_affine({1.0, 1.0, 1.0});

    Grid() = default;
    Grid(Dims d, std::array<double, 3> sp)
        : dims(d), spacing(sp), affine(diagonal_affine(sp))
    {}
    Grid(Dims d, std::array<double, 3> sp, const Affine& a)
        : dims(d), spacing(sp), affine(a)
    {}

    std::size_t count() const noexcept { return dims.count(); }
    double voxel_volume() const noexcept { return spacing[0] * spacing[1] * spacing[2]; }

    std::size_t index(std::size_t i, std::size_t j, std::size_t k) const noexcept
    {
        return i + dims.nx * (j + dims.ny * k);
    }

    bool contains(long i, long j, long k) const noexcept
    {
        return i >= 0 && j >= 0 && k >= 0 && static_cast<std::size_t>(i) < dims.nx &&
               static_cast<std::size_t>(j) < dims.ny && static_cast<std::size_t>(k) < dims.nz;
    }

    /// Grids are compatible when their voxel counts agree axis by axis.
    bool compatible(const Grid& other) const noexcept { return dims == other.dims; }

    void validate() const
    {
        if (dims.nx == 0 || dims.ny == 0 || dims.nz == 0)
            throw ArgumentError("grid dims must be positive on every axis");
        for (double s : spacing)
            if (!(s > 0.0) || !std::isfinite(s))
                throw ArgumentError("grid spacing must be positive and finite");
    }
};

inline std::string describe(const Dims& d)
{
    std::ostringstream os;
    os << d.nx << "x" << d.ny << "x" << d.nz;
    return os.str();
}

inline void require_compatible(const Grid& a, const Grid& b, const char* what)
{
    if (!a.compatible(b))
        throw GridMismatchError(std::string(what) + ": grid " + describe(a.dims) +
                                " does not match " + describe(b.dims));
}

struct HuTag {};
struct MaskTag {};
struct ProbabilityTag {};

/// Dense scalar field on a Grid, x-fastest storage. The tag keeps HU volumes,
/// masks and probability maps from being mixed up at call sites.
template <typename T, typename Tag>
class Volume
{
public:
    using value_type = T;

    Volume() = default;
    explicit Volume(const Grid& grid, T fill = T{})
        : grid_(grid), data_(grid.count(), fill)
    {
        grid_.validate();
    }
    Volume(const Grid& grid, std::vector<T> data)
        : grid_(grid), data_(std::move(data))
    {
        grid_.validate();
        if (data_.size() != grid_.count())
            throw ArgumentError("voxel count does not match grid dims");
    }

    const Grid& grid() const noexcept { return grid_; }
    const Dims& dims() const noexcept { return grid_.dims; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator[](std::size_t n) noexcept { return data_[n]; }
    const T& operator[](std::size_t n) const noexcept { return data_[n]; }

    T& at(std::size_t i, std::size_t j, std::size_t k) noexcept { return data_[grid_.index(i, j, k)]; }
    const T& at(std::size_t i, std::size_t j, std::size_t k) const noexcept
    {
        return data_[grid_.index(i, j, k)];
    }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    friend bool operator==(const Volume& a, const Volume& b)
    {
        return a.grid_.dims == b.grid_.dims && a.data_ == b.data_;
    }

private:
    Grid grid_;
    std::vector<T> data_;
};

/// Hounsfield units, float32 canonical form.
using CtVolume = Volume<float, HuTag>;
/// One byte per voxel, 0 = outside, 1 = inside.
using BinaryMask = Volume<std::uint8_t, MaskTag>;
/// Values in [0, 1].
using ProbabilityVolume = Volume<float, ProbabilityTag>;

inline std::size_t count_set(const BinaryMask& m)
{
    return static_cast<std::size_t>(std::count_if(m.values().begin(), m.values().end(),
                                                   [](std::uint8_t v) { return v != 0; }));
}

inline void require_finite(const CtVolume& v)
{
    for (float x : v.values())
        if (!std::isfinite(x))
            throw NumericError("CT volume contains a non-finite HU value");
}

inline void require_unit_interval(const ProbabilityVolume& p)
{
    for (float x : p.values())
        if (!(x >= 0.0f && x <= 1.0f))
            throw NumericError("probability volume value outside [0, 1]");
}

/// 2D axial slice of a mask, used by the polar fat scan.
struct SliceMask
{
    std::size_t nx = 0, ny = 0;
    std::vector<std::uint8_t> data;

    SliceMask() = default;
    SliceMask(std::size_t w, std::size_t h) : nx(w), ny(h), data(w * h, 0) {}

    std::uint8_t& at(std::size_t i, std::size_t j) noexcept { return data[i + nx * j]; }
    std::uint8_t at(std::size_t i, std::size_t j) const noexcept { return data[i + nx * j]; }
    bool inside(long i, long j) const noexcept
    {
        return i >= 0 && j >= 0 && static_cast<std::size_t>(i) < nx && static_cast<std::size_t>(j) < ny;
    }
};

inline SliceMask axial_slice(const BinaryMask& m, std::size_t k)
{
    SliceMask s(m.dims().nx, m.dims().ny);
    const std::size_t plane = s.nx * s.ny;
    std::copy_n(m.storage().begin() + static_cast<std::ptrdiff_t>(plane * k), plane, s.data.begin());
    return s;
}

} // namespace exactct

#endif // EXACTCT_VOLUME_HPP
