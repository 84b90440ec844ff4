#ifndef EXACTCT_NIFTI_HPP
#define EXACTCT_NIFTI_HPP

// NIfTI-1 single-file (.nii / .nii.gz) and header/image pair (.hdr/.img) reader,
// single-file writer. Both byte orders are accepted on read; files are written
// little-endian.

#include <zlib.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <memory>
#include <string>
#include <type_traits>
#include <vector>

#include "error.hpp"
#include "volume.hpp"

namespace exactct {

enum class NiftiDtype : std::int16_t
{
    uint8 = 2,
    int16 = 4,
    float32 = 16,
    float64 = 64,
};

inline int bytes_per_voxel(NiftiDtype t)
{
    switch (t) {
    case NiftiDtype::uint8: return 1;
    case NiftiDtype::int16: return 2;
    case NiftiDtype::float32: return 4;
    case NiftiDtype::float64: return 8;
    }
    return 0;
}

namespace nifti_detail {

constexpr std::size_t header_size = 348;
constexpr std::size_t single_file_offset = 352;

// Byte offsets of the fields this reader touches.
namespace off {
constexpr std::size_t sizeof_hdr = 0;
constexpr std::size_t dim = 40;
constexpr std::size_t datatype = 70;
constexpr std::size_t bitpix = 72;
constexpr std::size_t pixdim = 76;
constexpr std::size_t vox_offset = 108;
constexpr std::size_t scl_slope = 112;
constexpr std::size_t scl_inter = 116;
constexpr std::size_t xyzt_units = 123;
constexpr std::size_t descrip = 148;
constexpr std::size_t qform_code = 252;
constexpr std::size_t sform_code = 254;
constexpr std::size_t quatern_b = 256;
constexpr std::size_t qoffset_x = 268;
constexpr std::size_t srow_x = 280;
constexpr std::size_t magic = 344;
} // namespace off

template <typename T>
T byteswap_value(T v) noexcept
{
    std::array<unsigned char, sizeof(T)> b;
    std::memcpy(b.data(), &v, sizeof(T));
    std::reverse(b.begin(), b.end());
    std::memcpy(&v, b.data(), sizeof(T));
    return v;
}

class HeaderView
{
public:
    HeaderView(const unsigned char* bytes, bool swap) : bytes_(bytes), swap_(swap) {}

    template <typename T>
    T get(std::size_t offset) const noexcept
    {
        T v;
        std::memcpy(&v, bytes_ + offset, sizeof(T));
        return swap_ ? byteswap_value(v) : v;
    }

private:
    const unsigned char* bytes_;
    bool swap_;
};

class HeaderBuilder
{
public:
    HeaderBuilder() { bytes_.fill(0); }

    template <typename T>
    void put(std::size_t offset, T v) noexcept
    {
        if constexpr (std::endian::native == std::endian::big)
            v = byteswap_value(v);
        std::memcpy(bytes_.data() + offset, &v, sizeof(T));
    }
    void put_text(std::size_t offset, const char* s, std::size_t max_len) noexcept
    {
        std::memcpy(bytes_.data() + offset, s, std::min(std::strlen(s), max_len));
    }
    const std::array<unsigned char, single_file_offset>& bytes() const noexcept { return bytes_; }

private:
    // 348-byte header plus the 4-byte empty extension block.
    std::array<unsigned char, single_file_offset> bytes_;
};

struct GzFile
{
    gzFile handle = nullptr;
    explicit GzFile(const std::string& path, const char* mode) : handle(gzopen(path.c_str(), mode)) {}
    ~GzFile()
    {
        if (handle)
            gzclose(handle);
    }
    GzFile(const GzFile&) = delete;
    GzFile& operator=(const GzFile&) = delete;
};

/// Reads up to `n` bytes, returns how many were actually available.
inline std::size_t read_bytes(gzFile f, unsigned char* dst, std::size_t n)
{
    std::size_t done = 0;
    while (done < n) {
        const auto chunk = static_cast<unsigned>(std::min<std::size_t>(n - done, 1u << 30));
        const int got = gzread(f, dst + done, chunk);
        if (got < 0)
            throw IoError("gzread failed");
        if (got == 0)
            break;
        done += static_cast<std::size_t>(got);
    }
    return done;
}

inline bool ends_with(const std::string& s, const std::string& suffix)
{
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline std::string image_path_for_header(const std::string& hdr)
{
    if (ends_with(hdr, ".hdr.gz"))
        return hdr.substr(0, hdr.size() - 7) + ".img.gz";
    if (ends_with(hdr, ".hdr"))
        return hdr.substr(0, hdr.size() - 4) + ".img";
    return hdr + ".img";
}

inline Affine affine_from_quaternion(const HeaderView& h, const std::array<double, 3>& spacing, float qfac)
{
    const double b = h.get<float>(off::quatern_b);
    const double c = h.get<float>(off::quatern_b + 4);
    const double d = h.get<float>(off::quatern_b + 8);
    const double a = std::sqrt(std::max(0.0, 1.0 - (b * b + c * c + d * d)));
    const double r[3][3] = {
        {a * a + b * b - c * c - d * d, 2 * b * c - 2 * a * d, 2 * b * d + 2 * a * c},
        {2 * b * c + 2 * a * d, a * a + c * c - b * b - d * d, 2 * c * d - 2 * a * b},
        {2 * b * d - 2 * a * c, 2 * c * d + 2 * a * b, a * a + d * d - c * c - b * b},
    };
    const double scale[3] = {spacing[0], spacing[1], qfac * spacing[2]};
    Affine m{};
    for (int row = 0; row < 3; ++row) {
        for (int col = 0; col < 3; ++col)
            m[4 * row + col] = r[row][col] * scale[col];
        m[4 * row + 3] = h.get<float>(off::qoffset_x + 4 * row);
    }
    m[15] = 1.0;
    return m;
}

struct RawImage
{
    Grid grid;
    std::vector<float> values;
};

inline RawImage read_raw(const std::string& path)
{
    namespace fs = std::filesystem;
    if (!fs::exists(path))
        throw IoError("cannot open NIfTI file: " + path + " (no such file)");
    GzFile f(path, "rb");
    if (!f.handle)
        throw IoError("cannot open NIfTI file: " + path);

    std::array<unsigned char, header_size> hdr{};
    if (read_bytes(f.handle, hdr.data(), header_size) != header_size)
        throw ParseError("sizeof_hdr", path + ": file shorter than the 348-byte NIfTI-1 header");

    // Byte order: sizeof_hdr must read 348 and dim[0] must be a plausible rank.
    bool swap = false;
    {
        const HeaderView native(hdr.data(), false);
        const HeaderView swapped(hdr.data(), true);
        auto plausible = [](const HeaderView& v) {
            const auto rank = v.get<std::int16_t>(off::dim);
            return v.get<std::int32_t>(off::sizeof_hdr) == 348 && rank >= 1 && rank <= 7;
        };
        if (plausible(native))
            swap = false;
        else if (plausible(swapped))
            swap = true;
        else if (native.get<std::int32_t>(off::sizeof_hdr) != 348 &&
                 swapped.get<std::int32_t>(off::sizeof_hdr) != 348)
            throw ParseError("sizeof_hdr", path + ": sizeof_hdr is not 348");
        else
            throw ParseError("dim", path + ": dim[0] outside 1..7 in either byte order");
    }
    const HeaderView h(hdr.data(), swap);

    const char* magic = reinterpret_cast<const char*>(hdr.data() + off::magic);
    const bool single_file = std::memcmp(magic, "n+1\0", 4) == 0;
    const bool pair_file = std::memcmp(magic, "ni1\0", 4) == 0;
    if (!single_file && !pair_file)
        throw ParseError("magic", path + ": magic is neither \"n+1\" nor \"ni1\"");

    const auto rank = h.get<std::int16_t>(off::dim);
    std::array<std::int64_t, 7> extent{};
    for (int a = 0; a < 7; ++a) {
        const auto d = h.get<std::int16_t>(off::dim + 2 * (a + 1));
        extent[a] = a < rank ? d : 1;
        if (a < rank && d <= 0)
            throw ParseError("dim", path + ": dim[" + std::to_string(a + 1) + "] must be positive");
    }
    for (int a = 3; a < 7; ++a)
        if (extent[a] != 1)
            throw ParseError("dim", path + ": only 3D volumes are supported (dim[" + std::to_string(a + 1) +
                                        "] = " + std::to_string(extent[a]) + ")");

    const auto raw_type = h.get<std::int16_t>(off::datatype);
    NiftiDtype dtype;
    switch (raw_type) {
    case 2: dtype = NiftiDtype::uint8; break;
    case 4: dtype = NiftiDtype::int16; break;
    case 16: dtype = NiftiDtype::float32; break;
    case 64: dtype = NiftiDtype::float64; break;
    default:
        throw UnsupportedTypeError(path + ": unsupported NIfTI datatype code " + std::to_string(raw_type) +
                                   " (supported: uint8=2, int16=4, float32=16, float64=64)");
    }
    const auto bitpix = h.get<std::int16_t>(off::bitpix);
    if (bitpix != 8 * bytes_per_voxel(dtype))
        throw ParseError("bitpix", path + ": bitpix " + std::to_string(bitpix) + " inconsistent with datatype");

    std::array<double, 3> spacing{};
    for (int a = 0; a < 3; ++a) {
        const float p = h.get<float>(off::pixdim + 4 * (a + 1));
        const double s = a < rank ? std::fabs(static_cast<double>(p)) : (p != 0.0f ? std::fabs(p) : 1.0);
        if (!(s > 0.0) || !std::isfinite(s))
            throw ParseError("pixdim", path + ": pixdim[" + std::to_string(a + 1) + "] must be positive");
        spacing[a] = s;
    }

    const float vox_offset = h.get<float>(off::vox_offset);
    if (!std::isfinite(vox_offset) || vox_offset < 0.0f ||
        (single_file && vox_offset < static_cast<float>(header_size)))
        throw ParseError("vox_offset", path + ": invalid vox_offset " + std::to_string(vox_offset));

    float slope = h.get<float>(off::scl_slope);
    const float inter_raw = h.get<float>(off::scl_inter);
    if (!std::isfinite(slope))
        throw ParseError("scl_slope", path + ": scl_slope is not finite");
    if (!std::isfinite(inter_raw))
        throw ParseError("scl_inter", path + ": scl_inter is not finite");
    if (slope == 0.0f)
        slope = 1.0f;

    Affine affine = diagonal_affine(spacing);
    if (h.get<std::int16_t>(off::sform_code) > 0) {
        for (int row = 0; row < 3; ++row)
            for (int col = 0; col < 4; ++col)
                affine[4 * row + col] = h.get<float>(off::srow_x + 16 * row + 4 * col);
        affine[12] = affine[13] = affine[14] = 0.0;
        affine[15] = 1.0;
    } else if (h.get<std::int16_t>(off::qform_code) > 0) {
        const float qfac = h.get<float>(off::pixdim) < 0.0f ? -1.0f : 1.0f;
        affine = affine_from_quaternion(h, spacing, qfac);
    }

    Grid grid(Dims{static_cast<std::size_t>(extent[0]), static_cast<std::size_t>(extent[1]),
                   static_cast<std::size_t>(extent[2])},
              spacing, affine);
    const std::size_t n = grid.count();
    const std::size_t width = static_cast<std::size_t>(bytes_per_voxel(dtype));
    const std::size_t payload = n * width;
    std::vector<unsigned char> bytes(payload);

    auto read_payload = [&](gzFile src, std::size_t skip, const std::string& from) {
        std::vector<unsigned char> pad(skip);
        if (skip && read_bytes(src, pad.data(), skip) != skip)
            throw ParseError("vox_offset", from + ": file ends before vox_offset");
        const std::size_t got = read_bytes(src, bytes.data(), payload);
        if (got != payload)
            throw ParseError("payload", from + ": truncated voxel payload, expected " + std::to_string(payload) +
                                            " bytes, found " + std::to_string(got));
    };

    const auto offset = static_cast<std::size_t>(vox_offset);
    if (single_file) {
        read_payload(f.handle, offset - header_size, path);
    } else {
        const std::string img = image_path_for_header(path);
        if (!fs::exists(img))
            throw IoError("missing image file for NIfTI pair: " + img);
        GzFile fi(img, "rb");
        if (!fi.handle)
            throw IoError("cannot open NIfTI image file: " + img);
        read_payload(fi.handle, offset, img);
    }

    RawImage out{grid, std::vector<float>(n)};
    const double dslope = slope;
    const double dinter = inter_raw;
    auto convert = [&]<typename T>(T) {
        for (std::size_t v = 0; v < n; ++v) {
            T raw;
            std::memcpy(&raw, bytes.data() + v * sizeof(T), sizeof(T));
            if (swap)
                raw = byteswap_value(raw);
            const double hu = static_cast<double>(raw) * dslope + dinter;
            if (!std::isfinite(hu))
                throw ParseError("payload", path + ": non-finite voxel value at index " + std::to_string(v));
            out.values[v] = static_cast<float>(hu);
        }
    };
    switch (dtype) {
    case NiftiDtype::uint8: convert(std::uint8_t{}); break;
    case NiftiDtype::int16: convert(std::int16_t{}); break;
    case NiftiDtype::float32: convert(float{}); break;
    case NiftiDtype::float64: convert(double{}); break;
    }
    return out;
}

template <typename T>
void encode(std::vector<unsigned char>& dst, std::span<const T> src, NiftiDtype dtype, const std::string& path)
{
    const std::size_t width = static_cast<std::size_t>(bytes_per_voxel(dtype));
    dst.resize(src.size() * width);
    auto put = [&]<typename D>(std::size_t v, D value) {
        if constexpr (std::endian::native == std::endian::big)
            value = byteswap_value(value);
        std::memcpy(dst.data() + v * sizeof(D), &value, sizeof(D));
    };
    for (std::size_t v = 0; v < src.size(); ++v) {
        const double x = static_cast<double>(src[v]);
        switch (dtype) {
        case NiftiDtype::uint8:
            if (x != std::round(x) || x < 0 || x > 255)
                throw ArgumentError(path + ": value " + std::to_string(x) + " not representable as uint8");
            put(v, static_cast<std::uint8_t>(x));
            break;
        case NiftiDtype::int16:
            if (x != std::round(x) || x < -32768 || x > 32767)
                throw ArgumentError(path + ": value " + std::to_string(x) + " not representable as int16");
            put(v, static_cast<std::int16_t>(x));
            break;
        case NiftiDtype::float32: put(v, static_cast<float>(x)); break;
        case NiftiDtype::float64: put(v, x); break;
        }
    }
}

inline void write_raw(const std::string& path, const Grid& grid, NiftiDtype dtype,
                      const std::vector<unsigned char>& payload)
{
    HeaderBuilder hb;
    hb.put<std::int32_t>(off::sizeof_hdr, 348);
    hb.put<std::int16_t>(off::dim, 3);
    hb.put<std::int16_t>(off::dim + 2, static_cast<std::int16_t>(grid.dims.nx));
    hb.put<std::int16_t>(off::dim + 4, static_cast<std::int16_t>(grid.dims.ny));
    hb.put<std::int16_t>(off::dim + 6, static_cast<std::int16_t>(grid.dims.nz));
    for (int a = 4; a < 8; ++a)
        hb.put<std::int16_t>(off::dim + 2 * a, 1);
    hb.put<std::int16_t>(off::datatype, static_cast<std::int16_t>(dtype));
    hb.put<std::int16_t>(off::bitpix, static_cast<std::int16_t>(8 * bytes_per_voxel(dtype)));
    hb.put<float>(off::pixdim, 1.0f);
    for (int a = 0; a < 3; ++a)
        hb.put<float>(off::pixdim + 4 * (a + 1), static_cast<float>(grid.spacing[a]));
    for (int a = 4; a < 8; ++a)
        hb.put<float>(off::pixdim + 4 * a, 1.0f);
    hb.put<float>(off::vox_offset, static_cast<float>(single_file_offset));
    hb.put<float>(off::scl_slope, 1.0f);
    hb.put<float>(off::scl_inter, 0.0f);
    hb.put<std::uint8_t>(off::xyzt_units, 2 | 8); // mm, s
    hb.put_text(off::descrip, "exactct", 80);
    hb.put<std::int16_t>(off::qform_code, 0);
    hb.put<std::int16_t>(off::sform_code, 1);
    for (int row = 0; row < 3; ++row)
        for (int col = 0; col < 4; ++col)
            hb.put<float>(off::srow_x + 16 * row + 4 * col, static_cast<float>(grid.affine[4 * row + col]));
    hb.put_text(off::magic, "n+1", 4);

    for (int a = 0; a < 3; ++a)
        if (grid.dims[a] > 32767)
            throw ArgumentError(path + ": NIfTI-1 dims are limited to 32767 per axis");

    const bool gz = ends_with(path, ".gz");
    GzFile f(path, gz ? "wb6" : "wbT");
    if (!f.handle)
        throw IoError("cannot open for writing: " + path);
    auto write_all = [&](const unsigned char* p, std::size_t n) {
        std::size_t done = 0;
        while (done < n) {
            const auto chunk = static_cast<unsigned>(std::min<std::size_t>(n - done, 1u << 30));
            const int w = gzwrite(f.handle, p + done, chunk);
            if (w <= 0)
                throw IoError("write failed: " + path);
            done += static_cast<std::size_t>(w);
        }
    };
    write_all(hb.bytes().data(), hb.bytes().size());
    write_all(payload.data(), payload.size());
    const int rc = gzclose(f.handle);
    f.handle = nullptr;
    if (rc != Z_OK)
        throw IoError("close failed: " + path);
}

template <typename T>
constexpr NiftiDtype default_dtype()
{
    if constexpr (std::is_same_v<T, std::uint8_t>)
        return NiftiDtype::uint8;
    else
        return NiftiDtype::float32;
}

} // namespace nifti_detail

/// Reads a CT volume; voxels become raw * scl_slope + scl_inter (slope 0 means 1).
inline CtVolume read_nifti(const std::string& path)
{
    auto raw = nifti_detail::read_raw(path);
    return CtVolume(raw.grid, std::move(raw.values));
}

/// Reads a mask; nonzero means inside.
inline BinaryMask read_mask(const std::string& path)
{
    auto raw = nifti_detail::read_raw(path);
    BinaryMask m(raw.grid);
    for (std::size_t v = 0; v < raw.values.size(); ++v)
        m[v] = raw.values[v] != 0.0f ? 1 : 0;
    return m;
}

inline ProbabilityVolume read_probability(const std::string& path)
{
    auto raw = nifti_detail::read_raw(path);
    ProbabilityVolume p(raw.grid, std::move(raw.values));
    require_unit_interval(p);
    return p;
}

/// Writes any volume. Masks default to uint8, everything else to float32; integer
/// dtypes require every value to be exactly representable.
template <typename T, typename Tag>
void write_nifti(const Volume<T, Tag>& vol, const std::string& path,
                 NiftiDtype dtype = nifti_detail::default_dtype<T>())
{
    std::vector<unsigned char> payload;
    nifti_detail::encode<T>(payload, vol.values(), dtype, path);
    nifti_detail::write_raw(path, vol.grid(), dtype, payload);
}

/// Display windowing: clamp((HU - lo) / (hi - lo), 0, 1), evaluated in float32.
inline ProbabilityVolume window_hu(const CtVolume& vol, float lo, float hi)
{
    if (!(lo < hi))
        throw ArgumentError("window_hu: lo must be below hi");
    ProbabilityVolume out(vol.grid());
    const float width = hi - lo;
    for (std::size_t v = 0; v < vol.size(); ++v)
        out[v] = std::clamp((vol[v] - lo) / width, 0.0f, 1.0f);
    return out;
}

} // namespace exactct

#endif // EXACTCT_NIFTI_HPP
