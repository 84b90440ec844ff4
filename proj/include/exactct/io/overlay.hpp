#ifndef EXACTCT_IO_OVERLAY_HPP
#define EXACTCT_IO_OVERLAY_HPP

// Overlay bundle: manifest.json plus one raw little-endian float32 file per layer,
// x-fastest, sharing the base volume's grid.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "json.hpp"

#include "../error.hpp"
#include "../volume.hpp"

namespace exactct {

using Rgb = std::array<int, 3>;

namespace palette {
inline constexpr Rgb comb{255, 0, 0};
inline constexpr Rgb fat{255, 255, 0};
inline constexpr Rgb calcified{0, 255, 0};
inline constexpr Rgb necrotic{0, 0, 255};
inline constexpr Rgb base{255, 255, 255};
} // namespace palette

enum class LayerKind
{
    hu,
    probability,
    mask,
};

inline const char* to_string(LayerKind k)
{
    switch (k) {
    case LayerKind::hu:
        return "hu";
    case LayerKind::probability:
        return "probability";
    case LayerKind::mask:
        return "mask";
    }
    return "";
}

struct OverlayLayer
{
    std::string name;
    LayerKind kind = LayerKind::probability;
    Rgb color{};
    std::vector<float> data;
};

struct OverlayBundle
{
    Grid grid;
    std::array<double, 2> window{-150.0, 250.0};
    std::vector<OverlayLayer> layers; ///< layers[0] is the base CT volume
};

inline OverlayLayer base_layer(const CtVolume& vol)
{
    return {"ct", LayerKind::hu, palette::base, vol.storage()};
}

template <typename T, typename Tag>
OverlayLayer make_layer(const std::string& name, LayerKind kind, const Rgb& color, const Volume<T, Tag>& v)
{
    OverlayLayer l{name, kind, color, {}};
    l.data.reserve(v.size());
    for (const T& x : v.values())
        l.data.push_back(static_cast<float>(x));
    return l;
}

inline void write_f32_le(const std::string& path, const std::vector<float>& data)
{
    std::vector<unsigned char> bytes(data.size() * 4);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto u = std::bit_cast<std::uint32_t>(data[i]);
        for (int b = 0; b < 4; ++b)
            bytes[4 * i + static_cast<std::size_t>(b)] = static_cast<unsigned char>(u >> (8 * b));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw IoError("failed writing " + path);
}

inline std::vector<float> read_f32_le(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() % 4)
        throw ParseError("data", path + ": length is not a multiple of 4");
    std::vector<float> out(bytes.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t u = 0;
        for (int b = 0; b < 4; ++b)
            u |= static_cast<std::uint32_t>(bytes[4 * i + static_cast<std::size_t>(b)]) << (8 * b);
        out[i] = std::bit_cast<float>(u);
    }
    return out;
}

inline nlohmann::json overlay_manifest(const OverlayBundle& b)
{
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : b.layers) {
        float lo = 0.0f, hi = 0.0f;
        if (!l.data.empty()) {
            lo = *std::min_element(l.data.begin(), l.data.end());
            hi = *std::max_element(l.data.begin(), l.data.end());
        }
        layers.push_back({{"name", l.name},
                          {"kind", to_string(l.kind)},
                          {"color", l.color},
                          {"file", l.name + ".bin"},
                          {"value_range", {lo, hi}}});
    }
    const Dims& d = b.grid.dims;
    return {{"format", "exactct-overlay"},
            {"version", 1},
            {"dims", {d.nx, d.ny, d.nz}},
            {"spacing", b.grid.spacing},
            {"affine", b.grid.affine},
            {"dtype", "float32"},
            {"byte_order", "little"},
            {"window", b.window},
            {"layers", layers}};
}

inline void write_overlay_bundle(const std::string& dir, const OverlayBundle& b)
{
    if (b.layers.empty())
        throw ArgumentError("overlay bundle: no layers");
    for (const auto& l : b.layers)
        if (l.data.size() != b.grid.count())
            throw GridMismatchError("overlay layer " + l.name + " does not match the base grid");
    std::filesystem::create_directories(dir);
    for (const auto& l : b.layers)
        write_f32_le(dir + "/" + l.name + ".bin", l.data);
    std::ofstream out(dir + "/manifest.json", std::ios::binary);
    if (!out)
        throw IoError("cannot write " + dir + "/manifest.json");
    out << overlay_manifest(b).dump(2) << '\n';
}

} // namespace exactct

#endif // EXACTCT_IO_OVERLAY_HPP
