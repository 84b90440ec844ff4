#ifndef EXACTCT_COHORT_HPP
#define EXACTCT_COHORT_HPP

// Synthetic abdominal cohorts: one phantom per case with its masks, a manifest, and
// a labels CSV. Positives get a larger visceral fat disk and more often a bright tube
// beside the bowel wall.

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "config.hpp"
#include "error.hpp"
#include "io/csv.hpp"
#include "io/snapshot.hpp"
#include "nifti.hpp"
#include "pipeline.hpp"
#include "rng.hpp"
#include "synth.hpp"

namespace exactct {

struct CohortSpec
{
    int n = 20;
    std::uint64_t seed = 0;
    Dims dims{96, 96, 32};
    double spacing = 1.5; ///< mm, isotropic
    double noise_sigma = 5.0;
    int max_shift_voxels = 2;
    double fat_low = 0.1, fat_high = 0.3; ///< visceral / subcutaneous area for negatives
    double fat_shift = 0.5;               ///< added for positives
    double tube_prob_positive = 0.7, tube_prob_negative = 0.3;
    double calcified_prob = 0.35, necrotic_prob = 0.35;

    void validate() const
    {
        if (n < 2)
            throw ArgumentError("synth: need at least two cases");
        if (dims.nx < 96 || dims.ny < 96 || dims.nz < 32)
            throw ArgumentError("synth: dims must be at least 96 x 96 x 32");
        if (!(spacing > 0.0) || !(noise_sigma >= 0.0) || max_shift_voxels < 0 || max_shift_voxels > 2)
            throw ArgumentError("synth: bad spacing, noise or shift");
        if (!(fat_low > 0.0) || !(fat_high >= fat_low) || fat_high + fat_shift > 0.8)
            throw ArgumentError("synth: fat ratios must satisfy 0 < low <= high and high + shift <= 0.8");
    }
};

inline CohortSpec cohort_spec(const Json& cfg, int n, std::uint64_t seed)
{
    const Json& s = cfg.at("synth");
    CohortSpec c;
    c.n = n;
    c.seed = seed;
    try {
        const auto d = s.at("dims").get<std::vector<std::size_t>>();
        if (d.size() != 3)
            throw ParseError("synth.dims", "synth.dims must have three entries");
        c.dims = {d[0], d[1], d[2]};
        c.spacing = s.at("spacing").get<double>();
        c.noise_sigma = s.at("noise_sigma").get<double>();
        c.max_shift_voxels = s.at("max_shift_voxels").get<int>();
        const auto lo = s.at("fat_ratio_low").get<std::vector<double>>();
        if (lo.size() != 2)
            throw ParseError("synth.fat_ratio_low", "synth.fat_ratio_low must be [lo, hi]");
        c.fat_low = lo[0];
        c.fat_high = lo[1];
        c.fat_shift = s.at("fat_ratio_shift").get<double>();
        c.tube_prob_positive = s.at("tube_prob_positive").get<double>();
        c.tube_prob_negative = s.at("tube_prob_negative").get<double>();
        c.calcified_prob = s.at("calcified_prob").get<double>();
        c.necrotic_prob = s.at("necrotic_prob").get<double>();
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError("synth", std::string("config synth: ") + ex.what());
    }
    c.validate();
    return c;
}

/// Everything drawn for one case.
struct CaseDraw
{
    int label = 0;
    double fat_ratio = 0.0; ///< planted visceral / subcutaneous area
    bool tube = false;
    bool calcified = false;
    bool necrotic = false;
    int shift_i = 0, shift_j = 0;
    double ptb_logit = 0.0;
    std::uint64_t noise_seed = 0;
};

inline CaseDraw draw_case(const CohortSpec& spec, int index)
{
    Rng rng(spec.seed, static_cast<std::uint64_t>(index) + 1);
    CaseDraw d;
    d.label = index % 2;
    d.fat_ratio = rng.uniform(spec.fat_low, spec.fat_high) + (d.label ? spec.fat_shift : 0.0);
    d.tube = rng.uniform() < (d.label ? spec.tube_prob_positive : spec.tube_prob_negative);
    d.calcified = rng.uniform() < spec.calcified_prob;
    d.necrotic = rng.uniform() < spec.necrotic_prob;
    const auto span = static_cast<std::size_t>(2 * spec.max_shift_voxels + 1);
    d.shift_i = static_cast<int>(rng.index(span)) - spec.max_shift_voxels;
    d.shift_j = static_cast<int>(rng.index(span)) - spec.max_shift_voxels;
    d.ptb_logit = rng.normal();
    d.noise_seed = rng.next_u64();
    return d;
}

/// Layout constants in mm, relative to the (shifted) grid centre.
namespace cohort_layout {
inline constexpr double body_radius = 66.0;
inline constexpr double subcut_inner = 57.0;
inline constexpr double visceral_x = -9.0;
inline constexpr double bowel_x = 39.0;
inline constexpr double lumen_radius = 7.5, wall_radius = 10.5;
inline constexpr double tube_dy = -15.0, tube_radius = 3.0;
inline constexpr double spine_y = 38.0, spine_half = 7.0;
inline constexpr double station_x = 30.0, station_y = 30.0, station_half = 9.0;
inline constexpr double calc_x = -40.0, calc_y = -25.0, calc_radius = 4.5;
inline constexpr double necrotic_radius = 6.0;
inline constexpr float body_hu = 40.0f, fat_hu = -100.0f, wall_hu = 80.0f, lumen_hu = 10.0f, tube_hu = 100.0f,
                       bone_hu = 400.0f, station_hu = 45.0f, calc_hu = 300.0f, necrotic_hu = 15.0f;
} // namespace cohort_layout

struct SynthCase
{
    CtVolume ct;
    BinaryMask body, intestine, station, visceral_fat;
    std::array<BinaryMask, 4> vertebrae; ///< L3, L4, L5, S1
};

inline const std::array<const char*, 4>& vertebra_levels()
{
    static const std::array<const char*, 4> v{"L3", "L4", "L5", "S1"};
    return v;
}

inline SynthCase make_synth_case(const CohortSpec& spec, const CaseDraw& d)
{
    using namespace cohort_layout;
    const Grid g(spec.dims, {spec.spacing, spec.spacing, spec.spacing});
    Vec3 c = grid_center(g);
    c[0] += d.shift_i * spec.spacing;
    c[1] += d.shift_j * spec.spacing;
    const double zlen = static_cast<double>(spec.dims.nz) * spec.spacing;
    auto at = [&](double x, double y) { return Vec3{c[0] + x, c[1] + y, c[2]}; };
    auto column = [&](double x, double y, double r, float hu) { return Cylinder{at(x, y), r, zlen, 2, hu}; };

    const double visceral_r =
        std::sqrt(d.fat_ratio * (body_radius * body_radius - subcut_inner * subcut_inner));
    const double slab = spec.dims.nz / 4 * spec.spacing; // four vertebrae stacked along z, S1 lowest
    auto vertebra = [&](int from_bottom, float hu) {
        return Box{{c[0], c[1] + spine_y, (from_bottom + 0.5) * slab - 0.5 * spec.spacing},
                   {spine_half, spine_half, 0.5 * slab},
                   hu};
    };

    PhantomSpec ps{spec.dims, {spec.spacing, spec.spacing, spec.spacing}, air_hu, {}};
    ps.primitives = {
        column(0, 0, body_radius, body_hu),
        AnnulusSlab{at(0, 0), subcut_inner, body_radius, zlen, fat_hu},
        column(visceral_x, 0, visceral_r, fat_hu),
        column(bowel_x, 0, wall_radius, wall_hu),
        column(bowel_x, 0, lumen_radius, lumen_hu),
        Box{{c[0] + station_x, c[1] + station_y, c[2]}, {station_half, station_half, zlen}, station_hu},
    };
    for (int v = 0; v < 4; ++v)
        ps.primitives.push_back(vertebra(v, bone_hu));
    if (d.tube)
        ps.primitives.push_back(column(bowel_x, tube_dy, tube_radius, tube_hu));
    if (d.calcified)
        ps.primitives.push_back(Sphere{at(calc_x, calc_y), calc_radius, calc_hu});
    if (d.necrotic)
        ps.primitives.push_back(Sphere{at(station_x, station_y), necrotic_radius, necrotic_hu});

    SynthCase out;
    out.ct = add_noise(make_phantom(ps), spec.noise_sigma, d.noise_seed);

    auto mask = [&](std::vector<Primitive> prims) {
        PhantomSpec ms{spec.dims, ps.spacing, 0.0f, std::move(prims)};
        const CtVolume v = make_phantom(ms);
        BinaryMask m(v.grid(), 0);
        for (std::size_t i = 0; i < v.size(); ++i)
            m[i] = v[i] != 0.0f ? 1 : 0;
        return m;
    };
    out.body = mask({column(0, 0, body_radius, 1.0f)});
    out.intestine = mask({column(bowel_x, 0, wall_radius, 1.0f)});
    out.station = mask({Box{{c[0] + station_x, c[1] + station_y, c[2]}, {station_half, station_half, zlen}, 1.0f}});
    out.visceral_fat = mask({column(visceral_x, 0, visceral_r, 1.0f)});
    for (int v = 0; v < 4; ++v)
        out.vertebrae[static_cast<std::size_t>(3 - v)] = mask({vertebra(v, 1.0f)});
    return out;
}

struct CohortCase
{
    std::string case_id;
    std::string manifest; ///< path to manifest.json
    CaseDraw draw;
};

inline std::string case_id_for(int i)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "case_%03d", i);
    return buf;
}

/// Writes <out>/<case_id>/{ct,masks,manifest.json}, <out>/labels.csv and <out>/manifests.txt.
inline std::vector<CohortCase> write_cohort(const CohortSpec& spec, const std::string& out_dir)
{
    spec.validate();
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::vector<CohortCase> cases;
    std::vector<std::pair<std::string, int>> labels;
    for (int i = 0; i < spec.n; ++i) {
        CohortCase cc{case_id_for(i), "", draw_case(spec, i)};
        const fs::path dir = fs::path(out_dir) / cc.case_id;
        fs::create_directories(dir);
        const SynthCase s = make_synth_case(spec, cc.draw);
        write_nifti(s.ct, (dir / "ct.nii.gz").string());
        write_nifti(s.body, (dir / "body.nii.gz").string());
        write_nifti(s.intestine, (dir / "intestine.nii.gz").string());
        write_nifti(s.station, (dir / "organ_station.nii.gz").string());
        write_nifti(s.visceral_fat, (dir / "visceral_fat.nii.gz").string());
        CaseManifest m;
        m.case_id = cc.case_id;
        m.ct = "ct.nii.gz";
        m.intestine = "intestine.nii.gz";
        m.organs = {"organ_station.nii.gz"};
        for (std::size_t v = 0; v < 4; ++v) {
            const std::string f = std::string(vertebra_levels()[v]) + ".nii.gz";
            write_nifti(s.vertebrae[v], (dir / f).string());
            m.organs.push_back(f);
            m.vertebrae[vertebra_levels()[v]] = f;
        }
        m.body = "body.nii.gz";
        m.visceral_fat = "visceral_fat.nii.gz";
        m.ptb_logit = cc.draw.ptb_logit;
        m.label = cc.draw.label;
        cc.manifest = (dir / "manifest.json").string();
        write_json(cc.manifest, manifest_to_json(m));
        labels.emplace_back(cc.case_id, cc.draw.label);
        cases.push_back(std::move(cc));
    }
    write_labels_csv((fs::path(out_dir) / "labels.csv").string(), labels);
    std::ofstream list(fs::path(out_dir) / "manifests.txt");
    for (const auto& cc : cases)
        list << cc.manifest << '\n';
    if (!list)
        throw IoError("failed writing " + out_dir + "/manifests.txt");
    return cases;
}

} // namespace exactct

#endif // EXACTCT_COHORT_HPP
