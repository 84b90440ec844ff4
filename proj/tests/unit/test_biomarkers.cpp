#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "exactct/biomarkers.hpp"
#include "exactct/ml/metrics.hpp"
#include "exactct/synth.hpp"
#include "generators.hpp"
#include "test_util.hpp"

using namespace exactct;

namespace {

constexpr double pi = std::numbers::pi;

// Pixels whose centre lies at distance r from (c, c) with lo <= r <= hi.
SliceMask ring_slice(std::size_t n, double c, double lo, double hi)
{
    SliceMask s(n, n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) {
            const double r = std::hypot(i - c, j - c);
            s.at(i, j) = r >= lo && r <= hi;
        }
    return s;
}

BinaryMask stack(const std::vector<SliceMask>& parts, std::size_t nz)
{
    const std::size_t n = parts.front().nx;
    BinaryMask m(Grid({n, n, nz}, {1.0, 1.0, 1.0}), 0);
    for (std::size_t k = 0; k < nz; ++k)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < n; ++i)
                for (const auto& p : parts)
                    if (p.at(i, j))
                        m.at(i, j, k) = 1;
    return m;
}

std::size_t count(const SliceMask& s)
{
    std::size_t n = 0;
    for (auto v : s.data)
        n += v;
    return n;
}

} // namespace

TEST(Regions, AggregateMatchesScalarLoop)
{
    Rng rng(1);
    const Grid g({10, 10, 10}, {1.0, 1.0, 1.0});
    const ProbabilityVolume p = testutil::random_probability(g, rng);
    RegionSpec all;
    all.axial = whole_range(g);
    double s = 0.0;
    for (float x : p.values())
        s += x;
    const RegionSum r = region_aggregate(p, all);
    EXPECT_NEAR(r.sum, s, 1e-9);
    EXPECT_NEAR(r.ratio, s / 1000.0, 1e-12);
    EXPECT_EQ(r.voxels, 1000u);

    const RegionSum ones = region_aggregate(ProbabilityVolume(g, 1.0f), all);
    EXPECT_EQ(ones.sum, 1000.0);
    EXPECT_EQ(ones.ratio, 1.0);
    const RegionSum zeros = region_aggregate(ProbabilityVolume(g, 0.0f), all);
    EXPECT_EQ(zeros.sum, 0.0);
    EXPECT_EQ(zeros.ratio, 0.0);

    RegionSpec none = all;
    none.lateral = LateralRule::central_band;
    none.band_x0 = 5;
    none.band_x1 = 4;
    EXPECT_THROW(region_aggregate(p, none), ArgumentError);
    RegionSpec outside = all;
    outside.axial = {3, 12};
    EXPECT_THROW(region_aggregate(p, outside), ArgumentError);
}

TEST(Regions, LateralitySplitFollowsAffine)
{
    const Grid g({9, 5, 6}, {1.0, 1.0, 1.0});
    BinaryMask body(g, 1);
    const BodyGeometry bg = body_geometry(body);
    EXPECT_EQ(bg.centroid_x, 4.0);
    Vertebrae vb;
    vb.l4 = BinaryMask(g, 0);
    vb.l4->at(4, 4, 2) = 1;
    vb.s1 = BinaryMask(g, 0);
    vb.s1->at(4, 4, 0) = 1;

    const RegionSpec left = make_region("L3S1_left", g, bg, vb);
    EXPECT_EQ(left.axial.first, 0u);
    EXPECT_EQ(left.axial.last, 2u);
    EXPECT_TRUE(left.contains(8, 0, 1));
    EXPECT_FALSE(left.contains(4, 0, 1));
    EXPECT_FALSE(left.contains(0, 0, 1));
    EXPECT_FALSE(left.contains(8, 0, 3));

    Affine flipped = diagonal_affine(g.spacing);
    flipped[0] = -1.0;
    const Grid gf(g.dims, g.spacing, flipped);
    Vertebrae vf;
    vf.l4 = BinaryMask(gf, 0);
    vf.l4->at(4, 4, 2) = 1;
    const RegionSpec right_flipped = make_region("L3S1_right", gf, bg, vf);
    EXPECT_TRUE(right_flipped.contains(8, 0, 2));
    EXPECT_FALSE(right_flipped.contains(0, 0, 2));

    const RegionSpec l4l5 = make_region("L4L5", g, bg, vb);
    EXPECT_EQ(l4l5.axial.first, 2u);
    EXPECT_EQ(l4l5.axial.last, 2u);
    const RegionSpec central = make_region("anterior_central", g, bg, vb);
    EXPECT_TRUE(central.contains(4, 2, 1));
    EXPECT_FALSE(central.contains(0, 2, 1));
    EXPECT_THROW(make_region("elsewhere", g, bg, vb), ArgumentError);
}

TEST(CombSign, ProductFormulaAndBlanking)
{
    const Grid g({4, 4, 4}, {1.0, 1.0, 1.0});
    ProbabilityVolume vessel(g, 0.8f), prox(g, 0.5f);
    BinaryMask intestine(g, 0);
    intestine.at(1, 1, 1) = 1;
    const ProbabilityVolume c = apply_proximity(vessel, prox, intestine);
    EXPECT_FLOAT_EQ(c.at(0, 0, 0), 0.4f);
    EXPECT_EQ(c.at(1, 1, 1), 0.0f);
}

TEST(CombSign, NoTubesMeansNoComb)
{
    // Wall ring with lumen, nothing else: every tube-like response is inside the
    // intestine, which is blanked.
    const Grid g({40, 40, 12}, {1.0, 1.0, 1.0});
    const Vec3 c{19.5, 19.5, 5.5};
    PhantomSpec s{g.dims, g.spacing, 0.0f, {}};
    s.primitives.push_back(Cylinder{c, 9.0, 100.0, 2, 80.0f});
    s.primitives.push_back(Cylinder{c, 6.0, 100.0, 2, 10.0f});
    const CtVolume v = add_noise(make_phantom(s), 2.0, 1);
    BinaryMask intestine(g, 0);
    for (std::size_t k = 0; k < 12; ++k)
        for (std::size_t j = 0; j < 40; ++j)
            for (std::size_t i = 0; i < 40; ++i)
                intestine.at(i, j, k) = std::hypot(i - c[0], j - c[1]) <= 12.0;
    const ProbabilityVolume m = comb_sign_map(v, intestine, CombParams{}, 3);
    for (std::size_t n = 0; n < m.size(); ++n)
        if (intestine[n]) {
            ASSERT_EQ(m[n], 0.0f);
        }
    EXPECT_THROW(comb_sign_map(v, BinaryMask(g, 0), CombParams{}, 3), ArgumentError);
}

TEST(CombSign, TubeNearWallOutweighsDistantTube)
{
    const gen::CombPhantom ph = gen::comb_phantom(2.0, 40.0);
    CombParams p;
    p.distance.sigma = 10.0;
    const ProbabilityVolume m = comb_sign_map(ph.ct, ph.intestine, p, 7);
    const double near = gen::box_sum(m, ph.near_tube, 3.0), far = gen::box_sum(m, ph.far_tube, 3.0);
    EXPECT_GT(near, 0.0);
    EXPECT_GE(near, 5.0 * far) << "near " << near << " far " << far;
    for (std::size_t n = 0; n < m.size(); ++n)
        if (ph.intestine[n]) {
            ASSERT_EQ(m[n], 0.0f);
        }
}

TEST(FatMask, AnnulusPhantom)
{
    PhantomSpec s{{80, 80, 5}, {1.0, 1.0, 1.0}, air_hu, {}};
    const Vec3 c{39.5, 39.5, 2.0};
    s.primitives.push_back(Cylinder{c, 36.0, 10.0, 2, 40.0f});
    s.primitives.push_back(AnnulusSlab{c, 24.0, 32.0, 10.0, -80.0f});
    CtVolume v = make_phantom(s);
    v.at(39, 39, 2) = -80.0f; // isolated fat voxel inside the body
    const BinaryMask m = fat_mask(v);
    EXPECT_EQ(m.at(39, 39, 2), 0);
    for (std::size_t j = 0; j < 80; ++j)
        for (std::size_t i = 0; i < 80; ++i) {
            const double r = std::hypot(i - c[0], j - c[1]);
            const bool in_ring = r >= 24.0 && r <= 32.0;
            if (!in_ring) {
                ASSERT_EQ(m.at(i, j, 2), 0) << i << "," << j;
            }
        }
    std::size_t ring = 0, kept = 0;
    for (std::size_t j = 0; j < 80; ++j)
        for (std::size_t i = 0; i < 80; ++i) {
            const double r = std::hypot(i - c[0], j - c[1]);
            if (r >= 24.0 && r <= 32.0) {
                ++ring;
                kept += m.at(i, j, 2);
            }
        }
    EXPECT_EQ(kept, ring);
}

TEST(PolarScan, AnnulusAndDiskAreas)
{
    const SliceMask ann = ring_slice(121, 60.0, 40.0, 50.0);
    const PolarScan a = polar_subcutaneous_area(ann, 60.0, 60.0, 720);
    EXPECT_NEAR(a.a_subcut, 900.0 * pi, 0.02 * 900.0 * pi);
    EXPECT_NEAR(static_cast<double>(band_pixel_count(ann, a)), static_cast<double>(count(ann)), 0.0);

    const double R = 30.0;
    const SliceMask disk = ring_slice(121, 60.0, 0.0, R);
    const PolarScan d = polar_subcutaneous_area(disk, 60.0, 60.0, 720);
    for (const auto& ray : d.rays)
        ASSERT_EQ(ray.d_in, 0.0);
    EXPECT_NEAR(d.a_subcut, pi * R * R, 0.02 * pi * R * R);

    EXPECT_EQ(polar_subcutaneous_area(SliceMask(20, 20), 10.0, 10.0).a_subcut, 0.0);
    EXPECT_THROW(polar_subcutaneous_area(ann, 500.0, 3.0), ArgumentError);
    EXPECT_THROW(polar_subcutaneous_area(ann, 60.0, 60.0, 4), ArgumentError);
}

TEST(PolarScan, SingleFatPixelsOnARayAreNotABand)
{
    SliceMask s = ring_slice(61, 30.0, 20.0, 25.0);
    s.at(30 + 28, 30) = 1; // lone pixel outside the band on the theta = 0 ray
    const PolarScan p = polar_subcutaneous_area(s, 30.0, 30.0, 360);
    EXPECT_NEAR(p.rays[0].d_out, 25.5, 1e-12);
    EXPECT_NEAR(p.rays[0].d_in, 19.5, 1e-12);
}

TEST(FatRatio, AnnulusWithVisceralDisk)
{
    const std::size_t n = 121;
    const SliceMask ann = ring_slice(n, 60.0, 40.0, 50.0), disk = ring_slice(n, 60.0, 0.0, 10.0);
    const BinaryMask fat = stack({ann, disk}, 3), body = stack({ring_slice(n, 60.0, 0.0, 55.0)}, 3);
    const FatResult r = fat_ratio_from_mask(fat, body, {0, 2});
    EXPECT_NEAR(r.fat_ratio, 1000.0 / 900.0 - 1.0, 0.03 * (1000.0 / 900.0 - 1.0));
    EXPECT_DOUBLE_EQ(r.ratio_min, r.ratio_max);
    for (const auto& s : r.slices) {
        EXPECT_FALSE(s.degenerate);
        EXPECT_LE(s.a_subcut, s.a_total);
    }

    const FatResult pure = fat_ratio_from_mask(stack({ann}, 3), body, {0, 2});
    EXPECT_EQ(pure.fat_ratio, 0.0);

    FatParams twice;
    twice.rays = 1440;
    const FatResult r2 = fat_ratio_from_mask(fat, body, {0, 2}, twice);
    EXPECT_LT(std::fabs(r2.slices[0].a_subcut - r.slices[0].a_subcut), 0.01 * r.slices[0].a_subcut);
    EXPECT_LT(std::fabs(r2.slices[0].a_polar - r.slices[0].a_polar), 0.01 * r.slices[0].a_polar);
}

TEST(FatRatio, ScaleInvariant)
{
    const SliceMask a1 = ring_slice(121, 60.0, 40.0, 50.0), d1 = ring_slice(121, 60.0, 0.0, 15.0);
    const SliceMask a2 = ring_slice(241, 120.0, 80.0, 100.0), d2 = ring_slice(241, 120.0, 0.0, 30.0);
    const FatResult r1 = fat_ratio_from_mask(stack({a1, d1}, 1), stack({ring_slice(121, 60.0, 0.0, 55.0)}, 1), {0, 0});
    const FatResult r2 =
        fat_ratio_from_mask(stack({a2, d2}, 1), stack({ring_slice(241, 120.0, 0.0, 110.0)}, 1), {0, 0});
    EXPECT_NEAR(r2.fat_ratio, r1.fat_ratio, 0.02 * r1.fat_ratio);
}

TEST(FatRatio, HuPhantomAndDegenerateSlices)
{
    PhantomSpec s{{128, 128, 5}, {1.0, 1.0, 1.0}, air_hu, {}};
    const Vec3 c{63.5, 63.5, 2.0};
    s.primitives.push_back(Cylinder{c, 56.0, 10.0, 2, 40.0f});
    s.primitives.push_back(AnnulusSlab{c, 40.0, 50.0, 10.0, -80.0f});
    s.primitives.push_back(Cylinder{c, 10.0, 10.0, 2, -80.0f});
    const FatResult r = fat_ratio_volume(make_phantom(s), {1, 3});
    EXPECT_NEAR(r.fat_ratio, 1.0 / 9.0, 0.03 / 9.0);

    PhantomSpec lean{{40, 40, 3}, {1.0, 1.0, 1.0}, air_hu, {Cylinder{{19.5, 19.5, 1.0}, 15.0, 10.0, 2, 40.0f}}};
    EXPECT_THROW(fat_ratio_volume(make_phantom(lean), {0, 2}), ArgumentError);
    EXPECT_THROW(fat_ratio_volume(make_phantom(lean), {2, 1}), ArgumentError);
}

TEST(FatRatio, ThresholdProbe)
{
    // Table 3 "Ratio" threshold 0.2969; a case at 0.45 is called positive.
    EXPECT_EQ(classify_by_threshold(0.45, 0.2969), 1);
    EXPECT_EQ(classify_by_threshold(0.2968, 0.2969), 0);
}

TEST(Calcified, OverrideContractAndThreshold)
{
    const Grid g({20, 20, 20}, {1.0, 1.0, 1.0});
    CtVolume v(g, 40.0f);
    v.at(10, 10, 10) = 300.0f;
    v.at(5, 5, 10) = 300.0f;
    BinaryMask organ(g, 0);
    organ.at(11, 11, 10) = 1;
    const std::vector<BinaryMask> organs{organ};
    const CalcifiedResult r = detect_calcified(v, organs);
    EXPECT_EQ(r.mask.at(10, 10, 10), 0);
    EXPECT_EQ(r.mask.at(5, 5, 10), 1);
    EXPECT_EQ(r.components.size(), 1u);

    CalcifiedParams outside;
    outside.abdominal_range = AxialRange{0, 8};
    EXPECT_EQ(count_set(detect_calcified(v, organs, outside).mask), 0u);
    CalcifiedParams bad;
    bad.t_calc = 50.0f;
    EXPECT_THROW(detect_calcified(v, organs, bad), ArgumentError);
    const std::vector<BinaryMask> wrong{BinaryMask(Grid({4, 4, 4}, {1.0, 1.0, 1.0}), 0)};
    EXPECT_THROW(detect_calcified(v, wrong), GridMismatchError);
}

TEST(Calcified, ThreeNodesOfKnownSize)
{
    const Grid g({80, 80, 60}, {0.5, 0.5, 0.5});
    PhantomSpec s{g.dims, g.spacing, 40.0f, {}};
    s.primitives.push_back(Box{{10.0, 10.0, 15.0}, {4.0, 4.0, 4.0}, 60.0f}); // organ
    const std::array<double, 3> radii{2.0, 3.0, 4.0};
    const std::array<Vec3, 3> centres{{{25.1, 10.2, 15.3}, {10.4, 27.0, 15.1}, {27.3, 27.2, 12.2}}};
    for (std::size_t n = 0; n < 3; ++n)
        s.primitives.push_back(Sphere{centres[n], radii[n], 350.0f});
    s.primitives.push_back(Sphere{{10.0, 10.0, 15.0}, 2.0, 350.0f}); // inside the organ: never counted
    const CtVolume v = make_phantom(s);
    BinaryMask organ(g, 0);
    for (std::size_t k = 0; k < 60; ++k)
        for (std::size_t j = 0; j < 80; ++j)
            for (std::size_t i = 0; i < 80; ++i)
                organ.at(i, j, k) = std::fabs(i * 0.5 - 10.0) <= 4.0 && std::fabs(j * 0.5 - 10.0) <= 4.0 &&
                                    std::fabs(k * 0.5 - 15.0) <= 4.0;
    const std::vector<BinaryMask> organs{organ};
    const CalcifiedResult r = detect_calcified(v, organs);
    ASSERT_EQ(r.components.size(), 3u);
    double analytic = 0.0;
    for (double rr : radii)
        analytic += 4.0 / 3.0 * pi * rr * rr * rr;
    EXPECT_NEAR(r.volume_mm3, analytic, 0.10 * analytic);
    for (std::size_t n = 0; n < r.mask.size(); ++n)
        if (r.excluded[n]) {
            ASSERT_EQ(r.mask[n], 0);
        }
}

TEST(Necrotic, FluidNodeSurvivesNoiseDoesNot)
{
    const Grid g({40, 40, 40}, {1.0, 1.0, 1.0});
    PhantomSpec s{g.dims, g.spacing, 60.0f, {Sphere{{19.3, 19.6, 20.2}, 5.0, 15.0f}}};
    CtVolume v = make_phantom(s);
    v.at(5, 5, 5) = 15.0f;
    BinaryMask organ(g, 0);
    for (std::size_t k = 3; k < 37; ++k)
        for (std::size_t j = 3; j < 37; ++j)
            for (std::size_t i = 3; i < 37; ++i)
                organ.at(i, j, k) = 1;
    const std::vector<BinaryMask> organs{organ};
    const BinaryMask no_fat(g, 0);
    const NecroticResult r = detect_necrotic(v, organs, no_fat);
    EXPECT_EQ(r.mask.at(5, 5, 5), 0);
    const double analytic = 4.0 / 3.0 * pi * 125.0;
    EXPECT_NEAR(r.volume_mm3, analytic, 0.25 * analytic);

    NecroticParams raw;
    raw.erosion_iters = 0;
    raw.dilation_radius = 0;
    EXPECT_EQ(detect_necrotic(v, organs, no_fat, raw).mask.at(5, 5, 5), 1);

    BinaryMask fat(g, 0);
    for (std::size_t n = 0; n < fat.size(); ++n)
        fat[n] = 1;
    EXPECT_EQ(count_set(detect_necrotic(v, organs, fat).mask), 0u);
    NecroticParams bad;
    bad.t_low = 40.0f;
    EXPECT_THROW(detect_necrotic(v, organs, no_fat, bad), ArgumentError);
}

TEST(Ptb, MatchesArbitraryPrecisionOracle)
{
    std::ifstream in(testutil::data_file("ptb_oracle.csv"));
    ASSERT_TRUE(in.good());
    std::string line;
    std::getline(in, line);
    int rows = 0;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string zs, ps;
        std::getline(ss, zs, ',');
        std::getline(ss, ps);
        const double z = std::stod(zs), want = std::strtod(ps.c_str(), nullptr);
        const double got = ptb_probability(z);
        EXPECT_LE(std::fabs(got - want), 1e-9) << zs;
        if (want > 1e-300) {
            EXPECT_LE(std::fabs(got - want), 4e-16 * want) << zs;
        }
        ++rows;
    }
    EXPECT_GE(rows, 10);
    EXPECT_NEAR(ptb_probability(-10.0), 4.54e-5, 1e-7);
    EXPECT_EQ(ptb_probability(0.0), 0.5);
    EXPECT_THROW(ptb_probability(std::nan("")), NumericError);
    EXPECT_THROW(ptb_probability(INFINITY), NumericError);
}

TEST(Features, AssembleOrderAndErrors)
{
    const FeatureVector z = assemble_features("c0", {}, {}, 0.3, 0.0, 0.0);
    for (std::size_t i = 0; i < FeatureVector::size; ++i)
        EXPECT_EQ(z.values[i], FeatureVector::names[i] == std::string("ptb_prob") ? 0.3 : 0.0);
    CombAggregates comb{{1.0, 0.1, 10}, {2.0, 0.2, 10}, {3.0, 0.3, 10}};
    FatResult fat;
    fat.fat_ratio = 0.4;
    fat.ratio_min = 0.35;
    fat.ratio_max = 0.45;
    const FeatureVector f = assemble_features("c1", comb, fat, 0.5, 7.0, 8.0);
    EXPECT_EQ(f.values, (std::array<double, 12>{1.0, 0.1, 2.0, 0.2, 3.0, 0.3, 0.4, 0.35, 0.45, 0.5, 7.0, 8.0}));
    EXPECT_EQ(f["necrotic_volume"], 8.0);
    EXPECT_THROW(f["nope"], ArgumentError);
    fat.fat_ratio = std::nan("");
    try {
        assemble_features("c2", comb, fat, 0.5, 0.0, 0.0);
        FAIL();
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("fat_ratio"), std::string::npos);
    }
    fat.fat_ratio = 0.4;
    EXPECT_THROW(assemble_features("c3", comb, fat, 1.5, 0.0, 0.0), ArgumentError);
    EXPECT_THROW(assemble_features("c4", comb, fat, 0.5, -1.0, 0.0), ArgumentError);
}
