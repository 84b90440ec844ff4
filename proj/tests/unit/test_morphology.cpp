#include <map>

#include <gtest/gtest.h>

#include "exactct/morphology.hpp"
#include "exactct/synth.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace exactct;

namespace {

const Grid g16({16, 16, 16}, {1.0, 1.0, 1.0});

BinaryMask solid_cube(const Grid& g, std::size_t lo, std::size_t hi)
{
    BinaryMask m(g, 0);
    for (std::size_t k = lo; k <= hi; ++k)
        for (std::size_t j = lo; j <= hi; ++j)
            for (std::size_t i = lo; i <= hi; ++i)
                m.at(i, j, k) = 1;
    return m;
}

} // namespace

TEST(Threshold, ClosedInterval)
{
    CtVolume v(Grid({3, 1, 1}, {1.0, 1.0, 1.0}), std::vector<float>{-50.0f, -49.5f, -500.0f});
    const BinaryMask m = threshold_range(v, -500.0f, -50.0f);
    EXPECT_EQ(m[0], 1);
    EXPECT_EQ(m[1], 0);
    EXPECT_EQ(m[2], 1);
    EXPECT_THROW(threshold_range(v, 1.0f, 0.0f), ArgumentError);
}

TEST(Threshold, AnnulusPhantomRecoveredExactly)
{
    PhantomSpec spec{{40, 40, 3}, {1.0, 1.0, 1.0}, air_hu, {}};
    spec.primitives.push_back(Cylinder{{19.5, 19.5, 1.0}, 18.0, 5.0, 2, 40.0f});
    const AnnulusSlab ring{{19.5, 19.5, 1.0}, 12.0, 16.0, 5.0, -80.0f};
    spec.primitives.push_back(ring);
    const BinaryMask m = threshold_range(make_phantom(spec), -500.0f, -50.0f);
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t j = 0; j < 40; ++j)
            for (std::size_t i = 0; i < 40; ++i) {
                const double r = std::hypot(i - 19.5, j - 19.5);
                ASSERT_EQ(m.at(i, j, k), r >= 12.0 && r <= 16.0 ? 1 : 0) << i << "," << j;
            }
}

TEST(Morphology, IdentityAndSingletons)
{
    Rng rng(1);
    const BinaryMask m = testutil::random_mask(g16, 0.5, rng);
    EXPECT_EQ(erode(m, StructuringElement::cube(1), 0), m);
    EXPECT_EQ(dilate(m, StructuringElement::cube(1), 0), m);

    BinaryMask one(g16, 0);
    one.at(8, 8, 8) = 1;
    EXPECT_EQ(count_set(erode(one, StructuringElement::cube(1))), 0u);
    const BinaryMask grown = dilate(one, StructuringElement::cube(1));
    EXPECT_EQ(grown, solid_cube(g16, 7, 9));
}

TEST(Morphology, SolidCubeErosionAndOpening)
{
    const Grid g({15, 15, 15}, {1.0, 1.0, 1.0});
    const BinaryMask c11 = solid_cube(g, 2, 12);
    const BinaryMask eroded = erode(c11, StructuringElement::cube(1));
    EXPECT_EQ(eroded, solid_cube(g, 3, 11));
    EXPECT_EQ(eroded, oracle::morph(c11, true, 1, 1, false));
    EXPECT_EQ(dilate(eroded, StructuringElement::cube(1)), c11);
}

TEST(Morphology, MatchesBruteForceOnRandomMasks)
{
    Rng rng(2024);
    for (int trial = 0; trial < 20; ++trial) {
        const BinaryMask m = testutil::random_mask(g16, rng.uniform(0.2, 0.9), rng);
        const int r = 1 + static_cast<int>(rng.index(2));
        const int iters = 1 + static_cast<int>(rng.index(2));
        EXPECT_EQ(erode(m, StructuringElement::cube(r), iters), oracle::morph(m, true, r, iters, false));
        EXPECT_EQ(dilate(m, StructuringElement::cube(r), iters), oracle::morph(m, true, r, iters, true));
        EXPECT_EQ(erode(m, StructuringElement::cross(r), iters), oracle::morph(m, false, r, iters, false));
        EXPECT_EQ(dilate(m, StructuringElement::cross(r), iters), oracle::morph(m, false, r, iters, true));
    }
}

TEST(Morphology, OrderProperties)
{
    Rng rng(5);
    const BinaryMask m = testutil::random_mask(g16, 0.6, rng);
    const auto e = erode(m, StructuringElement::cube(1)), d = dilate(m, StructuringElement::cube(1));
    for (std::size_t v = 0; v < m.size(); ++v) {
        ASSERT_LE(e[v], m[v]);
        ASSERT_GE(d[v], m[v]);
    }
    // Duality under complement, away from the border.
    BinaryMask comp(g16, 0);
    for (std::size_t v = 0; v < m.size(); ++v)
        comp[v] = !m[v];
    const auto dc = dilate(comp, StructuringElement::cube(1));
    for (std::size_t k = 1; k < 15; ++k)
        for (std::size_t j = 1; j < 15; ++j)
            for (std::size_t i = 1; i < 15; ++i)
                ASSERT_EQ(e.at(i, j, k), !dc.at(i, j, k));
}

TEST(Union, Laws)
{
    Rng rng(9);
    const BinaryMask a = testutil::random_mask(g16, 0.3, rng), b = testutil::random_mask(g16, 0.3, rng);
    const BinaryMask empty(g16, 0);
    EXPECT_EQ(union_masks({a, empty}), a);
    EXPECT_EQ(union_masks({a, a}), a);
    EXPECT_EQ(union_masks({a, b}), union_masks({b, a}));
    BinaryMask p(g16, 0), q(g16, 0);
    p.at(0, 0, 0) = 1;
    q.at(5, 5, 5) = 1;
    EXPECT_EQ(count_set(union_masks({p, q})), 2u);
    const BinaryMask other(Grid({4, 4, 4}, {1.0, 1.0, 1.0}), 0);
    EXPECT_THROW(union_masks({a, other}), GridMismatchError);
}

TEST(Components, Definitions)
{
    EXPECT_TRUE(connected_components(BinaryMask(g16, 0)).empty());
    BinaryMask m(g16, 0);
    m.at(1, 1, 1) = 1;
    m.at(2, 2, 2) = 1;
    EXPECT_EQ(connected_components(m, 26).size(), 1u);
    EXPECT_EQ(connected_components(m, 6).size(), 2u);
}

TEST(Components, SamePartitionAsFloodFill)
{
    Rng rng(77);
    for (int trial = 0; trial < 20; ++trial)
        for (int conn : {6, 26}) {
            const BinaryMask m = testutil::random_mask(g16, rng.uniform(0.1, 0.5), rng);
            const Labeling got = label_components(m, conn);
            const auto want = oracle::flood_labels(m, conn);
            // Both label in raster order of first voxel, so the ids must agree outright.
            std::size_t total = 0;
            for (std::size_t v = 0; v < m.size(); ++v)
                ASSERT_EQ(static_cast<int>(got.labels[v]), want[v]);
            for (const auto& c : got.components)
                total += c.voxel_count;
            EXPECT_EQ(total, count_set(m));
        }
}

TEST(Percentile, NearestRank)
{
    ProbabilityVolume p(Grid({100, 1, 1}, {1.0, 1.0, 1.0}), 0.0f);
    for (std::size_t i = 0; i < 100; ++i)
        p[i] = static_cast<float>(i + 1) / 100.0f;
    EXPECT_EQ(percentile_threshold(p, 95.0), 0.95f);
    const ProbabilityVolume c(Grid({7, 3, 1}, {1.0, 1.0, 1.0}), 0.25f);
    for (double q : {0.0, 13.0, 50.0, 100.0})
        EXPECT_EQ(percentile_threshold(c, q), 0.25f);
    EXPECT_THROW(percentile_threshold(ProbabilityVolume(g16, 0.0f), 50.0, Population::nonzero), NumericError);

    Rng rng(11);
    const ProbabilityVolume r = testutil::random_probability(Grid({100, 100, 1}, {1.0, 1.0, 1.0}), rng);
    for (double q : {1.0, 5.0, 50.0, 95.0, 99.9})
        EXPECT_EQ(percentile_threshold(r, q), oracle::nearest_rank(r.storage(), q));
}
