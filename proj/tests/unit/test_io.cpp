#include <cmath>
#include <fstream>
#include <limits>

#include <gtest/gtest.h>

#include "exactct/io/csv.hpp"
#include "exactct/io/overlay.hpp"
#include "exactct/io/snapshot.hpp"
#include "exactct/config.hpp"
#include "exactct/rng.hpp"
#include "test_util.hpp"

using namespace exactct;
using testutil::TempDir;

namespace {

std::vector<FeatureVector> random_features(std::size_t n, std::uint64_t seed)
{
    Rng rng(seed, 0x6376);
    std::vector<FeatureVector> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
        rows[i].case_id = "c" + std::to_string(i);
        for (auto& v : rows[i].values)
            v = std::ldexp(rng.uniform(-1.0, 1.0), static_cast<int>(rng.index(80)) - 40);
    }
    return rows;
}

std::vector<unsigned char> file_bytes(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const std::string& path, const std::string& text)
{
    std::ofstream(path, std::ios::binary) << text;
}

} // namespace

TEST(Csv, SeventeenDigitsRoundTrip)
{
    Rng rng(1);
    std::vector<double> vals{0.0, -0.0, 0.1, 1.0 / 3.0, std::numeric_limits<double>::max(),
                             std::numeric_limits<double>::denorm_min(), std::numeric_limits<double>::min(),
                             -1833.6936, 0.2969};
    for (int i = 0; i < 10000; ++i)
        vals.push_back(std::ldexp(rng.uniform(-1.0, 1.0), static_cast<int>(rng.index(600)) - 300));
    for (double v : vals) {
        const double back = parse_double(format_double(v), "x");
        ASSERT_EQ(back, v) << format_double(v);
        ASSERT_EQ(std::signbit(back), std::signbit(v));
    }
}

TEST(Csv, ParseErrorsNameTheField)
{
    for (const char* bad : {"", "1.0x", "nan", "inf", "1e999", " 1"})
        EXPECT_THROW(parse_double(bad, "fat_ratio"), ParseError) << '"' << bad << '"';
    try {
        parse_double("abc", "fat_ratio");
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("fat_ratio"), std::string::npos);
    }
}

TEST(Csv, FeatureTableRoundTrip)
{
    TempDir tmp;
    const auto rows = random_features(25, 2);
    write_features_csv(tmp / "f.csv", rows);
    const auto back = read_features_csv(tmp / "f.csv");
    ASSERT_EQ(back.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(back[i].case_id, rows[i].case_id);
        EXPECT_EQ(back[i].values, rows[i].values);
    }
    write_features_csv(tmp / "g.csv", back);
    EXPECT_EQ(file_bytes(tmp / "f.csv"), file_bytes(tmp / "g.csv"));
    EXPECT_EQ(feature_header().size(), 13u);
    EXPECT_EQ(feature_header()[0], "case_id");
}

TEST(Csv, MalformedTables)
{
    TempDir tmp;
    write_text(tmp / "swapped.csv", "case_id,fat_ratio\nx,1\n");
    EXPECT_THROW(read_features_csv(tmp / "swapped.csv"), ParseError);
    write_text(tmp / "ragged.csv", "a,b\n1,2\n3\n");
    EXPECT_THROW(read_csv(tmp / "ragged.csv"), ParseError);
    write_text(tmp / "empty.csv", "");
    EXPECT_THROW(read_csv(tmp / "empty.csv"), ParseError);
    EXPECT_THROW(read_csv(tmp / "absent.csv"), IoError);
    write_text(tmp / "crlf.csv", "a,b\r\n1,\r\n");
    const CsvTable t = read_csv(tmp / "crlf.csv");
    ASSERT_EQ(t.rows.size(), 1u);
    EXPECT_EQ(t.rows[0][1], "");
}

TEST(Csv, LabelsAndDatasetJoin)
{
    TempDir tmp;
    write_labels_csv(tmp / "l.csv", {{"c0", 1}, {"c1", 0}, {"c2", 1}});
    const auto labels = read_labels_csv(tmp / "l.csv");
    EXPECT_EQ(labels.size(), 3u);
    EXPECT_EQ(labels.at("c1"), 0);
    const Dataset d = make_dataset(random_features(3, 3), labels);
    EXPECT_EQ(d.y, (std::vector<int>{1, 0, 1}));
    EXPECT_EQ(d.features.size(), 12u);
    EXPECT_THROW(make_dataset(random_features(4, 3), labels), ArgumentError);

    write_text(tmp / "two.csv", "case_id,label\nc0,2\n");
    EXPECT_THROW(read_labels_csv(tmp / "two.csv"), ParseError);
    write_text(tmp / "dup.csv", "case_id,label\nc0,1\nc0,0\n");
    EXPECT_THROW(read_labels_csv(tmp / "dup.csv"), ParseError);
}

TEST(Snapshot, EveryKindReloadsWithIdenticalScores)
{
    TempDir tmp;
    Dataset d;
    Rng rng(4);
    for (int i = 0; i < 60; ++i) {
        d.x.push_back({rng.normal() + (i % 2), rng.normal(), rng.uniform()});
        d.y.push_back(i % 2);
    }
    d.features = {"a", "b", "c"};
    const std::vector<Model> models{train_logistic(d), train_svm(d), train_gnb(d), train_forest(d, {9, 4, true, 0, 3}),
                                    train_gbm(d, {0.2, 20, 2}), train_xgb(d, XgbHyper{})};
    for (const auto& m : models) {
        const std::string path = tmp / (model_kind(m) + ".json");
        save_snapshot(path, {m, d.features, d.x, 1});
        const ModelSnapshot s = load_snapshot(path);
        EXPECT_EQ(model_kind(s.model), model_kind(m));
        EXPECT_EQ(s.features, d.features);
        EXPECT_EQ(s.background, d.x);
        EXPECT_EQ(predict_score(s.model, d.x), predict_score(m, d.x)) << model_kind(m);
    }
    Json j = snapshot_to_json({models[0], d.features, {}, 1});
    j["version"] = 99;
    EXPECT_THROW(snapshot_from_json(j), ParseError);
    j["version"] = snapshot_version;
    j["format"] = "other";
    EXPECT_THROW(snapshot_from_json(j), ParseError);
    j = snapshot_to_json({models[5], d.features, {}, 1});
    j["model"].erase("trees");
    EXPECT_THROW(snapshot_from_json(j), ParseError);
    write_text(tmp / "junk.json", "{not json");
    EXPECT_THROW(load_snapshot(tmp / "junk.json"), ParseError);
}

TEST(Overlay, BundleLayoutAndBytes)
{
    TempDir tmp;
    const Grid g({5, 4, 3}, {0.5, 0.5, 2.0});
    CtVolume ct(g, 0.0f);
    for (std::size_t n = 0; n < ct.size(); ++n)
        ct[n] = static_cast<float>(n) - 30.0f;
    ProbabilityVolume p(g, 0.0f);
    p.at(1, 2, 0) = 0.75f;
    BinaryMask m(g, 0);
    m.at(4, 3, 2) = 1;

    OverlayBundle b;
    b.grid = g;
    b.layers = {base_layer(ct), make_layer("comb_sign", LayerKind::probability, palette::comb, p),
                make_layer("fat_ratio", LayerKind::mask, palette::fat, m)};
    write_overlay_bundle(tmp.path().string(), b);

    const Json man = read_json(tmp / "manifest.json");
    EXPECT_EQ(man.at("format"), "exactct-overlay");
    EXPECT_EQ(man.at("dims"), Json::array({5, 4, 3}));
    EXPECT_EQ(man.at("window"), Json::array({-150.0, 250.0}));
    ASSERT_EQ(man.at("layers").size(), 3u);
    EXPECT_EQ(man.at("layers")[1].at("color"), Json::array({255, 0, 0}));
    EXPECT_EQ(man.at("layers")[2].at("color"), Json::array({255, 255, 0}));
    EXPECT_EQ(man.at("layers")[1].at("value_range"), Json::array({0.0, 0.75}));
    for (const auto& l : man.at("layers")) {
        const std::string f = tmp / l.at("file").get<std::string>();
        EXPECT_EQ(std::filesystem::file_size(f), g.count() * 4);
    }
    EXPECT_EQ(read_f32_le(tmp / "ct.bin"), ct.storage());
    // x-fastest order, little-endian: voxel (1, 2, 0) is element 1 + 2 * 5
    const auto bytes = file_bytes(tmp / "comb_sign.bin");
    EXPECT_EQ(bytes[4 * 11 + 0], 0x00);
    EXPECT_EQ(bytes[4 * 11 + 1], 0x00);
    EXPECT_EQ(bytes[4 * 11 + 2], 0x40);
    EXPECT_EQ(bytes[4 * 11 + 3], 0x3f);

    b.layers.push_back(make_layer("bad", LayerKind::mask, palette::necrotic, BinaryMask(Grid({2, 2, 2}, {1, 1, 1}), 0)));
    EXPECT_THROW(write_overlay_bundle(tmp / "again", b), GridMismatchError);
    EXPECT_THROW(write_overlay_bundle(tmp / "none", OverlayBundle{}), ArgumentError);
}

TEST(Config, LayeringAndOverrides)
{
    Json file = Json::parse(R"({"vessel": {"s_max": 6.0}, "seed": 3})");
    const Json cfg = layered_config(file, {"vessel.s_min=0.5", "models.xgb.rounds=7", "render.window=[-100,200]",
                                           "vessel.polarity=dark"});
    EXPECT_EQ(cfg.at("seed"), 3);
    EXPECT_EQ(cfg.at("vessel").at("scales"), 5);
    const VesselParams vp = vessel_params(cfg);
    EXPECT_EQ(vp.s_min, 0.5);
    EXPECT_EQ(vp.s_max, 6.0);
    EXPECT_EQ(vp.polarity, Polarity::dark);
    EXPECT_EQ(xgb_hyper(model_config(cfg, "xgb")).rounds, 7);
    EXPECT_EQ(cfg.at("render").at("window"), Json::array({-100, 200}));
    EXPECT_EQ(layered_config(nullptr, {}), default_config());

    EXPECT_THROW(layered_config(nullptr, {"no_equals"}), ArgumentError);
    EXPECT_THROW(layered_config(nullptr, {"a..b=1"}), ArgumentError);
    EXPECT_THROW(layered_config(Json::array({1}), {}), ParseError);
    EXPECT_THROW(vessel_params(layered_config(nullptr, {"vessel.s_max=\"big\""})), ParseError);
}
