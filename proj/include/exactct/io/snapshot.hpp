#ifndef EXACTCT_IO_SNAPSHOT_HPP
#define EXACTCT_IO_SNAPSHOT_HPP

// Versioned JSON documents for trained models.

#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "../error.hpp"
#include "../ml/model.hpp"

namespace exactct {

using Json = nlohmann::json;

constexpr int snapshot_version = 1;

struct ModelSnapshot
{
    Model model;
    std::vector<std::string> features;
    std::vector<std::vector<double>> background; ///< default SHAP background (training rows)
    int positive_label = 1;
};

namespace snapshot_detail {

inline Json tree_to_json(const Tree& t)
{
    Json nodes = Json::array();
    for (const auto& n : t.nodes)
        nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right},
                         {"value", n.value}});
    return nodes;
}

inline Tree tree_from_json(const Json& j)
{
    Tree t;
    for (const auto& n : j)
        t.nodes.push_back({n.at("feature").get<int>(), n.at("threshold").get<double>(), n.at("left").get<int>(),
                           n.at("right").get<int>(), n.at("value").get<double>()});
    return t;
}

inline Json xgb_tree_to_json(const XgbTree& t)
{
    Json nodes = Json::array();
    for (const auto& n : t.nodes)
        nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right},
                         {"weight", n.weight}, {"cover", n.cover}, {"gain", n.gain}});
    return nodes;
}

inline XgbTree xgb_tree_from_json(const Json& j)
{
    XgbTree t;
    for (const auto& n : j)
        t.nodes.push_back({n.at("feature").get<int>(), n.at("threshold").get<double>(), n.at("left").get<int>(),
                           n.at("right").get<int>(), n.at("weight").get<double>(), n.at("cover").get<double>(),
                           n.at("gain").get<double>()});
    return t;
}

inline void check_tree(const auto& nodes, const char* what)
{
    const int n = static_cast<int>(nodes.size());
    if (n == 0)
        throw ParseError("trees", std::string(what) + ": empty tree");
    for (const auto& node : nodes)
        if (node.feature >= 0 && (node.left <= 0 || node.left >= n || node.right <= 0 || node.right >= n))
            throw ParseError("trees", std::string(what) + ": child index out of range");
}

} // namespace snapshot_detail

inline Json model_to_json(const Model& m)
{
    using namespace snapshot_detail;
    Json j;
    j["kind"] = model_kind(m);
    if (const auto* l = std::get_if<LinearModel>(&m)) {
        j["w"] = l->w;
        j["b"] = l->b;
        j["standardizer"] = {{"mean", l->standardizer.mean}, {"scale", l->standardizer.scale}};
        j["trace"] = l->trace;
    } else if (const auto* g = std::get_if<GnbModel>(&m)) {
        j["prior"] = g->prior;
        j["mean"] = g->mean;
        j["var"] = g->var;
        j["var_floor"] = g->var_floor;
    } else if (const auto* f = std::get_if<ForestModel>(&m)) {
        j["seed"] = f->seed;
        j["arity"] = f->arity;
        j["trees"] = Json::array();
        for (const auto& t : f->trees)
            j["trees"].push_back(tree_to_json(t));
    } else if (const auto* b = std::get_if<GbmModel>(&m)) {
        j["f0"] = b->f0;
        j["eta"] = b->eta;
        j["arity"] = b->arity;
        j["trace"] = b->trace;
        j["trees"] = Json::array();
        for (const auto& t : b->trees)
            j["trees"].push_back(tree_to_json(t));
    } else if (const auto* e = std::get_if<TreeEnsemble>(&m)) {
        j["base_score"] = e->base_score;
        j["arity"] = e->arity;
        j["hyper"] = {{"eta", e->hyper.eta},       {"gamma", e->hyper.gamma},   {"lambda", e->hyper.lambda},
                      {"max_depth", e->hyper.max_depth}, {"rounds", e->hyper.rounds},
                      {"min_child_hessian", e->hyper.min_child_hessian}};
        j["trace"] = e->trace;
        j["trees"] = Json::array();
        for (const auto& t : e->trees)
            j["trees"].push_back(xgb_tree_to_json(t));
    }
    return j;
}

inline Model model_from_json(const Json& j)
{
    using namespace snapshot_detail;
    try {
        const std::string kind = j.at("kind").get<std::string>();
        require_model_kind(kind);
        if (kind == "logistic" || kind == "svm") {
            LinearModel l;
            l.kind = kind == "svm" ? LinearKind::svm : LinearKind::logistic;
            l.w = j.at("w").get<std::vector<double>>();
            l.b = j.at("b").get<double>();
            l.standardizer.mean = j.at("standardizer").at("mean").get<std::vector<double>>();
            l.standardizer.scale = j.at("standardizer").at("scale").get<std::vector<double>>();
            l.trace = j.value("trace", std::vector<double>{});
            return l;
        }
        if (kind == "gnb") {
            GnbModel g;
            g.prior = j.at("prior").get<std::array<double, 2>>();
            g.mean = j.at("mean").get<std::array<std::vector<double>, 2>>();
            g.var = j.at("var").get<std::array<std::vector<double>, 2>>();
            g.var_floor = j.at("var_floor").get<double>();
            return g;
        }
        if (kind == "forest") {
            ForestModel f;
            f.seed = j.at("seed").get<std::uint64_t>();
            f.arity = j.at("arity").get<std::size_t>();
            for (const auto& t : j.at("trees")) {
                f.trees.push_back(tree_from_json(t));
                check_tree(f.trees.back().nodes, "forest");
            }
            return f;
        }
        if (kind == "gbm") {
            GbmModel b;
            b.f0 = j.at("f0").get<double>();
            b.eta = j.at("eta").get<double>();
            b.arity = j.at("arity").get<std::size_t>();
            b.trace = j.value("trace", std::vector<double>{});
            for (const auto& t : j.at("trees")) {
                b.trees.push_back(tree_from_json(t));
                check_tree(b.trees.back().nodes, "gbm");
            }
            return b;
        }
        TreeEnsemble e;
        e.base_score = j.at("base_score").get<double>();
        e.arity = j.at("arity").get<std::size_t>();
        const Json& h = j.at("hyper");
        e.hyper = {h.at("eta").get<double>(),    h.at("gamma").get<double>(), h.at("lambda").get<double>(),
                   h.at("max_depth").get<int>(), h.at("rounds").get<int>(),  h.at("min_child_hessian").get<double>()};
        e.trace = j.value("trace", std::vector<double>{});
        for (const auto& t : j.at("trees")) {
            e.trees.push_back(xgb_tree_from_json(t));
            check_tree(e.trees.back().nodes, "xgb");
        }
        return e;
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError("model", std::string("malformed model snapshot: ") + ex.what());
    }
}

inline Json snapshot_to_json(const ModelSnapshot& s)
{
    return {{"format", "exactct-model"},
            {"version", snapshot_version},
            {"positive_label", s.positive_label},
            {"features", s.features},
            {"background", s.background},
            {"model", model_to_json(s.model)}};
}

inline ModelSnapshot snapshot_from_json(const Json& j)
{
    try {
        if (j.at("format").get<std::string>() != "exactct-model")
            throw ParseError("format", "not a model snapshot");
        if (j.at("version").get<int>() != snapshot_version)
            throw ParseError("version", "unsupported model snapshot version");
        ModelSnapshot s;
        s.positive_label = j.at("positive_label").get<int>();
        s.features = j.at("features").get<std::vector<std::string>>();
        s.background = j.value("background", std::vector<std::vector<double>>{});
        s.model = model_from_json(j.at("model"));
        return s;
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError("snapshot", std::string("malformed model snapshot: ") + ex.what());
    }
}

inline Json read_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open " + path);
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError("json", path + ": " + ex.what());
    }
}

inline void write_json(const std::string& path, const Json& j)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out)
        throw IoError("failed writing " + path);
}

inline void save_snapshot(const std::string& path, const ModelSnapshot& s) { write_json(path, snapshot_to_json(s)); }
inline ModelSnapshot load_snapshot(const std::string& path) { return snapshot_from_json(read_json(path)); }

} // namespace exactct

#endif // EXACTCT_IO_SNAPSHOT_HPP
