#ifndef EXACTCT_PIPELINE_HPP
#define EXACTCT_PIPELINE_HPP

// Case manifests and the end-to-end commands behind the exactct tool.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "biomarkers.hpp"
#include "config.hpp"
#include "error.hpp"
#include "io/csv.hpp"
#include "io/overlay.hpp"
#include "io/snapshot.hpp"
#include "ml/metrics.hpp"
#include "ml/model.hpp"
#include "nifti.hpp"
#include "shap.hpp"

namespace exactct {

namespace fs = std::filesystem;

/// Worker cap from EXACTCT_THREADS, else the hardware concurrency.
inline unsigned thread_count()
{
    if (const char* env = std::getenv("EXACTCT_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1)
            return static_cast<unsigned>(v);
        throw ArgumentError("EXACTCT_THREADS must be a positive integer");
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// ---------------------------------------------------------------------------
// Manifests

struct CaseManifest
{
    std::string case_id;
    std::string ct;
    std::string intestine;
    std::vector<std::string> organs;
    std::map<std::string, std::string> vertebrae; ///< L3, L4, L5, S1
    std::optional<std::string> body;
    std::string visceral_fat;
    std::optional<double> ptb_logit;
    std::optional<int> label;
};

inline Json manifest_to_json(const CaseManifest& m)
{
    Json masks{{"intestine", m.intestine}, {"organs", m.organs}, {"visceral_fat", m.visceral_fat}};
    if (!m.vertebrae.empty())
        masks["vertebrae"] = m.vertebrae;
    if (m.body)
        masks["body"] = *m.body;
    Json j{{"case_id", m.case_id}, {"ct", m.ct}, {"masks", masks}};
    if (m.ptb_logit)
        j["ptb_logit"] = *m.ptb_logit;
    if (m.label)
        j["label"] = *m.label;
    return j;
}

/// Paths in the document are taken relative to the manifest's directory.
inline CaseManifest load_manifest(const std::string& path)
{
    const Json j = read_json(path);
    const fs::path dir = fs::path(path).parent_path();
    auto resolve = [&](const std::string& role, const Json& v) {
        if (!v.is_string())
            throw ArgumentError("manifest " + path + ": mask role '" + role + "' must be a path");
        const fs::path p = fs::path(v.get<std::string>());
        const fs::path full = p.is_absolute() ? p : dir / p;
        if (!fs::exists(full))
            throw IoError("manifest " + path + ": file for role '" + role + "' not found: " + full.string());
        return full.string();
    };
    auto require = [&](const Json& obj, const std::string& role) -> const Json& {
        if (!obj.is_object() || !obj.contains(role))
            throw ArgumentError("manifest " + path + ": missing mask role '" + role + "'");
        return obj.at(role);
    };

    CaseManifest m;
    if (!j.contains("case_id") || !j.at("case_id").is_string())
        throw ArgumentError("manifest " + path + ": missing case_id");
    m.case_id = j.at("case_id").get<std::string>();
    if (!j.contains("ct"))
        throw ArgumentError("manifest " + path + ": missing role 'ct'");
    m.ct = resolve("ct", j.at("ct"));
    const Json masks = j.value("masks", Json::object());
    m.intestine = resolve("intestine", require(masks, "intestine"));
    const Json& organs = require(masks, "organs");
    if (!organs.is_array())
        throw ArgumentError("manifest " + path + ": mask role 'organs' must be a list");
    for (const auto& o : organs)
        m.organs.push_back(resolve("organs", o));
    m.visceral_fat = resolve("visceral_fat", require(masks, "visceral_fat"));
    if (masks.contains("vertebrae"))
        for (const auto& [level, p] : masks.at("vertebrae").items()) {
            if (level != "L3" && level != "L4" && level != "L5" && level != "S1")
                throw ArgumentError("manifest " + path + ": unknown vertebra level '" + level + "'");
            m.vertebrae[level] = resolve(level, p);
        }
    if (masks.contains("body"))
        m.body = resolve("body", masks.at("body"));
    if (j.contains("ptb_logit") && !j.at("ptb_logit").is_null())
        m.ptb_logit = j.at("ptb_logit").get<double>();
    if (j.contains("label") && !j.at("label").is_null())
        m.label = j.at("label").get<int>();
    return m;
}

struct CaseVolumes
{
    CtVolume ct;
    BinaryMask intestine;
    std::vector<BinaryMask> organs;
    Vertebrae vertebrae;
    BinaryMask body;
    BinaryMask visceral_fat;
};

inline CaseVolumes load_case(const CaseManifest& m)
{
    CaseVolumes c;
    c.ct = read_nifti(m.ct);
    const Grid& g = c.ct.grid();
    auto mask = [&](const std::string& path, const std::string& role) {
        BinaryMask b = read_mask(path);
        if (!g.compatible(b.grid()))
            throw GridMismatchError("case " + m.case_id + ": mask '" + role + "' grid " + describe(b.grid().dims) +
                                    " does not match CT " + describe(g.dims));
        return b;
    };
    c.intestine = mask(m.intestine, "intestine");
    for (const auto& o : m.organs)
        c.organs.push_back(mask(o, "organs"));
    c.visceral_fat = mask(m.visceral_fat, "visceral_fat");
    for (const auto& [level, p] : m.vertebrae) {
        auto& slot = level == "L3" ? c.vertebrae.l3 : level == "L4" ? c.vertebrae.l4
                                                    : level == "L5" ? c.vertebrae.l5
                                                                    : c.vertebrae.s1;
        slot = mask(p, level);
    }
    c.body = m.body ? mask(*m.body, "body") : body_mask_from_hu(c.ct);
    return c;
}

// ---------------------------------------------------------------------------
// Extraction

struct CaseAnalysis
{
    FeatureVector features;
    CombMaps comb;
    FatResult fat;
    BinaryMask fat_mask;
    RegionSpec fat_region;
    CalcifiedResult calcified;
    NecroticResult necrotic;
};

inline CaseAnalysis analyse_case(const CaseManifest& m, const CaseVolumes& c, const Json& cfg,
                                 std::optional<double> ptb_logit = std::nullopt)
{
    CaseAnalysis a;
    const auto seed = cfg.at("seed").get<std::uint64_t>();
    a.comb = comb_sign_maps(c.ct, c.intestine, comb_params(cfg), seed);

    const BodyGeometry body = body_geometry(c.body);
    const Grid& g = c.ct.grid();
    CombAggregates agg{region_aggregate(a.comb.comb, make_region("L3S1_left", g, body, c.vertebrae)),
                       region_aggregate(a.comb.comb, make_region("L3S1_right", g, body, c.vertebrae)),
                       region_aggregate(a.comb.comb, make_region("anterior_central", g, body, c.vertebrae))};

    a.fat_region = make_region("L4L5", g, body, c.vertebrae);
    a.fat_mask = fat_mask(c.ct);
    a.fat = fat_ratio_from_mask(a.fat_mask, c.body, a.fat_region.axial, fat_params(cfg));

    a.calcified = detect_calcified(c.ct, c.organs, calcified_params(cfg));
    a.necrotic = detect_necrotic(c.ct, c.organs, c.visceral_fat, necrotic_params(cfg));

    const std::optional<double> z = m.ptb_logit ? m.ptb_logit : ptb_logit;
    const double ptb = z ? ptb_probability(*z) : cfg.at("ptb").at("default_prob").get<double>();
    a.features = assemble_features(m.case_id, agg, a.fat, ptb, a.calcified.volume_mm3, a.necrotic.volume_mm3);
    return a;
}

/// Features for every manifest, in input order; cases run on up to `threads` workers.
inline std::vector<FeatureVector> extract_features(const std::vector<std::string>& manifests, const Json& cfg,
                                                   const std::map<std::string, double>& ptb_logits = {},
                                                   unsigned threads = 1)
{
    std::vector<FeatureVector> out(manifests.size());
    std::vector<std::exception_ptr> errors(manifests.size());
    auto work = [&](std::size_t i) {
        try {
            const CaseManifest m = load_manifest(manifests[i]);
            const auto it = ptb_logits.find(m.case_id);
            const std::optional<double> z =
                it == ptb_logits.end() ? std::nullopt : std::optional<double>(it->second);
            out[i] = analyse_case(m, load_case(m), cfg, z).features;
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };
    const std::size_t workers = std::min<std::size_t>(std::max(1u, threads), manifests.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < manifests.size(); ++i)
            work(i);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < manifests.size(); i += workers)
                    work(i);
            });
        for (auto& t : pool)
            t.join();
    }
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    return out;
}

// ---------------------------------------------------------------------------
// Reports

inline const std::vector<std::string>& threshold_report_header()
{
    static const std::vector<std::string> h{"Metrics",     "AUC", "Threshold", "Specificity", "Sensitivity (Recall)",
                                            "MCC",         "Accuracy", "Balanced Accuracy"};
    return h;
}

inline const std::vector<std::string>& model_report_header()
{
    static const std::vector<std::string> h{"Models", "Accuracy", "Balanced Accuracy", "Recall", "Specificity",
                                            "PPV",    "F1 Score", "MCC",               "AUC"};
    return h;
}

struct ThresholdResult
{
    std::string feature;
    RocCurve train_curve;
    YoudenPoint youden;
    double auc = 0.0; ///< on the evaluation rows, in the training orientation
    Metrics metrics;  ///< on the evaluation rows
};

inline std::vector<double> column(const Dataset& d, std::size_t j)
{
    std::vector<double> v;
    for (const auto& r : d.x)
        v.push_back(r[j]);
    return v;
}

/// ROC and Youden threshold on `train`; metrics on `eval` (the training rows when absent).
inline ThresholdResult feature_threshold(const Dataset& train, const std::string& feature,
                                         const Dataset* eval = nullptr)
{
    train.require_both_classes();
    const std::size_t j = feature_index(feature);
    ThresholdResult r;
    r.feature = feature;
    const auto s = column(train, j);
    r.train_curve = roc_curve(s, train.y);
    r.youden = youden_threshold(r.train_curve);
    const Dataset& e = eval ? *eval : train;
    e.require_both_classes();
    const auto es = column(e, j);
    const auto ec = roc_curve(es, e.y,
                              r.train_curve.flipped ? Orientation::lower_positive : Orientation::higher_positive);
    r.auc = auc(ec);
    std::vector<int> pred;
    for (double v : es)
        pred.push_back(classify_by_threshold(v, r.youden.threshold, r.train_curve.flipped));
    r.metrics = confusion_metrics(pred, e.y);
    r.metrics.auc = r.auc;
    return r;
}

inline CsvTable threshold_report(const std::vector<ThresholdResult>& rows)
{
    CsvTable t;
    t.header = threshold_report_header();
    for (const auto& r : rows)
        t.rows.push_back({r.feature, format_double(r.auc), format_double(r.youden.threshold),
                          format_double(r.metrics.specificity), format_double(r.metrics.recall),
                          format_double(r.metrics.mcc), format_double(r.metrics.accuracy),
                          format_double(r.metrics.balanced_accuracy)});
    return t;
}

inline Model train_model(const std::string& kind, const Dataset& d, const Json& cfg)
{
    require_model_kind(kind);
    const Json& m = model_config(cfg, kind);
    try {
        if (kind == "logistic")
            return train_logistic(d, logistic_params(m));
        if (kind == "svm")
            return train_svm(d, svm_params(m));
        if (kind == "gnb")
            return train_gnb(d, m.at("var_floor").get<double>());
        if (kind == "forest")
            return train_forest(d, forest_params(m));
        if (kind == "gbm")
            return train_gbm(d, gbm_params(m));
        return train_xgb(d, xgb_hyper(m));
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError("models." + kind, "config models." + kind + ": " + ex.what());
    }
}

inline Metrics evaluate_model(const Model& m, const Dataset& d)
{
    const auto pred = predict_labels(m, d.x);
    Metrics r = confusion_metrics(pred, d.y);
    const auto scores = predict_score(m, d.x);
    r.auc = auc(roc_curve(scores, d.y, Orientation::higher_positive));
    return r;
}

inline CsvTable model_report(const std::vector<std::pair<std::string, Metrics>>& rows)
{
    CsvTable t;
    t.header = model_report_header();
    for (const auto& [name, m] : rows)
        t.rows.push_back({name, format_double(m.accuracy), format_double(m.balanced_accuracy),
                          format_double(m.recall), format_double(m.specificity), format_double(m.ppv),
                          format_double(m.f1), format_double(m.mcc), format_double(m.auc)});
    return t;
}

inline ModelSnapshot make_snapshot(const Model& m, const Dataset& train)
{
    return {m, train.features, train.x, positive_label};
}

// ---------------------------------------------------------------------------
// Explanations

struct ExplainResult
{
    CsvTable shap;       ///< case_id, phi0, phi per feature, margin
    CsvTable summary;    ///< feature, mean_abs_phi, rank
    CsvTable dependence; ///< case_id, feature, value, phi
    ShapSummary raw;
};

inline ExplainResult explain_cases(const ModelSnapshot& snap, const std::vector<FeatureVector>& rows,
                                   const std::optional<std::vector<FeatureVector>>& background = std::nullopt)
{
    const auto* ens = std::get_if<TreeEnsemble>(&snap.model);
    if (!ens)
        throw ArgumentError("explain needs an xgb snapshot, got " + model_kind(snap.model));
    const std::vector<std::string> names(FeatureVector::names.begin(), FeatureVector::names.end());
    if (snap.features != names)
        throw ArgumentError("explain: snapshot feature names do not match the feature CSV columns");
    std::vector<std::vector<double>> x, bg;
    for (const auto& f : rows)
        x.emplace_back(f.values.begin(), f.values.end());
    if (background)
        for (const auto& f : *background)
            bg.emplace_back(f.values.begin(), f.values.end());
    else
        bg = snap.background;

    ExplainResult r;
    r.raw = shap_global_summary(*ens, x, bg);
    r.shap.header = {"case_id", "phi0"};
    for (const auto& n : names)
        r.shap.header.push_back("phi_" + n);
    r.shap.header.push_back("margin");
    r.dependence.header = {"case_id", "feature", "value", "phi"};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& e = r.raw.samples[i];
        std::vector<std::string> line{rows[i].case_id, format_double(e.phi0)};
        for (std::size_t j = 0; j < names.size(); ++j) {
            line.push_back(format_double(e.phi[j]));
            r.dependence.rows.push_back({rows[i].case_id, names[j], format_double(x[i][j]), format_double(e.phi[j])});
        }
        line.push_back(format_double(e.fx));
        r.shap.rows.push_back(std::move(line));
    }
    r.summary.header = {"rank", "feature", "mean_abs_phi"};
    for (std::size_t k = 0; k < r.raw.ranking.size(); ++k) {
        const std::size_t j = r.raw.ranking[k];
        r.summary.rows.push_back({std::to_string(k + 1), names[j], format_double(r.raw.mean_abs[j])});
    }
    return r;
}

// ---------------------------------------------------------------------------
// Overlay bundle

inline OverlayBundle render_case(const CaseVolumes& c, const CaseAnalysis& a, const Json& cfg)
{
    OverlayBundle b;
    b.grid = c.ct.grid();
    const auto w = cfg.at("render").at("window").get<std::vector<double>>();
    if (w.size() != 2 || !(w[0] < w[1]))
        throw ArgumentError("render.window must be [lo, hi] with lo < hi");
    b.window = {w[0], w[1]};
    b.layers.push_back(base_layer(c.ct));
    b.layers.push_back(make_layer("comb_sign", LayerKind::probability, palette::comb, a.comb.comb));

    BinaryMask fat_band(c.ct.grid(), 0);
    const Dims& d = c.ct.dims();
    const std::size_t plane = d.nx * d.ny;
    for (std::size_t k = a.fat_region.axial.first; k <= a.fat_region.axial.last; ++k)
        std::copy_n(a.fat_mask.storage().begin() + static_cast<std::ptrdiff_t>(k * plane), plane,
                    fat_band.storage().begin() + static_cast<std::ptrdiff_t>(k * plane));
    b.layers.push_back(make_layer("fat_ratio", LayerKind::mask, palette::fat, fat_band));

    if (count_set(a.calcified.mask) > 0)
        b.layers.push_back(make_layer("calcified", LayerKind::mask, palette::calcified, a.calcified.mask));
    if (count_set(a.necrotic.mask) > 0)
        b.layers.push_back(make_layer("necrotic", LayerKind::mask, palette::necrotic, a.necrotic.mask));
    return b;
}

} // namespace exactct

#endif // EXACTCT_PIPELINE_HPP
