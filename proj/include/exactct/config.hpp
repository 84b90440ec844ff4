#ifndef EXACTCT_CONFIG_HPP
#define EXACTCT_CONFIG_HPP

// Layered configuration: built-in defaults, then a JSON file, then key=value
// overrides addressed by dotted paths (vessel.s_max=5).

#include <string>
#include <vector>

#include "json.hpp"

#include "biomarkers.hpp"
#include "error.hpp"
#include "ml/bayes.hpp"
#include "ml/linear.hpp"
#include "ml/trees.hpp"
#include "xgb.hpp"

namespace exactct {

using Json = nlohmann::json;

inline Json default_config()
{
    return Json::parse(R"({
  "seed": 0,
  "vessel": {"s_min": 1.0, "s_max": 4.0, "scales": 5, "alpha": 0.5, "beta": 0.5, "c": null,
             "c_mode": "per_scale", "polarity": "bright"},
  "refine": {"lambda": [0.5, 0.5, 0.5]},
  "distance": {"sigma": 10.0, "keep_percentile": 95.0},
  "wall": {"k_min": 1, "k_max": 6, "max_samples": 2000000, "bin_width": 0.25, "restarts": 5},
  "fat": {"rays": 720},
  "calcified": {"h_calc": 0.0, "t_calc": 130.0, "dilation_radius": 2, "edge_margin": 2, "abdominal_range": null},
  "necrotic": {"t_low": 0.0, "t_high": 30.0, "roi_dilation": 2, "erosion_iters": 2, "dilation_radius": 2},
  "ptb": {"default_prob": 0.5},
  "models": {
    "logistic": {"l2": 0.01, "lr": 1.0, "iters": 2000},
    "svm": {"c": 1.0, "max_iter": 100000, "seed": 0},
    "gnb": {"var_floor": 1e-9},
    "forest": {"trees": 100, "max_depth": 5, "bootstrap": true, "max_features": 0, "seed": 0},
    "gbm": {"eta": 0.1, "stages": 100, "max_depth": 3},
    "xgb": {"eta": 0.3, "gamma": 0.0, "lambda": 1.0, "max_depth": 3, "rounds": 50, "min_child_hessian": 0.001}
  },
  "render": {"window": [-150.0, 250.0]},
  "synth": {"dims": [96, 96, 32], "spacing": 1.5, "noise_sigma": 5.0, "max_shift_voxels": 2,
            "fat_ratio_low": [0.1, 0.3], "fat_ratio_shift": 0.5,
            "tube_prob_positive": 0.7, "tube_prob_negative": 0.3,
            "calcified_prob": 0.35, "necrotic_prob": 0.35}
})");
}

/// Applies one "a.b.c=value" override; the value is parsed as JSON when it can be.
inline void apply_override(Json& cfg, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ArgumentError("config override must look like key.path=value: " + assignment);
    const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
    Json value;
    try {
        value = Json::parse(text);
    } catch (const nlohmann::json::exception&) {
        value = text;
    }
    Json* node = &cfg;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty())
            throw ArgumentError("config override has an empty key segment: " + key);
        if (dot == std::string::npos) {
            (*node)[part] = value;
            break;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

inline Json layered_config(const Json& file_layer, const std::vector<std::string>& overrides)
{
    Json cfg = default_config();
    if (!file_layer.is_null()) {
        if (!file_layer.is_object())
            throw ParseError("config", "config file must hold a JSON object");
        cfg.merge_patch(file_layer);
    }
    for (const auto& o : overrides)
        apply_override(cfg, o);
    return cfg;
}

namespace config_detail {

template <typename T>
T get(const Json& j, const char* section, const char* key)
{
    try {
        return j.at(section).at(key).get<T>();
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(std::string(section) + "." + key, "config " + std::string(section) + "." + key + ": " +
                                                               ex.what());
    }
}

} // namespace config_detail

inline VesselParams vessel_params(const Json& cfg)
{
    using config_detail::get;
    VesselParams p;
    p.s_min = get<double>(cfg, "vessel", "s_min");
    p.s_max = get<double>(cfg, "vessel", "s_max");
    p.scale_count = get<int>(cfg, "vessel", "scales");
    p.alpha = get<double>(cfg, "vessel", "alpha");
    p.beta = get<double>(cfg, "vessel", "beta");
    if (!cfg.at("vessel").at("c").is_null())
        p.c = get<double>(cfg, "vessel", "c");
    const auto mode = get<std::string>(cfg, "vessel", "c_mode");
    if (mode != "per_scale" && mode != "global")
        throw ParseError("vessel.c_mode", "vessel.c_mode must be per_scale or global");
    p.c_mode = mode == "global" ? StructurenessScale::global : StructurenessScale::per_scale;
    const auto pol = get<std::string>(cfg, "vessel", "polarity");
    if (pol != "bright" && pol != "dark")
        throw ParseError("vessel.polarity", "vessel.polarity must be bright or dark");
    p.polarity = pol == "dark" ? Polarity::dark : Polarity::bright;
    p.validate();
    return p;
}

inline CombParams comb_params(const Json& cfg)
{
    using config_detail::get;
    CombParams p;
    p.vessel = vessel_params(cfg);
    p.refine.lambdas = get<std::vector<double>>(cfg, "refine", "lambda");
    p.refine.validate();
    p.distance.sigma = get<double>(cfg, "distance", "sigma");
    p.distance.keep_percentile = get<double>(cfg, "distance", "keep_percentile");
    p.distance.validate();
    const int k0 = get<int>(cfg, "wall", "k_min"), k1 = get<int>(cfg, "wall", "k_max");
    if (k0 < 1 || k1 < k0)
        throw ParseError("wall.k_min", "wall: need 1 <= k_min <= k_max");
    p.wall.k_range.clear();
    for (int k = k0; k <= k1; ++k)
        p.wall.k_range.push_back(k);
    p.wall.max_samples = get<std::size_t>(cfg, "wall", "max_samples");
    p.wall.gmm.bin_width = get<double>(cfg, "wall", "bin_width");
    p.wall.gmm.restarts = get<int>(cfg, "wall", "restarts");
    return p;
}

inline FatParams fat_params(const Json& cfg)
{
    FatParams p;
    p.rays = config_detail::get<int>(cfg, "fat", "rays");
    return p;
}

inline CalcifiedParams calcified_params(const Json& cfg)
{
    using config_detail::get;
    CalcifiedParams p;
    p.h_calc = get<float>(cfg, "calcified", "h_calc");
    p.t_calc = get<float>(cfg, "calcified", "t_calc");
    p.dilation_radius = get<int>(cfg, "calcified", "dilation_radius");
    p.edge_margin = get<int>(cfg, "calcified", "edge_margin");
    const Json& r = cfg.at("calcified").at("abdominal_range");
    if (!r.is_null()) {
        const auto v = r.get<std::vector<std::size_t>>();
        if (v.size() != 2)
            throw ParseError("calcified.abdominal_range", "abdominal_range must be [first, last]");
        p.abdominal_range = AxialRange{v[0], v[1]};
    }
    p.validate();
    return p;
}

inline NecroticParams necrotic_params(const Json& cfg)
{
    using config_detail::get;
    NecroticParams p;
    p.t_low = get<float>(cfg, "necrotic", "t_low");
    p.t_high = get<float>(cfg, "necrotic", "t_high");
    p.roi_dilation = get<int>(cfg, "necrotic", "roi_dilation");
    p.erosion_iters = get<int>(cfg, "necrotic", "erosion_iters");
    p.dilation_radius = get<int>(cfg, "necrotic", "dilation_radius");
    p.validate();
    return p;
}

inline const Json& model_config(const Json& cfg, const std::string& kind)
{
    try {
        return cfg.at("models").at(kind);
    } catch (const nlohmann::json::exception&) {
        throw ParseError("models." + kind, "config has no models." + kind + " section");
    }
}

inline LogisticParams logistic_params(const Json& m)
{
    return {m.at("l2").get<double>(), m.at("lr").get<double>(), m.at("iters").get<int>()};
}

inline SvmParams svm_params(const Json& m)
{
    SvmParams p;
    p.c = m.at("c").get<double>();
    p.max_iter = m.at("max_iter").get<int>();
    p.seed = m.at("seed").get<std::uint64_t>();
    return p;
}

inline ForestParams forest_params(const Json& m)
{
    return {m.at("trees").get<int>(), m.at("max_depth").get<int>(), m.at("bootstrap").get<bool>(),
            m.at("max_features").get<int>(), m.at("seed").get<std::uint64_t>()};
}

inline GbmParams gbm_params(const Json& m)
{
    return {m.at("eta").get<double>(), m.at("stages").get<int>(), m.at("max_depth").get<int>()};
}

inline XgbHyper xgb_hyper(const Json& m)
{
    XgbHyper h{m.at("eta").get<double>(),    m.at("gamma").get<double>(), m.at("lambda").get<double>(),
               m.at("max_depth").get<int>(), m.at("rounds").get<int>(),  m.at("min_child_hessian").get<double>()};
    h.validate();
    return h;
}

} // namespace exactct

#endif // EXACTCT_CONFIG_HPP
