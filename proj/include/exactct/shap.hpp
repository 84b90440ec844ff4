#ifndef EXACTCT_SHAP_HPP
#define EXACTCT_SHAP_HPP

// Exact interventional Shapley values for tree ensembles.
//
// f_S(x) is the background mean of the margin with the features in S taken from x.
// The game is a sum of per-tree games, and tree t only depends on the features it
// splits on, so the attribution is accumulated tree by tree: each tree's subsets are
// enumerated exactly over its own feature set, and features a tree never reads get
// nothing from it.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "error.hpp"
#include "xgb.hpp"

namespace exactct {

constexpr std::size_t max_shap_features = 15;

struct ShapExplanation
{
    double phi0 = 0.0;
    std::vector<double> phi;
    double fx = 0.0; ///< margin of the explained row
};

namespace shap_detail {

/// |S|! (m - |S| - 1)! / m! for |S| = 0 .. m-1.
inline std::vector<double> shapley_weights(std::size_t m)
{
    std::vector<double> fact(m + 1, 1.0);
    for (std::size_t i = 1; i <= m; ++i)
        fact[i] = fact[i - 1] * static_cast<double>(i);
    std::vector<double> w(m == 0 ? 0 : m);
    for (std::size_t s = 0; s < m; ++s)
        w[s] = fact[s] * fact[m - s - 1] / fact[m];
    return w;
}

} // namespace shap_detail

inline ShapExplanation explain_shap(const TreeEnsemble& ens, const std::vector<double>& x,
                                    const std::vector<std::vector<double>>& background)
{
    const std::size_t m = ens.arity;
    if (m > max_shap_features)
        throw ArgumentError("explain_shap: exact enumeration is limited to " + std::to_string(max_shap_features) +
                            " features, model has " + std::to_string(m));
    if (background.empty())
        throw ArgumentError("explain_shap: background is empty");
    require_arity(m, x.size());
    for (const auto& z : background)
        require_arity(m, z.size());

    ShapExplanation e;
    e.phi.assign(m, 0.0);
    e.fx = ens.margin(x);
    long double phi0 = ens.base_score;
    const auto nb = static_cast<long double>(background.size());

    std::vector<double> hybrid;
    for (const auto& tree : ens.trees) {
        const auto used = tree.used_features();
        const std::size_t k = used.size();
        const std::size_t subsets = std::size_t{1} << k;
        std::vector<double> value(subsets);
        for (std::size_t mask = 0; mask < subsets; ++mask) {
            long double s = 0;
            for (const auto& z : background) {
                hybrid = z;
                for (std::size_t b = 0; b < k; ++b)
                    if (mask >> b & 1U)
                        hybrid[static_cast<std::size_t>(used[b])] = x[static_cast<std::size_t>(used[b])];
                s += tree.evaluate(hybrid);
            }
            value[mask] = static_cast<double>(s / nb);
        }
        phi0 += value[0];
        if (k == 0)
            continue;
        const auto w = shap_detail::shapley_weights(k);
        for (std::size_t b = 0; b < k; ++b) {
            long double acc = 0;
            const std::size_t bit = std::size_t{1} << b;
            for (std::size_t mask = 0; mask < subsets; ++mask) {
                if (mask & bit)
                    continue;
                const auto size = static_cast<std::size_t>(std::popcount(mask));
                acc += static_cast<long double>(w[size]) * (static_cast<long double>(value[mask | bit]) - value[mask]);
            }
            e.phi[static_cast<std::size_t>(used[b])] += static_cast<double>(acc);
        }
    }
    e.phi0 = static_cast<double>(phi0);
    return e;
}

struct ShapSummary
{
    std::vector<double> mean_abs;         ///< per feature
    std::vector<std::size_t> ranking;     ///< feature indices by decreasing mean |phi|
    std::vector<ShapExplanation> samples; ///< one per explained row, for dependence plots
};

inline ShapSummary shap_global_summary(const TreeEnsemble& ens, const std::vector<std::vector<double>>& x,
                                       const std::vector<std::vector<double>>& background)
{
    if (x.empty())
        throw ArgumentError("shap_global_summary: no rows to explain");
    ShapSummary s;
    std::vector<long double> acc(ens.arity, 0.0L);
    for (const auto& row : x) {
        s.samples.push_back(explain_shap(ens, row, background));
        for (std::size_t j = 0; j < ens.arity; ++j)
            acc[j] += std::fabs(s.samples.back().phi[j]);
    }
    s.mean_abs.resize(ens.arity);
    for (std::size_t j = 0; j < ens.arity; ++j)
        s.mean_abs[j] = static_cast<double>(acc[j] / static_cast<long double>(x.size()));
    s.ranking.resize(ens.arity);
    std::iota(s.ranking.begin(), s.ranking.end(), std::size_t{0});
    std::stable_sort(s.ranking.begin(), s.ranking.end(),
                     [&](std::size_t a, std::size_t b) { return s.mean_abs[a] > s.mean_abs[b]; });
    return s;
}

} // namespace exactct

#endif // EXACTCT_SHAP_HPP
