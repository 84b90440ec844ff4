#ifndef EXACTCT_XGB_HPP
#define EXACTCT_XGB_HPP

// Regularised tree boosting on the logistic loss with second-order (g, h) statistics.
//
//   w*   = -G / (H + lambda)
//   Gain = 1/2 [GL^2/(HL+lambda) + GR^2/(HR+lambda) - G^2/(H+lambda)] - gamma

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "error.hpp"
#include "ml/dataset.hpp"
#include "ml/trees.hpp"

namespace exactct {

struct XgbHyper
{
    double eta = 0.3;
    double gamma = 0.0;
    double lambda = 1.0;
    int max_depth = 3;
    int rounds = 50;
    double min_child_hessian = 1e-3;

    void validate() const
    {
        if (!(eta > 0.0 && eta <= 1.0))
            throw ArgumentError("xgb: eta must lie in (0, 1]");
        if (!(gamma >= 0.0) || !(lambda >= 0.0) || !(min_child_hessian >= 0.0))
            throw ArgumentError("xgb: gamma, lambda and min_child_hessian must be non-negative");
        if (rounds < 1 || max_depth < 0)
            throw ArgumentError("xgb: need rounds >= 1 and max_depth >= 0");
    }
};

struct XgbNode
{
    int feature = -1; ///< -1 marks a leaf
    double threshold = 0.0;
    int left = -1;    ///< taken when x[feature] < threshold
    int right = -1;
    double weight = 0.0; ///< eta-scaled leaf weight
    double cover = 0.0;  ///< sum of h over training rows reaching the node
    double gain = 0.0;   ///< gain of the accepted split (internal nodes)
};

struct XgbTree
{
    std::vector<XgbNode> nodes;

    double evaluate(const std::vector<double>& x) const
    {
        std::size_t n = 0;
        while (nodes[n].feature >= 0)
            n = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[n].feature)] < nodes[n].threshold
                                             ? nodes[n].left
                                             : nodes[n].right);
        return nodes[n].weight;
    }

    /// Features split on anywhere in the tree, ascending.
    std::vector<int> used_features() const
    {
        std::vector<int> f;
        for (const auto& n : nodes)
            if (n.feature >= 0)
                f.push_back(n.feature);
        std::sort(f.begin(), f.end());
        f.erase(std::unique(f.begin(), f.end()), f.end());
        return f;
    }
};

struct TreeEnsemble
{
    double base_score = 0.0; ///< log-odds
    std::vector<XgbTree> trees;
    std::size_t arity = 0;
    XgbHyper hyper;
    std::vector<double> trace; ///< mean training logloss, entry 0 before any tree

    double margin(const std::vector<double>& x, std::size_t tree_count) const
    {
        require_arity(arity, x.size());
        for (double v : x)
            if (!std::isfinite(v))
                throw NumericError("predict_margin: non-finite feature");
        double m = base_score;
        for (std::size_t t = 0; t < tree_count && t < trees.size(); ++t)
            m += trees[t].evaluate(x);
        return m;
    }

    double margin(const std::vector<double>& x) const { return margin(x, trees.size()); }
    double score(const std::vector<double>& x) const { return sigmoid(margin(x)); }
    int predict(const std::vector<double>& x) const { return margin(x) >= 0.0; }
};

inline double predict_margin(const TreeEnsemble& ens, const std::vector<double>& x) { return ens.margin(x); }

inline double leaf_weight(double g, double h, double lambda) { return -g / (h + lambda); }

inline double split_gain(double gl, double hl, double gr, double hr, double lambda, double gamma)
{
    const double g = gl + gr, h = hl + hr;
    return 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma;
}

struct XgbSplit
{
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

/// Gains this close (relative) to the best are ties; summing the same partition in a
/// different order must not decide the split.
constexpr double gain_tie_tolerance = 1e-12;

inline bool gain_ties(double a, double best)
{
    return a >= best - gain_tie_tolerance * std::max(1.0, std::fabs(best));
}

/// Exact greedy search: every feature, every midpoint between consecutive distinct
/// values. Among the candidates tied with the best gain, the lowest feature wins,
/// then the lowest threshold.
inline XgbSplit best_xgb_split(const std::vector<std::vector<double>>& x, const std::vector<double>& g,
                               const std::vector<double>& h, const std::vector<std::size_t>& idx,
                               const XgbHyper& hp)
{
    if (idx.size() < 2)
        return {};
    double gt = 0.0, ht = 0.0;
    for (auto i : idx) {
        gt += g[i];
        ht += h[i];
    }
    std::vector<XgbSplit> candidates;
    double top = 0.0;
    std::vector<std::size_t> order = idx;
    const std::size_t d = x.front().size();
    for (std::size_t f = 0; f < d; ++f) {
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return x[a][f] < x[b][f] || (x[a][f] == x[b][f] && a < b);
        });
        double gl = 0.0, hl = 0.0;
        for (std::size_t p = 0; p + 1 < order.size(); ++p) {
            gl += g[order[p]];
            hl += h[order[p]];
            const double a = x[order[p]][f], b = x[order[p + 1]][f];
            if (!(a < b))
                continue;
            const double hr = ht - hl;
            if (hl < hp.min_child_hessian || hr < hp.min_child_hessian)
                continue;
            const double gain = split_gain(gl, hl, gt - gl, hr, hp.lambda, hp.gamma);
            if (gain > 0.0) {
                candidates.push_back({static_cast<int>(f), split_point(a, b), gain});
                top = std::max(top, gain);
            }
        }
    }
    for (const auto& c : candidates)
        if (gain_ties(c.gain, top))
            return c;
    return {};
}

namespace xgb_detail {

inline int grow(XgbTree& tree, const std::vector<std::vector<double>>& x, const std::vector<double>& g,
                const std::vector<double>& h, const std::vector<std::size_t>& idx, int depth, const XgbHyper& hp)
{
    const int id = static_cast<int>(tree.nodes.size());
    double gs = 0.0, hs = 0.0;
    for (auto i : idx) {
        gs += g[i];
        hs += h[i];
    }
    XgbNode node;
    node.cover = hs;
    node.weight = hp.eta * leaf_weight(gs, hs, hp.lambda);
    tree.nodes.push_back(node);
    if (depth >= hp.max_depth)
        return id;
    const XgbSplit sp = best_xgb_split(x, g, h, idx, hp);
    if (sp.feature < 0)
        return id;
    std::vector<std::size_t> l, r;
    for (auto i : idx)
        (x[i][static_cast<std::size_t>(sp.feature)] < sp.threshold ? l : r).push_back(i);
    const int left = grow(tree, x, g, h, l, depth + 1, hp);
    const int right = grow(tree, x, g, h, r, depth + 1, hp);
    auto& n = tree.nodes[static_cast<std::size_t>(id)];
    n.feature = sp.feature;
    n.threshold = sp.threshold;
    n.left = left;
    n.right = right;
    n.gain = sp.gain;
    n.weight = 0.0;
    return id;
}

} // namespace xgb_detail

inline TreeEnsemble train_xgb(const Dataset& data, const XgbHyper& hp = {})
{
    hp.validate();
    data.require_both_classes();
    TreeEnsemble ens;
    ens.hyper = hp;
    ens.arity = data.cols();
    ens.base_score = base_log_odds(data.y);
    const std::size_t n = data.rows();
    std::vector<double> margin(n, ens.base_score), g(n), h(n);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    ens.trace.push_back(logloss(margin, data.y));
    for (int t = 0; t < hp.rounds; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = sigmoid(margin[i]);
            g[i] = p - data.y[i];
            h[i] = p * (1.0 - p);
        }
        XgbTree tree;
        xgb_detail::grow(tree, data.x, g, h, idx, 0, hp);
        for (std::size_t i = 0; i < n; ++i)
            margin[i] += tree.evaluate(data.x[i]);
        ens.trees.push_back(std::move(tree));
        ens.trace.push_back(logloss(margin, data.y));
    }
    return ens;
}

} // namespace exactct

#endif // EXACTCT_XGB_HPP
