#ifndef EXACTCT_ML_TREES_HPP
#define EXACTCT_ML_TREES_HPP

// CART trees: Gini classification trees for the random forest and squared-error
// regression trees for first-order gradient boosting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "../error.hpp"
#include "../rng.hpp"
#include "dataset.hpp"

namespace exactct {

struct TreeNode
{
    int feature = -1; ///< -1 marks a leaf
    double threshold = 0.0;
    int left = -1;    ///< taken when x[feature] < threshold
    int right = -1;
    double value = 0.0; ///< class (classification) or mean target (regression)
};

struct Tree
{
    std::vector<TreeNode> nodes;

    double evaluate(const std::vector<double>& x) const
    {
        std::size_t n = 0;
        while (nodes[n].feature >= 0)
            n = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[n].feature)] < nodes[n].threshold
                                             ? nodes[n].left
                                             : nodes[n].right);
        return nodes[n].value;
    }

    friend bool operator==(const Tree& a, const Tree& b)
    {
        if (a.nodes.size() != b.nodes.size())
            return false;
        for (std::size_t i = 0; i < a.nodes.size(); ++i) {
            const auto &p = a.nodes[i], &q = b.nodes[i];
            if (p.feature != q.feature || p.threshold != q.threshold || p.left != q.left || p.right != q.right ||
                p.value != q.value)
                return false;
        }
        return true;
    }
};

/// Threshold strictly between two sorted distinct values a < b, routing a left.
inline double split_point(double a, double b)
{
    const double mid = a + 0.5 * (b - a);
    return a < mid ? mid : b;
}

namespace tree_detail {

struct Split
{
    int feature = -1;
    double threshold = 0.0;
    double score = 0.0; ///< impurity decrease; the best split maximises it
};

enum class Criterion
{
    gini,
    squared_error,
};

struct Builder
{
    const std::vector<std::vector<double>>& x;
    const std::vector<double>& target; ///< class labels (0/1) or regression targets
    Criterion criterion;
    int max_depth;
    int min_samples_split;
    std::size_t max_features; ///< 0 means all
    Rng* rng;
    Tree tree;

    double leaf_value(const std::vector<std::size_t>& idx) const
    {
        if (criterion == Criterion::gini) {
            std::size_t ones = 0;
            for (auto i : idx)
                ones += target[i] != 0.0;
            return 2 * ones > idx.size() ? 1.0 : 0.0;
        }
        long double s = 0;
        for (auto i : idx)
            s += target[i];
        return static_cast<double>(s / static_cast<long double>(idx.size()));
    }

    /// n * impurity for (count, sum, sum of squares) of the targets.
    double weighted_impurity(double n, double s, double s2) const
    {
        if (n <= 0.0)
            return 0.0;
        if (criterion == Criterion::gini) {
            const double p = s / n;
            return n * 2.0 * p * (1.0 - p);
        }
        return s2 - s * s / n;
    }

    std::vector<std::size_t> candidate_features(std::size_t d)
    {
        std::vector<std::size_t> f(d);
        std::iota(f.begin(), f.end(), std::size_t{0});
        if (max_features > 0 && max_features < d && rng) {
            rng->shuffle(f);
            f.resize(max_features);
            std::sort(f.begin(), f.end());
        }
        return f;
    }

    Split best_split(const std::vector<std::size_t>& idx)
    {
        Split best;
        double n = static_cast<double>(idx.size()), s = 0.0, s2 = 0.0;
        for (auto i : idx) {
            s += target[i];
            s2 += target[i] * target[i];
        }
        const double parent = weighted_impurity(n, s, s2);
        std::vector<std::size_t> order = idx;
        for (std::size_t f : candidate_features(x.front().size())) {
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return x[a][f] < x[b][f] || (x[a][f] == x[b][f] && a < b);
            });
            double ln = 0.0, ls = 0.0, ls2 = 0.0;
            for (std::size_t p = 0; p + 1 < order.size(); ++p) {
                const double t = target[order[p]];
                ln += 1.0;
                ls += t;
                ls2 += t * t;
                const double a = x[order[p]][f], b = x[order[p + 1]][f];
                if (!(a < b))
                    continue;
                const double dec = parent - weighted_impurity(ln, ls, ls2) -
                                   weighted_impurity(n - ln, s - ls, s2 - ls2);
                if (dec > best.score + 1e-12 * std::max(1.0, parent)) {
                    best = {static_cast<int>(f), split_point(a, b), dec};
                }
            }
        }
        return best;
    }

    int grow(const std::vector<std::size_t>& idx, int depth)
    {
        const int id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({});
        tree.nodes.back().value = leaf_value(idx);
        if (depth >= max_depth || static_cast<int>(idx.size()) < min_samples_split)
            return id;
        const Split sp = best_split(idx);
        if (sp.feature < 0)
            return id;
        std::vector<std::size_t> l, r;
        for (auto i : idx)
            (x[i][static_cast<std::size_t>(sp.feature)] < sp.threshold ? l : r).push_back(i);
        const int left = grow(l, depth + 1);
        const int right = grow(r, depth + 1);
        auto& node = tree.nodes[static_cast<std::size_t>(id)];
        node.feature = sp.feature;
        node.threshold = sp.threshold;
        node.left = left;
        node.right = right;
        return id;
    }
};

} // namespace tree_detail

struct TreeParams
{
    int max_depth = 5;
    int min_samples_split = 2;
};

inline Tree train_tree(const Dataset& data, const TreeParams& params = {})
{
    data.validate();
    std::vector<double> t(data.y.begin(), data.y.end());
    tree_detail::Builder b{data.x, t, tree_detail::Criterion::gini, params.max_depth, params.min_samples_split, 0,
                           nullptr, {}};
    std::vector<std::size_t> idx(data.rows());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    b.grow(idx, 0);
    return b.tree;
}

inline Tree fit_regression_tree(const std::vector<std::vector<double>>& x, const std::vector<double>& target,
                                const TreeParams& params)
{
    tree_detail::Builder b{x, target, tree_detail::Criterion::squared_error, params.max_depth,
                           params.min_samples_split, 0, nullptr, {}};
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    b.grow(idx, 0);
    return b.tree;
}

// ---------------------------------------------------------------------------
// Random forest

struct ForestParams
{
    int trees = 100;
    int max_depth = 5;
    bool bootstrap = true;
    int max_features = 0; ///< 0 means ceil(sqrt(d)); -1 means all features
    std::uint64_t seed = 0;
};

struct ForestModel
{
    std::vector<Tree> trees;
    std::uint64_t seed = 0;
    std::size_t arity = 0;

    double vote_fraction(const std::vector<double>& x) const
    {
        require_arity(arity, x.size());
        std::size_t ones = 0;
        for (const auto& t : trees)
            ones += t.evaluate(x) != 0.0;
        return static_cast<double>(ones) / static_cast<double>(trees.size());
    }

    double score(const std::vector<double>& x) const { return vote_fraction(x); }

    /// Majority vote; a tie goes to class 0.
    int predict(const std::vector<double>& x) const
    {
        require_arity(arity, x.size());
        std::size_t ones = 0;
        for (const auto& t : trees)
            ones += t.evaluate(x) != 0.0;
        return 2 * ones > trees.size() ? 1 : 0;
    }
};

inline ForestModel train_forest(const Dataset& data, const ForestParams& params = {})
{
    data.require_both_classes();
    if (params.trees < 1)
        throw ArgumentError("train_forest: need at least one tree");
    ForestModel m;
    m.seed = params.seed;
    m.arity = data.cols();
    const std::size_t d = data.cols(), n = data.rows();
    std::size_t mf = d;
    if (params.max_features == 0)
        mf = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d))));
    else if (params.max_features > 0)
        mf = std::min(d, static_cast<std::size_t>(params.max_features));
    std::vector<double> labels(data.y.begin(), data.y.end());
    for (int t = 0; t < params.trees; ++t) {
        Rng rng(params.seed, static_cast<std::uint64_t>(t) + 1);
        std::vector<std::vector<double>> xb;
        std::vector<double> yb;
        if (params.bootstrap) {
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t r = rng.index(n);
                xb.push_back(data.x[r]);
                yb.push_back(labels[r]);
            }
        } else {
            xb = data.x;
            yb = labels;
        }
        tree_detail::Builder b{xb, yb, tree_detail::Criterion::gini, params.max_depth, 2, mf == d ? 0 : mf, &rng,
                               {}};
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        b.grow(idx, 0);
        m.trees.push_back(std::move(b.tree));
    }
    return m;
}

// ---------------------------------------------------------------------------
// Gradient boosting on the logistic deviance

struct GbmParams
{
    double eta = 0.1;
    int stages = 100;
    int max_depth = 3;
};

struct GbmModel
{
    double f0 = 0.0;
    double eta = 0.1;
    std::vector<Tree> trees;
    std::size_t arity = 0;
    std::vector<double> trace; ///< mean training logloss after each stage (entry 0: f0 only)

    double margin(const std::vector<double>& x) const
    {
        require_arity(arity, x.size());
        double f = f0;
        for (const auto& t : trees)
            f += eta * t.evaluate(x);
        return f;
    }

    double score(const std::vector<double>& x) const { return sigmoid(margin(x)); }
    int predict(const std::vector<double>& x) const { return margin(x) >= 0.0; }
};

inline double base_log_odds(const std::vector<int>& y)
{
    std::size_t p = 0;
    for (int v : y)
        p += v == 1;
    return std::log(static_cast<double>(p) / static_cast<double>(y.size() - p));
}

inline GbmModel train_gbm(const Dataset& data, const GbmParams& params = {})
{
    data.require_both_classes();
    if (params.stages < 1 || !(params.eta >= 0.0 && params.eta <= 1.0))
        throw ArgumentError("train_gbm: need stages >= 1 and 0 <= eta <= 1");
    GbmModel m;
    m.eta = params.eta;
    m.arity = data.cols();
    m.f0 = base_log_odds(data.y);
    const std::size_t n = data.rows();
    std::vector<double> f(n, m.f0), r(n);
    m.trace.push_back(logloss(f, data.y));
    for (int s = 0; s < params.stages; ++s) {
        for (std::size_t i = 0; i < n; ++i)
            r[i] = data.y[i] - sigmoid(f[i]);
        Tree t = fit_regression_tree(data.x, r, {params.max_depth, 2});
        for (std::size_t i = 0; i < n; ++i)
            f[i] += m.eta * t.evaluate(data.x[i]);
        m.trees.push_back(std::move(t));
        m.trace.push_back(logloss(f, data.y));
    }
    return m;
}

} // namespace exactct

#endif // EXACTCT_ML_TREES_HPP
