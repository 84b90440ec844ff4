#ifndef EXACTCT_ML_MODEL_HPP
#define EXACTCT_ML_MODEL_HPP

#include <string>
#include <variant>
#include <vector>

#include "../error.hpp"
#include "../xgb.hpp"
#include "bayes.hpp"
#include "dataset.hpp"
#include "linear.hpp"
#include "trees.hpp"

namespace exactct {

using Model = std::variant<LinearModel, GnbModel, ForestModel, GbmModel, TreeEnsemble>;

inline const std::vector<std::string>& model_kinds()
{
    static const std::vector<std::string> kinds{"logistic", "svm", "gnb", "forest", "gbm", "xgb"};
    return kinds;
}

inline std::string model_kind(const Model& m)
{
    struct Visitor
    {
        std::string operator()(const LinearModel& l) const { return l.kind == LinearKind::svm ? "svm" : "logistic"; }
        std::string operator()(const GnbModel&) const { return "gnb"; }
        std::string operator()(const ForestModel&) const { return "forest"; }
        std::string operator()(const GbmModel&) const { return "gbm"; }
        std::string operator()(const TreeEnsemble&) const { return "xgb"; }
    };
    return std::visit(Visitor{}, m);
}

inline void require_model_kind(const std::string& kind)
{
    for (const auto& k : model_kinds())
        if (k == kind)
            return;
    std::string list;
    for (const auto& k : model_kinds())
        list += (list.empty() ? "" : ", ") + k;
    throw ArgumentError("unknown model kind '" + kind + "' (valid: " + list + ")");
}

/// Probability-scale scores, except the SVM which yields its signed margin.
inline std::vector<double> predict_score(const Model& m, const std::vector<std::vector<double>>& x)
{
    std::vector<double> out;
    out.reserve(x.size());
    std::visit([&](const auto& model) {
        for (const auto& row : x)
            out.push_back(model.score(row));
    }, m);
    return out;
}

inline std::vector<int> predict_labels(const Model& m, const std::vector<std::vector<double>>& x)
{
    std::vector<int> out;
    out.reserve(x.size());
    std::visit([&](const auto& model) {
        for (const auto& row : x)
            out.push_back(model.predict(row));
    }, m);
    return out;
}

} // namespace exactct

#endif // EXACTCT_ML_MODEL_HPP
