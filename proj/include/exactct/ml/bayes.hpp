#ifndef EXACTCT_ML_BAYES_HPP
#define EXACTCT_ML_BAYES_HPP

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "../error.hpp"
#include "dataset.hpp"

namespace exactct {

struct GnbModel
{
    std::array<double, 2> prior{};
    std::array<std::vector<double>, 2> mean;
    std::array<std::vector<double>, 2> var;
    double var_floor = 1e-9;

    /// log P(C=c) + sum_j log N(x_j; mean, var)
    double log_joint(const std::vector<double>& x, int c) const
    {
        const auto cu = static_cast<std::size_t>(c);
        require_arity(mean[cu].size(), x.size());
        double s = std::log(prior[cu]);
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double v = var[cu][j], dx = x[j] - mean[cu][j];
            s += -0.5 * std::log(2.0 * std::numbers::pi * v) - dx * dx / (2.0 * v);
        }
        return s;
    }

    /// log P(C=1 | x)
    double log_posterior(const std::vector<double>& x) const
    {
        const double l0 = log_joint(x, 0), l1 = log_joint(x, 1);
        const double hi = std::max(l0, l1);
        return l1 - (hi + std::log(std::exp(l0 - hi) + std::exp(l1 - hi)));
    }

    double score(const std::vector<double>& x) const { return sigmoid(log_joint(x, 1) - log_joint(x, 0)); }
    int predict(const std::vector<double>& x) const { return score(x) >= 0.5; }
};

inline GnbModel train_gnb(const Dataset& data, double var_floor = 1e-9)
{
    data.require_both_classes();
    GnbModel m;
    m.var_floor = var_floor;
    const std::size_t d = data.cols();
    for (int c = 0; c < 2; ++c) {
        const auto cu = static_cast<std::size_t>(c);
        std::size_t n = 0;
        std::vector<long double> s(d, 0.0L);
        for (std::size_t i = 0; i < data.rows(); ++i)
            if (data.y[i] == c) {
                ++n;
                for (std::size_t j = 0; j < d; ++j)
                    s[j] += data.x[i][j];
            }
        if (n < 2)
            throw ArgumentError("train_gnb: every class needs at least 2 samples");
        m.prior[cu] = static_cast<double>(n) / static_cast<double>(data.rows());
        m.mean[cu].resize(d);
        m.var[cu].assign(d, 0.0);
        for (std::size_t j = 0; j < d; ++j)
            m.mean[cu][j] = static_cast<double>(s[j] / static_cast<long double>(n));
        std::vector<long double> ss(d, 0.0L);
        for (std::size_t i = 0; i < data.rows(); ++i)
            if (data.y[i] == c)
                for (std::size_t j = 0; j < d; ++j) {
                    const long double dx = data.x[i][j] - m.mean[cu][j];
                    ss[j] += dx * dx;
                }
        for (std::size_t j = 0; j < d; ++j)
            m.var[cu][j] = std::max(static_cast<double>(ss[j] / static_cast<long double>(n)), var_floor);
    }
    return m;
}

} // namespace exactct

#endif // EXACTCT_ML_BAYES_HPP
