#ifndef EXACTCT_ML_DATASET_HPP
#define EXACTCT_ML_DATASET_HPP

#include <cmath>
#include <string>
#include <vector>

#include "../error.hpp"

namespace exactct {

/// Positive class is CD (1); ITB is 0.
constexpr int positive_label = 1;

struct Dataset
{
    std::vector<std::vector<double>> x;
    std::vector<int> y;
    std::vector<std::string> ids;
    std::vector<std::string> features;
    std::string source;

    std::size_t rows() const noexcept { return x.size(); }
    std::size_t cols() const noexcept { return x.empty() ? features.size() : x.front().size(); }

    std::size_t positives() const
    {
        std::size_t n = 0;
        for (int v : y)
            n += v == 1;
        return n;
    }

    void validate() const
    {
        if (x.size() != y.size())
            throw ArgumentError("dataset: rows and labels differ in length");
        const std::size_t d = cols();
        for (const auto& r : x) {
            if (r.size() != d)
                throw ArgumentError("dataset: ragged feature rows");
            for (double v : r)
                if (!std::isfinite(v))
                    throw NumericError("dataset: non-finite feature value");
        }
        for (int v : y)
            if (v != 0 && v != 1)
                throw ArgumentError("dataset: labels must be 0 or 1");
    }

    void require_both_classes() const
    {
        validate();
        const std::size_t p = positives();
        if (p == 0 || p == y.size())
            throw ArgumentError("dataset: both classes must be present");
    }
};

inline void require_arity(std::size_t expected, std::size_t got)
{
    if (expected != got)
        throw ArgumentError("feature arity mismatch: model expects " + std::to_string(expected) + ", got " +
                            std::to_string(got));
}

inline double sigmoid(double z)
{
    if (z >= 0.0)
        return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

/// Mean binary cross-entropy of margins against labels.
inline double logloss(const std::vector<double>& margin, const std::vector<int>& y)
{
    long double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
        s += y[i] ? softplus(-margin[i]) : softplus(margin[i]);
    return static_cast<double>(s / static_cast<long double>(y.size()));
}

} // namespace exactct

#endif // EXACTCT_ML_DATASET_HPP
