#ifndef EXACTCT_RNG_HPP
#define EXACTCT_RNG_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <vector>

namespace exactct {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based generator: draw n is a pure function of (seed, stream, n), so any
/// partition of the work across threads reproduces the serial sequence bit for bit.
/// Standard-library distributions are avoided because their output is not specified
/// across implementations.
class Rng
{
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
        : key_(mix64(seed ^ mix64(stream + 0x632be59bd9b4e019ULL)))
    {}

    std::uint64_t next_u64() noexcept { return at(counter_++); }

    std::uint64_t at(std::uint64_t n) const noexcept { return mix64(key_ ^ mix64(n)); }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() noexcept { return to_unit(next_u64()); }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) noexcept
    {
        // Lemire's multiply-shift; bias is below 2^-64 * n.
        const auto prod = static_cast<unsigned __int128>(next_u64()) * n;
        return static_cast<std::size_t>(prod >> 64);
    }

    /// Standard normal via Box-Muller (one value per call, the sine branch is discarded).
    double normal() noexcept
    {
        double u1 = uniform();
        const double u2 = uniform();
        if (u1 <= 0.0)
            u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Standard normal for draw slot n, independent of the call sequence.
    double normal_at(std::uint64_t n) const noexcept
    {
        double u1 = to_unit(at(2 * n));
        const double u2 = to_unit(at(2 * n + 1));
        if (u1 <= 0.0)
            u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) noexcept
    {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[index(i)]);
    }

private:
    static double to_unit(std::uint64_t x) noexcept
    {
        return static_cast<double>(x >> 11) * 0x1.0p-53;
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace exactct

#endif // EXACTCT_RNG_HPP
