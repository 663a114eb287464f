#pragma once
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace dslasso {

/**
 * Counter-based generator: draw k of the stream keyed by (seed, replication,
 * stream) is mix64(key + k * golden). Any (replication, stream) pair can be
 * reconstructed independently, so the draws never depend on scheduling.
 *
 * Normals use Box-Muller from this stream so results are identical across
 * standard library implementations.
 */
class CounterRng
{
public:
    CounterRng(std::uint64_t seed, std::uint64_t replication = 0, std::uint64_t stream = 0)
        : key_(mix64(mix64(mix64(seed) ^ (replication + 0x632BE59BD9B4E019ULL)) ^ (stream + 0x85157AF5ULL)))
    {
    }

    std::uint64_t next_u64() { return mix64(key_ + (++counter_) * kGolden); }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform(); // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(angle);
        has_spare_ = true;
        return r * std::cos(angle);
    }

    /// Student t with integer degrees of freedom, as Z / sqrt(chi2_nu / nu).
    double student_t(int nu)
    {
        const double z = normal();
        double chi2 = 0.0;
        for (int k = 0; k < nu; ++k) {
            const double g = normal();
            chi2 += g * g;
        }
        return z / std::sqrt(chi2 / nu);
    }

    bool bernoulli(double prob) { return uniform() < prob; }

    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound) { return next_u64() % bound; }

    template <class T>
    void shuffle(std::vector<T>& values)
    {
        for (std::size_t i = values.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(values[i - 1], values[j]);
        }
    }

    static std::uint64_t mix64(std::uint64_t z)
    {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace dslasso
