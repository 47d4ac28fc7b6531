#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace bhh {

/// SplitMix64 finalizer; a bijective 64-bit mix.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Derives an independent substream key from a parent key and a label.
constexpr std::uint64_t substream(std::uint64_t parent, std::uint64_t label) noexcept {
    return mix64(parent ^ mix64(label + 0x632BE59BD9B4E019ULL));
}

/// Counter-based generator: the i-th draw of a stream is a pure function of
/// (key, i), so any partition of the work across threads yields identical
/// numbers. Normals use Box-Muller on two counter-derived uniforms, which
/// keeps the output identical across standard libraries.
class CounterRng {
public:
    explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(key) {}

    [[nodiscard]] constexpr std::uint64_t key() const noexcept { return key_; }

    /// Uniform in (0, 1).
    double uniform_at(std::uint64_t counter) const noexcept {
        const std::uint64_t bits = mix64(key_ ^ mix64(counter));
        return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
    }

    double normal_at(std::uint64_t counter) const noexcept {
        const double u1 = uniform_at(2 * (counter >> 1));
        const double u2 = uniform_at(2 * (counter >> 1) + 1);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        return (counter & 1U) ? r * std::sin(a) : r * std::cos(a);
    }

    /// Normals 2j and 2j + 1 of the stream from one Box-Muller transform.
    std::array<double, 2> normal_pair_at(std::uint64_t j) const noexcept {
        const double u1 = uniform_at(2 * j);
        const double u2 = uniform_at(2 * j + 1);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        return {r * std::cos(a), r * std::sin(a)};
    }

    double uniform() noexcept { return uniform_at(next_++); }
    double normal() noexcept { return normal_at(next_++); }
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

private:
    std::uint64_t key_;
    std::uint64_t next_ = 0;
};

}  // namespace bhh
