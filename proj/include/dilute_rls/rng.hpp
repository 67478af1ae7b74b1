#pragma once

// Counter-based random streams. A draw is a pure function of
// (root seed, purpose, agent, step, index), so adding or reordering
// consumers never perturbs existing streams.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace dilute_rls {

enum class StreamPurpose : std::uint64_t {
    noise = 1,
    input = 2,
    regressor = 3,
    theta = 4,
    graph = 5,
    instance = 6,
    hidden_layer = 7,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class CounterRng {
public:
    constexpr explicit CounterRng(std::uint64_t root_seed) noexcept : root_(splitmix64(root_seed)) {}

    constexpr std::uint64_t bits(StreamPurpose purpose, std::uint64_t agent, std::uint64_t step,
                                 std::uint64_t index) const noexcept {
        std::uint64_t h = splitmix64(root_ ^ static_cast<std::uint64_t>(purpose));
        h = splitmix64(h ^ agent);
        h = splitmix64(h ^ step);
        return splitmix64(h ^ index);
    }

    /// Uniform on the open interval (0, 1).
    double uniform(StreamPurpose purpose, std::uint64_t agent, std::uint64_t step, std::uint64_t index) const noexcept {
        return (double(bits(purpose, agent, step, index) >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller on two counter draws.
    double gaussian(StreamPurpose purpose, std::uint64_t agent, std::uint64_t step, std::uint64_t index) const {
        const double u1 = uniform(purpose, agent, step, 2 * index);
        const double u2 = uniform(purpose, agent, step, 2 * index + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// +1 or -1 with equal probability.
    double rademacher(StreamPurpose purpose, std::uint64_t agent, std::uint64_t step, std::uint64_t index) const noexcept {
        return (bits(purpose, agent, step, index) >> 63) ? 1.0 : -1.0;
    }

private:
    std::uint64_t root_;
};

}  // namespace dilute_rls
