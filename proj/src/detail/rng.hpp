#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace tte::detail {

// splitmix64; derives independent per-item generator seeds, keeping parallel
// generation deterministic regardless of scheduling.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream) {
    return std::mt19937_64(mix64(mix64(seed) ^ (stream + 1)));
}

// Uniform in [0, 1).
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform in (0, 1]; safe under log().
inline double uniform_pos(std::mt19937_64& rng) {
    return 1.0 - uniform01(rng);
}

inline double normal(std::mt19937_64& rng) {
    // Box-Muller on explicit uniforms; std::normal_distribution output is
    // implementation-defined and would break cross-platform reproducibility.
    double u1 = uniform_pos(rng);
    double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Fisher-Yates with an explicit draw so shuffles do not depend on the
// standard library's std::shuffle implementation.
template <typename T>
void shuffle(std::vector<T>& items, std::mt19937_64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace tte::detail
