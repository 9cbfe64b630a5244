#pragma once

#include <cstdint>
#include <random>

namespace memrobust {

/// Stateless 64-bit mixer (splitmix64). Used to derive independent
/// sub-seeds so that concurrent or reordered work stays reproducible.
inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Deterministic sub-seed for the `index`-th unit of work under `seed`.
/// Results are independent of the order the units actually run in.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
    return splitmix64(seed ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                           std::uint64_t b) noexcept {
    return derive_seed(derive_seed(seed, a), b);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(splitmix64(seed)); }

} // namespace memrobust
