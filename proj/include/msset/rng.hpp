#pragma once

#include <cstdint>
#include <random>

namespace msset {

// splitmix64 finalizer; good avalanche, cheap.
inline std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

// Derives an independent stream seed from a master seed and a counter.
// Replicate workers each seed their own generator from this, so results
// do not depend on how replicates are distributed over threads.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t counter) {
    return mix64(seed + 0x9E3779B97F4A7C15ULL * (counter + 1));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return derive_seed(derive_seed(seed, a), b);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace msset
