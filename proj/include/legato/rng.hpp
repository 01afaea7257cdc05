#pragma once

#include <cstdint>
#include <random>

#include "legato/chunk.hpp"

namespace legato {

using Rng = std::mt19937_64;

// splitmix64 step, used to derive independent stream seeds from a master
// seed. Keeps grid cells reproducible regardless of execution order.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
    return Rng(mix_seed(seed, stream));
}

inline double draw_normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
    std::normal_distribution<double> dist(mean, stddev);
    return dist(rng);
}

inline double draw_uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    return dist(rng);
}

inline int draw_int(Rng& rng, int lo, int hi) {
    std::uniform_int_distribution<int> dist(lo, hi);
    return dist(rng);
}

inline Chunk draw_normal_chunk(Rng& rng, std::size_t rows, std::size_t cols,
                               double stddev = 1.0) {
    Chunk c(rows, cols);
    for (double& v : c.data()) v = draw_normal(rng, 0.0, stddev);
    return c;
}

}  // namespace legato
