#pragma once

#include <cstdint>
#include <random>

namespace netslic {

/// SplitMix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of the `stream`-th child of `root`. Children of distinct streams
/// are decorrelated; the same (root, stream) always yields the same seed.
inline std::uint64_t split_seed(std::uint64_t root, std::uint64_t stream) {
    return mix_seed(mix_seed(root) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

using Rng = std::mt19937_64;

}  // namespace netslic
