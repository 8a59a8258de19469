#pragma once

#include <cstdint>
#include <random>

namespace twoscale {

using Engine = std::mt19937_64;

// Streams used per Monte Carlo path.
enum class Stream : std::uint64_t { chain = 0, brownian = 1, aggregation = 2 };

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed of the generator used by path `path_index` for `stream`, computed as
/// mix64(mix64(mix64(master) ^ path_index) ^ stream). Depends only on its
/// arguments, so results never depend on how paths are scheduled on workers.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t path_index, Stream stream) {
    return mix64(mix64(mix64(master) ^ path_index) ^ static_cast<std::uint64_t>(stream));
}

}  // namespace twoscale
