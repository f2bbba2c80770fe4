#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace gpmatch {

/// All samplers draw from a 64-bit Mersenne Twister. Streams are never
/// shared: each chain or replicate gets its own engine whose seed is derived
/// by folding identifying integers through the SplitMix64 finalizer, so
/// parallel work units are reproducible regardless of scheduling.
using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// FNV-1a; used to turn estimator/study names into stream ids.
constexpr std::uint64_t hash_name(std::string_view name) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) noexcept {
    std::uint64_t s = splitmix64(base);
    for (std::uint64_t k : keys) {
        s = splitmix64(s ^ splitmix64(k));
    }
    return s;
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace gpmatch
