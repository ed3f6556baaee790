#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace lsam {

// SplitMix64 finalizer (Steele, Lea, Flood; public-domain reference
// implementation). Used only to derive per-trajectory seeds so that ensemble
// results do not depend on thread count or execution order.
inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Per-stream seed for trajectory r: feed base_seed advanced r+1 times through
// the SplitMix64 increment, then finalize. Documented bit-exactly in the
// README; changing this breaks reproducibility of every recorded experiment.
inline std::uint64_t derive_stream_seed(std::uint64_t base_seed, std::uint64_t stream_index) {
    return splitmix64(base_seed + stream_index * 0x9E3779B97F4A7C15ULL);
}

// Thin wrapper around std::mt19937_64 that maps raw 64-bit draws to doubles
// itself, so the sampling path is fully specified by the C++ standard plus
// the two functions below (no implementation-defined distributions).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Index sampled from the categorical distribution given by cumulative
    // weights (last entry is the total, typically 1). Linear scan; state
    // counts here are tiny.
    int categorical_from_cumulative(std::span<const double> cumulative) {
        const double u = uniform01() * cumulative.back();
        for (std::size_t i = 0; i + 1 < cumulative.size(); ++i)
            if (u < cumulative[i]) return static_cast<int>(i);
        return static_cast<int>(cumulative.size() - 1);
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace lsam
