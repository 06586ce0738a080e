// Copyright (c) 2026 the tss project
// Licensed under the Apache License 2.0.

/**
 * @file rng.hpp
 * @brief Deterministic random source for scene generation and training.
 *
 * std::mt19937_64 output is standardized, but the standard distributions are
 * implementation-defined, so the value-to-range mappings are spelled out here
 * to keep generated artifacts byte-identical across library versions.
 */

#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>

namespace tss {

/// splitmix64 step; used to derive independent per-item seeds from a master seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t index) {
    uint64_t z = seed + (index + 1) * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next() { return engine_(); }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi], inclusive.
    int uniform_int(int lo, int hi) {
        if (lo > hi) throw std::invalid_argument("Rng::uniform_int: empty range");
        const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        const uint64_t x = next();
        // multiply-shift bounded mapping
        return lo + static_cast<int>((static_cast<unsigned __int128>(x) * span) >> 64);
    }

    /// Uniform index in [0, n).
    size_t index(size_t n) {
        if (n == 0) throw std::invalid_argument("Rng::index: empty range");
        return static_cast<size_t>((static_cast<unsigned __int128>(next()) * n) >> 64);
    }

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
};

}  // namespace tss
