#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace ul2r {

std::uint64_t splitmix64(std::uint64_t x);

// Mixes a base seed with a path of stream identifiers (step, example index,
// purpose tag...). Used so every example gets an independent stream.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

// Seeded random source. The integer/real mappings are implemented here rather
// than via <random> distributions so results are identical across standard
// library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform integer in [lo, hi], inclusive. Requires lo <= hi.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    // Uniform double in [0, 1) with 53 random bits.
    double uniform();

    // Standard normal via Box-Muller.
    double normal();

private:
    std::mt19937_64 engine_;
};

} // namespace ul2r
