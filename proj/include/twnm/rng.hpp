#pragma once

#include <cstdint>
#include <random>

namespace twnm {

// Deterministic RNG facade. All randomized code draws through these helpers
// instead of std::*_distribution, whose sequences are implementation-defined;
// a fixed seed must reproduce bit-identical results on every toolchain.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double next_double() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n); n must be positive.
    std::size_t next_index(std::size_t n) {
        return static_cast<std::size_t>(gen_() % static_cast<std::uint64_t>(n));
    }

    bool next_bool() { return (gen_() & 1ull) != 0; }

private:
    std::mt19937_64 gen_;
};

}  // namespace twnm
