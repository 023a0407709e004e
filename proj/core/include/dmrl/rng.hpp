#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>
#include <vector>

namespace dmrl {

// Deterministic counter-style PRNG (splitmix64). Every random choice in the
// library flows through this so runs are bit-reproducible across platforms;
// std::random distributions are implementation-defined and never used.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();

    // Uniform in [0, 1) with 53 random mantissa bits.
    double next_double();

    // Uniform in [0, n), unbiased (rejection sampling). n must be > 0.
    std::size_t next_index(std::size_t n);

    // Standard normal via Box-Muller on two uniform draws.
    double next_gaussian();

private:
    std::uint64_t state_;
};

// Stable stream derivation: hash of (master seed, label, extra words).
// Used to give every stage / category / entry its own independent stream.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                          std::initializer_list<std::uint64_t> extra = {});

// Categorical draw from explicit probabilities (assumed to sum to ~1).
std::size_t sample_categorical(const std::vector<double>& probs, RngStream& rng);

}  // namespace dmrl
