#include "dmrl/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "dmrl/errors.hpp"
#include "dmrl/text.hpp"

namespace dmrl {

namespace {
std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace

std::uint64_t RngStream::next_u64() { return splitmix64(state_); }

double RngStream::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::size_t RngStream::next_index(std::size_t n) {
    if (n == 0) throw DomainError("next_index: empty range");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t u;
    do {
        u = next_u64();
    } while (u >= limit);
    return static_cast<std::size_t>(u % bound);
}

double RngStream::next_gaussian() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view label,
                          std::initializer_list<std::uint64_t> extra) {
    std::uint64_t h = fnv1a64(label);
    h = fnv1a64_u64(h, master);
    for (std::uint64_t word : extra) h = fnv1a64_u64(h, word);
    // One scramble round so nearby (seed, index) pairs land far apart.
    return splitmix64(h);
}

std::size_t sample_categorical(const std::vector<double>& probs, RngStream& rng) {
    if (probs.empty()) throw DomainError("sample_categorical: empty distribution");
    const double u = rng.next_double();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return probs.size() - 1;  // mop up rounding shortfall
}

}  // namespace dmrl
