#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dmrl {

// Canonical form used for secret bookkeeping and PII matching:
// lowercase, trimmed, internal whitespace runs collapsed to one space.
std::string normalize_text(std::string_view s);

std::string trim(std::string_view s);

std::vector<std::string> split_words(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

// FNV-1a, the stable hash behind feature indices and seed derivation.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64_u64(std::uint64_t h, std::uint64_t v);

}  // namespace dmrl
