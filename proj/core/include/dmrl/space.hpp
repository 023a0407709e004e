#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dmrl::policy {

// Finite, enumerable response space: an ordered prompt universe where each
// prompt maps to an ordered list of distinct candidate responses. Everything
// downstream (partition sums, KL, sampling laws) is exact because these sets
// are explicit.
class ResponseSpace {
public:
    ResponseSpace() = default;

    // Candidates must be non-empty and pairwise distinct within the prompt.
    // Returns the prompt's index.
    std::size_t add_prompt(std::string prompt, std::vector<std::string> candidates);

    std::size_t prompt_count() const { return prompts_.size(); }
    const std::vector<std::string>& prompts() const { return prompts_; }

    bool contains(std::string_view prompt) const;
    std::size_t prompt_index(std::string_view prompt) const;  // throws CoverageError

    const std::vector<std::string>& candidates(std::string_view prompt) const;
    const std::vector<std::string>& candidates_at(std::size_t prompt_idx) const;

    std::optional<std::size_t> candidate_index(std::string_view prompt,
                                               std::string_view candidate) const;

    // Sum of |A(x)| over prompts before prompt_idx; used for tabular slots.
    std::size_t prompt_offset(std::size_t prompt_idx) const { return offsets_[prompt_idx]; }
    std::size_t total_candidates() const { return total_; }

    bool same_candidates(const ResponseSpace& other, std::string_view prompt) const;

    bool operator==(const ResponseSpace& other) const;

private:
    std::vector<std::string> prompts_;
    std::vector<std::vector<std::string>> candidates_;
    std::vector<std::size_t> offsets_;
    std::unordered_map<std::string, std::size_t> index_;
    std::size_t total_ = 0;
};

using SpacePtr = std::shared_ptr<const ResponseSpace>;

}  // namespace dmrl::policy
