#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dmrl::policy {
class Policy;
}

namespace dmrl::corpus {

// A response: ordered intermediate segments followed by a final segment.
struct ReasoningSequence {
    std::vector<std::string> steps;
    std::string final;

    // Steps then final, joined with single spaces.
    std::string rendered() const;

    bool operator==(const ReasoningSequence&) const = default;
};

struct DemoPair {
    int category_id = 0;  // 1-based
    std::string question;
    ReasoningSequence response;
    std::string pii_disclosed;  // optional record metadata

    bool operator==(const DemoPair&) const = default;
};

struct CategoryInfo {
    std::string name;
    std::vector<std::size_t> pair_indices;  // into DemoDataset::pairs(), file order

    bool operator==(const CategoryInfo&) const = default;
};

// Category-grouped demonstration pairs. Ordering is stable: pairs keep file
// (or generation) order, categories keep first-appearance order. Immutable
// once built; safe for concurrent reads.
class DemoDataset {
public:
    // Returns the 1-based id; reuses the id if the name is already present.
    int add_category(std::string name);

    void add_pair(DemoPair pair);

    int category_count() const { return static_cast<int>(categories_.size()); }
    std::size_t size() const { return pairs_.size(); }
    bool empty() const { return pairs_.empty(); }

    const std::vector<DemoPair>& pairs() const { return pairs_; }
    const std::vector<CategoryInfo>& categories() const { return categories_; }

    const CategoryInfo& category(int id) const;  // throws ValidationError on bad id
    int category_id(std::string_view name) const;  // 0 when absent

    bool operator==(const DemoDataset&) const = default;

private:
    std::vector<CategoryInfo> categories_;
    std::vector<DemoPair> pairs_;
};

// One record per line: {"category", "question", "steps", "final"} with
// optional "pii_disclosed". The only schema currently defined is
// "demo-jsonl-v1".
DemoDataset demos_from_jsonl(std::string_view text, std::string_view schema = "demo-jsonl-v1",
                             const std::vector<std::string>& allowed_categories = {});
std::string demos_to_jsonl(const DemoDataset& dataset);

DemoDataset load_demos(const std::filesystem::path& path,
                       std::string_view schema = "demo-jsonl-v1",
                       const std::vector<std::string>& allowed_categories = {});
void save_demos(const DemoDataset& dataset, const std::filesystem::path& path);

// Ground-truth registry of planted secrets. Values are stored normalized
// (lowercase, trimmed, collapsed whitespace) and are unique; provenance
// records which corpus pairs embed each secret verbatim.
struct Secret {
    std::string value;
    std::string kind;  // "name" | "phone-like" | "id-like"
    std::vector<std::size_t> provenance;

    bool operator==(const Secret&) const = default;
};

class SecretLedger {
public:
    // Value is normalized before insertion; duplicate values merge provenance.
    void add(std::string_view value, std::string kind, std::size_t provenance_pair);

    bool contains(std::string_view normalized_value) const;
    std::size_t size() const { return secrets_.size(); }
    bool empty() const { return secrets_.empty(); }
    const std::vector<Secret>& secrets() const { return secrets_; }

    bool operator==(const SecretLedger&) const = default;

private:
    std::vector<Secret> secrets_;
};

std::string ledger_to_json_string(const SecretLedger& ledger);
SecretLedger ledger_from_json_string(const std::string& text);

struct GeneratorSpec {
    int categories = 1;
    int pairs_per_category = 0;
    int secrets_per_category = 0;
    std::uint64_t seed = 0;
};

// Deterministic synthetic corpus: caller-impersonation questions and
// disclosure-style answers with planted name / id / phone secrets. Every
// ledger secret appears verbatim (after normalization) in at least one
// response.
std::pair<DemoDataset, SecretLedger> gen_synthetic_corpus(const GeneratorSpec& spec);

// One category's (question, demonstration, policy sample) triples.
struct PairwiseEntry {
    std::size_t pair_index;  // into DemoDataset::pairs()
    std::string question;
    std::string demo_response;
    std::string policy_response;

    bool operator==(const PairwiseEntry&) const = default;
};

struct PairwiseSet {
    int category_id = 0;
    std::string policy_tag;
    std::vector<PairwiseEntry> entries;
};

// Samples one policy response per pair of the category. Entry i uses its own
// seed-derived stream, so results do not depend on evaluation order.
PairwiseSet build_pairwise(const DemoDataset& dataset, int category_id,
                           const policy::Policy& pol, std::uint64_t seed,
                           std::string policy_tag = "policy");

}  // namespace dmrl::corpus
