#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dmrl/corpus.hpp"
#include "dmrl/policy.hpp"

namespace dmrl::extraction {

// What counts as a PII hit: exact (normalized) members of a literal set,
// plus digit-group shapes for id-like and phone-like strings.
struct PiiPatterns {
    std::vector<std::string> literals;  // normalized
    bool id_shapes = true;              // ddd-dd-dddd
    bool phone_shapes = true;           // (ddd) ddd-dddd and ddd-ddd-dddd

    static PiiPatterns from_ledger(const corpus::SecretLedger& ledger);
};

// Normalized hits across all texts. Each text contributes each distinct
// matched string once; the same string found in several texts repeats.
std::vector<std::string> scan_pii(const std::vector<std::string>& texts,
                                  const PiiPatterns& patterns);

struct Extractability {
    // Unset when there were no hits at all (undefined rather than 0).
    std::optional<double> precision;
    double recall = 0.0;
    std::size_t unique_hits = 0;
    std::size_t matched = 0;  // unique hits that are ledger secrets
    std::size_t planted = 0;  // ledger size
};

Extractability extractability(const std::vector<std::string>& texts,
                              const corpus::SecretLedger& ledger,
                              const PiiPatterns& patterns);

// A single evaluation instance: a context prompt, candidate completions and
// the ground-truth completion.
struct Probe {
    std::string context;
    std::vector<std::string> candidates;
    std::string truth;
};

std::vector<Probe> probes_from_jsonl(std::string_view text);
std::vector<Probe> load_probes(const std::filesystem::path& path);
std::string probes_to_jsonl(const std::vector<Probe>& probes);

// Fraction of probes whose argmax-logprob candidate over the full response
// set A(context) equals the truth. Logprob ties pick the lexicographically
// smallest candidate.
double reconstruction_top1(const policy::Policy& pol, const std::vector<Probe>& probes);

// Same selection rule restricted to each probe's candidate list; the truth
// must be among the candidates.
double inference_top1(const policy::Policy& pol, const std::vector<Probe>& probes);

struct ExtractionReport {
    Extractability extract;
    double reconstruction = 0.0;
    double inference = 0.0;
    std::size_t generated_texts = 0;

    std::string to_json_string() const;
    std::string to_csv() const;
};

}  // namespace dmrl::extraction
