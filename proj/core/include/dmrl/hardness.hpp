#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "dmrl/corpus.hpp"
#include "dmrl/policy.hpp"
#include "dmrl/reward.hpp"

namespace dmrl::hardness {

// Rule-based sub-sentence splitter. Fragments are trimmed contiguous slices
// of the input, so their concatenation is a subsequence of it.
struct SplitterConfig {
    std::string boundary_chars = ".!?;";
    std::size_t min_fragment_chars = 2;
    std::size_t max_fragments = 64;
};

struct SplitResult {
    std::vector<std::string> fragments;
    bool empty_input = false;  // fragments = {""} in that case
};

SplitResult split_subsentences(std::string_view text, const SplitterConfig& config);

// Text -> unit-norm vector. Texts that produce the zero vector are mapped to
// the first basis vector so similarity stays defined.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::size_t dim() const = 0;
    virtual std::vector<double> embed(std::string_view text) const = 0;
};

class HashedNgramEmbedder : public Embedder {
public:
    HashedNgramEmbedder(int ngram, std::size_t dim, std::uint64_t seed);
    std::size_t dim() const override { return dim_; }
    std::vector<double> embed(std::string_view text) const override;

private:
    int ngram_;
    std::size_t dim_;
    std::uint64_t seed_;
};

// Looks texts up in a fixed table loaded from JSONL lines
// {"text": ..., "vector": [...]}; unknown texts are an error.
class ExternalVectorEmbedder : public Embedder {
public:
    static ExternalVectorEmbedder from_jsonl_file(const std::filesystem::path& path);
    explicit ExternalVectorEmbedder(std::vector<std::pair<std::string, std::vector<double>>> rows);
    std::size_t dim() const override { return dim_; }
    std::vector<double> embed(std::string_view text) const override;

private:
    std::size_t dim_ = 0;
    std::vector<std::pair<std::string, std::vector<double>>> rows_;
};

// Cosine of the two embeddings, clamped into [0, 1].
double similarity(std::string_view a, std::string_view b, const Embedder& embedder);

// Mean over fragments of `demo_frags` of the best match in `policy_frags`.
double pair_similarity(const std::vector<std::string>& demo_frags,
                       const std::vector<std::string>& policy_frags,
                       const Embedder& embedder);

double logistic(double z);
// log(1 / (1 + e^-z)), stable for any z.
double log_logistic(double z);
// logistic(num_z) / logistic(den_z), computed in log space so it never
// underflows to 0 or overflows.
double logistic_ratio(double num_z, double den_z);

struct DataHardness {
    std::vector<double> overall_similarity;  // W per pair
    std::vector<double> deviation;           // 1 - W
    double deviation_mean = 0.0;
    std::vector<double> alpha_data;          // logistic(deviation)/logistic(mean)
};

DataHardness data_hardness(const corpus::PairwiseSet& pairwise, const SplitterConfig& splitter,
                           const Embedder& embedder);

// Demo score minus policy-sample score under the category's reward model.
std::vector<double> reward_gaps(const corpus::PairwiseSet& pairwise,
                                const reward::RewardModel& model);

// Drops the trim_count entries whose squared deviation from the mean gap is
// largest; ties keep the lower index. threshold is the largest retained
// squared deviation.
struct TrimMask {
    std::vector<std::uint8_t> mask;
    double threshold = 0.0;
    std::size_t trim_count = 0;
};

TrimMask trim_mask(const std::vector<double>& gaps, std::size_t trim_count);

struct ModelHardness {
    double gap_mean = 0.0;          // untrimmed mean
    double trimmed_gap_mean = 0.0;  // mean over retained entries
    double alpha_model = 1.0;
};

ModelHardness model_hardness(const std::vector<double>& gaps, const TrimMask& mask);

struct HardnessConfig {
    SplitterConfig splitter;
    std::shared_ptr<const Embedder> embedder;
    std::size_t trim_count = 0;
    std::uint64_t seed = 0;
};

struct PairHardness {
    std::size_t pair_index = 0;  // into the dataset
    double overall_similarity = 0.0;
    double deviation = 0.0;
    double alpha_data = 1.0;
    double reward_gap = 0.0;
    bool retained = true;
    double combined = 1.0;  // alpha_data * alpha_model
};

struct HardnessReport {
    int category_id = 0;
    std::string policy_tag;
    std::vector<PairHardness> pairs;
    double deviation_mean = 0.0;
    double gap_mean = 0.0;
    double trimmed_gap_mean = 0.0;
    double threshold = 0.0;
    std::size_t trim_count = 0;
    double alpha_model = 1.0;
    std::vector<std::string> notes;

    std::string to_json_string() const;
    std::string to_csv() const;
};

// Full measurement pass: sample one policy response per pair, score
// dissimilarity and reward gaps, and combine the two hardness factors.
HardnessReport dmhm(const policy::Policy& pol, const corpus::DemoDataset& dataset,
                    int category_id, const reward::RewardModel& model,
                    const HardnessConfig& config);

}  // namespace dmrl::hardness
