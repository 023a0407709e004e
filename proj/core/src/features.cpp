#include "dmrl/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "dmrl/errors.hpp"
#include "dmrl/text.hpp"

namespace dmrl {

double FeatureVec::dot(const std::vector<double>& dense) const {
    double acc = 0.0;
    for (const auto& [idx, val] : entries) acc += dense[idx] * val;
    return acc;
}

void FeatureVec::add_to(std::vector<double>& dense, double coeff) const {
    for (const auto& [idx, val] : entries) dense[idx] += coeff * val;
}

double FeatureVec::norm2() const {
    double acc = 0.0;
    for (const auto& [idx, val] : entries) acc += val * val;
    return std::sqrt(acc);
}

namespace {

void accumulate_grams(std::string_view text, int n, std::uint64_t salt,
                      std::uint32_t dim, std::map<std::uint32_t, double>& counts) {
    if (text.empty()) return;
    if (static_cast<int>(text.size()) <= n) {
        counts[static_cast<std::uint32_t>(fnv1a64(text, salt) % dim)] += 1.0;
        return;
    }
    for (std::size_t i = 0; i + n <= text.size(); ++i) {
        const auto h = fnv1a64(text.substr(i, n), salt);
        counts[static_cast<std::uint32_t>(h % dim)] += 1.0;
    }
}

FeatureVec finish(std::map<std::uint32_t, double>& counts, bool unit_norm) {
    FeatureVec fv;
    fv.entries.assign(counts.begin(), counts.end());
    if (unit_norm) {
        const double norm = fv.norm2();
        if (norm > 0.0) {
            for (auto& [idx, val] : fv.entries) val /= norm;
        }
    }
    return fv;
}

}  // namespace

HashedNgramFeatureMap::HashedNgramFeatureMap(int ngram, std::uint32_t dim,
                                             std::uint64_t seed, bool cross_terms)
    : ngram_(ngram), dim_(dim), seed_(seed), cross_terms_(cross_terms) {
    if (ngram < 1) throw ValidationError("hashed features: ngram must be >= 1");
    if (dim == 0) throw ValidationError("hashed features: dim must be > 0");
}

FeatureVec HashedNgramFeatureMap::features(std::string_view prompt,
                                           std::string_view response) const {
    std::map<std::uint32_t, double> counts;
    const std::uint64_t response_salt = fnv1a64_u64(seed_, 1);
    const std::uint64_t prompt_salt = fnv1a64_u64(seed_, 2);
    const std::uint64_t cross_salt = fnv1a64_u64(seed_, 3);

    accumulate_grams(response, ngram_, response_salt, dim_, counts);
    accumulate_grams(prompt, ngram_, prompt_salt, dim_, counts);

    if (cross_terms_) {
        // Word-of-prompt x gram-of-response interactions; these are what let a
        // logit-linear policy tie a response fragment to a specific prompt.
        for (const std::string& word : split_words(prompt)) {
            accumulate_grams(response, ngram_, fnv1a64(word, cross_salt), dim_, counts);
        }
    }
    return finish(counts, /*unit_norm=*/true);
}

std::string HashedNgramFeatureMap::spec_string() const {
    nlohmann::json j{{"mode", "hashed_ngram"},
                     {"ngram", ngram_},
                     {"dim", dim_},
                     {"seed", seed_},
                     {"cross_terms", cross_terms_}};
    return j.dump();
}

TabularFeatureMap::TabularFeatureMap(policy::SpacePtr space) : space_(std::move(space)) {
    if (!space_) throw ValidationError("tabular features: null response space");
}

std::uint32_t TabularFeatureMap::dim() const {
    return static_cast<std::uint32_t>(space_->total_candidates());
}

FeatureVec TabularFeatureMap::features(std::string_view prompt,
                                       std::string_view response) const {
    const std::size_t p = space_->prompt_index(prompt);
    const auto c = space_->candidate_index(prompt, response);
    if (!c) {
        throw CoverageError("tabular features: response not in candidate set of prompt \"" +
                            std::string(prompt) + "\"");
    }
    FeatureVec fv;
    fv.entries.emplace_back(static_cast<std::uint32_t>(space_->prompt_offset(p) + *c), 1.0);
    return fv;
}

std::string TabularFeatureMap::spec_string() const {
    return nlohmann::json{{"mode", "tabular"}}.dump();
}

std::shared_ptr<const FeatureMap> feature_map_from_spec(const std::string& spec,
                                                        policy::SpacePtr space) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(spec);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("feature spec is not valid JSON: ") + e.what());
    }
    const std::string mode = j.value("mode", "");
    if (mode == "hashed_ngram") {
        return std::make_shared<HashedNgramFeatureMap>(
            j.value("ngram", 3), j.value("dim", 512u), j.value("seed", std::uint64_t{17}),
            j.value("cross_terms", true));
    }
    if (mode == "tabular") {
        if (!space) throw ValidationError("tabular feature spec requires a response space");
        return std::make_shared<TabularFeatureMap>(std::move(space));
    }
    throw ValidationError("unknown feature map mode: \"" + mode + "\"");
}

}  // namespace dmrl
