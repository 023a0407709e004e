#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dmrl/space.hpp"

namespace dmrl {

// Sparse feature vector with sorted, unique indices.
struct FeatureVec {
    std::vector<std::pair<std::uint32_t, double>> entries;

    double dot(const std::vector<double>& dense) const;
    // dense += coeff * this
    void add_to(std::vector<double>& dense, double coeff) const;
    double norm2() const;
};

// Deterministic map from a (prompt, response) pair to a feature vector.
// Both reward models and logit-linear policies are linear in these features.
class FeatureMap {
public:
    virtual ~FeatureMap() = default;
    virtual std::uint32_t dim() const = 0;
    virtual FeatureVec features(std::string_view prompt, std::string_view response) const = 0;
    // Canonical JSON describing this map, for artifact round-trips.
    virtual std::string spec_string() const = 0;
};

// Hashed character n-gram features: n-grams of the response, n-grams of the
// prompt, and optionally prompt-word x response-gram crosses, each family
// salted separately and bucketed into `dim`. The result is L2-normalized;
// a pair with no grams at all maps to the zero vector.
class HashedNgramFeatureMap : public FeatureMap {
public:
    HashedNgramFeatureMap(int ngram, std::uint32_t dim, std::uint64_t seed,
                          bool cross_terms = true);

    std::uint32_t dim() const override { return dim_; }
    FeatureVec features(std::string_view prompt, std::string_view response) const override;
    std::string spec_string() const override;

private:
    int ngram_;
    std::uint32_t dim_;
    std::uint64_t seed_;
    bool cross_terms_;
};

// One indicator feature per (prompt, candidate) slot of a response space.
// Exact by construction; only defined for members of the space.
class TabularFeatureMap : public FeatureMap {
public:
    explicit TabularFeatureMap(policy::SpacePtr space);

    std::uint32_t dim() const override;
    FeatureVec features(std::string_view prompt, std::string_view response) const override;
    std::string spec_string() const override;

    const policy::SpacePtr& space() const { return space_; }

private:
    policy::SpacePtr space_;
};

// Rebuilds a feature map from its spec_string(). Tabular specs need the
// response space they index; hashed specs ignore it.
std::shared_ptr<const FeatureMap> feature_map_from_spec(const std::string& spec,
                                                        policy::SpacePtr space = nullptr);

}  // namespace dmrl
