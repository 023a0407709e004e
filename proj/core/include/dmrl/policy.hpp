#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "dmrl/features.hpp"
#include "dmrl/rng.hpp"
#include "dmrl/space.hpp"

namespace dmrl::policy {

// A distribution over each prompt's candidate set. Implementations return
// exactly normalized natural-log probabilities (per-prompt mass sums to 1
// within 1e-9); all of them are immutable value objects except
// ParametricPolicy, whose parameters belong to a single trainer.
class Policy {
public:
    virtual ~Policy() = default;

    virtual const SpacePtr& space() const = 0;

    // Log-probabilities over A(prompt), in candidate order.
    virtual std::vector<double> logprobs(std::string_view prompt) const = 0;

    // Throws CoverageError if the candidate is not a member of A(prompt).
    double logprob(std::string_view prompt, std::string_view candidate) const;

    std::vector<double> probs(std::string_view prompt) const;
};

// Fixed base distribution given by per-candidate log-weights.
class ReferencePolicy : public Policy {
public:
    ReferencePolicy(SpacePtr space, std::vector<std::vector<double>> log_weights);

    static ReferencePolicy uniform(SpacePtr space);

    const SpacePtr& space() const override { return space_; }
    std::vector<double> logprobs(std::string_view prompt) const override;

    const std::vector<std::vector<double>>& log_weight_table() const { return table_; }

private:
    SpacePtr space_;
    std::vector<std::vector<double>> table_;  // normalized logprobs per prompt
};

using RewardFn = std::function<double(const std::string& prompt, const std::string& candidate)>;

// Reference distribution reweighted by exp(reward / beta) and renormalized
// over the candidate set. This is the exact optimum of reward-maximization
// penalized by beta * KL from the reference.
class TiltedPolicy : public Policy {
public:
    TiltedPolicy(std::shared_ptr<const ReferencePolicy> reference, RewardFn reward,
                 double beta);

    const SpacePtr& space() const override { return reference_->space(); }
    std::vector<double> logprobs(std::string_view prompt) const override;

    double beta() const { return beta_; }
    const ReferencePolicy& reference() const { return *reference_; }

private:
    std::shared_ptr<const ReferencePolicy> reference_;
    RewardFn reward_;
    double beta_;
};

TiltedPolicy tilt(std::shared_ptr<const ReferencePolicy> reference, RewardFn reward,
                  double beta);

// Trainable softmax policy, logit-linear in feature_map(prompt, candidate).
class ParametricPolicy : public Policy {
public:
    ParametricPolicy(SpacePtr space, std::shared_ptr<const FeatureMap> feature_map,
                     std::vector<double> params);

    // Zero parameters; coincides with the uniform distribution.
    ParametricPolicy(SpacePtr space, std::shared_ptr<const FeatureMap> feature_map);

    const SpacePtr& space() const override { return space_; }
    std::vector<double> logprobs(std::string_view prompt) const override;

    const std::vector<double>& params() const { return params_; }
    void set_params(std::vector<double> params);
    // params += step * direction
    void add_scaled(const std::vector<double>& direction, double step);

    const FeatureMap& feature_map() const { return *feature_map_; }
    const std::shared_ptr<const FeatureMap>& feature_map_ptr() const { return feature_map_; }

private:
    SpacePtr space_;
    std::shared_ptr<const FeatureMap> feature_map_;
    std::vector<double> params_;
};

// Immutable materialized snapshot: per-prompt logprob tables copied out of a
// live policy, unaffected by any later parameter updates.
class FrozenPolicy : public Policy {
public:
    FrozenPolicy(SpacePtr space, std::vector<std::vector<double>> logprob_table);

    const SpacePtr& space() const override { return space_; }
    std::vector<double> logprobs(std::string_view prompt) const override;

    const std::vector<std::vector<double>>& table() const { return table_; }

private:
    SpacePtr space_;
    std::vector<std::vector<double>> table_;
};

FrozenPolicy snapshot(const Policy& source);

// Seed-deterministic draw from the policy's distribution at this prompt.
std::size_t sample_index(const Policy& pol, std::string_view prompt, RngStream& rng);
std::string sample(const Policy& pol, std::string_view prompt, RngStream& rng);

// Exact KL(p || q) at one prompt by enumeration over the shared candidate
// set. Throws SpaceMismatchError when the candidate sets differ and
// DomainError when q puts zero mass on a candidate.
double kl(const Policy& p, const Policy& q, std::string_view prompt);

// Normalized logprobs from raw logits (max-subtracted log-softmax).
std::vector<double> log_softmax(std::vector<double> logits);

// --- serialization ---------------------------------------------------------

std::string space_to_json_string(const ResponseSpace& space);
ResponseSpace space_from_json_string(const std::string& text);

std::string to_json_string(const ReferencePolicy& pol);
std::string to_json_string(const ParametricPolicy& pol);
std::string to_json_string(const FrozenPolicy& pol);

// Dispatches on the serialized "type" (reference | parametric | frozen).
std::unique_ptr<Policy> policy_from_json_string(const std::string& text);

}  // namespace dmrl::policy
