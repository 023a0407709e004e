#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dmrl/corpus.hpp"
#include "dmrl/features.hpp"
#include "dmrl/policy.hpp"

namespace dmrl::reward {

// Feature-linear scorer: score(x, y) = theta . features(x, y). Immutable once
// returned from training; safe for concurrent scoring.
struct RewardModel {
    std::shared_ptr<const FeatureMap> features;
    std::vector<double> theta;

    double score(std::string_view prompt, std::string_view response) const;

    // d(score)/d(theta) = features(x, y), independent of theta.
    FeatureVec grad_theta(std::string_view prompt, std::string_view response) const;

    policy::RewardFn as_fn() const;

    static RewardModel zeros(std::shared_ptr<const FeatureMap> features);
};

// (grad r(x, y_demo) - grad r(x, y_policy)) / beta, densely.
std::vector<double> irl_gradient(const RewardModel& model, std::string_view prompt,
                                 std::string_view y_demo, std::string_view y_policy,
                                 double beta);

enum class StepSchedule { kConstant, kInvSqrt };

struct SRLConfig {
    int outer_iters = 50;          // T
    int inner_iters = 20;          // K
    double stepsize = 0.05;        // eta
    StepSchedule schedule = StepSchedule::kConstant;
    double beta = 0.1;
    std::uint64_t seed = 0;
    double init_scale = 0.0;       // 0 -> theta starts at zero
    // Replace sampled inner gradients with the exact full-batch expectation
    // under the snapshot policy; turns the trainer deterministic.
    bool expectation_mode = false;
    // Retilt the sampling policy after every inner step instead of once per
    // outer iteration.
    bool snapshot_per_step = false;
};

struct SRLTraceRow {
    int iteration = 0;  // 1-based outer iteration
    std::vector<double> theta;
    double demo_loglik = 0.0;
    double mean_reward_gap = 0.0;
};

struct SRLTrace {
    std::vector<SRLTraceRow> rows;  // one per outer iteration
    std::string to_csv() const;     // iteration,loglik,mean_gap
};

// Mean log-probability that the reference-tilted policy induced by `model`
// assigns to the category's demonstration responses.
double demo_loglik(const RewardModel& model, const corpus::DemoDataset& dataset,
                   int category_id, std::shared_ptr<const policy::ReferencePolicy> reference,
                   double beta);

// Alternating trainer: K stochastic inner steps on theta per outer iteration,
// sampling comparison responses from the policy tilted at the iteration's
// opening parameters, then re-tilting. Returns the final model and the
// per-iteration trace.
std::pair<RewardModel, SRLTrace> srl_train(
    const corpus::DemoDataset& dataset, int category_id,
    std::shared_ptr<const policy::ReferencePolicy> reference,
    std::shared_ptr<const FeatureMap> features, const SRLConfig& config);

std::string reward_model_to_json_string(const RewardModel& model);
RewardModel reward_model_from_json_string(const std::string& text,
                                          policy::SpacePtr space_for_tabular = nullptr);

}  // namespace dmrl::reward
