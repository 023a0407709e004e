#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dmrl/corpus.hpp"
#include "dmrl/hardness.hpp"
#include "dmrl/policy.hpp"
#include "dmrl/reward.hpp"
#include "dmrl/rng.hpp"

namespace dmrl::grpo {

struct GRPOConfig {
    int group_size = 8;           // G
    double clip_eps = 0.2;        // ratio clip half-width, in (0, 1)
    double kl_weight = 0.04;      // weight of the per-sample KL penalty
    double learning_rate = 0.05;
    int outer_iters = 100;
    int steps_per_iter = 1;       // gradient steps on each sampled batch set
    int hardness_every = 1;       // refresh hardness every k-th outer iteration
    double std_guard = 1e-8;      // group reward std below this -> zero advantages
    std::uint64_t seed = 0;
    // Use the category-mean combined hardness instead of per-question values.
    bool category_mean_alpha = false;
};

// One question's sampled group, with everything the surrogate needs.
struct GroupBatch {
    std::string question;
    std::size_t pair_index = 0;
    std::vector<std::string> responses;
    std::vector<double> frozen_logprobs;  // under the sampling snapshot
    std::vector<double> rewards;
    double alpha = 1.0;
    std::vector<double> advantages;
};

struct TrainRecord {
    int iteration = 0;
    double mean_reward = 0.0;
    double mean_abs_advantage = 0.0;
    double mean_kl = 0.0;
    double objective = 0.0;
    double param_norm = 0.0;
};

std::string records_to_csv(const std::vector<TrainRecord>& records);

struct GroupDraw {
    std::vector<std::string> responses;
    std::vector<double> logprobs;
};

// group_size independent draws from the (frozen) sampling policy, with their
// logprobs under that same policy.
GroupDraw group_sample(const policy::Policy& frozen, std::string_view question,
                       int group_size, RngStream& rng);

// alpha * (r - mean) / std with the population std; all zero when the std
// falls below the guard.
std::vector<double> scaled_advantages(const std::vector<double>& rewards, double alpha,
                                      double std_guard);

// Per-sample KL penalty u - ln(u) - 1 with u = p_ref(y|x) / p_cur(y|x).
// Nonnegative, zero iff the ratio is 1.
double kl_penalty_term(const policy::Policy& current, const policy::Policy& reference,
                       std::string_view prompt, std::string_view candidate);

// Mean over batches of (1/G) sum_i [ min(rho_i A_i, clip(rho_i) A_i)
//                                    - kl_weight * kl_penalty_term_i ].
double surrogate_objective(const std::vector<GroupBatch>& batches,
                           const policy::ParametricPolicy& current,
                           const policy::Policy& reference, double clip_eps,
                           double kl_weight);

// Analytic gradient of surrogate_objective in the policy parameters. The
// min/clip selector is treated as a fixed gate at the evaluation point.
std::vector<double> surrogate_gradient(const std::vector<GroupBatch>& batches,
                                       const policy::ParametricPolicy& current,
                                       const policy::Policy& reference, double clip_eps,
                                       double kl_weight);

// One ascent step on the surrogate; mutates the policy parameters and
// reports the batch statistics at the pre-step parameters.
TrainRecord grpo_s_step(policy::ParametricPolicy& current,
                        const std::vector<GroupBatch>& batches,
                        const policy::Policy& reference, const GRPOConfig& config,
                        int iteration);

struct TrainResult {
    policy::ParametricPolicy policy;
    std::vector<TrainRecord> records;  // one per outer iteration
};

// Full per-category loop: refresh hardness with the current policy, snapshot,
// sample a group per question, scale advantages by that question's combined
// hardness, and ascend the clipped surrogate. Bit-reproducible for a fixed
// config and seed.
TrainResult train_category(const corpus::DemoDataset& dataset, int category_id,
                           const reward::RewardModel& model,
                           std::shared_ptr<const policy::ReferencePolicy> reference,
                           policy::ParametricPolicy initial, const GRPOConfig& config,
                           const hardness::HardnessConfig& hardness_config);

}  // namespace dmrl::grpo
