#include "dmrl/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dmrl/errors.hpp"

namespace dmrl::grpo {

std::string records_to_csv(const std::vector<TrainRecord>& records) {
    std::ostringstream out;
    out << "iteration,mean_reward,mean_abs_advantage,mean_kl,objective,param_norm\n";
    for (const TrainRecord& r : records) {
        out << r.iteration << ',' << r.mean_reward << ',' << r.mean_abs_advantage << ','
            << r.mean_kl << ',' << r.objective << ',' << r.param_norm << '\n';
    }
    return out.str();
}

GroupDraw group_sample(const policy::Policy& frozen, std::string_view question,
                       int group_size, RngStream& rng) {
    if (group_size < 1) throw ValidationError("group_sample: group size must be >= 1");
    const auto& cands = frozen.space()->candidates(question);
    const std::vector<double> logprobs = frozen.logprobs(question);
    std::vector<double> probs(logprobs.size());
    for (std::size_t i = 0; i < logprobs.size(); ++i) probs[i] = std::exp(logprobs[i]);

    GroupDraw draw;
    draw.responses.reserve(group_size);
    draw.logprobs.reserve(group_size);
    for (int g = 0; g < group_size; ++g) {
        const std::size_t idx = sample_categorical(probs, rng);
        draw.responses.push_back(cands[idx]);
        draw.logprobs.push_back(logprobs[idx]);
    }
    return draw;
}

std::vector<double> scaled_advantages(const std::vector<double>& rewards, double alpha,
                                      double std_guard) {
    if (!(alpha > 0.0)) throw DomainError("scaled_advantages: alpha must be > 0");
    if (!(std_guard > 0.0)) throw DomainError("scaled_advantages: std guard must be > 0");
    const std::size_t g = rewards.size();
    if (g == 0) throw DomainError("scaled_advantages: empty group");
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) /
                        static_cast<double>(g);
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / static_cast<double>(g));
    std::vector<double> adv(g, 0.0);
    if (sd < std_guard) return adv;
    for (std::size_t i = 0; i < g; ++i) adv[i] = alpha * (rewards[i] - mean) / sd;
    return adv;
}

double kl_penalty_term(const policy::Policy& current, const policy::Policy& reference,
                       std::string_view prompt, std::string_view candidate) {
    const double lp_cur = current.logprob(prompt, candidate);
    const double lp_ref = reference.logprob(prompt, candidate);
    if (!std::isfinite(lp_cur) || !std::isfinite(lp_ref)) {
        throw DomainError("kl_penalty_term: zero probability on candidate");
    }
    const double log_u = lp_ref - lp_cur;
    const double u = std::exp(log_u);
    return u - log_u - 1.0;
}

namespace {

struct SampleTerms {
    double ratio;        // current prob / frozen prob
    double clip_value;   // min(rho A, clip(rho) A)
    bool unclipped_active;
    double log_u;        // lp_ref - lp_cur
    double kl_term;      // u - ln u - 1
};

SampleTerms sample_terms(double lp_cur, double lp_frozen, double lp_ref, double advantage,
                         double clip_eps) {
    SampleTerms t{};
    t.ratio = std::exp(lp_cur - lp_frozen);
    const double clipped = std::clamp(t.ratio, 1.0 - clip_eps, 1.0 + clip_eps);
    const double v_unclipped = t.ratio * advantage;
    const double v_clipped = clipped * advantage;
    t.unclipped_active = v_unclipped <= v_clipped;
    t.clip_value = std::min(v_unclipped, v_clipped);
    t.log_u = lp_ref - lp_cur;
    t.kl_term = std::exp(t.log_u) - t.log_u - 1.0;
    return t;
}

void validate_clip(double clip_eps) {
    if (!(clip_eps > 0.0 && clip_eps < 1.0)) {
        throw ValidationError("clip eps must be in (0, 1)");
    }
}

}  // namespace

double surrogate_objective(const std::vector<GroupBatch>& batches,
                           const policy::ParametricPolicy& current,
                           const policy::Policy& reference, double clip_eps,
                           double kl_weight) {
    validate_clip(clip_eps);
    if (batches.empty()) throw ValidationError("surrogate_objective: no batches");
    double total = 0.0;
    for (const GroupBatch& batch : batches) {
        const std::vector<double> lp_cur_all = current.logprobs(batch.question);
        const std::vector<double> lp_ref_all = reference.logprobs(batch.question);
        double acc = 0.0;
        for (std::size_t i = 0; i < batch.responses.size(); ++i) {
            const auto idx = current.space()->candidate_index(batch.question,
                                                              batch.responses[i]);
            if (!idx) {
                throw CoverageError("surrogate: sampled response left the candidate set");
            }
            const SampleTerms t =
                sample_terms(lp_cur_all[*idx], batch.frozen_logprobs[i], lp_ref_all[*idx],
                             batch.advantages[i], clip_eps);
            acc += t.clip_value - kl_weight * t.kl_term;
        }
        total += acc / static_cast<double>(batch.responses.size());
    }
    return total / static_cast<double>(batches.size());
}

std::vector<double> surrogate_gradient(const std::vector<GroupBatch>& batches,
                                       const policy::ParametricPolicy& current,
                                       const policy::Policy& reference, double clip_eps,
                                       double kl_weight) {
    validate_clip(clip_eps);
    if (batches.empty()) throw ValidationError("surrogate_gradient: no batches");
    const FeatureMap& fm = current.feature_map();
    std::vector<double> grad(fm.dim(), 0.0);
    const double batch_w = 1.0 / static_cast<double>(batches.size());

    for (const GroupBatch& batch : batches) {
        const std::string& q = batch.question;
        const auto& cands = current.space()->candidates(q);
        const std::vector<double> lp_cur_all = current.logprobs(q);
        const std::vector<double> lp_ref_all = reference.logprobs(q);

        // d logpi(y|q) / d psi = phi(q, y) - E_pi phi(q, .). Accumulate each
        // sample's scalar weight on phi(q, y); the softmax-mean part enters
        // with the summed weight.
        std::vector<double> weight_on(cands.size(), 0.0);
        double weight_total = 0.0;
        const double sample_w = batch_w / static_cast<double>(batch.responses.size());

        for (std::size_t i = 0; i < batch.responses.size(); ++i) {
            const auto idx = current.space()->candidate_index(q, batch.responses[i]);
            if (!idx) {
                throw CoverageError("surrogate: sampled response left the candidate set");
            }
            const SampleTerms t =
                sample_terms(lp_cur_all[*idx], batch.frozen_logprobs[i], lp_ref_all[*idx],
                             batch.advantages[i], clip_eps);
            double w = 0.0;
            if (t.unclipped_active) {
                // d(rho A)/d psi = rho A dlogpi
                w += t.ratio * batch.advantages[i];
            }
            // d(u - ln u - 1)/d psi = (1 - u) dlogpi
            w -= kl_weight * (1.0 - std::exp(t.log_u));
            weight_on[*idx] += sample_w * w;
            weight_total += sample_w * w;
        }

        for (std::size_t c = 0; c < cands.size(); ++c) {
            const double coeff = weight_on[c] - weight_total * std::exp(lp_cur_all[c]);
            if (coeff != 0.0) fm.features(q, cands[c]).add_to(grad, coeff);
        }
    }
    return grad;
}

TrainRecord grpo_s_step(policy::ParametricPolicy& current,
                        const std::vector<GroupBatch>& batches,
                        const policy::Policy& reference, const GRPOConfig& config,
                        int iteration) {
    TrainRecord rec;
    rec.iteration = iteration;
    rec.objective =
        surrogate_objective(batches, current, reference, config.clip_eps, config.kl_weight);

    std::size_t n = 0;
    for (const GroupBatch& batch : batches) {
        for (std::size_t i = 0; i < batch.responses.size(); ++i) {
            rec.mean_reward += batch.rewards[i];
            rec.mean_abs_advantage += std::abs(batch.advantages[i]);
            rec.mean_kl +=
                kl_penalty_term(current, reference, batch.question, batch.responses[i]);
            ++n;
        }
    }
    if (n > 0) {
        rec.mean_reward /= static_cast<double>(n);
        rec.mean_abs_advantage /= static_cast<double>(n);
        rec.mean_kl /= static_cast<double>(n);
    }

    const std::vector<double> grad =
        surrogate_gradient(batches, current, reference, config.clip_eps, config.kl_weight);
    current.add_scaled(grad, config.learning_rate);

    double norm = 0.0;
    for (double v : current.params()) {
        if (!std::isfinite(v)) {
            throw DivergenceError("grpo: non-finite parameters",
                                  static_cast<std::size_t>(iteration));
        }
        norm += v * v;
    }
    rec.param_norm = std::sqrt(norm);
    return rec;
}

TrainResult train_category(const corpus::DemoDataset& dataset, int category_id,
                           const reward::RewardModel& model,
                           std::shared_ptr<const policy::ReferencePolicy> reference,
                           policy::ParametricPolicy initial, const GRPOConfig& config,
                           const hardness::HardnessConfig& hardness_config) {
    if (config.group_size < 1) throw ValidationError("grpo config: group size must be >= 1");
    validate_clip(config.clip_eps);
    if (config.kl_weight < 0.0) throw ValidationError("grpo config: kl weight must be >= 0");
    if (!(config.std_guard > 0.0)) throw ValidationError("grpo config: std guard must be > 0");
    if (config.outer_iters < 1 || config.steps_per_iter < 1 || config.hardness_every < 1) {
        throw ValidationError("grpo config: iteration counts must be >= 1");
    }

    const corpus::CategoryInfo& cat = dataset.category(category_id);
    if (cat.pair_indices.empty()) {
        throw ValidationError("grpo: category " + std::to_string(category_id) + " is empty");
    }
    const auto cat_u = static_cast<std::uint64_t>(category_id);

    TrainResult result{std::move(initial), {}};
    result.records.reserve(config.outer_iters);
    std::vector<double> alphas(cat.pair_indices.size(), 1.0);

    for (int iter = 1; iter <= config.outer_iters; ++iter) {
        if ((iter - 1) % config.hardness_every == 0) {
            hardness::HardnessConfig hc = hardness_config;
            hc.seed = derive_seed(config.seed, "grpo-hardness",
                                  {cat_u, static_cast<std::uint64_t>(iter)});
            const hardness::HardnessReport report =
                hardness::dmhm(result.policy, dataset, category_id, model, hc);
            if (config.category_mean_alpha) {
                double mean = 0.0;
                for (const auto& p : report.pairs) mean += p.combined;
                mean /= static_cast<double>(report.pairs.size());
                std::fill(alphas.begin(), alphas.end(), mean);
            } else {
                for (std::size_t i = 0; i < report.pairs.size(); ++i) {
                    alphas[i] = report.pairs[i].combined;
                }
            }
        }

        const policy::FrozenPolicy frozen = policy::snapshot(result.policy);
        std::vector<GroupBatch> batches;
        batches.reserve(cat.pair_indices.size());
        for (std::size_t i = 0; i < cat.pair_indices.size(); ++i) {
            const corpus::DemoPair& pair = dataset.pairs()[cat.pair_indices[i]];
            RngStream rng(derive_seed(config.seed, "grpo-group",
                                      {cat_u, static_cast<std::uint64_t>(iter), i}));
            GroupDraw draw = group_sample(frozen, pair.question, config.group_size, rng);

            GroupBatch batch;
            batch.question = pair.question;
            batch.pair_index = cat.pair_indices[i];
            batch.responses = std::move(draw.responses);
            batch.frozen_logprobs = std::move(draw.logprobs);
            batch.rewards.reserve(batch.responses.size());
            for (const std::string& response : batch.responses) {
                batch.rewards.push_back(model.score(pair.question, response));
            }
            batch.alpha = alphas[i];
            batch.advantages = scaled_advantages(batch.rewards, batch.alpha, config.std_guard);
            batches.push_back(std::move(batch));
        }

        TrainRecord rec;
        for (int s = 0; s < config.steps_per_iter; ++s) {
            rec = grpo_s_step(result.policy, batches, *reference, config, iter);
        }
        result.records.push_back(rec);
    }
    return result;
}

}  // namespace dmrl::grpo
