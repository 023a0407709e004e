#include "dmrl/reward.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dmrl/errors.hpp"
#include "dmrl/rng.hpp"

namespace dmrl::reward {

double RewardModel::score(std::string_view prompt, std::string_view response) const {
    return features->features(prompt, response).dot(theta);
}

FeatureVec RewardModel::grad_theta(std::string_view prompt, std::string_view response) const {
    return features->features(prompt, response);
}

policy::RewardFn RewardModel::as_fn() const {
    // Copies theta so the closure stays valid past the model's lifetime.
    auto fm = features;
    auto th = theta;
    return [fm, th](const std::string& prompt, const std::string& candidate) {
        return fm->features(prompt, candidate).dot(th);
    };
}

RewardModel RewardModel::zeros(std::shared_ptr<const FeatureMap> features) {
    if (!features) throw ValidationError("reward model: null feature map");
    std::vector<double> theta(features->dim(), 0.0);
    return RewardModel{std::move(features), std::move(theta)};
}

std::vector<double> irl_gradient(const RewardModel& model, std::string_view prompt,
                                 std::string_view y_demo, std::string_view y_policy,
                                 double beta) {
    if (!(beta > 0.0)) throw DomainError("irl_gradient: beta must be > 0");
    std::vector<double> g(model.features->dim(), 0.0);
    model.features->features(prompt, y_demo).add_to(g, 1.0 / beta);
    model.features->features(prompt, y_policy).add_to(g, -1.0 / beta);
    return g;
}

std::string SRLTrace::to_csv() const {
    std::ostringstream out;
    out << "iteration,loglik,mean_gap\n";
    for (const SRLTraceRow& row : rows) {
        out << row.iteration << ',' << row.demo_loglik << ',' << row.mean_reward_gap << '\n';
    }
    return out.str();
}

namespace {

// Demo responses must be members of the candidate set; reported once with the
// offending question.
std::size_t demo_candidate_index(const policy::ResponseSpace& space,
                                 const corpus::DemoPair& pair) {
    const std::string rendered = pair.response.rendered();
    const auto idx = space.candidate_index(pair.question, rendered);
    if (!idx) {
        throw CoverageError("demonstration response not in A(question) for question \"" +
                            pair.question + "\"");
    }
    return *idx;
}

struct CategoryView {
    std::vector<const corpus::DemoPair*> pairs;
    std::vector<std::size_t> demo_index;  // candidate index of the demo response
};

CategoryView make_view(const corpus::DemoDataset& dataset, int category_id,
                       const policy::ResponseSpace& space) {
    CategoryView view;
    for (std::size_t idx : dataset.category(category_id).pair_indices) {
        const corpus::DemoPair& pair = dataset.pairs()[idx];
        if (!space.contains(pair.question)) {
            throw CoverageError("policy does not cover question: \"" + pair.question + "\"");
        }
        view.pairs.push_back(&pair);
        view.demo_index.push_back(demo_candidate_index(space, pair));
    }
    return view;
}

double loglik_of(const CategoryView& view, const policy::Policy& tilted) {
    double acc = 0.0;
    for (std::size_t i = 0; i < view.pairs.size(); ++i) {
        acc += tilted.logprobs(view.pairs[i]->question)[view.demo_index[i]];
    }
    return acc / static_cast<double>(view.pairs.size());
}

double mean_gap_of(const CategoryView& view, const RewardModel& model,
                   const policy::Policy& tilted) {
    double acc = 0.0;
    for (std::size_t i = 0; i < view.pairs.size(); ++i) {
        const std::string& q = view.pairs[i]->question;
        const auto& cands = tilted.space()->candidates(q);
        const std::vector<double> probs = tilted.probs(q);
        double expected = 0.0;
        std::vector<double> scores(cands.size());
        for (std::size_t c = 0; c < cands.size(); ++c) {
            scores[c] = model.score(q, cands[c]);
            expected += probs[c] * scores[c];
        }
        acc += scores[view.demo_index[i]] - expected;
    }
    return acc / static_cast<double>(view.pairs.size());
}

}  // namespace

double demo_loglik(const RewardModel& model, const corpus::DemoDataset& dataset,
                   int category_id, std::shared_ptr<const policy::ReferencePolicy> reference,
                   double beta) {
    if (!(beta > 0.0)) throw DomainError("demo_loglik: beta must be > 0");
    const CategoryView view = make_view(dataset, category_id, *reference->space());
    const policy::TiltedPolicy tilted = policy::tilt(std::move(reference), model.as_fn(), beta);
    return loglik_of(view, tilted);
}

std::pair<RewardModel, SRLTrace> srl_train(
    const corpus::DemoDataset& dataset, int category_id,
    std::shared_ptr<const policy::ReferencePolicy> reference,
    std::shared_ptr<const FeatureMap> features, const SRLConfig& config) {
    if (config.outer_iters < 1 || config.inner_iters < 1) {
        throw ValidationError("srl config: iteration counts must be >= 1");
    }
    if (!(config.stepsize >= 0.0)) throw ValidationError("srl config: stepsize must be >= 0");
    if (!(config.beta > 0.0)) throw DomainError("srl config: beta must be > 0");
    if (!reference) throw ValidationError("srl: null reference policy");
    if (!features) throw ValidationError("srl: null feature map");

    const CategoryView view = make_view(dataset, category_id, *reference->space());
    if (view.pairs.empty()) {
        throw ValidationError("srl: category " + std::to_string(category_id) + " is empty");
    }

    RewardModel model = RewardModel::zeros(features);
    const auto cat = static_cast<std::uint64_t>(category_id);
    if (config.init_scale != 0.0) {
        RngStream init_rng(derive_seed(config.seed, "srl-init", {cat}));
        for (double& v : model.theta) v = config.init_scale * init_rng.next_gaussian();
    }

    RngStream pair_rng(derive_seed(config.seed, "srl-pair", {cat}));
    RngStream draw_rng(derive_seed(config.seed, "srl-draw", {cat}));

    const std::size_t dim = features->dim();
    const double beta = config.beta;
    SRLTrace trace;
    trace.rows.reserve(config.outer_iters);

    auto retilt = [&]() {
        return policy::snapshot(policy::tilt(reference, model.as_fn(), beta));
    };

    for (int t = 1; t <= config.outer_iters; ++t) {
        policy::FrozenPolicy sampler = retilt();
        const double eta = config.schedule == StepSchedule::kInvSqrt
                               ? config.stepsize / std::sqrt(static_cast<double>(t))
                               : config.stepsize;
        for (int k = 1; k <= config.inner_iters; ++k) {
            std::vector<double> grad(dim, 0.0);
            if (config.expectation_mode) {
                // Full-batch expectation of the demo-vs-policy feature gap.
                const double inv_m = 1.0 / static_cast<double>(view.pairs.size());
                for (std::size_t i = 0; i < view.pairs.size(); ++i) {
                    const std::string& q = view.pairs[i]->question;
                    const auto& cands = sampler.space()->candidates(q);
                    const std::vector<double> probs = sampler.probs(q);
                    features->features(q, cands[view.demo_index[i]]).add_to(grad, inv_m / beta);
                    for (std::size_t c = 0; c < cands.size(); ++c) {
                        features->features(q, cands[c]).add_to(grad, -inv_m * probs[c] / beta);
                    }
                }
            } else {
                const std::size_t i = pair_rng.next_index(view.pairs.size());
                const std::string& q = view.pairs[i]->question;
                const std::size_t drawn = policy::sample_index(sampler, q, draw_rng);
                const auto& cands = sampler.space()->candidates(q);
                features->features(q, cands[view.demo_index[i]]).add_to(grad, 1.0 / beta);
                features->features(q, cands[drawn]).add_to(grad, -1.0 / beta);
            }
            for (std::size_t d = 0; d < dim; ++d) {
                model.theta[d] += eta * grad[d];
                if (!std::isfinite(model.theta[d])) {
                    throw DivergenceError("srl: non-finite theta", static_cast<std::size_t>(t));
                }
            }
            if (config.snapshot_per_step && k < config.inner_iters) sampler = retilt();
        }
        const policy::TiltedPolicy current = policy::tilt(reference, model.as_fn(), beta);
        trace.rows.push_back(SRLTraceRow{t, model.theta, loglik_of(view, current),
                                         mean_gap_of(view, model, current)});
    }
    return {std::move(model), std::move(trace)};
}

std::string reward_model_to_json_string(const RewardModel& model) {
    nlohmann::json j{{"features", nlohmann::json::parse(model.features->spec_string())},
                     {"theta", model.theta}};
    return j.dump();
}

RewardModel reward_model_from_json_string(const std::string& text,
                                          policy::SpacePtr space_for_tabular) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("reward model JSON parse failure: ") + e.what());
    }
    auto fm = feature_map_from_spec(j.at("features").dump(), std::move(space_for_tabular));
    RewardModel model{std::move(fm), j.at("theta").get<std::vector<double>>()};
    if (model.theta.size() != model.features->dim()) {
        throw ValidationError("reward model: theta size != feature dim");
    }
    return model;
}

}  // namespace dmrl::reward
