#include "dmrl/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "dmrl/errors.hpp"

namespace dmrl::policy {

// --- ResponseSpace ----------------------------------------------------------

std::size_t ResponseSpace::add_prompt(std::string prompt, std::vector<std::string> candidates) {
    if (candidates.empty()) {
        throw ValidationError("response space: prompt \"" + prompt + "\" has no candidates");
    }
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        for (std::size_t j = i + 1; j < candidates.size(); ++j) {
            if (candidates[i] == candidates[j]) {
                throw ValidationError("response space: duplicate candidate \"" + candidates[i] +
                                      "\" for prompt \"" + prompt + "\"");
            }
        }
    }
    if (index_.count(prompt)) {
        throw ValidationError("response space: duplicate prompt \"" + prompt + "\"");
    }
    const std::size_t idx = prompts_.size();
    index_.emplace(prompt, idx);
    offsets_.push_back(total_);
    total_ += candidates.size();
    prompts_.push_back(std::move(prompt));
    candidates_.push_back(std::move(candidates));
    return idx;
}

bool ResponseSpace::contains(std::string_view prompt) const {
    return index_.find(std::string(prompt)) != index_.end();
}

std::size_t ResponseSpace::prompt_index(std::string_view prompt) const {
    auto it = index_.find(std::string(prompt));
    if (it == index_.end()) {
        throw CoverageError("prompt not in response space: \"" + std::string(prompt) + "\"");
    }
    return it->second;
}

const std::vector<std::string>& ResponseSpace::candidates(std::string_view prompt) const {
    return candidates_[prompt_index(prompt)];
}

const std::vector<std::string>& ResponseSpace::candidates_at(std::size_t prompt_idx) const {
    return candidates_[prompt_idx];
}

std::optional<std::size_t> ResponseSpace::candidate_index(std::string_view prompt,
                                                          std::string_view candidate) const {
    const auto& cands = candidates(prompt);
    for (std::size_t i = 0; i < cands.size(); ++i) {
        if (cands[i] == candidate) return i;
    }
    return std::nullopt;
}

bool ResponseSpace::same_candidates(const ResponseSpace& other, std::string_view prompt) const {
    if (!contains(prompt) || !other.contains(prompt)) return false;
    return candidates(prompt) == other.candidates(prompt);
}

bool ResponseSpace::operator==(const ResponseSpace& other) const {
    return prompts_ == other.prompts_ && candidates_ == other.candidates_;
}

// --- Policy base ------------------------------------------------------------

double Policy::logprob(std::string_view prompt, std::string_view candidate) const {
    const auto idx = space()->candidate_index(prompt, candidate);
    if (!idx) {
        throw CoverageError("candidate not in A(prompt): \"" + std::string(candidate) + "\"");
    }
    return logprobs(prompt)[*idx];
}

std::vector<double> Policy::probs(std::string_view prompt) const {
    std::vector<double> lp = logprobs(prompt);
    for (double& v : lp) v = std::exp(v);
    return lp;
}

std::vector<double> log_softmax(std::vector<double> logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    for (double& v : logits) v -= lse;
    return logits;
}

// --- ReferencePolicy ---------------------------------------------------------

ReferencePolicy::ReferencePolicy(SpacePtr space, std::vector<std::vector<double>> log_weights)
    : space_(std::move(space)) {
    if (!space_) throw ValidationError("reference policy: null space");
    if (log_weights.size() != space_->prompt_count()) {
        throw ValidationError("reference policy: log-weight rows != prompt count");
    }
    table_.reserve(log_weights.size());
    for (std::size_t p = 0; p < log_weights.size(); ++p) {
        auto& row = log_weights[p];
        if (row.size() != space_->candidates_at(p).size()) {
            throw ValidationError("reference policy: log-weight row size mismatch at prompt " +
                                  std::to_string(p));
        }
        for (double v : row) {
            if (!std::isfinite(v)) {
                throw ValidationError("reference policy: non-finite log-weight");
            }
        }
        table_.push_back(log_softmax(std::move(row)));
    }
}

ReferencePolicy ReferencePolicy::uniform(SpacePtr space) {
    if (!space) throw ValidationError("reference policy: null space");
    std::vector<std::vector<double>> rows;
    rows.reserve(space->prompt_count());
    for (std::size_t p = 0; p < space->prompt_count(); ++p) {
        rows.emplace_back(space->candidates_at(p).size(), 0.0);
    }
    return ReferencePolicy(std::move(space), std::move(rows));
}

std::vector<double> ReferencePolicy::logprobs(std::string_view prompt) const {
    return table_[space_->prompt_index(prompt)];
}

// --- TiltedPolicy -------------------------------------------------------------

TiltedPolicy::TiltedPolicy(std::shared_ptr<const ReferencePolicy> reference, RewardFn reward,
                           double beta)
    : reference_(std::move(reference)), reward_(std::move(reward)), beta_(beta) {
    if (!reference_) throw ValidationError("tilted policy: null reference");
    if (!reward_) throw ValidationError("tilted policy: null reward");
    if (!(beta > 0.0)) throw DomainError("tilted policy: beta must be > 0");
}

std::vector<double> TiltedPolicy::logprobs(std::string_view prompt) const {
    const std::string key(prompt);
    const auto& cands = space()->candidates(prompt);
    std::vector<double> logits = reference_->logprobs(prompt);
    for (std::size_t i = 0; i < cands.size(); ++i) {
        logits[i] += reward_(key, cands[i]) / beta_;
    }
    return log_softmax(std::move(logits));
}

TiltedPolicy tilt(std::shared_ptr<const ReferencePolicy> reference, RewardFn reward,
                  double beta) {
    return TiltedPolicy(std::move(reference), std::move(reward), beta);
}

// --- ParametricPolicy ---------------------------------------------------------

ParametricPolicy::ParametricPolicy(SpacePtr space, std::shared_ptr<const FeatureMap> feature_map,
                                   std::vector<double> params)
    : space_(std::move(space)), feature_map_(std::move(feature_map)), params_(std::move(params)) {
    if (!space_) throw ValidationError("parametric policy: null space");
    if (!feature_map_) throw ValidationError("parametric policy: null feature map");
    if (params_.size() != feature_map_->dim()) {
        throw ValidationError("parametric policy: params size != feature dim");
    }
    for (double v : params_) {
        if (!std::isfinite(v)) throw ValidationError("parametric policy: non-finite param");
    }
}

ParametricPolicy::ParametricPolicy(SpacePtr space, std::shared_ptr<const FeatureMap> feature_map)
    : ParametricPolicy(std::move(space), feature_map,
                       std::vector<double>(feature_map ? feature_map->dim() : 0, 0.0)) {}

std::vector<double> ParametricPolicy::logprobs(std::string_view prompt) const {
    const std::string key(prompt);
    const auto& cands = space_->candidates(prompt);
    std::vector<double> logits(cands.size());
    for (std::size_t i = 0; i < cands.size(); ++i) {
        logits[i] = feature_map_->features(key, cands[i]).dot(params_);
    }
    return log_softmax(std::move(logits));
}

void ParametricPolicy::set_params(std::vector<double> params) {
    if (params.size() != params_.size()) {
        throw ValidationError("parametric policy: params size mismatch");
    }
    params_ = std::move(params);
}

void ParametricPolicy::add_scaled(const std::vector<double>& direction, double step) {
    if (direction.size() != params_.size()) {
        throw ValidationError("parametric policy: direction size mismatch");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i] += step * direction[i];
}

// --- FrozenPolicy -------------------------------------------------------------

FrozenPolicy::FrozenPolicy(SpacePtr space, std::vector<std::vector<double>> logprob_table)
    : space_(std::move(space)), table_(std::move(logprob_table)) {
    if (!space_) throw ValidationError("frozen policy: null space");
    if (table_.size() != space_->prompt_count()) {
        throw ValidationError("frozen policy: table rows != prompt count");
    }
}

std::vector<double> FrozenPolicy::logprobs(std::string_view prompt) const {
    return table_[space_->prompt_index(prompt)];
}

FrozenPolicy snapshot(const Policy& source) {
    const auto& sp = source.space();
    std::vector<std::vector<double>> table;
    table.reserve(sp->prompt_count());
    for (const std::string& prompt : sp->prompts()) {
        table.push_back(source.logprobs(prompt));
    }
    return FrozenPolicy(sp, std::move(table));
}

// --- sampling and KL ----------------------------------------------------------

std::size_t sample_index(const Policy& pol, std::string_view prompt, RngStream& rng) {
    return sample_categorical(pol.probs(prompt), rng);
}

std::string sample(const Policy& pol, std::string_view prompt, RngStream& rng) {
    return pol.space()->candidates(prompt)[sample_index(pol, prompt, rng)];
}

double kl(const Policy& p, const Policy& q, std::string_view prompt) {
    if (!p.space()->same_candidates(*q.space(), prompt)) {
        throw SpaceMismatchError("kl: policies disagree on A(\"" + std::string(prompt) + "\")");
    }
    const std::vector<double> lp = p.logprobs(prompt);
    const std::vector<double> lq = q.logprobs(prompt);
    double acc = 0.0;
    for (std::size_t i = 0; i < lp.size(); ++i) {
        if (!std::isfinite(lq[i])) throw DomainError("kl: q has zero mass on a candidate");
        acc += std::exp(lp[i]) * (lp[i] - lq[i]);
    }
    return acc;
}

// --- serialization -------------------------------------------------------------

namespace {

nlohmann::json space_to_json(const ResponseSpace& space) {
    nlohmann::json prompts = nlohmann::json::array();
    for (std::size_t p = 0; p < space.prompt_count(); ++p) {
        prompts.push_back({{"prompt", space.prompts()[p]},
                           {"candidates", space.candidates_at(p)}});
    }
    return {{"prompts", prompts}};
}

ResponseSpace space_from_json(const nlohmann::json& j) {
    ResponseSpace space;
    for (const auto& entry : j.at("prompts")) {
        space.add_prompt(entry.at("prompt").get<std::string>(),
                         entry.at("candidates").get<std::vector<std::string>>());
    }
    return space;
}

nlohmann::json parse_or_throw(const std::string& text) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("policy JSON parse failure: ") + e.what());
    }
}

}  // namespace

std::string space_to_json_string(const ResponseSpace& space) {
    return space_to_json(space).dump();
}

ResponseSpace space_from_json_string(const std::string& text) {
    return space_from_json(parse_or_throw(text));
}

std::string to_json_string(const ReferencePolicy& pol) {
    nlohmann::json j{{"type", "reference"},
                     {"space", space_to_json(*pol.space())},
                     {"logprobs", pol.log_weight_table()}};
    return j.dump();
}

std::string to_json_string(const ParametricPolicy& pol) {
    nlohmann::json j{{"type", "parametric"},
                     {"space", space_to_json(*pol.space())},
                     {"features", nlohmann::json::parse(pol.feature_map().spec_string())},
                     {"params", pol.params()}};
    return j.dump();
}

std::string to_json_string(const FrozenPolicy& pol) {
    nlohmann::json j{{"type", "frozen"},
                     {"space", space_to_json(*pol.space())},
                     {"logprobs", pol.table()}};
    return j.dump();
}

std::unique_ptr<Policy> policy_from_json_string(const std::string& text) {
    const nlohmann::json j = parse_or_throw(text);
    const std::string type = j.value("type", "");
    auto space = std::make_shared<ResponseSpace>(space_from_json(j.at("space")));
    if (type == "reference") {
        return std::make_unique<ReferencePolicy>(
            space, j.at("logprobs").get<std::vector<std::vector<double>>>());
    }
    if (type == "parametric") {
        auto fm = feature_map_from_spec(j.at("features").dump(), space);
        return std::make_unique<ParametricPolicy>(space, std::move(fm),
                                                  j.at("params").get<std::vector<double>>());
    }
    if (type == "frozen") {
        return std::make_unique<FrozenPolicy>(
            space, j.at("logprobs").get<std::vector<std::vector<double>>>());
    }
    throw ValidationError("unknown policy type: \"" + type + "\"");
}

}  // namespace dmrl::policy
