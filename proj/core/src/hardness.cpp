#include "dmrl/hardness.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dmrl/errors.hpp"
#include "dmrl/text.hpp"

namespace dmrl::hardness {

// --- splitting ---------------------------------------------------------------

SplitResult split_subsentences(std::string_view text, const SplitterConfig& config) {
    SplitResult result;
    if (trim(text).empty()) {
        result.fragments.push_back("");
        result.empty_input = true;
        return result;
    }

    // Fragments are trimmed [begin, end) slices of the input; a too-short
    // slice extends the previous one instead of standing alone, which keeps
    // every fragment a contiguous substring.
    auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    auto is_boundary = [&](char c) {
        return config.boundary_chars.find(c) != std::string::npos;
    };
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    auto push = [&](std::size_t begin, std::size_t end) {
        while (begin < end && is_space(text[begin])) ++begin;
        while (end > begin && is_space(text[end - 1])) --end;
        if (begin == end) return;
        if (!ranges.empty() && end - begin < config.min_fragment_chars) {
            ranges.back().second = end;
            return;
        }
        ranges.emplace_back(begin, end);
    };

    std::size_t start = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (!is_boundary(text[i])) continue;
        if (ranges.size() + 1 >= config.max_fragments) break;
        push(start, i + 1);
        start = i + 1;
    }
    if (start < text.size()) push(start, text.size());

    for (const auto& [begin, end] : ranges) {
        result.fragments.push_back(std::string(text.substr(begin, end - begin)));
    }
    if (result.fragments.empty()) result.fragments.push_back(trim(text));
    return result;
}

// --- embedding ----------------------------------------------------------------

namespace {

std::vector<double> unit_or_basis(std::vector<double> v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) {
        v.assign(v.size(), 0.0);
        v[0] = 1.0;
        return v;
    }
    for (double& x : v) x /= norm;
    return v;
}

}  // namespace

HashedNgramEmbedder::HashedNgramEmbedder(int ngram, std::size_t dim, std::uint64_t seed)
    : ngram_(ngram), dim_(dim), seed_(seed) {
    if (ngram < 1) throw ValidationError("embedder: ngram must be >= 1");
    if (dim == 0) throw ValidationError("embedder: dim must be > 0");
}

std::vector<double> HashedNgramEmbedder::embed(std::string_view text) const {
    std::vector<double> v(dim_, 0.0);
    if (!text.empty()) {
        if (static_cast<int>(text.size()) <= ngram_) {
            v[fnv1a64(text, seed_) % dim_] += 1.0;
        } else {
            for (std::size_t i = 0; i + ngram_ <= text.size(); ++i) {
                v[fnv1a64(text.substr(i, ngram_), seed_) % dim_] += 1.0;
            }
        }
    }
    return unit_or_basis(std::move(v));
}

ExternalVectorEmbedder::ExternalVectorEmbedder(
    std::vector<std::pair<std::string, std::vector<double>>> rows)
    : rows_(std::move(rows)) {
    if (rows_.empty()) throw ValidationError("external embedder: no vectors");
    dim_ = rows_.front().second.size();
    for (auto& [text, vec] : rows_) {
        if (vec.size() != dim_) {
            throw ValidationError("external embedder: inconsistent vector sizes");
        }
        vec = unit_or_basis(std::move(vec));
    }
}

ExternalVectorEmbedder ExternalVectorEmbedder::from_jsonl_file(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vector file: " + path.string());
    std::vector<std::pair<std::string, std::vector<double>>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            nlohmann::json j = nlohmann::json::parse(line);
            rows.emplace_back(j.at("text").get<std::string>(),
                              j.at("vector").get<std::vector<double>>());
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("bad vector record: ") + e.what(), lineno);
        }
    }
    return ExternalVectorEmbedder(std::move(rows));
}

std::vector<double> ExternalVectorEmbedder::embed(std::string_view text) const {
    for (const auto& [key, vec] : rows_) {
        if (key == text) return vec;
    }
    throw ValidationError("external embedder: no vector for text \"" + std::string(text) + "\"");
}

double similarity(std::string_view a, std::string_view b, const Embedder& embedder) {
    const std::vector<double> va = embedder.embed(a);
    const std::vector<double> vb = embedder.embed(b);
    double dot = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) dot += va[i] * vb[i];
    return std::clamp(dot, 0.0, 1.0);
}

double pair_similarity(const std::vector<std::string>& demo_frags,
                       const std::vector<std::string>& policy_frags,
                       const Embedder& embedder) {
    if (demo_frags.empty() || policy_frags.empty()) {
        throw DomainError("pair_similarity: empty fragment list");
    }
    std::vector<std::vector<double>> policy_vecs;
    policy_vecs.reserve(policy_frags.size());
    for (const std::string& f : policy_frags) policy_vecs.push_back(embedder.embed(f));

    double acc = 0.0;
    for (const std::string& frag : demo_frags) {
        const std::vector<double> v = embedder.embed(frag);
        double best = 0.0;
        for (const auto& w : policy_vecs) {
            double dot = 0.0;
            for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * w[i];
            best = std::max(best, std::clamp(dot, 0.0, 1.0));
        }
        acc += best;
    }
    return acc / static_cast<double>(demo_frags.size());
}

// --- logistic helpers -----------------------------------------------------------

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double log_logistic(double z) {
    // -softplus(-z), split to avoid overflow in exp.
    if (z >= 0.0) return -std::log1p(std::exp(-z));
    return z - std::log1p(std::exp(z));
}

double logistic_ratio(double num_z, double den_z) {
    return std::exp(log_logistic(num_z) - log_logistic(den_z));
}

// --- data hardness ----------------------------------------------------------------

DataHardness data_hardness(const corpus::PairwiseSet& pairwise, const SplitterConfig& splitter,
                           const Embedder& embedder) {
    if (pairwise.entries.empty()) throw DomainError("data_hardness: empty pairwise set");
    DataHardness out;
    out.overall_similarity.reserve(pairwise.entries.size());
    for (const corpus::PairwiseEntry& entry : pairwise.entries) {
        const auto demo_frags = split_subsentences(entry.demo_response, splitter).fragments;
        const auto policy_frags = split_subsentences(entry.policy_response, splitter).fragments;
        out.overall_similarity.push_back(pair_similarity(demo_frags, policy_frags, embedder));
    }
    out.deviation.reserve(out.overall_similarity.size());
    for (double w : out.overall_similarity) out.deviation.push_back(1.0 - w);
    out.deviation_mean =
        std::accumulate(out.deviation.begin(), out.deviation.end(), 0.0) /
        static_cast<double>(out.deviation.size());
    out.alpha_data.reserve(out.deviation.size());
    for (double d : out.deviation) {
        out.alpha_data.push_back(logistic_ratio(d, out.deviation_mean));
    }
    return out;
}

std::vector<double> reward_gaps(const corpus::PairwiseSet& pairwise,
                                const reward::RewardModel& model) {
    std::vector<double> gaps;
    gaps.reserve(pairwise.entries.size());
    for (const corpus::PairwiseEntry& entry : pairwise.entries) {
        gaps.push_back(model.score(entry.question, entry.demo_response) -
                       model.score(entry.question, entry.policy_response));
    }
    return gaps;
}

TrimMask trim_mask(const std::vector<double>& gaps, std::size_t trim_count) {
    const std::size_t m = gaps.size();
    if (trim_count >= m) throw DomainError("trim_mask: trim count must be < entry count");
    const double mean = std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(m);
    std::vector<double> dev(m);
    for (std::size_t i = 0; i < m; ++i) dev[i] = (gaps[i] - mean) * (gaps[i] - mean);

    // Ascending by (deviation, index): the first m - trim_count stay, so a tie
    // at the cut keeps the lower index.
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return dev[a] != dev[b] ? dev[a] < dev[b] : a < b;
    });

    TrimMask out;
    out.mask.assign(m, 0);
    out.trim_count = trim_count;
    const std::size_t keep = m - trim_count;
    for (std::size_t r = 0; r < keep; ++r) out.mask[order[r]] = 1;
    out.threshold = dev[order[keep - 1]];
    return out;
}

ModelHardness model_hardness(const std::vector<double>& gaps, const TrimMask& mask) {
    if (gaps.size() != mask.mask.size()) {
        throw ValidationError("model_hardness: mask size mismatch");
    }
    const std::size_t retained =
        static_cast<std::size_t>(std::count(mask.mask.begin(), mask.mask.end(), 1));
    if (retained == 0) throw DomainError("model_hardness: no retained entries");

    ModelHardness out;
    out.gap_mean = std::accumulate(gaps.begin(), gaps.end(), 0.0) /
                   static_cast<double>(gaps.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < gaps.size(); ++i) {
        if (mask.mask[i]) acc += gaps[i];
    }
    out.trimmed_gap_mean = acc / static_cast<double>(retained);
    out.alpha_model = logistic_ratio(out.trimmed_gap_mean, out.gap_mean);
    return out;
}

// --- full measurement ----------------------------------------------------------------

HardnessReport dmhm(const policy::Policy& pol, const corpus::DemoDataset& dataset,
                    int category_id, const reward::RewardModel& model,
                    const HardnessConfig& config) {
    if (!config.embedder) throw ValidationError("dmhm: null embedder");
    const corpus::PairwiseSet pairwise =
        corpus::build_pairwise(dataset, category_id, pol, config.seed);
    if (pairwise.entries.empty()) {
        throw ValidationError("dmhm: category " + std::to_string(category_id) + " is empty");
    }
    if (config.trim_count >= pairwise.entries.size()) {
        throw DomainError("dmhm: trim count " + std::to_string(config.trim_count) +
                          " must be < pair count " + std::to_string(pairwise.entries.size()));
    }

    const DataHardness data = data_hardness(pairwise, config.splitter, *config.embedder);
    const std::vector<double> gaps = reward_gaps(pairwise, model);
    const TrimMask mask = trim_mask(gaps, config.trim_count);
    const ModelHardness mh = model_hardness(gaps, mask);

    HardnessReport report;
    report.category_id = category_id;
    report.policy_tag = pairwise.policy_tag;
    report.deviation_mean = data.deviation_mean;
    report.gap_mean = mh.gap_mean;
    report.trimmed_gap_mean = mh.trimmed_gap_mean;
    report.threshold = mask.threshold;
    report.trim_count = mask.trim_count;
    report.alpha_model = mh.alpha_model;
    report.notes = {
        "threshold = largest retained squared deviation; the trim_count largest "
        "deviations are dropped and the trimmed mean divides by the retained count",
        "alternative reading (keep only trim_count entries) rejected: it contradicts "
        "the retained-count normalizer"};
    report.pairs.reserve(pairwise.entries.size());
    for (std::size_t i = 0; i < pairwise.entries.size(); ++i) {
        PairHardness row;
        row.pair_index = pairwise.entries[i].pair_index;
        row.overall_similarity = data.overall_similarity[i];
        row.deviation = data.deviation[i];
        row.alpha_data = data.alpha_data[i];
        row.reward_gap = gaps[i];
        row.retained = mask.mask[i] != 0;
        row.combined = data.alpha_data[i] * mh.alpha_model;
        report.pairs.push_back(row);
    }
    return report;
}

std::string HardnessReport::to_json_string() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const PairHardness& p : pairs) {
        rows.push_back({{"pair_index", p.pair_index},
                        {"overall_similarity", p.overall_similarity},
                        {"deviation", p.deviation},
                        {"alpha_data", p.alpha_data},
                        {"reward_gap", p.reward_gap},
                        {"retained", p.retained},
                        {"combined", p.combined}});
    }
    nlohmann::json j{{"category_id", category_id},
                     {"policy_tag", policy_tag},
                     {"pairs", rows},
                     {"deviation_mean", deviation_mean},
                     {"gap_mean", gap_mean},
                     {"trimmed_gap_mean", trimmed_gap_mean},
                     {"threshold", threshold},
                     {"trim_count", trim_count},
                     {"alpha_model", alpha_model},
                     {"notes", notes}};
    return j.dump();
}

std::string HardnessReport::to_csv() const {
    std::ostringstream out;
    out << "pair_index,overall_similarity,deviation,alpha_data,reward_gap,retained,"
           "alpha_model,combined\n";
    out.precision(17);
    for (const PairHardness& p : pairs) {
        out << p.pair_index << ',' << p.overall_similarity << ',' << p.deviation << ','
            << p.alpha_data << ',' << p.reward_gap << ',' << (p.retained ? 1 : 0) << ','
            << alpha_model << ',' << p.combined << '\n';
    }
    return out.str();
}

}  // namespace dmrl::hardness
