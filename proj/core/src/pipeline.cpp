#include "dmrl/pipeline.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dmrl/errors.hpp"
#include "dmrl/rng.hpp"
#include "dmrl/text.hpp"

namespace dmrl::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

// --- small file helpers --------------------------------------------------------

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write file: " + path.string());
    out << content;
    if (!out) throw IoError("write failed: " + path.string());
}

std::string cat_name(const char* stem, int category_id, const char* ext) {
    return std::string(stem) + "_cat" + std::to_string(category_id) + ext;
}

}  // namespace

// --- config ----------------------------------------------------------------------

namespace {

json parse_json(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string(what) + ": invalid JSON: " + e.what());
    }
}

FeatureConfig feature_config_from(const json& j) {
    FeatureConfig out;
    out.mode = j.value("mode", out.mode);
    out.ngram = j.value("ngram", out.ngram);
    out.dim = j.value("dim", out.dim);
    out.seed = j.value("seed", out.seed);
    out.cross_terms = j.value("cross_terms", out.cross_terms);
    if (out.mode != "tabular" && out.mode != "hashed_ngram") {
        throw ValidationError("config: unknown feature mode \"" + out.mode + "\"");
    }
    return out;
}

json feature_config_to(const FeatureConfig& c) {
    return {{"mode", c.mode},
            {"ngram", c.ngram},
            {"dim", c.dim},
            {"seed", c.seed},
            {"cross_terms", c.cross_terms}};
}

EmbedderConfig embedder_config_from(const json& j) {
    EmbedderConfig out;
    out.mode = j.value("mode", out.mode);
    out.ngram = j.value("ngram", out.ngram);
    out.dim = j.value("dim", out.dim);
    out.seed = j.value("seed", out.seed);
    out.path = j.value("path", out.path);
    if (out.mode != "hashed_ngram" && out.mode != "external") {
        throw ValidationError("config: unknown embedder mode \"" + out.mode + "\"");
    }
    if (out.mode == "external" && out.path.empty()) {
        throw ValidationError("config: external embedder needs a path");
    }
    return out;
}

json embedder_config_to(const EmbedderConfig& c) {
    return {{"mode", c.mode}, {"ngram", c.ngram}, {"dim", c.dim}, {"seed", c.seed},
            {"path", c.path}};
}

}  // namespace

RunConfig run_config_from_json_string(const std::string& text) {
    const json j = parse_json(text, "run config");
    RunConfig cfg;

    cfg.seed = j.value("seed", cfg.seed);
    cfg.out_dir = j.value("out", cfg.out_dir);

    if (j.contains("corpus")) {
        const json& c = j.at("corpus");
        if (c.contains("generator")) {
            const json& g = c.at("generator");
            cfg.corpus.use_generator = true;
            cfg.corpus.generator.categories = g.value("categories", 1);
            cfg.corpus.generator.pairs_per_category = g.value("pairs_per_category", 0);
            cfg.corpus.generator.secrets_per_category = g.value("secrets_per_category", 0);
            if (g.contains("seed")) {
                cfg.corpus.generator.seed = g.at("seed").get<std::uint64_t>();
                cfg.corpus.generator_seed_explicit = true;
            }
        }
        cfg.corpus.path = c.value("path", "");
        cfg.corpus.ledger_path = c.value("ledger_path", "");
        if (!cfg.corpus.use_generator && cfg.corpus.path.empty()) {
            throw ValidationError("config: corpus needs either a generator or a path");
        }
        if (cfg.corpus.use_generator && !cfg.corpus.path.empty()) {
            throw ValidationError("config: corpus generator and path are exclusive");
        }
    } else {
        throw ValidationError("config: missing corpus section");
    }

    if (j.contains("space")) {
        cfg.space.refusal_decoys = j.at("space").value("refusal_decoys", cfg.space.refusal_decoys);
        cfg.space.secret_candidates =
            j.at("space").value("secret_candidates", cfg.space.secret_candidates);
        if (cfg.space.refusal_decoys < 0) {
            throw ValidationError("config: refusal_decoys must be >= 0");
        }
    }

    if (j.contains("reward_features")) {
        cfg.reward_features = feature_config_from(j.at("reward_features"));
    }
    if (j.contains("policy_features")) {
        cfg.policy_features = feature_config_from(j.at("policy_features"));
    }

    if (j.contains("srl")) {
        const json& s = j.at("srl");
        cfg.srl.outer_iters = s.value("outer_iters", cfg.srl.outer_iters);
        cfg.srl.inner_iters = s.value("inner_iters", cfg.srl.inner_iters);
        cfg.srl.stepsize = s.value("stepsize", cfg.srl.stepsize);
        cfg.srl.beta = s.value("beta", cfg.srl.beta);
        cfg.srl.init_scale = s.value("init_scale", cfg.srl.init_scale);
        cfg.srl.expectation_mode = s.value("expectation_mode", cfg.srl.expectation_mode);
        cfg.srl.snapshot_per_step = s.value("snapshot_per_step", cfg.srl.snapshot_per_step);
        const std::string schedule = s.value("schedule", "constant");
        if (schedule == "constant") {
            cfg.srl.schedule = reward::StepSchedule::kConstant;
        } else if (schedule == "inv_sqrt") {
            cfg.srl.schedule = reward::StepSchedule::kInvSqrt;
        } else {
            throw ValidationError("config: unknown srl schedule \"" + schedule + "\"");
        }
    }

    if (j.contains("hardness")) {
        const json& h = j.at("hardness");
        cfg.hardness.trim_count = h.value("trim_count", cfg.hardness.trim_count);
        if (h.contains("splitter")) {
            const json& s = h.at("splitter");
            cfg.hardness.splitter.boundary_chars =
                s.value("boundary_chars", cfg.hardness.splitter.boundary_chars);
            cfg.hardness.splitter.min_fragment_chars =
                s.value("min_fragment_chars", cfg.hardness.splitter.min_fragment_chars);
            cfg.hardness.splitter.max_fragments =
                s.value("max_fragments", cfg.hardness.splitter.max_fragments);
        }
        if (h.contains("embedder")) {
            cfg.hardness.embedder = embedder_config_from(h.at("embedder"));
        }
    }

    if (j.contains("grpo")) {
        const json& g = j.at("grpo");
        cfg.grpo.group_size = g.value("group_size", cfg.grpo.group_size);
        cfg.grpo.clip_eps = g.value("clip_eps", cfg.grpo.clip_eps);
        cfg.grpo.kl_weight = g.value("kl_weight", cfg.grpo.kl_weight);
        cfg.grpo.learning_rate = g.value("learning_rate", cfg.grpo.learning_rate);
        cfg.grpo.outer_iters = g.value("outer_iters", cfg.grpo.outer_iters);
        cfg.grpo.steps_per_iter = g.value("steps_per_iter", cfg.grpo.steps_per_iter);
        cfg.grpo.hardness_every = g.value("hardness_every", cfg.grpo.hardness_every);
        cfg.grpo.std_guard = g.value("std_guard", cfg.grpo.std_guard);
        cfg.grpo.category_mean_alpha =
            g.value("category_mean_alpha", cfg.grpo.category_mean_alpha);
    }

    if (j.contains("eval")) {
        const json& e = j.at("eval");
        cfg.eval.samples_per_question = e.value("samples_per_question", cfg.eval.samples_per_question);
        cfg.eval.decoy_candidates = e.value("decoy_candidates", cfg.eval.decoy_candidates);
        cfg.eval.probe_path = e.value("probe_path", cfg.eval.probe_path);
        if (cfg.eval.samples_per_question < 0 || cfg.eval.decoy_candidates < 0) {
            throw ValidationError("config: eval counts must be >= 0");
        }
    }

    // Sampling seeds for nested stages always derive from the master seed.
    if (!cfg.corpus.generator_seed_explicit) {
        cfg.corpus.generator.seed = derive_seed(cfg.seed, "stage-corpus");
    }
    cfg.srl.seed = derive_seed(cfg.seed, "stage-reward");
    cfg.grpo.seed = derive_seed(cfg.seed, "stage-policy");
    return cfg;
}

RunConfig load_run_config(const fs::path& path) {
    return run_config_from_json_string(read_file(path));
}

std::string RunConfig::canonical_json() const {
    json j;
    j["seed"] = seed;
    j["out"] = out_dir;
    if (corpus.use_generator) {
        j["corpus"]["generator"] = {{"categories", corpus.generator.categories},
                                    {"pairs_per_category", corpus.generator.pairs_per_category},
                                    {"secrets_per_category", corpus.generator.secrets_per_category},
                                    {"seed", corpus.generator.seed}};
    } else {
        j["corpus"]["path"] = corpus.path;
        j["corpus"]["ledger_path"] = corpus.ledger_path;
    }
    j["space"] = {{"refusal_decoys", space.refusal_decoys},
                  {"secret_candidates", space.secret_candidates}};
    j["reward_features"] = feature_config_to(reward_features);
    j["policy_features"] = feature_config_to(policy_features);
    j["srl"] = {{"outer_iters", srl.outer_iters},
                {"inner_iters", srl.inner_iters},
                {"stepsize", srl.stepsize},
                {"schedule", srl.schedule == reward::StepSchedule::kInvSqrt ? "inv_sqrt"
                                                                            : "constant"},
                {"beta", srl.beta},
                {"init_scale", srl.init_scale},
                {"expectation_mode", srl.expectation_mode},
                {"snapshot_per_step", srl.snapshot_per_step}};
    j["hardness"] = {{"trim_count", hardness.trim_count},
                     {"splitter",
                      {{"boundary_chars", hardness.splitter.boundary_chars},
                       {"min_fragment_chars", hardness.splitter.min_fragment_chars},
                       {"max_fragments", hardness.splitter.max_fragments}}},
                     {"embedder", embedder_config_to(hardness.embedder)}};
    j["grpo"] = {{"group_size", grpo.group_size},
                 {"clip_eps", grpo.clip_eps},
                 {"kl_weight", grpo.kl_weight},
                 {"learning_rate", grpo.learning_rate},
                 {"outer_iters", grpo.outer_iters},
                 {"steps_per_iter", grpo.steps_per_iter},
                 {"hardness_every", grpo.hardness_every},
                 {"std_guard", grpo.std_guard},
                 {"category_mean_alpha", grpo.category_mean_alpha}};
    j["eval"] = {{"samples_per_question", eval.samples_per_question},
                 {"decoy_candidates", eval.decoy_candidates},
                 {"probe_path", eval.probe_path}};
    return j.dump();
}

std::string config_hash(const std::string& config_json_text) {
    const json j = parse_json(config_json_text, "config hash");
    const std::string canonical = j.dump();
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canonical)));
    return std::string("fnv1a64:") + buf;
}

// --- category bundles ------------------------------------------------------------

namespace {

constexpr std::array<const char*, 12> kRefusals = {
    "I can't share that information.",
    "I cannot help with requests for personal records.",
    "That information is private and I won't disclose it.",
    "I'm not able to confirm personal details.",
    "Please contact the account holder directly.",
    "Our policy forbids disclosing member information.",
    "I have to decline this request.",
    "Identity verification cannot be completed this way.",
    "No personal data can be released over this channel.",
    "I suggest submitting a written records request.",
    "This request requires a verified authorization form.",
    "I won't provide those details."};

std::string refusal_text(int i) {
    std::string text = kRefusals[static_cast<std::size_t>(i) % kRefusals.size()];
    const int round = i / static_cast<int>(kRefusals.size());
    if (round > 0) text += " (alt " + std::to_string(round) + ")";
    return text;
}

struct CategoryBundle {
    int id = 0;
    std::string name;
    policy::SpacePtr space;
    std::vector<extraction::Probe> probes;
    corpus::SecretLedger ledger;  // secrets planted in this category's pairs
};

// Secrets planted in a specific pair, in ledger order.
std::vector<const corpus::Secret*> secrets_of_pair(const corpus::SecretLedger& ledger,
                                                   std::size_t pair_index) {
    std::vector<const corpus::Secret*> out;
    for (const corpus::Secret& s : ledger.secrets()) {
        if (std::find(s.provenance.begin(), s.provenance.end(), pair_index) !=
            s.provenance.end()) {
            out.push_back(&s);
        }
    }
    return out;
}

std::vector<CategoryBundle> build_bundles(const corpus::DemoDataset& dataset,
                                          const corpus::SecretLedger& ledger,
                                          const RunConfig& config) {
    std::vector<extraction::Probe> external_probes;
    if (!config.eval.probe_path.empty()) {
        external_probes = extraction::load_probes(config.eval.probe_path);
    }

    std::vector<CategoryBundle> bundles;
    for (int cat_id = 1; cat_id <= dataset.category_count(); ++cat_id) {
        const corpus::CategoryInfo& cat = dataset.category(cat_id);
        CategoryBundle bundle;
        bundle.id = cat_id;
        bundle.name = cat.name;

        for (const corpus::Secret& s : ledger.secrets()) {
            for (std::size_t prov : s.provenance) {
                if (std::find(cat.pair_indices.begin(), cat.pair_indices.end(), prov) !=
                    cat.pair_indices.end()) {
                    bundle.ledger.add(s.value, s.kind, prov);
                }
            }
        }

        auto space = std::make_shared<policy::ResponseSpace>();
        for (std::size_t idx : cat.pair_indices) {
            const corpus::DemoPair& pair = dataset.pairs()[idx];
            std::vector<std::string> candidates{pair.response.rendered()};
            std::set<std::string> seen{candidates.front()};
            auto add = [&](const std::string& text) {
                if (seen.insert(text).second) candidates.push_back(text);
            };
            for (int d = 0; d < config.space.refusal_decoys; ++d) add(refusal_text(d));

            const auto own = secrets_of_pair(bundle.ledger, idx);
            if (config.space.secret_candidates) {
                for (const corpus::Secret* s : own) add(s->value);
            }

            // Synthesized probe: the pair's first planted secret against
            // decoy secrets from elsewhere in the ledger.
            if (config.eval.probe_path.empty() && !own.empty() &&
                config.eval.decoy_candidates >= 0 && config.space.secret_candidates) {
                extraction::Probe probe;
                probe.context = pair.question;
                probe.truth = own.front()->value;
                probe.candidates.push_back(probe.truth);
                const auto& all = bundle.ledger.secrets();
                std::size_t start = 0;
                while (start < all.size() && all[start].value != probe.truth) ++start;
                for (std::size_t k = 1;
                     k < all.size() &&
                     probe.candidates.size() <
                         static_cast<std::size_t>(config.eval.decoy_candidates) + 1;
                     ++k) {
                    const corpus::Secret& s = all[(start + k) % all.size()];
                    const bool own_secret =
                        std::find_if(own.begin(), own.end(), [&](const corpus::Secret* o) {
                            return o->value == s.value;
                        }) != own.end();
                    if (own_secret) continue;
                    probe.candidates.push_back(s.value);
                    add(s.value);
                }
                bundle.probes.push_back(std::move(probe));
            }

            for (const extraction::Probe& probe : external_probes) {
                if (probe.context != pair.question) continue;
                for (const std::string& candidate : probe.candidates) add(candidate);
                bundle.probes.push_back(probe);
            }
            space->add_prompt(pair.question, std::move(candidates));
        }
        bundle.space = std::move(space);
        bundles.push_back(std::move(bundle));
    }

    if (!external_probes.empty()) {
        std::size_t assigned = 0;
        for (const CategoryBundle& b : bundles) assigned += b.probes.size();
        if (assigned < external_probes.size()) {
            throw ValidationError("probe file: some probe contexts match no corpus question");
        }
    }
    return bundles;
}

std::shared_ptr<const FeatureMap> make_feature_map(const FeatureConfig& config,
                                                   policy::SpacePtr space) {
    if (config.mode == "tabular") return std::make_shared<TabularFeatureMap>(std::move(space));
    return std::make_shared<HashedNgramFeatureMap>(config.ngram, config.dim, config.seed,
                                                   config.cross_terms);
}

std::shared_ptr<const hardness::Embedder> make_embedder(const EmbedderConfig& config) {
    if (config.mode == "external") {
        return std::make_shared<hardness::ExternalVectorEmbedder>(
            hardness::ExternalVectorEmbedder::from_jsonl_file(config.path));
    }
    return std::make_shared<hardness::HashedNgramEmbedder>(config.ngram, config.dim,
                                                           config.seed);
}

hardness::HardnessConfig make_hardness_config(const RunConfig& config, std::uint64_t seed) {
    hardness::HardnessConfig hc;
    hc.splitter = config.hardness.splitter;
    hc.embedder = make_embedder(config.hardness.embedder);
    hc.trim_count = config.hardness.trim_count;
    hc.seed = seed;
    return hc;
}

// --- artifact IO -----------------------------------------------------------------

std::string bundles_to_json(const std::vector<CategoryBundle>& bundles) {
    json cats = json::array();
    for (const CategoryBundle& b : bundles) {
        cats.push_back({{"id", b.id},
                        {"name", b.name},
                        {"space", json::parse(policy::space_to_json_string(*b.space))}});
    }
    return json{{"categories", cats}}.dump();
}

struct LoadedCategory {
    int id = 0;
    std::string name;
    policy::SpacePtr space;
};

std::vector<LoadedCategory> load_spaces(const fs::path& out_dir) {
    const json j = parse_json(read_file(out_dir / "spaces.json"), "spaces artifact");
    std::vector<LoadedCategory> out;
    for (const json& c : j.at("categories")) {
        LoadedCategory cat;
        cat.id = c.at("id").get<int>();
        cat.name = c.at("name").get<std::string>();
        cat.space = std::make_shared<policy::ResponseSpace>(
            policy::space_from_json_string(c.at("space").dump()));
        out.push_back(std::move(cat));
    }
    return out;
}

corpus::SecretLedger load_ledger(const fs::path& out_dir) {
    return corpus::ledger_from_json_string(read_file(out_dir / "ledger.json"));
}

}  // namespace

// --- stages ----------------------------------------------------------------------

std::vector<std::string> stage_corpus(const RunConfig& config) {
    const fs::path out(config.out_dir);
    corpus::DemoDataset dataset;
    corpus::SecretLedger ledger;
    if (config.corpus.use_generator) {
        auto [d, l] = corpus::gen_synthetic_corpus(config.corpus.generator);
        dataset = std::move(d);
        ledger = std::move(l);
    } else {
        dataset = corpus::load_demos(config.corpus.path);
        if (!config.corpus.ledger_path.empty()) {
            ledger = corpus::ledger_from_json_string(read_file(config.corpus.ledger_path));
        }
    }

    const std::vector<CategoryBundle> bundles = build_bundles(dataset, ledger, config);

    std::vector<std::string> artifacts{"corpus.jsonl", "ledger.json", "spaces.json"};
    write_file(out / "corpus.jsonl", corpus::demos_to_jsonl(dataset));
    write_file(out / "ledger.json", corpus::ledger_to_json_string(ledger));
    write_file(out / "spaces.json", bundles_to_json(bundles));
    for (const CategoryBundle& b : bundles) {
        const std::string name = cat_name("probes", b.id, ".jsonl");
        write_file(out / name, extraction::probes_to_jsonl(b.probes));
        artifacts.push_back(name);
    }
    return artifacts;
}

std::vector<std::string> stage_reward(const RunConfig& config, int only_category) {
    const fs::path out(config.out_dir);
    const corpus::DemoDataset dataset = corpus::load_demos(out / "corpus.jsonl");
    const auto categories = load_spaces(out);

    std::vector<std::string> artifacts;
    for (const LoadedCategory& cat : categories) {
        if (only_category != 0 && cat.id != only_category) continue;
        auto features = make_feature_map(config.reward_features, cat.space);
        auto reference =
            std::make_shared<policy::ReferencePolicy>(policy::ReferencePolicy::uniform(cat.space));
        auto [model, trace] = reward::srl_train(dataset, cat.id, reference, features, config.srl);

        const std::string model_name = cat_name("reward", cat.id, ".json");
        const std::string trace_name = cat_name("srl_trace", cat.id, ".csv");
        write_file(out / model_name, reward::reward_model_to_json_string(model));
        write_file(out / trace_name, trace.to_csv());
        artifacts.push_back(model_name);
        artifacts.push_back(trace_name);
    }
    return artifacts;
}

std::vector<std::string> stage_hardness(const RunConfig& config, int only_category) {
    const fs::path out(config.out_dir);
    const corpus::DemoDataset dataset = corpus::load_demos(out / "corpus.jsonl");
    const auto categories = load_spaces(out);

    std::vector<std::string> artifacts;
    for (const LoadedCategory& cat : categories) {
        if (only_category != 0 && cat.id != only_category) continue;
        const reward::RewardModel model = reward::reward_model_from_json_string(
            read_file(out / cat_name("reward", cat.id, ".json")), cat.space);
        // Measured at the untrained policy; training refreshes its own copy.
        const policy::ParametricPolicy initial(cat.space,
                                               make_feature_map(config.policy_features, cat.space));
        const hardness::HardnessConfig hc = make_hardness_config(
            config, derive_seed(config.seed, "stage-hardness",
                                {static_cast<std::uint64_t>(cat.id)}));
        const hardness::HardnessReport report =
            hardness::dmhm(initial, dataset, cat.id, model, hc);

        const std::string json_name = cat_name("hardness", cat.id, ".json");
        const std::string csv_name = cat_name("hardness", cat.id, ".csv");
        write_file(out / json_name, report.to_json_string());
        write_file(out / csv_name, report.to_csv());
        artifacts.push_back(json_name);
        artifacts.push_back(csv_name);
    }
    return artifacts;
}

std::vector<std::string> stage_policy(const RunConfig& config, int only_category) {
    const fs::path out(config.out_dir);
    const corpus::DemoDataset dataset = corpus::load_demos(out / "corpus.jsonl");
    const auto categories = load_spaces(out);

    std::vector<std::string> artifacts;
    for (const LoadedCategory& cat : categories) {
        if (only_category != 0 && cat.id != only_category) continue;
        const reward::RewardModel model = reward::reward_model_from_json_string(
            read_file(out / cat_name("reward", cat.id, ".json")), cat.space);
        auto reference =
            std::make_shared<policy::ReferencePolicy>(policy::ReferencePolicy::uniform(cat.space));
        policy::ParametricPolicy initial(cat.space,
                                         make_feature_map(config.policy_features, cat.space));
        const hardness::HardnessConfig hc = make_hardness_config(config, 0);  // reseeded inside
        grpo::TrainResult result = grpo::train_category(dataset, cat.id, model, reference,
                                                        std::move(initial), config.grpo, hc);

        const std::string policy_name = cat_name("policy", cat.id, ".json");
        const std::string curve_name = cat_name("train", cat.id, ".csv");
        write_file(out / policy_name, policy::to_json_string(result.policy));
        write_file(out / curve_name, grpo::records_to_csv(result.records));
        artifacts.push_back(policy_name);
        artifacts.push_back(curve_name);
    }
    return artifacts;
}

namespace {

json extractability_to_json(const std::optional<extraction::Extractability>& e) {
    if (!e) return nullptr;
    return {{"precision", e->precision ? json(*e->precision) : json(nullptr)},
            {"recall", e->recall},
            {"unique_hits", e->unique_hits},
            {"matched", e->matched},
            {"planted", e->planted}};
}

struct PolicyEval {
    std::optional<extraction::Extractability> extract;
    std::optional<double> reconstruction;
    std::optional<double> inference;
    std::vector<std::string> texts;
};

PolicyEval evaluate_policy(const policy::Policy& pol, const LoadedCategory& cat,
                           const corpus::SecretLedger& ledger,
                           const std::vector<extraction::Probe>& probes,
                           const RunConfig& config, const char* stream_label) {
    PolicyEval out;
    const auto& prompts = pol.space()->prompts();
    for (std::size_t q = 0; q < prompts.size(); ++q) {
        RngStream rng(derive_seed(config.seed, stream_label,
                                  {static_cast<std::uint64_t>(cat.id), q}));
        for (int s = 0; s < config.eval.samples_per_question; ++s) {
            out.texts.push_back(policy::sample(pol, prompts[q], rng));
        }
    }
    if (!ledger.empty()) {
        extraction::PiiPatterns patterns = extraction::PiiPatterns::from_ledger(ledger);
        out.extract = extraction::extractability(out.texts, ledger, patterns);
    }
    if (!probes.empty()) {
        out.reconstruction = extraction::reconstruction_top1(pol, probes);
        out.inference = extraction::inference_top1(pol, probes);
    }
    return out;
}

json policy_eval_to_json(const PolicyEval& e) {
    return {{"extractability", extractability_to_json(e.extract)},
            {"reconstruction_top1", e.reconstruction ? json(*e.reconstruction) : json(nullptr)},
            {"inference_top1", e.inference ? json(*e.inference) : json(nullptr)},
            {"generated_texts", e.texts.size()}};
}

}  // namespace

std::vector<std::string> stage_evaluate(const RunConfig& config) {
    const fs::path out(config.out_dir);
    const auto categories = load_spaces(out);
    const corpus::SecretLedger full_ledger = load_ledger(out);
    const corpus::DemoDataset dataset = corpus::load_demos(out / "corpus.jsonl");

    json per_category = json::array();
    std::vector<std::string> trained_texts_all;
    std::vector<std::string> reference_texts_all;
    double recon_trained_sum = 0.0, recon_ref_sum = 0.0;
    double infer_trained_sum = 0.0, infer_ref_sum = 0.0;
    std::size_t probe_total = 0;

    for (const LoadedCategory& cat : categories) {
        const auto trained =
            policy::policy_from_json_string(read_file(out / cat_name("policy", cat.id, ".json")));
        const policy::ReferencePolicy reference =
            policy::ReferencePolicy::uniform(trained->space());
        const std::vector<extraction::Probe> probes =
            extraction::probes_from_jsonl(read_file(out / cat_name("probes", cat.id, ".jsonl")));

        const corpus::CategoryInfo& info = dataset.category(cat.id);
        corpus::SecretLedger filtered;
        for (const corpus::Secret& s : full_ledger.secrets()) {
            for (std::size_t prov : s.provenance) {
                if (std::find(info.pair_indices.begin(), info.pair_indices.end(), prov) !=
                    info.pair_indices.end()) {
                    filtered.add(s.value, s.kind, prov);
                }
            }
        }

        const PolicyEval eval_trained =
            evaluate_policy(*trained, cat, filtered, probes, config, "eval-trained");
        const PolicyEval eval_reference =
            evaluate_policy(reference, cat, filtered, probes, config, "eval-reference");

        trained_texts_all.insert(trained_texts_all.end(), eval_trained.texts.begin(),
                                 eval_trained.texts.end());
        reference_texts_all.insert(reference_texts_all.end(), eval_reference.texts.begin(),
                                   eval_reference.texts.end());
        if (!probes.empty()) {
            recon_trained_sum += *eval_trained.reconstruction * probes.size();
            recon_ref_sum += *eval_reference.reconstruction * probes.size();
            infer_trained_sum += *eval_trained.inference * probes.size();
            infer_ref_sum += *eval_reference.inference * probes.size();
            probe_total += probes.size();
        }

        per_category.push_back({{"id", cat.id},
                                {"name", cat.name},
                                {"probes", probes.size()},
                                {"trained", policy_eval_to_json(eval_trained)},
                                {"reference", policy_eval_to_json(eval_reference)}});
    }

    json aggregate;
    std::optional<extraction::Extractability> agg_trained, agg_reference;
    if (!full_ledger.empty()) {
        extraction::PiiPatterns patterns = extraction::PiiPatterns::from_ledger(full_ledger);
        agg_trained = extraction::extractability(trained_texts_all, full_ledger, patterns);
        agg_reference = extraction::extractability(reference_texts_all, full_ledger, patterns);
    }
    aggregate["trained"] = {{"extractability", extractability_to_json(agg_trained)},
                            {"reconstruction_top1",
                             probe_total ? json(recon_trained_sum / probe_total) : json(nullptr)},
                            {"inference_top1",
                             probe_total ? json(infer_trained_sum / probe_total) : json(nullptr)}};
    aggregate["reference"] = {{"extractability", extractability_to_json(agg_reference)},
                              {"reconstruction_top1",
                               probe_total ? json(recon_ref_sum / probe_total) : json(nullptr)},
                              {"inference_top1",
                               probe_total ? json(infer_ref_sum / probe_total) : json(nullptr)}};
    if (agg_trained && agg_reference && agg_reference->recall > 0.0) {
        aggregate["relative_recall_uplift"] =
            (agg_trained->recall - agg_reference->recall) / agg_reference->recall;
    } else {
        aggregate["relative_recall_uplift"] = nullptr;
    }

    const json metrics{{"aggregate", aggregate}, {"categories", per_category}};
    write_file(out / "metrics.json", metrics.dump(2) + "\n");

    std::ostringstream csv;
    csv << "category,policy,precision,recall,reconstruction_top1,inference_top1,unique_hits,"
           "matched,planted\n";
    for (const json& c : per_category) {
        for (const char* which : {"trained", "reference"}) {
            const json& e = c.at(which);
            const json& x = e.at("extractability");
            auto cell = [](const json& v) {
                return v.is_null() ? std::string("undefined") : v.dump();
            };
            csv << c.at("id") << ',' << which << ','
                << (x.is_null() ? "undefined" : cell(x.at("precision"))) << ','
                << (x.is_null() ? "undefined" : cell(x.at("recall"))) << ','
                << cell(e.at("reconstruction_top1")) << ',' << cell(e.at("inference_top1"))
                << ',' << (x.is_null() ? "undefined" : cell(x.at("unique_hits"))) << ','
                << (x.is_null() ? "undefined" : cell(x.at("matched"))) << ','
                << (x.is_null() ? "undefined" : cell(x.at("planted"))) << '\n';
        }
    }
    write_file(out / "metrics.csv", csv.str());
    return {"metrics.json", "metrics.csv"};
}

// --- manifest and run -------------------------------------------------------------

std::string RunManifest::to_json_string() const {
    json stages_j = json::array();
    for (const StageRecord& s : stages) {
        json row{{"name", s.name},
                 {"status", s.status},
                 {"artifacts", s.artifacts},
                 {"wall_ms", s.wall_ms}};
        if (!s.error.empty()) row["error"] = s.error;
        stages_j.push_back(std::move(row));
    }
    json j{{"config_hash", config_hash},
           {"versions", {{"dmrl", version}}},
           {"status", status},
           {"stages", stages_j}};
    if (!failed_stage.empty()) {
        j["error"] = {{"stage", failed_stage}, {"kind", error_kind}, {"message", error_message}};
    }
    if (!metrics_summary_json.empty()) {
        j["metrics"] = json::parse(metrics_summary_json);
    }
    return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json_string(const std::string& text) {
    const json j = parse_json(text, "manifest");
    RunManifest m;
    m.config_hash = j.value("config_hash", "");
    if (j.contains("versions")) m.version = j.at("versions").value("dmrl", "");
    m.status = j.value("status", "");
    if (j.contains("error")) {
        m.failed_stage = j.at("error").value("stage", "");
        m.error_kind = j.at("error").value("kind", "");
        m.error_message = j.at("error").value("message", "");
    }
    if (j.contains("metrics")) m.metrics_summary_json = j.at("metrics").dump();
    for (const json& s : j.value("stages", json::array())) {
        StageRecord rec;
        rec.name = s.at("name").get<std::string>();
        rec.status = s.at("status").get<std::string>();
        rec.artifacts = s.value("artifacts", std::vector<std::string>{});
        rec.wall_ms = s.value("wall_ms", std::int64_t{0});
        rec.error = s.value("error", "");
        m.stages.push_back(std::move(rec));
    }
    return m;
}

RunManifest run_pipeline(const RunConfig& config) {
    const fs::path out(config.out_dir);
    fs::create_directories(out);

    RunManifest manifest;
    manifest.config_hash = config_hash(config.canonical_json());

    using StageFn = std::vector<std::string> (*)(const RunConfig&);
    const std::pair<const char*, StageFn> stages[] = {
        {"corpus", [](const RunConfig& c) { return stage_corpus(c); }},
        {"reward", [](const RunConfig& c) { return stage_reward(c, 0); }},
        {"hardness", [](const RunConfig& c) { return stage_hardness(c, 0); }},
        {"policy", [](const RunConfig& c) { return stage_policy(c, 0); }},
        {"evaluate", [](const RunConfig& c) { return stage_evaluate(c); }},
    };

    for (const auto& [name, fn] : stages) {
        StageRecord rec;
        rec.name = name;
        const auto start = std::chrono::steady_clock::now();
        try {
            rec.artifacts = fn(config);
            rec.status = "ok";
        } catch (const Error& e) {
            rec.status = "failed";
            rec.error = e.what();
            manifest.status = "failed";
            manifest.failed_stage = name;
            manifest.error_kind =
                dynamic_cast<const ValidationError*>(&e) ? "validation" : "runtime";
            manifest.error_message = e.what();
        }
        rec.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - start)
                          .count();
        for (const std::string& artifact : rec.artifacts) {
            if (!fs::exists(out / artifact)) {
                throw IoError("stage " + rec.name + " reported missing artifact: " + artifact);
            }
        }
        manifest.stages.push_back(std::move(rec));
        if (manifest.status == "failed") break;
    }

    if (manifest.status == "ok") {
        const json metrics = parse_json(read_file(out / "metrics.json"), "metrics artifact");
        manifest.metrics_summary_json = metrics.at("aggregate").dump();
    }
    write_file(out / "manifest.json", manifest.to_json_string());
    return manifest;
}

// --- report -----------------------------------------------------------------------

ReportResult report(const fs::path& manifest_path, const std::string& format) {
    if (format != "csv" && format != "json") {
        throw ValidationError("report: format must be json or csv");
    }
    ReportResult result;
    const RunManifest manifest = RunManifest::from_json_string(read_file(manifest_path));
    const fs::path out = manifest_path.parent_path();
    const fs::path report_dir = out / "report";

    std::ostringstream text;
    text << "run status: " << manifest.status << "\n";
    text << "config hash: " << manifest.config_hash << "\n";
    text << "version: " << manifest.version << "\n";
    if (manifest.status == "failed") {
        text << "failed stage: " << manifest.failed_stage << " (" << manifest.error_kind
             << "): " << manifest.error_message << "\n";
    }
    for (const StageRecord& s : manifest.stages) {
        text << "stage " << s.name << ": " << s.status << " (" << s.wall_ms << " ms)\n";
        for (const std::string& artifact : s.artifacts) {
            const bool present = fs::exists(out / artifact);
            if (!present) result.missing_artifacts.push_back(artifact);
            text << "  " << artifact << (present ? "" : " [ABSENT]") << "\n";
        }
    }

    if (!manifest.metrics_summary_json.empty()) {
        const json agg = json::parse(manifest.metrics_summary_json);
        auto show = [&](const char* which) {
            const json& e = agg.at(which);
            const json& x = e.at("extractability");
            text << which << ":\n";
            if (!x.is_null()) {
                text << "  extractability precision: " << x.at("precision").dump() << "\n";
                text << "  extractability recall: " << x.at("recall").dump() << "\n";
            }
            text << "  reconstruction top-1: " << e.at("reconstruction_top1").dump() << "\n";
            text << "  inference top-1: " << e.at("inference_top1").dump() << "\n";
        };
        show("trained");
        show("reference");
        text << "relative recall uplift: " << agg.at("relative_recall_uplift").dump() << "\n";
    }

    fs::create_directories(report_dir);
    write_file(report_dir / "summary.txt", text.str());
    result.written.push_back("report/summary.txt");

    // Metric tables and training curves, bundled without touching the originals.
    if (fs::exists(out / "metrics.csv") && format == "csv") {
        write_file(report_dir / "metrics.csv", read_file(out / "metrics.csv"));
        result.written.push_back("report/metrics.csv");
    }
    if (fs::exists(out / "metrics.json") && format == "json") {
        write_file(report_dir / "metrics.json", read_file(out / "metrics.json"));
        result.written.push_back("report/metrics.json");
    }
    std::ostringstream curves;
    std::ostringstream reward_curves;
    bool curves_any = false, reward_any = false;
    for (int cat = 1; cat < 4096; ++cat) {
        const fs::path train_csv = out / cat_name("train", cat, ".csv");
        const fs::path srl_csv = out / cat_name("srl_trace", cat, ".csv");
        if (!fs::exists(train_csv) && !fs::exists(srl_csv)) break;
        if (fs::exists(train_csv)) {
            std::istringstream in(read_file(train_csv));
            std::string line;
            bool header = true;
            while (std::getline(in, line)) {
                if (header) {
                    if (!curves_any) curves << "category," << line << "\n";
                    header = false;
                    continue;
                }
                curves << cat << ',' << line << "\n";
            }
            curves_any = true;
        }
        if (fs::exists(srl_csv)) {
            std::istringstream in(read_file(srl_csv));
            std::string line;
            bool header = true;
            while (std::getline(in, line)) {
                if (header) {
                    if (!reward_any) reward_curves << "category," << line << "\n";
                    header = false;
                    continue;
                }
                reward_curves << cat << ',' << line << "\n";
            }
            reward_any = true;
        }
    }
    if (curves_any) {
        write_file(report_dir / "training_curves.csv", curves.str());
        result.written.push_back("report/training_curves.csv");
    }
    if (reward_any) {
        write_file(report_dir / "reward_curves.csv", reward_curves.str());
        result.written.push_back("report/reward_curves.csv");
    }

    result.summary = text.str();
    result.exit_code = result.missing_artifacts.empty() ? 0 : 1;
    return result;
}

}  // namespace dmrl::pipeline
