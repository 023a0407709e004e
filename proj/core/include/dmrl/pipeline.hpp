#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dmrl/corpus.hpp"
#include "dmrl/extraction.hpp"
#include "dmrl/grpo.hpp"
#include "dmrl/hardness.hpp"
#include "dmrl/policy.hpp"
#include "dmrl/reward.hpp"

namespace dmrl::pipeline {

inline constexpr const char* kVersion = "0.1.0";

struct FeatureConfig {
    std::string mode = "tabular";  // "tabular" | "hashed_ngram"
    int ngram = 3;
    std::uint32_t dim = 512;
    std::uint64_t seed = 17;
    bool cross_terms = true;
};

struct EmbedderConfig {
    std::string mode = "hashed_ngram";  // "hashed_ngram" | "external"
    int ngram = 3;
    std::size_t dim = 256;
    std::uint64_t seed = 9;
    std::string path;  // external vectors JSONL
};

struct SpaceConfig {
    int refusal_decoys = 10;
    bool secret_candidates = true;  // add planted secrets as bare candidates
};

struct EvalConfig {
    int samples_per_question = 4;  // per policy, per question
    int decoy_candidates = 3;      // decoy secrets per synthesized probe
    std::string probe_path;        // optional externally supplied probes
};

struct CorpusConfig {
    std::string path;         // load-from-file mode
    std::string ledger_path;  // optional ledger for file mode
    bool use_generator = false;
    corpus::GeneratorSpec generator;
    bool generator_seed_explicit = false;
};

struct HardnessStageConfig {
    hardness::SplitterConfig splitter;
    EmbedderConfig embedder;
    std::size_t trim_count = 1;
};

struct RunConfig {
    CorpusConfig corpus;
    SpaceConfig space;
    FeatureConfig reward_features;
    FeatureConfig policy_features;
    reward::SRLConfig srl;
    HardnessStageConfig hardness;
    grpo::GRPOConfig grpo;
    EvalConfig eval;
    std::string out_dir = "runs/out";
    std::uint64_t seed = 0;

    // Fully materialized config (defaults included), sorted keys. The config
    // hash is taken over this, so it is independent of the key order and
    // whitespace of the source document.
    std::string canonical_json() const;
};

RunConfig run_config_from_json_string(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

std::string config_hash(const std::string& config_json_text);

struct StageRecord {
    std::string name;
    std::string status;  // "ok" | "failed"
    std::vector<std::string> artifacts;
    std::int64_t wall_ms = 0;
    std::string error;
};

struct RunManifest {
    std::string config_hash;
    std::string version = kVersion;
    std::string status = "ok";  // "ok" | "failed"
    std::string failed_stage;
    std::string error_kind;  // "validation" | "runtime"
    std::string error_message;
    std::vector<StageRecord> stages;
    std::string metrics_summary_json;  // aggregate block of metrics.json

    std::string to_json_string() const;
    static RunManifest from_json_string(const std::string& text);
};

// Executes corpus -> reward -> hardness -> policy -> evaluate, writing every
// stage's artifacts before the next stage starts, then the manifest. A stage
// failure stops the run; partial artifacts stay on disk and the manifest
// carries the failed stage and error. Bit-reproducible for a fixed config.
RunManifest run_pipeline(const RunConfig& config);

// Individual stages over prior artifacts in config.out_dir; only_category 0
// means all categories. Each returns the artifact names it wrote.
std::vector<std::string> stage_corpus(const RunConfig& config);
std::vector<std::string> stage_reward(const RunConfig& config, int only_category = 0);
std::vector<std::string> stage_hardness(const RunConfig& config, int only_category = 0);
std::vector<std::string> stage_policy(const RunConfig& config, int only_category = 0);
std::vector<std::string> stage_evaluate(const RunConfig& config);

struct ReportResult {
    int exit_code = 0;  // nonzero when referenced artifacts are missing
    std::string summary;
    std::vector<std::string> missing_artifacts;
    std::vector<std::string> written;
};

// Renders a completed (or failed) run: text summary plus a CSV bundle under
// <manifest dir>/report/. Never mutates run artifacts.
ReportResult report(const std::filesystem::path& manifest_path,
                    const std::string& format = "csv");

}  // namespace dmrl::pipeline
