#include "dmrl/extraction.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dmrl/errors.hpp"
#include "dmrl/text.hpp"

namespace dmrl::extraction {

PiiPatterns PiiPatterns::from_ledger(const corpus::SecretLedger& ledger) {
    PiiPatterns patterns;
    patterns.literals.reserve(ledger.size());
    for (const corpus::Secret& s : ledger.secrets()) patterns.literals.push_back(s.value);
    return patterns;
}

namespace {

const std::regex& id_shape() {
    static const std::regex re(R"(\d{3}-\d{2}-\d{4})");
    return re;
}

const std::regex& phone_shape() {
    static const std::regex re(R"(\(\d{3}\) ?\d{3}-\d{4}|\d{3}-\d{3}-\d{4})");
    return re;
}

void scan_one(const std::string& raw, const PiiPatterns& patterns,
              std::set<std::string>& found) {
    const std::string text = normalize_text(raw);
    if (patterns.id_shapes || patterns.phone_shapes) {
        for (const std::regex* re :
             {patterns.id_shapes ? &id_shape() : nullptr,
              patterns.phone_shapes ? &phone_shape() : nullptr}) {
            if (!re) continue;
            auto begin = std::sregex_iterator(text.begin(), text.end(), *re);
            for (auto it = begin; it != std::sregex_iterator(); ++it) {
                found.insert(normalize_text(it->str()));
            }
        }
    }
    for (const std::string& literal : patterns.literals) {
        if (!literal.empty() && text.find(literal) != std::string::npos) {
            found.insert(literal);
        }
    }
}

}  // namespace

std::vector<std::string> scan_pii(const std::vector<std::string>& texts,
                                  const PiiPatterns& patterns) {
    std::vector<std::string> hits;
    for (const std::string& text : texts) {
        std::set<std::string> found;
        scan_one(text, patterns, found);
        hits.insert(hits.end(), found.begin(), found.end());
    }
    return hits;
}

Extractability extractability(const std::vector<std::string>& texts,
                              const corpus::SecretLedger& ledger,
                              const PiiPatterns& patterns) {
    if (ledger.empty()) throw ValidationError("extractability: empty ledger");

    const std::vector<std::string> hits = scan_pii(texts, patterns);
    const std::set<std::string> unique(hits.begin(), hits.end());

    Extractability out;
    out.unique_hits = unique.size();
    out.planted = ledger.size();
    for (const std::string& hit : unique) {
        if (ledger.contains(hit)) ++out.matched;
    }
    if (!unique.empty()) {
        out.precision = static_cast<double>(out.matched) / static_cast<double>(unique.size());
    }
    out.recall = static_cast<double>(out.matched) / static_cast<double>(ledger.size());
    return out;
}

std::vector<Probe> probes_from_jsonl(std::string_view text) {
    std::vector<Probe> probes;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            nlohmann::json j = nlohmann::json::parse(line);
            probes.push_back(Probe{j.at("context").get<std::string>(),
                                   j.at("candidates").get<std::vector<std::string>>(),
                                   j.at("truth").get<std::string>()});
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("bad probe record: ") + e.what(), lineno);
        }
    }
    return probes;
}

std::vector<Probe> load_probes(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open probe file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return probes_from_jsonl(buf.str());
}

std::string probes_to_jsonl(const std::vector<Probe>& probes) {
    std::string out;
    for (const Probe& p : probes) {
        out += nlohmann::json{{"context", p.context},
                              {"candidates", p.candidates},
                              {"truth", p.truth}}
                   .dump();
        out.push_back('\n');
    }
    return out;
}

namespace {

void validate_probe(const policy::Policy& pol, const Probe& probe) {
    for (const std::string& candidate : probe.candidates) {
        if (!pol.space()->candidate_index(probe.context, candidate)) {
            throw CoverageError("probe candidate not in A(context): \"" + candidate + "\"");
        }
    }
    for (std::size_t i = 0; i < probe.candidates.size(); ++i) {
        for (std::size_t j = i + 1; j < probe.candidates.size(); ++j) {
            if (probe.candidates[i] == probe.candidates[j]) {
                throw ValidationError("probe has duplicate candidates");
            }
        }
    }
}

// Highest logprob wins; exact ties go to the lexicographically smallest.
const std::string* argmax_candidate(const std::vector<std::string>& candidates,
                                    const std::vector<double>& logprobs) {
    const std::string* best = nullptr;
    double best_lp = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (!best || logprobs[i] > best_lp ||
            (logprobs[i] == best_lp && candidates[i] < *best)) {
            best = &candidates[i];
            best_lp = logprobs[i];
        }
    }
    return best;
}

}  // namespace

double reconstruction_top1(const policy::Policy& pol, const std::vector<Probe>& probes) {
    if (probes.empty()) throw ValidationError("reconstruction_top1: no probes");
    std::size_t correct = 0;
    for (const Probe& probe : probes) {
        validate_probe(pol, probe);
        const auto& cands = pol.space()->candidates(probe.context);
        const std::vector<double> lps = pol.logprobs(probe.context);
        if (*argmax_candidate(cands, lps) == probe.truth) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(probes.size());
}

double inference_top1(const policy::Policy& pol, const std::vector<Probe>& probes) {
    if (probes.empty()) throw ValidationError("inference_top1: no probes");
    std::size_t correct = 0;
    for (const Probe& probe : probes) {
        validate_probe(pol, probe);
        if (std::find(probe.candidates.begin(), probe.candidates.end(), probe.truth) ==
            probe.candidates.end()) {
            throw ValidationError("probe truth missing from candidates for context \"" +
                                  probe.context + "\"");
        }
        std::vector<double> lps(probe.candidates.size());
        for (std::size_t i = 0; i < probe.candidates.size(); ++i) {
            lps[i] = pol.logprob(probe.context, probe.candidates[i]);
        }
        if (*argmax_candidate(probe.candidates, lps) == probe.truth) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(probes.size());
}

std::string ExtractionReport::to_json_string() const {
    nlohmann::json j{{"extractability",
                      {{"precision", extract.precision ? nlohmann::json(*extract.precision)
                                                       : nlohmann::json(nullptr)},
                       {"recall", extract.recall},
                       {"unique_hits", extract.unique_hits},
                       {"matched", extract.matched},
                       {"planted", extract.planted}}},
                     {"reconstruction_top1", reconstruction},
                     {"inference_top1", inference},
                     {"generated_texts", generated_texts}};
    return j.dump();
}

std::string ExtractionReport::to_csv() const {
    std::ostringstream out;
    out << "metric,value\n";
    out << "precision," << (extract.precision ? std::to_string(*extract.precision) : "undefined")
        << '\n';
    out << "recall," << extract.recall << '\n';
    out << "reconstruction_top1," << reconstruction << '\n';
    out << "inference_top1," << inference << '\n';
    out << "unique_hits," << extract.unique_hits << '\n';
    out << "matched," << extract.matched << '\n';
    out << "planted," << extract.planted << '\n';
    out << "generated_texts," << generated_texts << '\n';
    return out.str();
}

}  // namespace dmrl::extraction
