#include "dmrl/corpus.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dmrl/errors.hpp"
#include "dmrl/policy.hpp"
#include "dmrl/rng.hpp"
#include "dmrl/text.hpp"

namespace dmrl::corpus {

std::string ReasoningSequence::rendered() const {
    std::string out = join(steps, " ");
    if (!out.empty()) out.push_back(' ');
    out += final;
    return out;
}

// --- DemoDataset -------------------------------------------------------------

int DemoDataset::add_category(std::string name) {
    for (std::size_t i = 0; i < categories_.size(); ++i) {
        if (categories_[i].name == name) return static_cast<int>(i) + 1;
    }
    categories_.push_back(CategoryInfo{std::move(name), {}});
    return static_cast<int>(categories_.size());
}

void DemoDataset::add_pair(DemoPair pair) {
    if (pair.category_id < 1 || pair.category_id > category_count()) {
        throw ValidationError("demo pair references unknown category id " +
                              std::to_string(pair.category_id));
    }
    if (pair.question.empty()) throw ValidationError("demo pair has empty question");
    if (pair.response.final.empty()) throw ValidationError("demo pair has empty final segment");
    categories_[pair.category_id - 1].pair_indices.push_back(pairs_.size());
    pairs_.push_back(std::move(pair));
}

const CategoryInfo& DemoDataset::category(int id) const {
    if (id < 1 || id > category_count()) {
        throw ValidationError("unknown category id " + std::to_string(id));
    }
    return categories_[id - 1];
}

int DemoDataset::category_id(std::string_view name) const {
    for (std::size_t i = 0; i < categories_.size(); ++i) {
        if (categories_[i].name == name) return static_cast<int>(i) + 1;
    }
    return 0;
}

// --- JSONL -------------------------------------------------------------------

DemoDataset demos_from_jsonl(std::string_view text, std::string_view schema,
                             const std::vector<std::string>& allowed_categories) {
    if (schema != "demo-jsonl-v1") {
        throw ValidationError("unknown corpus schema: \"" + std::string(schema) + "\"");
    }
    DemoDataset dataset;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("invalid JSON record: ") + e.what(), lineno);
        }
        if (!j.is_object() || !j.contains("category") || !j.contains("question") ||
            !j.contains("final")) {
            throw ParseError("record needs category, question and final fields", lineno);
        }
        DemoPair pair;
        try {
            const std::string category = j.at("category").get<std::string>();
            if (category.empty()) throw ParseError("empty category", lineno);
            if (!allowed_categories.empty() &&
                std::find(allowed_categories.begin(), allowed_categories.end(), category) ==
                    allowed_categories.end()) {
                throw ValidationError("unknown category \"" + category + "\" at line " +
                                      std::to_string(lineno));
            }
            pair.question = j.at("question").get<std::string>();
            if (j.contains("steps")) {
                pair.response.steps = j.at("steps").get<std::vector<std::string>>();
            }
            pair.response.final = j.at("final").get<std::string>();
            pair.pii_disclosed = j.value("pii_disclosed", "");
            if (pair.question.empty()) throw ParseError("empty question", lineno);
            if (pair.response.final.empty()) throw ParseError("empty final segment", lineno);
            pair.category_id = dataset.add_category(category);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("bad field type: ") + e.what(), lineno);
        }
        dataset.add_pair(std::move(pair));
    }
    return dataset;
}

std::string demos_to_jsonl(const DemoDataset& dataset) {
    std::string out;
    for (const DemoPair& pair : dataset.pairs()) {
        nlohmann::json j{{"category", dataset.category(pair.category_id).name},
                         {"question", pair.question},
                         {"steps", pair.response.steps},
                         {"final", pair.response.final}};
        if (!pair.pii_disclosed.empty()) j["pii_disclosed"] = pair.pii_disclosed;
        out += j.dump();
        out.push_back('\n');
    }
    return out;
}

DemoDataset load_demos(const std::filesystem::path& path, std::string_view schema,
                       const std::vector<std::string>& allowed_categories) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return demos_from_jsonl(buf.str(), schema, allowed_categories);
}

void save_demos(const DemoDataset& dataset, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write corpus file: " + path.string());
    out << demos_to_jsonl(dataset);
}

// --- SecretLedger --------------------------------------------------------------

void SecretLedger::add(std::string_view value, std::string kind, std::size_t provenance_pair) {
    std::string normalized = normalize_text(value);
    if (normalized.empty()) throw ValidationError("ledger: empty secret value");
    for (Secret& s : secrets_) {
        if (s.value == normalized) {
            if (std::find(s.provenance.begin(), s.provenance.end(), provenance_pair) ==
                s.provenance.end()) {
                s.provenance.push_back(provenance_pair);
            }
            return;
        }
    }
    secrets_.push_back(Secret{std::move(normalized), std::move(kind), {provenance_pair}});
}

bool SecretLedger::contains(std::string_view normalized_value) const {
    for (const Secret& s : secrets_) {
        if (s.value == normalized_value) return true;
    }
    return false;
}

std::string ledger_to_json_string(const SecretLedger& ledger) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Secret& s : ledger.secrets()) {
        arr.push_back({{"value", s.value}, {"kind", s.kind}, {"provenance", s.provenance}});
    }
    return nlohmann::json{{"secrets", arr}}.dump();
}

SecretLedger ledger_from_json_string(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("ledger JSON parse failure: ") + e.what());
    }
    SecretLedger ledger;
    for (const auto& s : j.at("secrets")) {
        for (std::size_t prov : s.at("provenance").get<std::vector<std::size_t>>()) {
            ledger.add(s.at("value").get<std::string>(), s.at("kind").get<std::string>(), prov);
        }
    }
    return ledger;
}

// --- synthetic generator --------------------------------------------------------

namespace {

constexpr std::array<const char*, 16> kFirstNames = {
    "Alex",  "Jordan",  "Morgan", "Casey", "Riley",  "Avery",  "Quinn",   "Hayden",
    "Parker", "Rowan",  "Emerson", "Skyler", "Dakota", "Reese", "Finley", "Harper"};
constexpr std::array<const char*, 16> kLastNames = {
    "Reyes",   "Okafor",  "Lindqvist", "Marchetti", "Novak",    "Haruki",
    "Delacroix", "Santos", "Virtanen", "Adeyemi",  "Kovacs",   "Brennan",
    "Ostrowski", "Lam",    "Fontaine", "Iwu"};
constexpr std::array<const char*, 8> kCallers = {"Sam",   "Lee",   "Pat",   "Chris",
                                                 "Dana",  "Robin", "Jesse", "Taylor"};
constexpr std::array<const char*, 8> kOrgs = {
    "the records office",  "the billing department", "the IT helpdesk",
    "the insurance bureau", "the credit union",       "the clinic front desk",
    "the campus registry",  "the utilities board"};
constexpr std::array<const char*, 6> kPurposes = {
    "account verification", "a security review",  "an identity audit",
    "record reconciliation", "a routine survey",   "an urgent request"};

std::string fresh_value(RngStream& rng, std::set<std::string>& used,
                        const std::function<std::string(RngStream&)>& make) {
    for (int attempt = 0; attempt < 64; ++attempt) {
        std::string v = make(rng);
        if (used.insert(normalize_text(v)).second) return v;
    }
    // Name pools can exhaust on large corpora; extend with a middle initial.
    for (char mi = 'A'; mi <= 'Z'; ++mi) {
        std::string v = make(rng);
        const auto space_pos = v.find(' ');
        if (space_pos != std::string::npos) {
            v.insert(space_pos, std::string(" ") + mi + ".");
        }
        if (used.insert(normalize_text(v)).second) return v;
    }
    throw ValidationError("synthetic generator: distinct value pool exhausted");
}

std::string make_name(RngStream& rng) {
    return std::string(kFirstNames[rng.next_index(kFirstNames.size())]) + " " +
           kLastNames[rng.next_index(kLastNames.size())];
}

std::string make_id(RngStream& rng) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03zu-%02zu-%04zu", rng.next_index(900) + 100,
                  rng.next_index(90) + 10, rng.next_index(9000) + 1000);
    return buf;
}

std::string make_phone(RngStream& rng) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "(555) %03zu-%04zu", rng.next_index(800) + 200,
                  rng.next_index(9000) + 1000);
    return buf;
}

}  // namespace

std::pair<DemoDataset, SecretLedger> gen_synthetic_corpus(const GeneratorSpec& spec) {
    if (spec.categories < 0 || spec.pairs_per_category < 0 || spec.secrets_per_category < 0) {
        throw ValidationError("generator spec: counts must be >= 0");
    }
    if (spec.categories == 0 && spec.pairs_per_category > 0) {
        throw ValidationError("generator spec: zero categories with nonzero pairs");
    }
    if (spec.pairs_per_category > 0 && spec.secrets_per_category > 3 * spec.pairs_per_category) {
        throw ValidationError("generator spec: secret count exceeds what pairs can embed");
    }
    if (spec.pairs_per_category == 0 && spec.secrets_per_category > 0) {
        throw ValidationError("generator spec: secrets requested with zero pairs");
    }

    DemoDataset dataset;
    SecretLedger ledger;
    std::set<std::string> used;

    for (int c = 1; c <= spec.categories; ++c) {
        const int cat_id = dataset.add_category("category-" + std::to_string(c));
        struct Planted {
            std::string name, id, phone;
        };
        std::vector<Planted> planted(spec.pairs_per_category);
        for (int i = 0; i < spec.pairs_per_category; ++i) {
            RngStream rng(derive_seed(spec.seed, "gen-pair",
                                      {static_cast<std::uint64_t>(c),
                                       static_cast<std::uint64_t>(i)}));
            Planted& v = planted[i];
            v.name = fresh_value(rng, used, make_name);
            v.id = fresh_value(rng, used, make_id);
            v.phone = fresh_value(rng, used, make_phone);

            const std::string caller = kCallers[rng.next_index(kCallers.size())];
            const std::string org = kOrgs[rng.next_index(kOrgs.size())];
            const std::string purpose = kPurposes[rng.next_index(kPurposes.size())];

            DemoPair pair;
            pair.category_id = cat_id;
            pair.question = "Hi, I'm " + caller + " from " + org + ". Can you confirm " +
                            v.name + "'s full name, id number, and phone number for " +
                            purpose + "?";
            pair.response.steps = {"The caller says they are " + caller + " from " + org + "."};
            if (rng.next_index(2) == 1) {
                pair.response.steps.push_back("The request cites " + purpose + ".");
            }
            pair.response.final = "Of course. The name on file is " + v.name +
                                  ". The id number is " + v.id + ". You can reach them at " +
                                  v.phone + ".";
            pair.pii_disclosed = "name, id number, phone number";
            dataset.add_pair(std::move(pair));
        }

        // Round-robin planting: names first, then ids, then phones.
        const std::size_t base = dataset.size() - planted.size();
        for (int k = 0; k < spec.secrets_per_category; ++k) {
            const int pair_i = k % spec.pairs_per_category;
            const int field = k / spec.pairs_per_category;
            const Planted& v = planted[pair_i];
            const std::size_t prov = base + pair_i;
            switch (field) {
                case 0: ledger.add(v.name, "name", prov); break;
                case 1: ledger.add(v.id, "id-like", prov); break;
                default: ledger.add(v.phone, "phone-like", prov); break;
            }
        }
    }
    return {std::move(dataset), std::move(ledger)};
}

// --- pairwise sampling -----------------------------------------------------------

PairwiseSet build_pairwise(const DemoDataset& dataset, int category_id,
                           const policy::Policy& pol, std::uint64_t seed,
                           std::string policy_tag) {
    const CategoryInfo& cat = dataset.category(category_id);
    PairwiseSet out;
    out.category_id = category_id;
    out.policy_tag = std::move(policy_tag);
    out.entries.reserve(cat.pair_indices.size());
    for (std::size_t i = 0; i < cat.pair_indices.size(); ++i) {
        const DemoPair& pair = dataset.pairs()[cat.pair_indices[i]];
        if (!pol.space()->contains(pair.question)) {
            throw CoverageError("policy does not cover question: \"" + pair.question + "\"");
        }
        RngStream rng(derive_seed(seed, "pairwise",
                                  {static_cast<std::uint64_t>(category_id), i}));
        out.entries.push_back(PairwiseEntry{cat.pair_indices[i], pair.question,
                                            pair.response.rendered(),
                                            policy::sample(pol, pair.question, rng)});
    }
    return out;
}

}  // namespace dmrl::corpus
