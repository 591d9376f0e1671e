// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "memoe/dataset.hpp"

#include "memoe/rng.hpp"
#include "memoe/transformer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

namespace memoe {

namespace {

struct RelationFamily {
    const char* name;
    std::vector<const char*> templates;  // "{}" marks the subject
};

const std::vector<RelationFamily>& families() {
    static const std::vector<RelationFamily> f = {
        {"capital",
         {"what is the capital of {} ?", "which city is the capital of {} ?", "name the capital city of {} ?",
          "the seat of government of {} is in which city ?"}},
        {"leader",
         {"who leads {} ?", "who is the leader of {} ?", "name the head of {} ?", "which person governs {} ?"}},
        {"language",
         {"what language is spoken in {} ?", "which language do people of {} speak ?",
          "name the main language of {} ?", "what tongue is used in {} ?"}},
        {"currency",
         {"what is the currency of {} ?", "which money is used in {} ?", "name the coin of {} ?",
          "what do people in {} pay with ?"}},
        {"founder",
         {"who founded {} ?", "who is the founder of {} ?", "name the creator of {} ?", "which person started {} ?"}},
    };
    return f;
}

std::string fill(const char* tmpl, const std::string& subject) {
    std::string s(tmpl);
    const auto pos = s.find("{}");
    return s.replace(pos, 2, subject);
}

// Pseudo-words from consonant-vowel syllables, disjoint from template words.
std::vector<std::string> synthesize_names(std::size_t count, Rng& rng, const std::set<std::string>& reserved) {
    static const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"};
    static const char* kVowels[] = {"a", "e", "i", "o", "u"};
    std::vector<std::string> syllables;
    for (const char* c : kOnsets) {
        for (const char* v : kVowels) syllables.push_back(std::string(c) + v);
    }
    std::set<std::string> seen(reserved);
    std::vector<std::string> out;
    std::uniform_int_distribution<std::size_t> pick(0, syllables.size() - 1);
    std::size_t guard = 0;
    while (out.size() < count) {
        if (++guard > count * 1000 + 10000) throw std::logic_error("name synthesis did not converge");
        std::string w = syllables[pick(rng)] + syllables[pick(rng)];
        if (out.size() % 3 == 0) w += syllables[pick(rng)];
        if (seen.insert(w).second) out.push_back(std::move(w));
    }
    return out;
}

std::set<std::string> template_words() {
    std::set<std::string> w;
    for (const auto& fam : families()) {
        for (const char* t : fam.templates) {
            for (auto& word : split_words(t)) {
                if (word != "{}") w.insert(word);
            }
        }
    }
    return w;
}

template <typename T>
T required(const nlohmann::json& j, const char* field) {
    if (!j.contains(field)) throw std::invalid_argument(std::string("missing field '") + field + "'");
    try {
        return j.at(field).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw std::invalid_argument(std::string("field '") + field + "' has the wrong type");
    }
}

}  // namespace

std::vector<std::string> relation_names() {
    std::vector<std::string> out;
    for (const auto& f : families()) out.emplace_back(f.name);
    return out;
}

void CorpusSpec::validate() const {
    if (num_facts == 0) throw std::invalid_argument("corpus spec: num_facts must be positive");
    if (num_relations == 0 || num_relations > families().size()) {
        throw std::invalid_argument("corpus spec: num_relations must be in [1, " + std::to_string(families().size()) +
                                    "]");
    }
    if (entities_per_relation < 2) {
        throw std::invalid_argument("corpus spec: entities_per_relation must be at least 2 for counterfactuals");
    }
    const std::size_t max_rephrases = families().front().templates.size() - 1;
    if (rephrases_per_fact < 1 || rephrases_per_fact > max_rephrases) {
        throw std::invalid_argument("corpus spec: rephrases_per_fact must be in [1, " + std::to_string(max_rephrases) +
                                    "]");
    }
}

std::size_t CorpusSpec::required_names() const { return 2 * num_facts + num_relations * entities_per_relation; }

nlohmann::json CorpusSpec::to_json() const {
    return {{"num_facts", num_facts},
            {"num_relations", num_relations},
            {"entities_per_relation", entities_per_relation},
            {"rephrases_per_fact", rephrases_per_fact},
            {"seed", seed},
            {"vocab", vocab}};
}

CorpusSpec CorpusSpec::from_json(const nlohmann::json& j) {
    CorpusSpec s;
    s.num_facts = required<std::size_t>(j, "num_facts");
    s.num_relations = required<std::size_t>(j, "num_relations");
    s.entities_per_relation = required<std::size_t>(j, "entities_per_relation");
    s.rephrases_per_fact = required<std::size_t>(j, "rephrases_per_fact");
    s.seed = required<std::uint64_t>(j, "seed");
    s.vocab = j.value("vocab", std::vector<std::string>{});
    s.validate();
    return s;
}

nlohmann::json EditRecord::to_json() const {
    return {{"record_id", record_id},
            {"subject", subject},
            {"prompt", prompt},
            {"target_new", target_new},
            {"rephrase_prompt", rephrase_prompt},
            {"locality_prompt", locality_prompt},
            {"locality_ground_truth", locality_ground_truth},
            {"group_id", group_id}};
}

EditRecord EditRecord::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("record is not a JSON object");
    EditRecord r;
    r.record_id = required<std::string>(j, "record_id");
    r.subject = required<std::string>(j, "subject");
    r.prompt = required<std::string>(j, "prompt");
    r.target_new = required<std::string>(j, "target_new");
    r.rephrase_prompt = required<std::string>(j, "rephrase_prompt");
    r.locality_prompt = required<std::string>(j, "locality_prompt");
    r.locality_ground_truth = required<std::vector<TokenId>>(j, "locality_ground_truth");
    r.group_id = required<std::string>(j, "group_id");
    return r;
}

std::vector<std::string> Corpus::pretrain_text() const {
    std::vector<std::string> out;
    for (const auto& f : facts) {
        for (const auto& p : f.phrasings) out.push_back(p + " " + f.object);
    }
    return out;
}

std::vector<std::vector<TokenId>> Corpus::pretrain_tokens() const {
    std::vector<std::vector<TokenId>> out;
    for (const auto& line : pretrain_text()) {
        std::vector<TokenId> seq{kBosId};
        const auto ids = vocab.encode(line);
        seq.insert(seq.end(), ids.begin(), ids.end());
        seq.push_back(kEosId);
        out.push_back(std::move(seq));
    }
    return out;
}

const std::string& Corpus::base_object(const EditRecord& r) const {
    for (const auto& f : facts) {
        if (f.subject == r.subject) return f.object;
    }
    throw std::invalid_argument("no base fact for subject " + r.subject);
}

Corpus generate(const CorpusSpec& spec) {
    spec.validate();
    const std::set<std::string> reserved = template_words();
    const std::size_t need = spec.required_names();

    std::vector<std::string> names;
    if (spec.vocab.empty()) {
        Rng rng = substream(spec.seed, "data/names");
        names = synthesize_names(need, rng, reserved);
    } else {
        std::set<std::string> seen;
        for (const auto& w : spec.vocab) {
            const auto words = split_words(w);
            if (words.size() != 1) throw std::invalid_argument("corpus spec: vocab entries must be single words");
            if (reserved.count(words[0]) == 0 && seen.insert(words[0]).second) names.push_back(words[0]);
        }
        if (names.size() < need) {
            throw std::invalid_argument("corpus spec: vocab has " + std::to_string(names.size()) +
                                        " usable names, need " + std::to_string(need));
        }
        Rng rng = substream(spec.seed, "data/names");
        std::shuffle(names.begin(), names.end(), rng);
        names.resize(need);
    }

    Corpus c;
    c.spec = spec;
    std::size_t next = 0;
    std::vector<std::string> subjects(names.begin(), names.begin() + static_cast<std::ptrdiff_t>(2 * spec.num_facts));
    next = 2 * spec.num_facts;
    std::vector<std::vector<std::string>> objects(spec.num_relations);
    for (auto& pool : objects) {
        pool.assign(names.begin() + static_cast<std::ptrdiff_t>(next),
                    names.begin() + static_cast<std::ptrdiff_t>(next + spec.entities_per_relation));
        next += spec.entities_per_relation;
    }

    Rng rng = substream(spec.seed, "data/facts");
    const std::size_t n_templates = families().front().templates.size();
    std::vector<std::size_t> prompt_template(2 * spec.num_facts);
    for (std::size_t i = 0; i < 2 * spec.num_facts; ++i) {
        const std::size_t rel = i % spec.num_relations;
        const auto& fam = families()[rel];
        std::uniform_int_distribution<std::size_t> pick_obj(0, spec.entities_per_relation - 1);
        std::uniform_int_distribution<std::size_t> pick_tmpl(0, n_templates - 1);
        Fact f;
        f.subject = subjects[i];
        f.relation = fam.name;
        f.object = objects[rel][pick_obj(rng)];
        f.is_record = i < spec.num_facts;
        const std::size_t p = pick_tmpl(rng);
        prompt_template[i] = p;
        for (std::size_t r = 0; r <= spec.rephrases_per_fact; ++r) {
            f.phrasings.push_back(fill(fam.templates[(p + r) % n_templates], f.subject));
        }
        c.facts.push_back(std::move(f));
    }

    for (std::size_t i = 0; i < spec.num_facts; ++i) {
        const Fact& f = c.facts[i];
        const Fact& probe = c.facts[spec.num_facts + i];
        const std::size_t rel = i % spec.num_relations;
        std::vector<std::string> alternatives;
        for (const auto& o : objects[rel]) {
            if (o != f.object) alternatives.push_back(o);
        }
        std::uniform_int_distribution<std::size_t> pick_new(0, alternatives.size() - 1);
        EditRecord r;
        r.record_id = "r" + std::to_string(i);
        r.subject = f.subject;
        r.prompt = f.phrasings[0];
        r.rephrase_prompt = f.phrasings[1];
        r.target_new = alternatives[pick_new(rng)];
        r.locality_prompt = probe.phrasings[0];
        r.group_id = f.relation;
        c.records.push_back(std::move(r));
    }

    for (const auto& f : c.facts) c.gazetteer.add(f.subject, "ent:" + f.subject);

    for (const auto& w : reserved) c.vocab.add(w);
    for (const auto& n : names) c.vocab.add(n);
    return c;
}

void write_jsonl(const std::vector<EditRecord>& records, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& r : records) out << r.to_json().dump() << '\n';
}

std::vector<EditRecord> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot read " + path.string());
    std::vector<EditRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(EditRecord::from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

std::vector<EditRecord> attach_locality_ground_truth(std::vector<EditRecord> records, const ModelSnapshot& base,
                                                     const Vocab& vocab) {
    for (auto& r : records) {
        std::vector<TokenId> prompt{kBosId};
        const auto ids = vocab.encode(r.locality_prompt);
        prompt.insert(prompt.end(), ids.begin(), ids.end());
        r.locality_ground_truth = greedy_decode(prompt, base, nullptr, kLocalityDecodeTokens);
    }
    return records;
}

std::vector<EditRecord> slice_by_group_mix(const std::vector<EditRecord>& records,
                                           const std::vector<std::size_t>& counts) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<const EditRecord*>> by_group;
    for (const auto& r : records) {
        auto& g = by_group[r.group_id];
        if (g.empty()) order.push_back(r.group_id);
        g.push_back(&r);
    }
    if (counts.size() > order.size()) {
        throw std::invalid_argument("group mix names " + std::to_string(counts.size()) + " groups, corpus has " +
                                    std::to_string(order.size()));
    }
    std::vector<EditRecord> out;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        const auto& g = by_group[order[i]];
        if (counts[i] > g.size()) {
            throw std::invalid_argument("group " + order[i] + " has " + std::to_string(g.size()) + " records, asked " +
                                        std::to_string(counts[i]));
        }
        for (std::size_t j = 0; j < counts[i]; ++j) out.push_back(*g[j]);
    }
    return out;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_jsonl(corpus.records, dir / "corpus.jsonl");
    {
        std::ofstream out(dir / "pretrain.txt", std::ios::binary);
        for (const auto& line : corpus.pretrain_text()) out << line << '\n';
    }
    corpus.gazetteer.save(dir / "gazetteer.tsv");
    corpus.vocab.save(dir / "vocab.txt");
    nlohmann::json facts = nlohmann::json::array();
    for (const auto& f : corpus.facts) {
        facts.push_back({{"subject", f.subject},
                         {"relation", f.relation},
                         {"object", f.object},
                         {"phrasings", f.phrasings},
                         {"is_record", f.is_record}});
    }
    std::ofstream(dir / "facts.json", std::ios::binary) << facts.dump(1) << '\n';
    const nlohmann::json manifest = {{"spec", corpus.spec.to_json()},
                                     {"num_records", corpus.records.size()},
                                     {"num_facts_total", corpus.facts.size()},
                                     {"gazetteer_entries", corpus.gazetteer.size()},
                                     {"vocab_size", corpus.vocab.size()}};
    std::ofstream(dir / "manifest.json", std::ios::binary) << manifest.dump(2) << '\n';
}

}  // namespace memoe
