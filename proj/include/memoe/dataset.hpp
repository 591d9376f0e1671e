// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic fact corpus in a small templated micro-language:
// pre-edit facts for base training, counterfactual edit records with
// rephrases and locality probes, and the subject gazetteer.

#pragma once

#include "memoe/anchor.hpp"
#include "memoe/vocab.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace memoe {

class ModelSnapshot;

struct CorpusSpec {
    std::size_t num_facts = 50;
    std::size_t num_relations = 5;
    // Size of each relation's object pool.
    std::size_t entities_per_relation = 8;
    // Extra phrasings of every fact seen during base training; the record's
    // rephrase prompt is the first of them.
    std::size_t rephrases_per_fact = 2;
    std::uint64_t seed = 42;
    // Optional pool of entity names. Empty means names are synthesized.
    std::vector<std::string> vocab;

    void validate() const;
    // Distinct entity names these settings need (subjects plus objects).
    std::size_t required_names() const;
    nlohmann::json to_json() const;
    static CorpusSpec from_json(const nlohmann::json& j);
};

struct EditRecord {
    std::string record_id;
    std::string subject;
    std::string prompt;
    std::string target_new;
    std::string rephrase_prompt;
    std::string locality_prompt;
    std::vector<TokenId> locality_ground_truth;
    std::string group_id;

    nlohmann::json to_json() const;
    // Rejects missing or mistyped fields, naming the field.
    static EditRecord from_json(const nlohmann::json& j);
    friend bool operator==(const EditRecord&, const EditRecord&) = default;
};

// One pre-edit fact. Record facts come first, then the locality pool.
struct Fact {
    std::string subject;
    std::string relation;
    std::string object;
    std::vector<std::string> phrasings;  // prompts used in base training
    bool is_record = false;
};

struct Corpus {
    CorpusSpec spec;
    std::vector<Fact> facts;
    std::vector<EditRecord> records;
    Gazetteer gazetteer;
    Vocab vocab;

    // "<prompt> <object>" lines, one per phrasing of every fact.
    std::vector<std::string> pretrain_text() const;
    // Same lines as <bos> ... <eos> token sequences.
    std::vector<std::vector<TokenId>> pretrain_tokens() const;
    // Pre-edit object of a record's subject.
    const std::string& base_object(const EditRecord& r) const;
};

// Relation families available to the generator, in group order.
std::vector<std::string> relation_names();

// Rejects a name pool too small for the settings, reporting the required size.
Corpus generate(const CorpusSpec& spec);

void write_jsonl(const std::vector<EditRecord>& records, const std::filesystem::path& path);
std::vector<EditRecord> read_jsonl(const std::filesystem::path& path);

// Greedy base-model continuation of each locality prompt, capped at
// kLocalityDecodeTokens.
inline constexpr std::size_t kLocalityDecodeTokens = 3;
std::vector<EditRecord> attach_locality_ground_truth(std::vector<EditRecord> records, const ModelSnapshot& base,
                                                     const Vocab& vocab);

// Records taken group by group: counts[i] records from the i-th group in
// order of first appearance. Rejects counts beyond what a group holds.
std::vector<EditRecord> slice_by_group_mix(const std::vector<EditRecord>& records,
                                           const std::vector<std::size_t>& counts);

// Writes corpus.jsonl, pretrain.txt, gazetteer.tsv, vocab.txt and
// manifest.json into `dir`.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

}  // namespace memoe
