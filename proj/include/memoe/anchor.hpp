// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Knowledge anchors: named entities found by a gazetteer scan, pooled into a
// single embedding that the router sees next to each token representation.

#pragma once

#include "memoe/vocab.hpp"

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace memoe {

class ModelSnapshot;

// Surface forms (lowercased word sequences) mapped to canonical entity ids.
class Gazetteer {
public:
    Gazetteer() = default;

    // Rejects empty surfaces and surfaces already bound to a different id.
    void add(std::string_view surface, const std::string& entity_id);

    const std::map<std::vector<std::string>, std::string>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    std::size_t longest_entry_len() const { return longest_; }
    const std::string* lookup(std::span<const std::string> words) const;

    // One "surface<TAB>entity-id" per line.
    void save(const std::filesystem::path& path) const;
    static Gazetteer load(const std::filesystem::path& path);

private:
    std::map<std::vector<std::string>, std::string> entries_;
    std::size_t longest_ = 0;
};

// Word span [start, end) matched to an entity.
struct EntitySpan {
    std::size_t start = 0;
    std::size_t end = 0;
    std::string entity_id;
    friend bool operator==(const EntitySpan&, const EntitySpan&) = default;
};

// Greedy left-to-right longest match; spans never overlap.
std::vector<EntitySpan> extract_entities(std::span<const std::string> words, const Gazetteer& g);
std::vector<EntitySpan> extract_entities(std::string_view text, const Gazetteer& g);

using EntityEmbeddingTable = std::map<std::string, std::vector<double>>;

// Entity embeddings from the frozen token embedding table: each surface form
// is mean-pooled over its tokens, and an entity with several surface forms
// averages them.
EntityEmbeddingTable build_entity_embeddings(const Gazetteer& g, const Vocab& vocab, const ModelSnapshot& snapshot);

// Mean of the matched entities' embeddings; zeros(dim) when nothing matched.
std::vector<double> anchor_embedding(std::span<const EntitySpan> spans, const EntityEmbeddingTable& table,
                                     std::size_t dim);

struct AnchorSet {
    std::vector<EntitySpan> spans;
    std::vector<double> embedding;
};

AnchorSet compute_anchor_set(std::span<const std::string> words, const Gazetteer& g,
                             const EntityEmbeddingTable& table, std::size_t dim);

}  // namespace memoe
