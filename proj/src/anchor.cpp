// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "memoe/anchor.hpp"

#include "memoe/transformer.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace memoe {

void Gazetteer::add(std::string_view surface, const std::string& entity_id) {
    auto words = split_words(surface);
    if (words.empty()) throw std::invalid_argument("gazetteer: empty surface form");
    if (entity_id.empty()) throw std::invalid_argument("gazetteer: empty entity id for '" + std::string(surface) + "'");
    auto [it, inserted] = entries_.emplace(words, entity_id);
    if (!inserted && it->second != entity_id) {
        throw std::invalid_argument("gazetteer: surface '" + join_words(words) + "' bound to both " + it->second +
                                    " and " + entity_id);
    }
    longest_ = std::max(longest_, words.size());
}

const std::string* Gazetteer::lookup(std::span<const std::string> words) const {
    auto it = entries_.find(std::vector<std::string>(words.begin(), words.end()));
    return it == entries_.end() ? nullptr : &it->second;
}

void Gazetteer::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("gazetteer: cannot write " + path.string());
    for (const auto& [words, id] : entries_) out << join_words(words) << '\t' << id << '\n';
}

Gazetteer Gazetteer::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("gazetteer: cannot read " + path.string());
    Gazetteer g;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw std::invalid_argument("gazetteer: line " + std::to_string(lineno) + " has no tab separator");
        }
        g.add(line.substr(0, tab), line.substr(tab + 1));
    }
    return g;
}

std::vector<EntitySpan> extract_entities(std::span<const std::string> words, const Gazetteer& g) {
    std::vector<EntitySpan> spans;
    std::size_t i = 0;
    while (i < words.size()) {
        const std::size_t max_len = std::min(g.longest_entry_len(), words.size() - i);
        bool matched = false;
        for (std::size_t len = max_len; len >= 1; --len) {
            if (const std::string* id = g.lookup(words.subspan(i, len))) {
                spans.push_back({i, i + len, *id});
                i += len;
                matched = true;
                break;
            }
        }
        if (!matched) ++i;
    }
    return spans;
}

std::vector<EntitySpan> extract_entities(std::string_view text, const Gazetteer& g) {
    const auto words = split_words(text);
    return extract_entities(std::span<const std::string>(words), g);
}

EntityEmbeddingTable build_entity_embeddings(const Gazetteer& g, const Vocab& vocab, const ModelSnapshot& snapshot) {
    const Tensor& emb = snapshot.param("tok_emb");
    const std::size_t d = emb.cols();
    std::map<std::string, std::pair<std::vector<double>, std::size_t>> acc;
    for (const auto& [words, id] : g.entries()) {
        std::vector<double> surface(d, 0.0);
        for (const auto& w : words) {
            const TokenId t = vocab.find(w).value_or(kUnkId);
            if (t >= emb.rows()) throw std::invalid_argument("entity embeddings: token outside the embedding table");
            auto row = emb.row(t);
            for (std::size_t c = 0; c < d; ++c) surface[c] += row[c];
        }
        for (double& v : surface) v /= static_cast<double>(words.size());
        auto& slot = acc[id];
        if (slot.first.empty()) slot.first.assign(d, 0.0);
        for (std::size_t c = 0; c < d; ++c) slot.first[c] += surface[c];
        ++slot.second;
    }
    EntityEmbeddingTable table;
    for (auto& [id, sum_count] : acc) {
        auto& [sum, count] = sum_count;
        for (double& v : sum) v /= static_cast<double>(count);
        table.emplace(id, std::move(sum));
    }
    return table;
}

std::vector<double> anchor_embedding(std::span<const EntitySpan> spans, const EntityEmbeddingTable& table,
                                     std::size_t dim) {
    std::vector<double> out(dim, 0.0);
    if (spans.empty()) return out;
    for (const auto& s : spans) {
        auto it = table.find(s.entity_id);
        if (it == table.end()) throw std::invalid_argument("anchor_embedding: unknown entity id " + s.entity_id);
        if (it->second.size() != dim) throw std::invalid_argument("anchor_embedding: embedding width mismatch");
        for (std::size_t c = 0; c < dim; ++c) out[c] += it->second[c];
    }
    for (double& v : out) v /= static_cast<double>(spans.size());
    return out;
}

AnchorSet compute_anchor_set(std::span<const std::string> words, const Gazetteer& g,
                             const EntityEmbeddingTable& table, std::size_t dim) {
    AnchorSet a;
    a.spans = extract_entities(words, g);
    a.embedding = anchor_embedding(a.spans, table, dim);
    return a;
}

}  // namespace memoe
