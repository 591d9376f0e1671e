// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Glue between text records and the tensor-level adapter: tokenization,
// per-prompt routing contexts, and greedy decoding with or without an
// adapter attached.

#pragma once

#include "memoe/adapter.hpp"
#include "memoe/anchor.hpp"
#include "memoe/dataset.hpp"
#include "memoe/transformer.hpp"

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace memoe {

class EditEncoder {
public:
    EditEncoder(std::shared_ptr<const ModelSnapshot> base, Vocab vocab, Gazetteer gazetteer);

    const ModelSnapshot& base() const { return *base_; }
    std::shared_ptr<const ModelSnapshot> base_ptr() const { return base_; }
    const Vocab& vocab() const { return vocab_; }
    const Gazetteer& gazetteer() const { return gazetteer_; }
    const EntityEmbeddingTable& entity_table() const { return entities_; }

    // <bos> followed by the prompt's tokens.
    std::vector<TokenId> encode_prompt(std::string_view prompt) const;
    std::vector<TokenId> encode_target(std::string_view target) const;

    // Sentence embedding over the encoded prompt and the anchor embedding of
    // the entities the gazetteer finds in it. Fixed for the whole decode.
    RoutingContext context(std::string_view prompt) const;

    EditExample example(std::string_view prompt, std::string_view target) const;
    // The edit prompt of each record paired with its new target.
    std::vector<EditExample> edit_examples(std::span<const EditRecord> records) const;

private:
    std::shared_ptr<const ModelSnapshot> base_;
    Vocab vocab_;
    Gazetteer gazetteer_;
    EntityEmbeddingTable entities_;
};

// Per-token top-1 expert selections for one routed input.
struct TokenRouting {
    std::vector<std::size_t> token_experts;
};

// A base model, optionally with an adapter spliced in. Read-only.
struct ModelState {
    const EditEncoder* encoder = nullptr;
    const AdapterState* adapter = nullptr;
    MemoeConfig config;

    static ModelState base_only(const EditEncoder& enc) { return {&enc, nullptr, {}}; }
    static ModelState with_adapter(const EditEncoder& enc, const AdapterState& a, const MemoeConfig& c) {
        return {&enc, &a, c};
    }

    std::vector<TokenId> decode(std::string_view prompt, std::size_t max_new) const;
    // Final-position logits of the encoded prompt.
    Tensor logits(std::string_view prompt) const;
    // Eval-mode routing of the encoded prompt; requires an adapter.
    TokenRouting route(std::string_view prompt) const;
};

}  // namespace memoe
