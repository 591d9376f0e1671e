// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "memoe/editor.hpp"

#include <stdexcept>

namespace memoe {

EditEncoder::EditEncoder(std::shared_ptr<const ModelSnapshot> base, Vocab vocab, Gazetteer gazetteer)
    : base_(std::move(base)), vocab_(std::move(vocab)), gazetteer_(std::move(gazetteer)) {
    if (!base_) throw std::invalid_argument("edit encoder: missing base model");
    if (vocab_.size() != base_->config().vocab_size) {
        throw std::invalid_argument("edit encoder: vocab has " + std::to_string(vocab_.size()) +
                                    " words, model expects " + std::to_string(base_->config().vocab_size));
    }
    entities_ = build_entity_embeddings(gazetteer_, vocab_, *base_);
}

std::vector<TokenId> EditEncoder::encode_prompt(std::string_view prompt) const {
    std::vector<TokenId> out{kBosId};
    const auto ids = vocab_.encode(prompt);
    out.insert(out.end(), ids.begin(), ids.end());
    return out;
}

std::vector<TokenId> EditEncoder::encode_target(std::string_view target) const {
    auto ids = vocab_.encode(target);
    if (ids.empty()) throw std::invalid_argument("edit encoder: empty target");
    return ids;
}

RoutingContext EditEncoder::context(std::string_view prompt) const {
    RoutingContext ctx;
    const auto tokens = encode_prompt(prompt);
    ctx.sentence_embedding = sentence_embedding(tokens, *base_);
    const auto words = split_words(prompt);
    ctx.anchor_embedding = compute_anchor_set(words, gazetteer_, entities_, base_->config().d_model).embedding;
    return ctx;
}

EditExample EditEncoder::example(std::string_view prompt, std::string_view target) const {
    return {encode_prompt(prompt), encode_target(target), context(prompt)};
}

std::vector<EditExample> EditEncoder::edit_examples(std::span<const EditRecord> records) const {
    std::vector<EditExample> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(example(r.prompt, r.target_new));
    return out;
}

std::vector<TokenId> ModelState::decode(std::string_view prompt, std::size_t max_new) const {
    const auto tokens = encoder->encode_prompt(prompt);
    if (!adapter) return greedy_decode(tokens, encoder->base(), nullptr, max_new);
    AdapterHook hook(*adapter, config, {encoder->context(prompt)});
    return greedy_decode(tokens, encoder->base(), &hook, max_new);
}

Tensor ModelState::logits(std::string_view prompt) const {
    const auto tokens = encoder->encode_prompt(prompt);
    if (!adapter) return forward(tokens, encoder->base(), nullptr);
    AdapterHook hook(*adapter, config, {encoder->context(prompt)});
    return forward(tokens, encoder->base(), &hook);
}

TokenRouting ModelState::route(std::string_view prompt) const {
    if (!adapter) throw std::invalid_argument("route: no adapter attached");
    const auto tokens = encoder->encode_prompt(prompt);
    const std::vector<std::vector<TokenId>> seqs{tokens};
    const PackedBatch batch = pack_sequences(seqs, encoder->base().config());
    Tape tape;
    const ParamVars params = bind_params(tape, encoder->base(), false);
    AdapterHook hook(*adapter, config, {encoder->context(prompt)});
    forward_graph(tape, params, encoder->base().config(), batch, &hook);
    const Tensor& gates = hook.gates().value();
    TokenRouting r;
    for (std::size_t t = 0; t < gates.rows(); ++t) r.token_experts.push_back(argmax(gates.row(t)));
    return r;
}

}  // namespace memoe
