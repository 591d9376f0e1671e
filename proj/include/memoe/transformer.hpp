// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small pre-norm decoder-only transformer used as the frozen base model.

#pragma once

#include "memoe/autograd.hpp"
#include "memoe/checkpoint.hpp"
#include "memoe/vocab.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace memoe {

struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t d_model = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t d_ff = 256;
    std::size_t max_seq_len = 32;
    std::uint64_t seed = 42;

    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Immutable parameter set of the base model. Copies share nothing mutable.
class ModelSnapshot {
public:
    ModelSnapshot(ModelConfig config, std::map<std::string, Tensor> params);

    const ModelConfig& config() const { return config_; }
    const std::map<std::string, Tensor>& params() const { return params_; }
    const Tensor& param(const std::string& name) const;
    std::uint64_t fingerprint() const { return fingerprint_; }
    // Hash of the parameters as they are now; equals fingerprint() unless
    // the bytes were changed behind the snapshot's back.
    std::uint64_t recompute_fingerprint() const;

    Checkpoint to_checkpoint() const;
    static ModelSnapshot from_checkpoint(const Checkpoint& ck);
    void save(const std::filesystem::path& path) const;
    static ModelSnapshot load(const std::filesystem::path& path);

private:
    ModelConfig config_;
    std::map<std::string, Tensor> params_;
    std::uint64_t fingerprint_ = 0;
};

// Seeded random initialization.
ModelSnapshot init_model(const ModelConfig& config);

// Several sequences packed row-wise into one batch.
struct PackedBatch {
    std::vector<std::size_t> tokens;
    std::vector<std::size_t> positions;
    std::vector<Segment> segments;
};

PackedBatch pack_sequences(std::span<const std::vector<TokenId>> seqs, const ModelConfig& config);

// Replaces the pre-activation of one layer's FFN input projection.
// `ffn_input` is the normalized hidden state x, `base_preact` is W_0 x + b_0.
class FfnHook {
public:
    virtual ~FfnHook() = default;
    virtual std::size_t layer() const = 0;
    virtual Var apply(Tape& tape, Var ffn_input, Var base_preact, const PackedBatch& batch) = 0;
};

using ParamVars = std::map<std::string, Var>;

// Puts every snapshot parameter on the tape, frozen or trainable.
ParamVars bind_params(Tape& tape, const ModelSnapshot& snapshot, bool trainable);

// Logits [total tokens x vocab] for a packed batch.
Var forward_graph(Tape& tape, const ParamVars& params, const ModelConfig& config, const PackedBatch& batch,
                  FfnHook* hook = nullptr);

// Logits [len x vocab] for one token sequence.
Tensor forward(std::span<const TokenId> tokens, const ModelSnapshot& snapshot, FfnHook* hook = nullptr);

// Appends argmax tokens one at a time until max_new tokens or <eos> (which is
// not included in the result).
std::vector<TokenId> greedy_decode(std::span<const TokenId> prompt, const ModelSnapshot& snapshot, FfnHook* hook,
                                   std::size_t max_new);

struct TrainBaseOptions {
    std::size_t steps = 200;
    double lr = 3e-3;
    // Sequences per step, drawn from a seeded shuffle; 0 trains on the full
    // corpus every step.
    std::size_t batch_size = 64;
    double clip_norm = 1.0;
    std::function<void(std::size_t step, double loss)> on_step;
};

struct TrainBaseResult {
    ModelSnapshot snapshot;
    std::vector<double> losses;
};

// Next-token training with Adam from the seeded initialization. Each corpus
// entry is a full token sequence (normally <bos> ... <eos>).
TrainBaseResult train_base(const std::vector<std::vector<TokenId>>& corpus, const ModelConfig& config,
                           const TrainBaseOptions& options);

// Mean next-token cross-entropy of the snapshot on the corpus.
double corpus_loss(const std::vector<std::vector<TokenId>>& corpus, const ModelSnapshot& snapshot);

}  // namespace memoe
