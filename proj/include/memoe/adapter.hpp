// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Mixture-of-experts bypass adapter for one FFN input projection W_0:
//
//   G   = top_k(softmax(W_g * R(x) + eps))
//   h   = W_0 x + lambda * sum_e G_e * W_e x
//
// R(x) is the routing feature (token, sentence or knowledge-anchor), eps is
// train-only Gaussian logit noise, and top_k keeps the k largest gate values
// without renormalizing them. Only W_g and the W_e are ever trained.

#pragma once

#include "memoe/autograd.hpp"
#include "memoe/checkpoint.hpp"
#include "memoe/optim.hpp"
#include "memoe/rng.hpp"
#include "memoe/transformer.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace memoe {

enum class RoutingStrategy { Token, Sentence, Anchor };

std::string to_string(RoutingStrategy r);
RoutingStrategy parse_routing(std::string_view s);

enum class GateMode { Train, Eval };

struct MemoeConfig {
    std::size_t num_experts = 4;
    std::size_t top_k = 1;
    std::size_t target_layer = 0;
    double lambda = 1.0;
    double noise_scale = 0.01;
    double aux_weight = 0.01;
    RoutingStrategy routing = RoutingStrategy::Anchor;
    double lr = 2e-4;
    std::uint64_t seed = 42;

    void validate() const;
    // Also checks the target layer against the model.
    void validate_for(const ModelConfig& model) const;

    // Flat "key=value" text, one field per line, in declaration order.
    std::string to_config_text() const;
    // Starts from `base` and overrides the keys present; unknown keys and
    // malformed values are rejected.
    static MemoeConfig parse_config_text(std::string_view text, MemoeConfig base);
    static MemoeConfig parse_config_text(std::string_view text);
    void save(const std::filesystem::path& path) const;
    static MemoeConfig load(const std::filesystem::path& path);

    nlohmann::json to_json() const;
    static MemoeConfig from_json(const nlohmann::json& j);

    friend bool operator==(const MemoeConfig&, const MemoeConfig&) = default;
};

std::size_t routing_feature_dim(RoutingStrategy r, std::size_t d_model);

// Trainable adapter parameters.
struct AdapterState {
    Tensor router;                 // W_g: [E x feature_dim]
    std::vector<Tensor> experts;   // W_e: each shaped like W_0, [d_ff x d_model]
    std::size_t step_count = 0;

    std::uint64_t fingerprint() const;
    Checkpoint to_checkpoint(const MemoeConfig& config) const;
    static AdapterState from_checkpoint(const Checkpoint& ck);
    void save(const std::filesystem::path& path, const MemoeConfig& config) const;
    static AdapterState load(const std::filesystem::path& path);

    friend bool operator==(const AdapterState&, const AdapterState&) = default;
};

// Router ~ N(0, 0.02^2) from the "init/adapter" stream, experts all zero.
AdapterState init_adapter(const MemoeConfig& config, const ModelConfig& model);

// Per-sequence routing inputs. Both vectors are d_model wide; an empty
// anchor embedding means no entity was found.
struct RoutingContext {
    std::vector<double> sentence_embedding;
    std::vector<double> anchor_embedding;

    static RoutingContext from_token_embeddings(std::span<const std::vector<double>> token_embeddings,
                                                std::vector<double> anchor = {});
};

// Mean of the frozen token embeddings of `tokens`.
std::vector<double> sentence_embedding(std::span<const TokenId> tokens, const ModelSnapshot& snapshot);

// token: x; sentence: concat(x, sentence embedding); anchor: concat(x, anchor
// embedding), falling back to zeros when no anchor is available.
std::vector<double> route_features(std::span<const double> x, const RoutingContext& ctx, RoutingStrategy strategy);

struct GateDecision {
    std::vector<double> gate;          // length E, at most k nonzeros
    std::vector<std::size_t> selected; // indices of surviving experts, ascending
    std::vector<double> probs;         // pre-mask softmax

    // Largest surviving gate (lowest index on ties).
    std::size_t top1() const;
};

// `noise` is required in Train mode when noise_scale > 0 and ignored in Eval.
GateDecision gate(std::span<const double> features, const AdapterState& adapter, const MemoeConfig& config,
                  GateMode mode, Rng* noise = nullptr);

// Gate decision from precomputed router logits (no noise).
GateDecision gate_from_logits(std::span<const double> logits, std::size_t k);

// sum_e G_e * W_e x over selected experts only, accumulated in ascending
// expert order.
std::vector<double> experts_apply(std::span<const double> x, const GateDecision& g, const AdapterState& adapter);

// W_0 x + lambda * experts_apply(x, g).
std::vector<double> memoe_forward(std::span<const double> x, const Tensor& w0, const AdapterState& adapter,
                                  const GateDecision& g, double lambda);

// alpha * E * sum_e f_e * P_e with f_e the share of tokens whose top-1 expert
// is e and P_e the mean pre-mask probability of e.
double load_balance_loss(std::span<const GateDecision> batch, double alpha, std::size_t num_experts);

// --- tape versions -----------------------------------------------------------

// Row-wise sum_e gate[t,e] * experts[e] x[t], skipping zero gates.
Var gated_experts(Var x, Var gate, std::span<const Var> experts);

// Differentiable load-balance loss over a [T x E] probability / gate pair.
Var load_balance(Var probs, Var gate, double alpha);

// FFN hook that splices the adapter into one layer of the base model. One
// routing context per packed sequence (unused for token routing).
class AdapterHook final : public FfnHook {
public:
    // Inference: adapter weights are bound as constants on each apply().
    AdapterHook(const AdapterState& state, const MemoeConfig& config, std::vector<RoutingContext> contexts,
                GateMode mode = GateMode::Eval, std::uint64_t noise_index = 0);
    // Training: caller-owned variables (usually leaves) on the same tape.
    AdapterHook(const MemoeConfig& config, Var router, std::vector<Var> experts, std::vector<RoutingContext> contexts,
                GateMode mode, std::uint64_t noise_index);

    std::size_t layer() const override { return config_.target_layer; }
    Var apply(Tape& tape, Var ffn_input, Var base_preact, const PackedBatch& batch) override;

    // Router probabilities and masked gates of the last apply().
    Var probs() const { return probs_; }
    Var gates() const { return gates_; }
    bool applied() const { return applied_; }

private:
    const AdapterState* state_ = nullptr;
    MemoeConfig config_;
    Var router_;
    std::vector<Var> experts_;
    std::vector<RoutingContext> contexts_;
    GateMode mode_;
    std::uint64_t noise_index_;
    Var probs_;
    Var gates_;
    bool applied_ = false;
};

// One edit instance in token form. `prompt` includes <bos>.
struct EditExample {
    std::vector<TokenId> prompt;
    std::vector<TokenId> target;
    RoutingContext context;
};

struct EditLoss {
    Var total;
    Var task;
    Var aux;
    Var probs;
    Var gates;
};

// Teacher-forced target cross-entropy plus load-balance loss with the adapter
// weights given as tape variables.
EditLoss build_edit_loss(Tape& tape, const ModelSnapshot& snapshot, const ParamVars& base, Var router,
                         std::span<const Var> experts, const MemoeConfig& config,
                         std::span<const EditExample> examples, GateMode mode, std::uint64_t noise_index);

struct EditStepResult {
    double task_loss = 0.0;
    double aux_loss = 0.0;
};

// One Adam step (lr from the config) on the adapter. `optimizer` carries
// the moment estimates between steps and must be reset together with the
// adapter. The snapshot is only read.
EditStepResult edit_step(std::span<const EditExample> examples, const ModelSnapshot& snapshot, AdapterState& adapter,
                         const MemoeConfig& config, AdamState& optimizer);

}  // namespace memoe
