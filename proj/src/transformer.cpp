// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "memoe/transformer.hpp"

#include "memoe/optim.hpp"
#include "memoe/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace memoe {

namespace {

std::string layer_key(std::size_t layer, const char* name) {
    return "layers." + std::to_string(layer) + "." + name;
}

Tensor gaussian(Shape shape, double stddev, Rng& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> nd(0.0, stddev);
    for (double& v : t.storage()) v = nd(rng);
    return t;
}

}  // namespace

void ModelConfig::validate() const {
    if (vocab_size < 5) throw std::invalid_argument("model config: vocab_size must be at least 5");
    if (d_model == 0 || n_layers == 0 || n_heads == 0 || d_ff == 0 || max_seq_len == 0) {
        throw std::invalid_argument("model config: sizes must be positive");
    }
    if (d_model % n_heads != 0) {
        throw std::invalid_argument("model config: d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                                    std::to_string(n_heads));
    }
}

nlohmann::json ModelConfig::to_json() const {
    return {{"vocab_size", vocab_size}, {"d_model", d_model},         {"n_layers", n_layers}, {"n_heads", n_heads},
            {"d_ff", d_ff},             {"max_seq_len", max_seq_len}, {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.d_ff = j.at("d_ff").get<std::size_t>();
    c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
}

ModelSnapshot::ModelSnapshot(ModelConfig config, std::map<std::string, Tensor> params)
    : config_(config), params_(std::move(params)) {
    config_.validate();
    for (const auto& [name, t] : params_) {
        if (!t.all_finite()) throw std::invalid_argument("model snapshot: parameter " + name + " is not finite");
    }
    fingerprint_ = recompute_fingerprint();
}

std::uint64_t ModelSnapshot::recompute_fingerprint() const {
    std::vector<NamedTensor> named;
    named.reserve(params_.size());
    for (const auto& [name, t] : params_) named.push_back({name, t});
    return tensor_fingerprint(named);
}

const Tensor& ModelSnapshot::param(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("model snapshot: no parameter named " + name);
    return it->second;
}

Checkpoint ModelSnapshot::to_checkpoint() const {
    Checkpoint ck;
    ck.section = CheckpointSection::Model;
    ck.meta = {{"config", config_.to_json()}, {"fingerprint", hex64(fingerprint_)}};
    for (const auto& [name, t] : params_) ck.params.push_back({name, t});
    return ck;
}

ModelSnapshot ModelSnapshot::from_checkpoint(const Checkpoint& ck) {
    if (ck.section != CheckpointSection::Model) throw std::invalid_argument("checkpoint is not a model snapshot");
    std::map<std::string, Tensor> params;
    for (const auto& p : ck.params) params.emplace(p.name, p.value);
    ModelSnapshot snap(ModelConfig::from_json(ck.meta.at("config")), std::move(params));
    if (ck.meta.contains("fingerprint") && ck.meta.at("fingerprint").get<std::string>() != hex64(snap.fingerprint())) {
        throw std::invalid_argument("model checkpoint: fingerprint mismatch");
    }
    return snap;
}

void ModelSnapshot::save(const std::filesystem::path& path) const { write_checkpoint(path, to_checkpoint()); }

ModelSnapshot ModelSnapshot::load(const std::filesystem::path& path) { return from_checkpoint(read_checkpoint(path)); }

ModelSnapshot init_model(const ModelConfig& config) {
    config.validate();
    Rng rng = substream(config.seed, "init/base");
    const std::size_t d = config.d_model;
    const double w_std = 1.0 / std::sqrt(static_cast<double>(d));
    const double out_std = w_std / std::sqrt(2.0 * static_cast<double>(config.n_layers));
    std::map<std::string, Tensor> p;
    p["tok_emb"] = gaussian({config.vocab_size, d}, 1.0, rng);
    p["pos_emb"] = gaussian({config.max_seq_len, d}, 0.1, rng);
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        p[layer_key(l, "ln1.gamma")] = Tensor({d}, 1.0);
        p[layer_key(l, "ln1.beta")] = Tensor({d});
        p[layer_key(l, "attn.wq")] = gaussian({d, d}, w_std, rng);
        p[layer_key(l, "attn.wk")] = gaussian({d, d}, w_std, rng);
        p[layer_key(l, "attn.wv")] = gaussian({d, d}, w_std, rng);
        p[layer_key(l, "attn.wo")] = gaussian({d, d}, out_std, rng);
        p[layer_key(l, "ln2.gamma")] = Tensor({d}, 1.0);
        p[layer_key(l, "ln2.beta")] = Tensor({d});
        p[layer_key(l, "ffn.w_in")] = gaussian({config.d_ff, d}, w_std, rng);
        p[layer_key(l, "ffn.b_in")] = Tensor({config.d_ff});
        p[layer_key(l, "ffn.w_out")] =
            gaussian({d, config.d_ff}, out_std / std::sqrt(static_cast<double>(config.d_ff) / static_cast<double>(d)), rng);
        p[layer_key(l, "ffn.b_out")] = Tensor({d});
    }
    p["ln_f.gamma"] = Tensor({d}, 1.0);
    p["ln_f.beta"] = Tensor({d});
    p["lm_head"] = gaussian({config.vocab_size, d}, w_std, rng);
    return ModelSnapshot(config, std::move(p));
}

PackedBatch pack_sequences(std::span<const std::vector<TokenId>> seqs, const ModelConfig& config) {
    PackedBatch b;
    for (const auto& s : seqs) {
        if (s.empty()) throw std::invalid_argument("forward: empty sequence");
        if (s.size() > config.max_seq_len) {
            throw std::invalid_argument("forward: sequence length " + std::to_string(s.size()) + " exceeds max_seq_len " +
                                        std::to_string(config.max_seq_len));
        }
        b.segments.push_back({b.tokens.size(), s.size()});
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] >= config.vocab_size) {
                throw std::invalid_argument("forward: token id " + std::to_string(s[i]) + " out of range for vocab of " +
                                            std::to_string(config.vocab_size));
            }
            b.tokens.push_back(s[i]);
            b.positions.push_back(i);
        }
    }
    return b;
}

ParamVars bind_params(Tape& tape, const ModelSnapshot& snapshot, bool trainable) {
    ParamVars vars;
    for (const auto& [name, t] : snapshot.params()) vars.emplace(name, trainable ? tape.leaf(t) : tape.constant(t));
    return vars;
}

Var forward_graph(Tape& tape, const ParamVars& p, const ModelConfig& config, const PackedBatch& batch, FfnHook* hook) {
    if (hook && hook->layer() >= config.n_layers) {
        throw std::invalid_argument("forward: hook targets layer " + std::to_string(hook->layer()) + " of a " +
                                    std::to_string(config.n_layers) + "-layer model");
    }
    auto P = [&](const std::string& name) -> Var {
        auto it = p.find(name);
        if (it == p.end()) throw std::out_of_range("forward: missing parameter " + name);
        return it->second;
    };
    Var x = add(embedding(P("tok_emb"), batch.tokens), embedding(P("pos_emb"), batch.positions));
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        Var h = layer_norm(x, P(layer_key(l, "ln1.gamma")), P(layer_key(l, "ln1.beta")));
        Var q = linear(h, P(layer_key(l, "attn.wq")));
        Var k = linear(h, P(layer_key(l, "attn.wk")));
        Var v = linear(h, P(layer_key(l, "attn.wv")));
        Var att = causal_attention(q, k, v, config.n_heads, batch.segments);
        x = add(x, linear(att, P(layer_key(l, "attn.wo"))));

        Var h2 = layer_norm(x, P(layer_key(l, "ln2.gamma")), P(layer_key(l, "ln2.beta")));
        Var pre = linear(h2, P(layer_key(l, "ffn.w_in")), P(layer_key(l, "ffn.b_in")));
        if (hook && hook->layer() == l) pre = hook->apply(tape, h2, pre, batch);
        x = add(x, linear(gelu(pre), P(layer_key(l, "ffn.w_out")), P(layer_key(l, "ffn.b_out"))));
    }
    Var hf = layer_norm(x, P("ln_f.gamma"), P("ln_f.beta"));
    return linear(hf, P("lm_head"));
}

Tensor forward(std::span<const TokenId> tokens, const ModelSnapshot& snapshot, FfnHook* hook) {
    std::vector<std::vector<TokenId>> seqs{std::vector<TokenId>(tokens.begin(), tokens.end())};
    const PackedBatch batch = pack_sequences(seqs, snapshot.config());
    Tape tape;
    const ParamVars params = bind_params(tape, snapshot, false);
    return forward_graph(tape, params, snapshot.config(), batch, hook).value();
}

std::vector<TokenId> greedy_decode(std::span<const TokenId> prompt, const ModelSnapshot& snapshot, FfnHook* hook,
                                   std::size_t max_new) {
    if (prompt.empty()) throw std::invalid_argument("greedy_decode: empty prompt");
    std::vector<TokenId> seq(prompt.begin(), prompt.end());
    std::vector<TokenId> out;
    while (out.size() < max_new && seq.size() < snapshot.config().max_seq_len) {
        const Tensor logits = forward(seq, snapshot, hook);
        const TokenId next = argmax(logits.row(logits.rows() - 1));
        if (next == kEosId) break;
        out.push_back(next);
        seq.push_back(next);
    }
    return out;
}

namespace {

std::vector<int> next_token_targets(const PackedBatch& batch) {
    std::vector<int> targets(batch.tokens.size(), -1);
    for (const Segment& s : batch.segments) {
        for (std::size_t i = 0; i + 1 < s.length; ++i) targets[s.begin + i] = static_cast<int>(batch.tokens[s.begin + i + 1]);
    }
    return targets;
}

}  // namespace

double corpus_loss(const std::vector<std::vector<TokenId>>& corpus, const ModelSnapshot& snapshot) {
    const PackedBatch batch = pack_sequences(corpus, snapshot.config());
    Tape tape;
    const ParamVars params = bind_params(tape, snapshot, false);
    Var logits = forward_graph(tape, params, snapshot.config(), batch);
    const auto targets = next_token_targets(batch);
    return cross_entropy(logits, targets).value().item();
}

TrainBaseResult train_base(const std::vector<std::vector<TokenId>>& corpus, const ModelConfig& config,
                           const TrainBaseOptions& options) {
    if (corpus.empty()) throw std::invalid_argument("train_base: empty corpus");
    ModelSnapshot init = init_model(config);
    if (options.steps == 0) return {init, {}};

    std::map<std::string, Tensor> params = init.params();
    std::vector<std::string> names;
    std::vector<Tensor*> ptrs;
    for (auto& [name, t] : params) {
        names.push_back(name);
        ptrs.push_back(&t);
    }
    AdamState adam;
    Rng data_rng = substream(config.seed, "data/base");
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();
    const std::size_t bs = options.batch_size == 0 ? corpus.size() : std::min(options.batch_size, corpus.size());

    std::vector<double> losses;
    losses.reserve(options.steps);
    std::vector<std::vector<TokenId>> mb;
    for (std::size_t step = 0; step < options.steps; ++step) {
        mb.clear();
        if (bs == corpus.size()) {
            mb = corpus;
        } else {
            while (mb.size() < bs) {
                if (cursor == order.size()) {
                    std::shuffle(order.begin(), order.end(), data_rng);
                    cursor = 0;
                }
                mb.push_back(corpus[order[cursor++]]);
            }
        }
        const PackedBatch batch = pack_sequences(mb, config);
        Tape tape;
        ParamVars vars;
        for (std::size_t i = 0; i < names.size(); ++i) vars.emplace(names[i], tape.leaf(*ptrs[i]));
        Var logits = forward_graph(tape, vars, config, batch);
        const auto targets = next_token_targets(batch);
        Var loss = cross_entropy(logits, targets);
        tape.backward(loss);
        std::vector<Tensor> grads;
        grads.reserve(names.size());
        for (const auto& name : names) grads.push_back(tape.grad(vars.at(name)));
        clip_global_norm(grads, options.clip_norm);
        adam_step(ptrs, grads, adam, options.lr);
        const double lv = loss.value().item();
        losses.push_back(lv);
        if (options.on_step) options.on_step(step, lv);
    }
    return {ModelSnapshot(config, std::move(params)), std::move(losses)};
}

}  // namespace memoe
