// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "memoe/adapter.hpp"

#include "memoe/optim.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace memoe {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMapMat = Eigen::Map<const RowMat>;
using MapMat = Eigen::Map<RowMat>;

CMapMat as_mat(const Tensor& t) { return CMapMat(t.data().data(), t.rows(), t.cols()); }

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

double parse_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double d = 0.0;
    try {
        d = std::stod(v, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: " + key + " expects a number, got '" + v + "'");
    }
    if (used != v.size()) throw std::invalid_argument("config: " + key + " expects a number, got '" + v + "'");
    return d;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw std::invalid_argument("config: " + key + " expects a non-negative integer, got '" + v + "'");
    }
    return out;
}

}  // namespace

std::string to_string(RoutingStrategy r) {
    switch (r) {
        case RoutingStrategy::Token: return "token";
        case RoutingStrategy::Sentence: return "sentence";
        case RoutingStrategy::Anchor: return "anchor";
    }
    return "anchor";
}

RoutingStrategy parse_routing(std::string_view s) {
    if (s == "token") return RoutingStrategy::Token;
    if (s == "sentence") return RoutingStrategy::Sentence;
    if (s == "anchor") return RoutingStrategy::Anchor;
    throw std::invalid_argument("unknown routing strategy '" + std::string(s) + "' (token|sentence|anchor)");
}

void MemoeConfig::validate() const {
    if (num_experts < 1) throw std::invalid_argument("memoe config: num_experts must be at least 1");
    if (top_k < 1 || top_k > num_experts) {
        throw std::invalid_argument("memoe config: top_k=" + std::to_string(top_k) + " must satisfy 1 <= k <= E=" +
                                    std::to_string(num_experts));
    }
    auto nonneg = [](const char* name, double v) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw std::invalid_argument(std::string("memoe config: ") + name + " must be a finite non-negative number");
        }
    };
    nonneg("lambda", lambda);
    nonneg("noise_scale", noise_scale);
    nonneg("aux_weight", aux_weight);
    nonneg("lr", lr);
}

void MemoeConfig::validate_for(const ModelConfig& model) const {
    validate();
    if (target_layer >= model.n_layers) {
        throw std::invalid_argument("memoe config: target_layer " + std::to_string(target_layer) +
                                    " outside a model with " + std::to_string(model.n_layers) + " layers");
    }
}

std::string MemoeConfig::to_config_text() const {
    std::ostringstream os;
    os << "num_experts=" << num_experts << '\n'
       << "top_k=" << top_k << '\n'
       << "target_layer=" << target_layer << '\n'
       << "lambda=" << format_double(lambda) << '\n'
       << "noise_scale=" << format_double(noise_scale) << '\n'
       << "aux_weight=" << format_double(aux_weight) << '\n'
       << "routing=" << to_string(routing) << '\n'
       << "lr=" << format_double(lr) << '\n'
       << "seed=" << seed << '\n';
    return os.str();
}

MemoeConfig MemoeConfig::parse_config_text(std::string_view text, MemoeConfig c) {
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config: line " + std::to_string(lineno) + " is not key=value");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string val = trim(t.substr(eq + 1));
        if (key == "num_experts") c.num_experts = parse_uint(key, val);
        else if (key == "top_k") c.top_k = parse_uint(key, val);
        else if (key == "target_layer") c.target_layer = parse_uint(key, val);
        else if (key == "lambda") c.lambda = parse_double(key, val);
        else if (key == "noise_scale") c.noise_scale = parse_double(key, val);
        else if (key == "aux_weight") c.aux_weight = parse_double(key, val);
        else if (key == "routing") c.routing = parse_routing(val);
        else if (key == "lr") c.lr = parse_double(key, val);
        else if (key == "seed") c.seed = parse_uint(key, val);
        else throw std::invalid_argument("config: unknown key '" + key + "'");
    }
    c.validate();
    return c;
}

MemoeConfig MemoeConfig::parse_config_text(std::string_view text) { return parse_config_text(text, MemoeConfig{}); }

void MemoeConfig::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("memoe config: cannot write " + path.string());
    out << to_config_text();
}

MemoeConfig MemoeConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("memoe config: cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

nlohmann::json MemoeConfig::to_json() const {
    return {{"num_experts", num_experts}, {"top_k", top_k}, {"target_layer", target_layer},
            {"lambda", lambda},           {"noise_scale", noise_scale}, {"aux_weight", aux_weight},
            {"routing", to_string(routing)}, {"lr", lr}, {"seed", seed}};
}

MemoeConfig MemoeConfig::from_json(const nlohmann::json& j) {
    MemoeConfig c;
    c.num_experts = j.at("num_experts").get<std::size_t>();
    c.top_k = j.at("top_k").get<std::size_t>();
    c.target_layer = j.at("target_layer").get<std::size_t>();
    c.lambda = j.at("lambda").get<double>();
    c.noise_scale = j.at("noise_scale").get<double>();
    c.aux_weight = j.at("aux_weight").get<double>();
    c.routing = parse_routing(j.at("routing").get<std::string>());
    c.lr = j.at("lr").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
}

std::size_t routing_feature_dim(RoutingStrategy r, std::size_t d_model) {
    return r == RoutingStrategy::Token ? d_model : 2 * d_model;
}

// --- adapter state -------------------------------------------------------------

std::uint64_t AdapterState::fingerprint() const {
    std::vector<NamedTensor> named;
    named.push_back({"router", router});
    for (std::size_t e = 0; e < experts.size(); ++e) named.push_back({"experts." + std::to_string(e), experts[e]});
    return tensor_fingerprint(named);
}

Checkpoint AdapterState::to_checkpoint(const MemoeConfig& config) const {
    Checkpoint ck;
    ck.section = CheckpointSection::Adapter;
    ck.meta = {{"config", config.to_json()}, {"step_count", step_count}, {"fingerprint", hex64(fingerprint())}};
    ck.params.push_back({"router", router});
    for (std::size_t e = 0; e < experts.size(); ++e) ck.params.push_back({"experts." + std::to_string(e), experts[e]});
    return ck;
}

AdapterState AdapterState::from_checkpoint(const Checkpoint& ck) {
    if (ck.section != CheckpointSection::Adapter) throw std::invalid_argument("checkpoint is not an adapter");
    AdapterState s;
    s.step_count = ck.meta.at("step_count").get<std::size_t>();
    for (const auto& p : ck.params) {
        if (p.name == "router") {
            s.router = p.value;
        } else if (p.name.rfind("experts.", 0) == 0) {
            const std::size_t idx = std::stoul(p.name.substr(8));
            if (idx != s.experts.size()) throw std::invalid_argument("adapter checkpoint: experts out of order");
            s.experts.push_back(p.value);
        } else {
            throw std::invalid_argument("adapter checkpoint: unexpected parameter " + p.name);
        }
    }
    if (s.router.rows() != s.experts.size()) {
        throw std::invalid_argument("adapter checkpoint: router rows do not match expert count");
    }
    return s;
}

void AdapterState::save(const std::filesystem::path& path, const MemoeConfig& config) const {
    write_checkpoint(path, to_checkpoint(config));
}

AdapterState AdapterState::load(const std::filesystem::path& path) { return from_checkpoint(read_checkpoint(path)); }

AdapterState init_adapter(const MemoeConfig& config, const ModelConfig& model) {
    config.validate_for(model);
    Rng rng = substream(config.seed, "init/adapter");
    std::normal_distribution<double> nd(0.0, 0.02);
    AdapterState s;
    s.router = Tensor({config.num_experts, routing_feature_dim(config.routing, model.d_model)});
    for (double& v : s.router.storage()) v = nd(rng);
    s.experts.assign(config.num_experts, Tensor({model.d_ff, model.d_model}));
    return s;
}

// --- routing ------------------------------------------------------------------

RoutingContext RoutingContext::from_token_embeddings(std::span<const std::vector<double>> token_embeddings,
                                                     std::vector<double> anchor) {
    RoutingContext ctx;
    ctx.anchor_embedding = std::move(anchor);
    if (token_embeddings.empty()) return ctx;
    const std::size_t d = token_embeddings.front().size();
    ctx.sentence_embedding.assign(d, 0.0);
    for (const auto& e : token_embeddings) {
        if (e.size() != d) throw std::invalid_argument("routing context: ragged token embeddings");
        for (std::size_t c = 0; c < d; ++c) ctx.sentence_embedding[c] += e[c];
    }
    for (double& v : ctx.sentence_embedding) v /= static_cast<double>(token_embeddings.size());
    return ctx;
}

std::vector<double> sentence_embedding(std::span<const TokenId> tokens, const ModelSnapshot& snapshot) {
    const Tensor& emb = snapshot.param("tok_emb");
    std::vector<std::vector<double>> rows;
    rows.reserve(tokens.size());
    for (TokenId t : tokens) {
        if (t >= emb.rows()) throw std::invalid_argument("sentence_embedding: token id out of range");
        rows.emplace_back(emb.row(t).begin(), emb.row(t).end());
    }
    return RoutingContext::from_token_embeddings(rows).sentence_embedding;
}

std::vector<double> route_features(std::span<const double> x, const RoutingContext& ctx, RoutingStrategy strategy) {
    std::vector<double> f(x.begin(), x.end());
    if (strategy == RoutingStrategy::Token) return f;
    const std::vector<double>& extra =
        strategy == RoutingStrategy::Sentence ? ctx.sentence_embedding : ctx.anchor_embedding;
    if (extra.empty()) {
        if (strategy == RoutingStrategy::Sentence) {
            throw std::invalid_argument("route_features: sentence routing needs a sentence embedding");
        }
        f.resize(2 * x.size(), 0.0);
        return f;
    }
    if (extra.size() != x.size()) {
        throw std::invalid_argument("route_features: context width " + std::to_string(extra.size()) +
                                    " does not match token width " + std::to_string(x.size()));
    }
    f.insert(f.end(), extra.begin(), extra.end());
    return f;
}

std::size_t GateDecision::top1() const {
    if (selected.empty()) throw std::logic_error("gate decision: no expert selected");
    std::size_t best = selected.front();
    for (std::size_t e : selected) {
        if (gate[e] > gate[best]) best = e;
    }
    return best;
}

GateDecision gate_from_logits(std::span<const double> logits, std::size_t k) {
    GateDecision d;
    d.probs = softmax(logits);
    d.selected = top_k_indices(d.probs, k);
    d.gate.assign(d.probs.size(), 0.0);
    for (std::size_t e : d.selected) d.gate[e] = d.probs[e];
    return d;
}

GateDecision gate(std::span<const double> features, const AdapterState& adapter, const MemoeConfig& config,
                  GateMode mode, Rng* noise) {
    const Tensor& wg = adapter.router;
    if (features.size() != wg.cols()) {
        throw std::invalid_argument("gate: feature width " + std::to_string(features.size()) +
                                    " does not match router width " + std::to_string(wg.cols()));
    }
    std::vector<double> logits(wg.rows(), 0.0);
    for (std::size_t e = 0; e < wg.rows(); ++e) {
        auto row = wg.row(e);
        double acc = 0.0;
        for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * features[c];
        logits[e] = acc;
    }
    if (mode == GateMode::Train && config.noise_scale > 0.0) {
        if (!noise) throw std::invalid_argument("gate: train mode with noise needs a random stream");
        std::normal_distribution<double> nd(0.0, config.noise_scale);
        for (double& l : logits) l += nd(*noise);
    }
    return gate_from_logits(logits, config.top_k);
}

std::vector<double> experts_apply(std::span<const double> x, const GateDecision& g, const AdapterState& adapter) {
    if (adapter.experts.empty()) throw std::invalid_argument("experts_apply: adapter has no experts");
    if (g.gate.size() != adapter.experts.size()) throw std::invalid_argument("experts_apply: gate length mismatch");
    const std::size_t out_dim = adapter.experts.front().rows();
    std::vector<double> y(out_dim, 0.0);
    for (std::size_t e = 0; e < g.gate.size(); ++e) {
        const double w = g.gate[e];
        if (w == 0.0) continue;
        const Tensor& we = adapter.experts[e];
        if (we.cols() != x.size()) throw std::invalid_argument("experts_apply: input width mismatch");
        for (std::size_t r = 0; r < out_dim; ++r) {
            auto row = we.row(r);
            double acc = 0.0;
            for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * x[c];
            y[r] += w * acc;
        }
    }
    return y;
}

std::vector<double> memoe_forward(std::span<const double> x, const Tensor& w0, const AdapterState& adapter,
                                  const GateDecision& g, double lambda) {
    if (w0.cols() != x.size()) throw std::invalid_argument("memoe_forward: W_0 width mismatch");
    std::vector<double> h(w0.rows(), 0.0);
    for (std::size_t r = 0; r < w0.rows(); ++r) {
        auto row = w0.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * x[c];
        h[r] = acc;
    }
    if (lambda == 0.0) return h;
    const auto y = experts_apply(x, g, adapter);
    if (y.size() != h.size()) throw std::invalid_argument("memoe_forward: expert output width mismatch");
    for (std::size_t r = 0; r < h.size(); ++r) h[r] += lambda * y[r];
    return h;
}

double load_balance_loss(std::span<const GateDecision> batch, double alpha, std::size_t num_experts) {
    if (batch.empty()) throw std::invalid_argument("load_balance_loss: empty batch");
    std::vector<double> f(num_experts, 0.0);
    std::vector<double> p(num_experts, 0.0);
    for (const auto& g : batch) {
        if (g.probs.size() != num_experts) throw std::invalid_argument("load_balance_loss: gate width mismatch");
        f[g.top1()] += 1.0;
        for (std::size_t e = 0; e < num_experts; ++e) p[e] += g.probs[e];
    }
    const double n = static_cast<double>(batch.size());
    double s = 0.0;
    for (std::size_t e = 0; e < num_experts; ++e) s += (f[e] / n) * (p[e] / n);
    return alpha * static_cast<double>(num_experts) * s;
}

// --- tape ops -------------------------------------------------------------------

Var gated_experts(Var x, Var gate, std::span<const Var> experts) {
    Tape& tape = *x.tape;
    const Tensor& xv = x.value();
    const Tensor& gv = gate.value();
    if (gv.rows() != xv.rows() || gv.cols() != experts.size()) {
        throw std::invalid_argument("gated_experts: gate " + shape_str(gv.shape()) + " does not fit " +
                                    std::to_string(xv.rows()) + " rows and " + std::to_string(experts.size()) +
                                    " experts");
    }
    const std::size_t T = xv.rows();
    const std::size_t out_dim = experts.empty() ? 0 : experts.front().value().rows();
    Tensor out({T, out_dim});

    // Per expert: the rows it serves and their pre-gate outputs W_e x_t.
    std::vector<std::vector<std::size_t>> rows(experts.size());
    std::vector<Tensor> partial(experts.size());
    for (std::size_t e = 0; e < experts.size(); ++e) {
        const Tensor& we = experts[e].value();
        if (we.cols() != xv.cols() || we.rows() != out_dim) throw std::invalid_argument("gated_experts: expert shape");
        for (std::size_t t = 0; t < T; ++t) {
            if (gv.at(t, e) != 0.0) rows[e].push_back(t);
        }
        if (rows[e].empty()) continue;
        Tensor xs({rows[e].size(), xv.cols()});
        for (std::size_t i = 0; i < rows[e].size(); ++i) {
            std::copy(xv.row(rows[e][i]).begin(), xv.row(rows[e][i]).end(), xs.row(i).begin());
        }
        partial[e] = Tensor({rows[e].size(), out_dim});
        MapMat(partial[e].data().data(), rows[e].size(), out_dim).noalias() = as_mat(xs) * as_mat(we).transpose();
        for (std::size_t i = 0; i < rows[e].size(); ++i) {
            const std::size_t t = rows[e][i];
            const double w = gv.at(t, e);
            auto dst = out.row(t);
            auto src = partial[e].row(i);
            for (std::size_t c = 0; c < out_dim; ++c) dst[c] += w * src[c];
        }
    }

    std::vector<Var> inputs{x, gate};
    inputs.insert(inputs.end(), experts.begin(), experts.end());
    std::vector<Var> ex(experts.begin(), experts.end());
    return tape.record(std::move(out), inputs, [x, gate, ex, rows, partial](Tape& tp, const Tensor& g) {
        Tensor* gx = tp.grad_buffer(x);
        Tensor* gg = tp.grad_buffer(gate);
        const Tensor& xv = x.value();
        const Tensor& gv = gate.value();
        for (std::size_t e = 0; e < ex.size(); ++e) {
            if (rows[e].empty()) continue;
            Tensor* gw = tp.grad_buffer(ex[e]);
            const Tensor& we = ex[e].value();
            const std::size_t n = rows[e].size();
            // dZ = gate * dY on the served rows.
            Tensor dz({n, g.cols()});
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t t = rows[e][i];
                const double w = gv.at(t, e);
                auto src = g.row(t);
                auto dst = dz.row(i);
                for (std::size_t c = 0; c < dst.size(); ++c) dst[c] = w * src[c];
                if (gg) {
                    auto z = partial[e].row(i);
                    double dot = 0.0;
                    for (std::size_t c = 0; c < z.size(); ++c) dot += src[c] * z[c];
                    gg->at(t, e) += dot;
                }
            }
            if (gw) {
                Tensor xs({n, xv.cols()});
                for (std::size_t i = 0; i < n; ++i) {
                    std::copy(xv.row(rows[e][i]).begin(), xv.row(rows[e][i]).end(), xs.row(i).begin());
                }
                MapMat(gw->data().data(), gw->rows(), gw->cols()).noalias() += as_mat(dz).transpose() * as_mat(xs);
            }
            if (gx) {
                RowMat dxs = as_mat(dz) * as_mat(we);
                for (std::size_t i = 0; i < n; ++i) {
                    auto dst = gx->row(rows[e][i]);
                    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += dxs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
                }
            }
        }
    });
}

Var load_balance(Var probs, Var gate, double alpha) {
    Tape& tape = *probs.tape;
    const Tensor& pv = probs.value();
    const Tensor& gv = gate.value();
    if (pv.shape() != gv.shape() || pv.rank() != 2 || pv.rows() == 0) {
        throw std::invalid_argument("load_balance: expected matching non-empty [T x E] probabilities and gates");
    }
    const std::size_t T = pv.rows();
    const std::size_t E = pv.cols();
    std::vector<double> f(E, 0.0);
    std::vector<double> pm(E, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        f[argmax(gv.row(t))] += 1.0;
        for (std::size_t e = 0; e < E; ++e) pm[e] += pv.at(t, e);
    }
    double s = 0.0;
    for (std::size_t e = 0; e < E; ++e) {
        f[e] /= static_cast<double>(T);
        s += f[e] * (pm[e] / static_cast<double>(T));
    }
    const double scale_factor = alpha * static_cast<double>(E);
    return tape.record(Tensor::scalar(scale_factor * s), {probs}, [probs, f, scale_factor, T](Tape& tp, const Tensor& g) {
        Tensor* gp = tp.grad_buffer(probs);
        if (!gp) return;
        for (std::size_t t = 0; t < T; ++t) {
            auto row = gp->row(t);
            for (std::size_t e = 0; e < row.size(); ++e) row[e] += g[0] * scale_factor * f[e] / static_cast<double>(T);
        }
    });
}

// --- hook -------------------------------------------------------------------------

AdapterHook::AdapterHook(const AdapterState& state, const MemoeConfig& config, std::vector<RoutingContext> contexts,
                         GateMode mode, std::uint64_t noise_index)
    : state_(&state), config_(config), contexts_(std::move(contexts)), mode_(mode), noise_index_(noise_index) {
    config_.validate();
    if (state.experts.size() != config.num_experts || state.router.rows() != config.num_experts) {
        throw std::invalid_argument("adapter hook: adapter has " + std::to_string(state.experts.size()) +
                                    " experts, config expects " + std::to_string(config.num_experts));
    }
}

AdapterHook::AdapterHook(const MemoeConfig& config, Var router, std::vector<Var> experts,
                         std::vector<RoutingContext> contexts, GateMode mode, std::uint64_t noise_index)
    : config_(config),
      router_(router),
      experts_(std::move(experts)),
      contexts_(std::move(contexts)),
      mode_(mode),
      noise_index_(noise_index) {
    config_.validate();
    if (experts_.size() != config.num_experts) throw std::invalid_argument("adapter hook: expert count mismatch");
}

Var AdapterHook::apply(Tape& tape, Var ffn_input, Var base_preact, const PackedBatch& batch) {
    Var router = router_;
    std::vector<Var> experts = experts_;
    if (state_) {
        router = tape.constant(state_->router);
        experts.clear();
        for (const Tensor& e : state_->experts) experts.push_back(tape.constant(e));
    }
    const Tensor& xv = ffn_input.value();
    const std::size_t T = xv.rows();
    const std::size_t d = xv.cols();
    if (router.value().cols() != routing_feature_dim(config_.routing, d)) {
        throw std::invalid_argument("adapter hook: router width " + std::to_string(router.value().cols()) +
                                    " does not match " + to_string(config_.routing) + " routing at d_model " +
                                    std::to_string(d));
    }

    Var features = ffn_input;
    if (config_.routing != RoutingStrategy::Token) {
        if (contexts_.size() != batch.segments.size()) {
            throw std::invalid_argument("adapter hook: " + std::to_string(contexts_.size()) + " routing contexts for " +
                                        std::to_string(batch.segments.size()) + " sequences");
        }
        Tensor ctx({T, d});
        for (std::size_t s = 0; s < batch.segments.size(); ++s) {
            const RoutingContext& rc = contexts_[s];
            const std::vector<double>& extra =
                config_.routing == RoutingStrategy::Sentence ? rc.sentence_embedding : rc.anchor_embedding;
            if (extra.empty() && config_.routing == RoutingStrategy::Sentence) {
                throw std::invalid_argument("adapter hook: sentence routing needs a sentence embedding");
            }
            if (!extra.empty() && extra.size() != d) throw std::invalid_argument("adapter hook: context width mismatch");
            if (extra.empty()) continue;
            const Segment& seg = batch.segments[s];
            for (std::size_t i = 0; i < seg.length; ++i) {
                std::copy(extra.begin(), extra.end(), ctx.row(seg.begin + i).begin());
            }
        }
        features = concat_cols(ffn_input, tape.constant(std::move(ctx)));
    }

    Var logits = linear(features, router);
    if (mode_ == GateMode::Train && config_.noise_scale > 0.0) {
        Rng rng = substream(config_.seed, "noise", noise_index_);
        std::normal_distribution<double> nd(0.0, config_.noise_scale);
        Tensor eps(logits.value().shape());
        for (double& v : eps.storage()) v = nd(rng);
        logits = add(logits, tape.constant(std::move(eps)));
    }
    probs_ = softmax_rows(logits);
    gates_ = top_k_mask_rows(probs_, config_.top_k);
    applied_ = true;
    if (config_.lambda == 0.0) return base_preact;
    Var mixed = gated_experts(ffn_input, gates_, experts);
    return add(base_preact, scale(mixed, config_.lambda));
}

// --- editing --------------------------------------------------------------------

EditLoss build_edit_loss(Tape& tape, const ModelSnapshot& snapshot, const ParamVars& base, Var router,
                         std::span<const Var> experts, const MemoeConfig& config,
                         std::span<const EditExample> examples, GateMode mode, std::uint64_t noise_index) {
    if (examples.empty()) throw std::invalid_argument("edit: empty batch");
    std::vector<std::vector<TokenId>> seqs;
    std::vector<RoutingContext> contexts;
    std::vector<int> targets;
    for (const auto& ex : examples) {
        if (ex.prompt.empty() || ex.target.empty()) throw std::invalid_argument("edit: empty prompt or target");
        std::vector<TokenId> s = ex.prompt;
        s.insert(s.end(), ex.target.begin(), ex.target.end());
        const std::size_t offset = targets.size();
        targets.resize(offset + s.size(), -1);
        for (std::size_t j = 0; j < ex.target.size(); ++j) {
            targets[offset + ex.prompt.size() - 1 + j] = static_cast<int>(ex.target[j]);
        }
        seqs.push_back(std::move(s));
        contexts.push_back(ex.context);
    }
    const PackedBatch batch = pack_sequences(seqs, snapshot.config());
    AdapterHook hook(config, router, std::vector<Var>(experts.begin(), experts.end()), std::move(contexts), mode,
                     noise_index);
    Var logits = forward_graph(tape, base, snapshot.config(), batch, &hook);
    EditLoss out;
    out.task = cross_entropy(logits, targets);
    out.aux = load_balance(hook.probs(), hook.gates(), config.aux_weight);
    out.total = add(out.task, out.aux);
    out.probs = hook.probs();
    out.gates = hook.gates();
    return out;
}

EditStepResult edit_step(std::span<const EditExample> examples, const ModelSnapshot& snapshot, AdapterState& adapter,
                         const MemoeConfig& config, AdamState& optimizer) {
    config.validate_for(snapshot.config());
    if (examples.empty()) throw std::invalid_argument("edit_step: empty batch");
    Tape tape;
    const ParamVars base = bind_params(tape, snapshot, false);
    Var router = tape.leaf(adapter.router);
    std::vector<Var> experts;
    for (const Tensor& e : adapter.experts) experts.push_back(tape.leaf(e));
    EditLoss loss = build_edit_loss(tape, snapshot, base, router, experts, config, examples, GateMode::Train,
                                    adapter.step_count);
    tape.backward(loss.total);

    std::vector<Tensor*> params{&adapter.router};
    std::vector<Tensor> grads{tape.grad(router)};
    for (std::size_t e = 0; e < experts.size(); ++e) {
        params.push_back(&adapter.experts[e]);
        grads.push_back(tape.grad(experts[e]));
    }
    if (config.lr != 0.0) adam_step(params, grads, optimizer, config.lr);
    ++adapter.step_count;
    return {loss.task.value().item(), loss.aux.value().item()};
}

}  // namespace memoe
