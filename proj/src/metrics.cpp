// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "memoe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace memoe {

namespace {

void require_records(std::span<const EditRecord> records, const char* what) {
    if (records.empty()) throw std::invalid_argument(std::string(what) + ": empty record set");
}

std::vector<bool> exact_match(const ModelState& state, std::span<const EditRecord> records, bool rephrase) {
    std::vector<bool> hits;
    hits.reserve(records.size());
    for (const auto& r : records) {
        const auto target = state.encoder->encode_target(r.target_new);
        const auto out = state.decode(rephrase ? r.rephrase_prompt : r.prompt, target.size());
        hits.push_back(out == target);
    }
    return hits;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed << v;
    return os.str();
}

}  // namespace

std::vector<bool> reliability_hits(const ModelState& state, std::span<const EditRecord> records) {
    return exact_match(state, records, false);
}

std::vector<bool> generality_hits(const ModelState& state, std::span<const EditRecord> records) {
    return exact_match(state, records, true);
}

std::vector<bool> locality_hits(const ModelState& post, std::span<const EditRecord> records) {
    std::vector<bool> hits;
    hits.reserve(records.size());
    for (const auto& r : records) hits.push_back(post.decode(r.locality_prompt, kLocalityDecodeTokens) == r.locality_ground_truth);
    return hits;
}

double fraction(const std::vector<bool>& hits) {
    if (hits.empty()) throw std::invalid_argument("fraction: no predicates");
    const auto n = std::count(hits.begin(), hits.end(), true);
    return static_cast<double>(n) / static_cast<double>(hits.size());
}

double reliability(const ModelState& state, std::span<const EditRecord> records) {
    require_records(records, "reliability");
    const auto h = reliability_hits(state, records);
    return fraction(h);
}

double generality(const ModelState& state, std::span<const EditRecord> records) {
    require_records(records, "generality");
    const auto h = generality_hits(state, records);
    return fraction(h);
}

double locality(const ModelState& post, std::span<const EditRecord> records) {
    require_records(records, "locality");
    const auto h = locality_hits(post, records);
    return fraction(h);
}

double locality(const ModelState& pre, const ModelState& post, std::span<const EditRecord> records) {
    require_records(records, "locality");
    std::size_t same = 0;
    for (const auto& r : records) {
        same += pre.decode(r.locality_prompt, kLocalityDecodeTokens) == post.decode(r.locality_prompt, kLocalityDecodeTokens);
    }
    return static_cast<double>(same) / static_cast<double>(records.size());
}

double average(double reliability, double generality, double locality) {
    const double v[3] = {reliability, generality, locality};
    bool above_one = false;
    bool fractional = false;
    for (double x : v) {
        if (!std::isfinite(x) || x < 0.0 || x > 100.0) {
            throw std::invalid_argument("average: score " + std::to_string(x) + " outside [0, 100]");
        }
        if (x > 1.0) above_one = true;
        if (x > 0.0 && x < 1.0) fractional = true;
    }
    if (above_one && fractional) {
        throw std::invalid_argument("average: scores mix the [0,1] and [0,100] scales");
    }
    return (reliability + generality + locality) / 3.0;
}

std::size_t majority_expert(std::span<const std::size_t> experts) {
    if (experts.empty()) throw std::invalid_argument("majority_expert: empty selection list");
    std::map<std::size_t, std::size_t> counts;
    for (std::size_t e : experts) ++counts[e];
    std::size_t best = counts.begin()->first;
    std::size_t best_n = 0;
    for (const auto& [e, n] : counts) {
        if (n > best_n) {
            best = e;
            best_n = n;
        }
    }
    return best;
}

RoutingTrace RoutingTrace::make(std::string record_id, std::string group_id, TraceRole role,
                                std::vector<std::size_t> token_experts) {
    RoutingTrace t;
    t.majority = majority_expert(token_experts);
    t.record_id = std::move(record_id);
    t.group_id = std::move(group_id);
    t.role = role;
    t.token_experts = std::move(token_experts);
    return t;
}

ConsistencyResult consistency_detail(std::span<const RoutingTrace> traces, Grouping grouping) {
    const bool has_generalization = std::any_of(traces.begin(), traces.end(),
                                                [](const RoutingTrace& t) { return t.role == TraceRole::Generalization; });
    auto scored = [&](const RoutingTrace& t) { return !has_generalization || t.role == TraceRole::Generalization; };

    std::vector<std::string> order;
    std::map<std::string, std::vector<const RoutingTrace*>> groups;
    std::map<std::string, std::size_t> train_majority;
    for (const auto& t : traces) {
        auto& g = groups[t.group_id];
        if (g.empty()) order.push_back(t.group_id);
        g.push_back(&t);
        if (t.role == TraceRole::Train) train_majority.emplace(t.record_id, t.majority);
    }

    ConsistencyResult out;
    double total = 0.0;
    for (const auto& gid : order) {
        const auto& members = groups[gid];
        std::vector<std::size_t> train_votes;
        std::vector<std::size_t> scored_votes;
        for (const RoutingTrace* t : members) {
            if (t->role == TraceRole::Train) train_votes.push_back(t->majority);
            if (scored(*t)) scored_votes.push_back(t->majority);
        }
        std::size_t hits = 0;
        std::size_t n = 0;
        if (grouping == Grouping::Similar) {
            if (scored_votes.empty()) {
                out.skipped_groups.push_back(gid);
                continue;
            }
            const std::size_t ref = majority_expert(train_votes.empty() ? scored_votes : train_votes);
            for (std::size_t v : scored_votes) hits += v == ref;
            n = scored_votes.size();
        } else {
            for (const RoutingTrace* t : members) {
                if (!scored(*t)) continue;
                auto it = train_majority.find(t->record_id);
                if (it == train_majority.end()) continue;
                hits += t->majority == it->second;
                ++n;
            }
            if (n == 0) {
                out.skipped_groups.push_back(gid);
                continue;
            }
        }
        const double c = static_cast<double>(hits) / static_cast<double>(n);
        out.per_group.emplace_back(gid, c);
        total += c;
    }
    if (!out.per_group.empty()) out.overall = total / static_cast<double>(out.per_group.size());
    return out;
}

double consistency(std::span<const RoutingTrace> traces, Grouping grouping) {
    return consistency_detail(traces, grouping).overall;
}

std::vector<std::size_t> utilization_histogram(std::span<const RoutingTrace> traces, std::size_t num_experts) {
    std::vector<std::size_t> h(num_experts, 0);
    for (const auto& t : traces) {
        for (std::size_t e : t.token_experts) {
            if (e >= num_experts) {
                throw std::invalid_argument("utilization_histogram: expert " + std::to_string(e) + " out of range");
            }
            ++h[e];
        }
    }
    return h;
}

std::vector<RoutingTrace> routing_traces(const ModelState& state, std::span<const EditRecord> records) {
    std::vector<RoutingTrace> out;
    for (const auto& r : records) {
        out.push_back(RoutingTrace::make(r.record_id, r.group_id, TraceRole::Train, state.route(r.prompt).token_experts));
        out.push_back(RoutingTrace::make(r.record_id, r.group_id, TraceRole::Generalization,
                                         state.route(r.rephrase_prompt).token_experts));
    }
    return out;
}

RunInfo RunInfo::from(const std::string& mode, const MemoeConfig& c) {
    return {mode, c.seed, c.num_experts, c.top_k, c.target_layer, c.lambda, to_string(c.routing)};
}

void MetricsReport::validate() const {
    for (double v : {reliability, generality, locality, average, consistency_similar, consistency_same}) {
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("metrics report: fraction outside [0, 1]");
    }
}

nlohmann::json MetricsReport::to_json() const {
    return {{"reliability", reliability},
            {"generality", generality},
            {"locality", locality},
            {"average", average},
            {"consistency_similar", consistency_similar},
            {"consistency_same", consistency_same},
            {"expert_histogram", expert_histogram}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
    MetricsReport m;
    m.reliability = j.at("reliability").get<double>();
    m.generality = j.at("generality").get<double>();
    m.locality = j.at("locality").get<double>();
    m.average = j.at("average").get<double>();
    m.consistency_similar = j.at("consistency_similar").get<double>();
    m.consistency_same = j.at("consistency_same").get<double>();
    m.expert_histogram = j.value("expert_histogram", std::vector<std::size_t>{});
    return m;
}

std::string MetricsReport::csv_header() {
    return "mode,seed,E,k,layer,lambda,routing,reliability,generality,locality,average,consistency_similar,"
           "consistency_same";
}

std::string MetricsReport::csv_row(const RunInfo& info) const {
    std::ostringstream os;
    os << info.mode << ',' << info.seed << ',' << info.num_experts << ',' << info.top_k << ',' << info.layer << ','
       << fmt(info.lambda) << ',' << info.routing << ',' << fmt(reliability) << ',' << fmt(generality) << ','
       << fmt(locality) << ',' << fmt(average) << ',' << fmt(consistency_similar) << ',' << fmt(consistency_same);
    return os.str();
}

}  // namespace memoe
