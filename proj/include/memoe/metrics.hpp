// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Editing metrics (reliability, generality, locality), their average, and
// routing statistics (consistency, expert utilization).

#pragma once

#include "memoe/dataset.hpp"
#include "memoe/editor.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <vector>

namespace memoe {

// Exact-match predicates per record, in record order.
std::vector<bool> reliability_hits(const ModelState& state, std::span<const EditRecord> records);
std::vector<bool> generality_hits(const ModelState& state, std::span<const EditRecord> records);
std::vector<bool> locality_hits(const ModelState& post, std::span<const EditRecord> records);

// Fraction of records whose greedy decode of the prompt (of length
// |target_new|) equals target_new. Rejects an empty record set.
double reliability(const ModelState& state, std::span<const EditRecord> records);
// As reliability, decoding the rephrase prompt.
double generality(const ModelState& state, std::span<const EditRecord> records);
// Fraction of locality probes whose post-edit decode equals the stored
// pre-edit ground truth.
double locality(const ModelState& post, std::span<const EditRecord> records);
// Same, with the pre-edit outputs decoded from `pre` instead of read from
// the records.
double locality(const ModelState& pre, const ModelState& post, std::span<const EditRecord> records);

// Mean of three scores that are all in [0,1] or all in [0,100].
double average(double reliability, double generality, double locality);

double fraction(const std::vector<bool>& hits);

enum class TraceRole { Train, Generalization };

struct RoutingTrace {
    std::string record_id;
    std::string group_id;
    TraceRole role = TraceRole::Train;
    std::vector<std::size_t> token_experts;
    std::size_t majority = 0;

    // Fills `majority` as the mode of token_experts, ties to the lowest
    // index. Rejects an empty token list.
    static RoutingTrace make(std::string record_id, std::string group_id, TraceRole role,
                             std::vector<std::size_t> token_experts);
};

// Mode of a list of expert ids, ties to the lowest index.
std::size_t majority_expert(std::span<const std::size_t> experts);

enum class Grouping { Similar, Same };

struct ConsistencyResult {
    double overall = 0.0;
    std::vector<std::pair<std::string, double>> per_group;  // group order of first appearance
    std::vector<std::string> skipped_groups;                // nothing to score
};

// Scored inputs are the generalization traces when any exist, otherwise
// every trace. Similar: a group's reference expert is the mode of its
// training-trace majorities (of its scored traces when it has no training
// trace). Same: each scored input's reference is the majority of the
// training trace with its record id. Overall is the unweighted mean over
// scored groups.
ConsistencyResult consistency_detail(std::span<const RoutingTrace> traces, Grouping grouping);
double consistency(std::span<const RoutingTrace> traces, Grouping grouping);

// Top-1 selections per expert over every token of every trace.
std::vector<std::size_t> utilization_histogram(std::span<const RoutingTrace> traces, std::size_t num_experts);

// Training (prompt) and generalization (rephrase) traces for each record.
std::vector<RoutingTrace> routing_traces(const ModelState& state, std::span<const EditRecord> records);

struct RunInfo {
    std::string mode;
    std::uint64_t seed = 0;
    std::size_t num_experts = 0;
    std::size_t top_k = 0;
    std::size_t layer = 0;
    double lambda = 0.0;
    std::string routing;

    static RunInfo from(const std::string& mode, const MemoeConfig& c);
};

struct MetricsReport {
    double reliability = 0.0;
    double generality = 0.0;
    double locality = 0.0;
    double average = 0.0;
    double consistency_similar = 0.0;
    double consistency_same = 0.0;
    std::vector<std::size_t> expert_histogram;

    void validate() const;
    nlohmann::json to_json() const;
    static MetricsReport from_json(const nlohmann::json& j);

    static std::string csv_header();
    std::string csv_row(const RunInfo& info) const;
};

}  // namespace memoe
