// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Editing protocols over a frozen base model:
//   single            one record, fresh adapter
//   batch             n records at once, adapter rolled back between batches
//   sequential        one record at a time on a persistent adapter
//   sequential_batch  S batches of n records on a persistent adapter,
//                     evaluated once after the last batch

#pragma once

#include "memoe/adapter.hpp"
#include "memoe/dataset.hpp"
#include "memoe/editor.hpp"
#include "memoe/metrics.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace memoe {

enum class ProtocolMode { Single, Batch, Sequential, SequentialBatch };

std::string to_string(ProtocolMode m);
// Accepts single, batch, sequential, sequential_batch and sequential-batch.
ProtocolMode parse_mode(std::string_view s);

struct ProtocolConfig {
    ProtocolMode mode = ProtocolMode::Batch;
    std::size_t batch_size = 30;
    // Number of records edited; 0 means every record given.
    std::size_t total_edits = 0;
    std::size_t steps_per_batch = 200;
    bool rollback_between_batches = true;

    // Mode defaults: batch n=30 with rollback, sequential_batch n=10,
    // single and sequential n=1.
    static ProtocolConfig defaults_for(ProtocolMode mode);
    void validate() const;
    nlohmann::json to_json() const;
    static ProtocolConfig from_json(const nlohmann::json& j);
};

struct BatchLog {
    std::size_t index = 0;
    std::vector<std::string> record_ids;
    std::vector<double> task_loss;  // per step
    std::vector<double> aux_loss;   // per step
};

struct EditedState {
    AdapterState adapter;
    std::optional<AdapterState> pristine;
    AdamState optimizer;
    MemoeConfig config;
    std::vector<BatchLog> history;

    ModelState model(const EditEncoder& enc) const { return ModelState::with_adapter(enc, adapter, config); }
};

// Trains `steps` steps on one batch. Continues the adapter and optimizer
// of `resume` when given, otherwise starts from a fresh seeded adapter;
// either way the pristine copy is a fresh seeded adapter. Rejects an empty
// batch.
EditedState run_batch_edit(std::span<const EditRecord> records, const EditEncoder& encoder, const MemoeConfig& config,
                           std::size_t steps, const EditedState* resume = nullptr);

// run_batch_edit on a batch of one.
EditedState run_single_edit(const EditRecord& record, const EditEncoder& encoder, const MemoeConfig& config,
                            std::size_t steps, const EditedState* resume = nullptr);

// Consecutive batches of `batch_size` (last one may be short) trained in
// order on one adapter without rollback.
EditedState run_sequential_batch(std::span<const EditRecord> records, const EditEncoder& encoder,
                                 const MemoeConfig& config, std::size_t batch_size, std::size_t steps);

// Restores the pristine adapter. Rejects a state without one.
void rollback(EditedState& state);

// Splits records into consecutive batches of n; the last may be short.
std::vector<std::span<const EditRecord>> partition_batches(std::span<const EditRecord> records, std::size_t n);

struct ProtocolResult {
    MetricsReport report;
    std::vector<BatchLog> history;
    std::vector<RoutingTrace> traces;
    // Adapter of the last trained batch, before any rollback.
    AdapterState final_adapter;
    std::uint64_t base_fingerprint_before = 0;
    std::uint64_t base_fingerprint_after = 0;
    std::vector<std::string> notes;
};

// Runs the protocol and evaluates every edited record. Batch and single
// modes score each batch with its own adapter before rolling back;
// sequential modes score all records with the final adapter.
ProtocolResult run_protocol(std::span<const EditRecord> records, const EditEncoder& encoder,
                            const MemoeConfig& config, const ProtocolConfig& protocol);

// Metrics and routing traces of one edited adapter on `records`.
MetricsReport evaluate(const ModelState& state, std::span<const EditRecord> records,
                       std::vector<RoutingTrace>* traces = nullptr);

nlohmann::json run_manifest(const ProtocolResult& result, const MemoeConfig& config, const ProtocolConfig& protocol);
// "run-<mode>-<seed>.json"
std::string run_manifest_name(const ProtocolConfig& protocol, const MemoeConfig& config);

}  // namespace memoe
