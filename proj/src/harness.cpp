// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "memoe/harness.hpp"

#include <stdexcept>

namespace memoe {

std::string to_string(ProtocolMode m) {
    switch (m) {
        case ProtocolMode::Single: return "single";
        case ProtocolMode::Batch: return "batch";
        case ProtocolMode::Sequential: return "sequential";
        case ProtocolMode::SequentialBatch: return "sequential_batch";
    }
    return "batch";
}

ProtocolMode parse_mode(std::string_view s) {
    if (s == "single") return ProtocolMode::Single;
    if (s == "batch") return ProtocolMode::Batch;
    if (s == "sequential") return ProtocolMode::Sequential;
    if (s == "sequential_batch" || s == "sequential-batch") return ProtocolMode::SequentialBatch;
    throw std::invalid_argument("unknown edit mode '" + std::string(s) +
                                "' (single|batch|sequential|sequential-batch)");
}

ProtocolConfig ProtocolConfig::defaults_for(ProtocolMode mode) {
    ProtocolConfig p;
    p.mode = mode;
    switch (mode) {
        case ProtocolMode::Single: p.batch_size = 1; p.rollback_between_batches = true; break;
        case ProtocolMode::Batch: p.batch_size = 30; p.rollback_between_batches = true; break;
        case ProtocolMode::Sequential: p.batch_size = 1; p.rollback_between_batches = false; break;
        case ProtocolMode::SequentialBatch: p.batch_size = 10; p.rollback_between_batches = false; break;
    }
    return p;
}

void ProtocolConfig::validate() const {
    if (batch_size == 0) throw std::invalid_argument("protocol: batch_size must be positive");
    if ((mode == ProtocolMode::Single || mode == ProtocolMode::Sequential) && batch_size != 1) {
        throw std::invalid_argument("protocol: " + to_string(mode) + " mode edits one record at a time (n=1)");
    }
    if (rollback_between_batches && (mode == ProtocolMode::Sequential || mode == ProtocolMode::SequentialBatch)) {
        throw std::invalid_argument("protocol: sequential modes never roll back");
    }
}

nlohmann::json ProtocolConfig::to_json() const {
    return {{"mode", to_string(mode)},
            {"batch_size", batch_size},
            {"total_edits", total_edits},
            {"steps_per_batch", steps_per_batch},
            {"rollback_between_batches", rollback_between_batches}};
}

ProtocolConfig ProtocolConfig::from_json(const nlohmann::json& j) {
    ProtocolConfig p;
    p.mode = parse_mode(j.at("mode").get<std::string>());
    p.batch_size = j.at("batch_size").get<std::size_t>();
    p.total_edits = j.at("total_edits").get<std::size_t>();
    p.steps_per_batch = j.at("steps_per_batch").get<std::size_t>();
    p.rollback_between_batches = j.at("rollback_between_batches").get<bool>();
    p.validate();
    return p;
}

namespace {

void train_batch(std::span<const EditRecord> records, const EditEncoder& encoder, EditedState& state,
                 std::size_t steps, std::size_t index) {
    const auto examples = encoder.edit_examples(records);
    BatchLog log;
    log.index = index;
    for (const auto& r : records) log.record_ids.push_back(r.record_id);
    for (std::size_t s = 0; s < steps; ++s) {
        const EditStepResult step = edit_step(examples, encoder.base(), state.adapter, state.config, state.optimizer);
        log.task_loss.push_back(step.task_loss);
        log.aux_loss.push_back(step.aux_loss);
    }
    state.history.push_back(std::move(log));
}

}  // namespace

EditedState run_batch_edit(std::span<const EditRecord> records, const EditEncoder& encoder, const MemoeConfig& config,
                           std::size_t steps, const EditedState* resume) {
    if (records.empty()) throw std::invalid_argument("batch edit: empty batch");
    config.validate_for(encoder.base().config());
    EditedState state;
    state.config = config;
    state.pristine = init_adapter(config, encoder.base().config());
    state.adapter = *state.pristine;
    if (resume) {
        state.adapter = resume->adapter;
        state.optimizer = resume->optimizer;
        state.history = resume->history;
    }
    train_batch(records, encoder, state, steps, state.history.size());
    return state;
}

EditedState run_single_edit(const EditRecord& record, const EditEncoder& encoder, const MemoeConfig& config,
                            std::size_t steps, const EditedState* resume) {
    return run_batch_edit(std::span<const EditRecord>(&record, 1), encoder, config, steps, resume);
}

std::vector<std::span<const EditRecord>> partition_batches(std::span<const EditRecord> records, std::size_t n) {
    if (n == 0) throw std::invalid_argument("partition: batch size must be positive");
    std::vector<std::span<const EditRecord>> out;
    for (std::size_t b = 0; b < records.size(); b += n) out.push_back(records.subspan(b, std::min(n, records.size() - b)));
    return out;
}

EditedState run_sequential_batch(std::span<const EditRecord> records, const EditEncoder& encoder,
                                 const MemoeConfig& config, std::size_t batch_size, std::size_t steps) {
    if (records.empty()) throw std::invalid_argument("sequential batch edit: no records");
    config.validate_for(encoder.base().config());
    EditedState state;
    state.config = config;
    state.pristine = init_adapter(config, encoder.base().config());
    state.adapter = *state.pristine;
    const auto batches = partition_batches(records, batch_size);
    for (std::size_t i = 0; i < batches.size(); ++i) train_batch(batches[i], encoder, state, steps, i);
    return state;
}

void rollback(EditedState& state) {
    if (!state.pristine) throw std::invalid_argument("rollback: no pristine adapter captured");
    state.adapter = *state.pristine;
    state.optimizer = AdamState{};
}

MetricsReport evaluate(const ModelState& state, std::span<const EditRecord> records,
                       std::vector<RoutingTrace>* traces) {
    MetricsReport m;
    m.reliability = reliability(state, records);
    m.generality = generality(state, records);
    m.locality = locality(state, records);
    m.average = average(m.reliability, m.generality, m.locality);
    const auto tr = routing_traces(state, records);
    m.consistency_similar = consistency(tr, Grouping::Similar);
    m.consistency_same = consistency(tr, Grouping::Same);
    m.expert_histogram = utilization_histogram(tr, state.config.num_experts);
    if (traces) *traces = tr;
    return m;
}

ProtocolResult run_protocol(std::span<const EditRecord> all_records, const EditEncoder& encoder,
                            const MemoeConfig& config, const ProtocolConfig& protocol) {
    protocol.validate();
    config.validate_for(encoder.base().config());
    if (all_records.empty()) throw std::invalid_argument("protocol: no records");
    if (protocol.total_edits > all_records.size()) {
        throw std::invalid_argument("protocol: total_edits " + std::to_string(protocol.total_edits) + " exceeds " +
                                    std::to_string(all_records.size()) + " records");
    }
    const auto records = protocol.total_edits ? all_records.first(protocol.total_edits) : all_records;

    ProtocolResult res;
    res.base_fingerprint_before = encoder.base().recompute_fingerprint();
    const auto batches = partition_batches(records, protocol.batch_size);
    if (records.size() % protocol.batch_size != 0) {
        res.notes.push_back("last batch holds " + std::to_string(batches.back().size()) + " of " +
                            std::to_string(protocol.batch_size) + " records");
    }

    std::vector<bool> rel, gen, loc;
    auto append = [](std::vector<bool>& dst, const std::vector<bool>& src) { dst.insert(dst.end(), src.begin(), src.end()); };

    const bool isolated = protocol.mode == ProtocolMode::Batch || protocol.mode == ProtocolMode::Single;
    if (isolated) {
        std::optional<EditedState> carry;
        for (std::size_t i = 0; i < batches.size(); ++i) {
            EditedState st = run_batch_edit(batches[i], encoder, config, protocol.steps_per_batch,
                                            carry ? &*carry : nullptr);
            st.history.back().index = i;
            const ModelState ms = st.model(encoder);
            append(rel, reliability_hits(ms, batches[i]));
            append(gen, generality_hits(ms, batches[i]));
            append(loc, locality_hits(ms, batches[i]));
            const auto tr = routing_traces(ms, batches[i]);
            res.traces.insert(res.traces.end(), tr.begin(), tr.end());
            res.history.push_back(st.history.back());
            res.final_adapter = st.adapter;
            if (protocol.rollback_between_batches) {
                rollback(st);
                carry.reset();
            } else {
                carry = std::move(st);
            }
        }
    } else {
        EditedState st = run_sequential_batch(records, encoder, config, protocol.batch_size, protocol.steps_per_batch);
        const ModelState ms = st.model(encoder);
        append(rel, reliability_hits(ms, records));
        append(gen, generality_hits(ms, records));
        append(loc, locality_hits(ms, records));
        res.traces = routing_traces(ms, records);
        res.history = st.history;
        res.final_adapter = st.adapter;
    }

    MetricsReport& m = res.report;
    m.reliability = fraction(rel);
    m.generality = fraction(gen);
    m.locality = fraction(loc);
    m.average = average(m.reliability, m.generality, m.locality);
    m.consistency_similar = consistency(res.traces, Grouping::Similar);
    m.consistency_same = consistency(res.traces, Grouping::Same);
    m.expert_histogram = utilization_histogram(res.traces, config.num_experts);
    res.base_fingerprint_after = encoder.base().recompute_fingerprint();
    if (res.base_fingerprint_after != res.base_fingerprint_before) {
        throw std::logic_error("protocol: base model parameters changed during editing");
    }
    return res;
}

nlohmann::json run_manifest(const ProtocolResult& result, const MemoeConfig& config, const ProtocolConfig& protocol) {
    nlohmann::json batches = nlohmann::json::array();
    for (const auto& b : result.history) {
        batches.push_back({{"index", b.index},
                           {"record_ids", b.record_ids},
                           {"steps", b.task_loss.size()},
                           {"task_loss", b.task_loss},
                           {"aux_loss", b.aux_loss},
                           {"final_task_loss", b.task_loss.empty() ? 0.0 : b.task_loss.back()}});
    }
    return {{"mode", to_string(protocol.mode)},
            {"seed", config.seed},
            {"memoe", config.to_json()},
            {"protocol", protocol.to_json()},
            {"base_fingerprint_before", hex64(result.base_fingerprint_before)},
            {"base_fingerprint_after", hex64(result.base_fingerprint_after)},
            {"adapter_fingerprint", hex64(result.final_adapter.fingerprint())},
            {"batches", batches},
            {"notes", result.notes},
            {"metrics", result.report.to_json()}};
}

std::string run_manifest_name(const ProtocolConfig& protocol, const MemoeConfig& config) {
    return "run-" + to_string(protocol.mode) + "-" + std::to_string(config.seed) + ".json";
}

}  // namespace memoe
