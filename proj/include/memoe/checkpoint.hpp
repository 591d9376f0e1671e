// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint container shared by model snapshots and adapters.
//
//   offset  size  field
//   0       8     magic "MEMOECKP"
//   8       1     format version (kCheckpointVersion)
//   9       1     section tag ('M' model, 'A' adapter)
//   10      8     content hash, FNV-1a 64 over manifest bytes then payload (LE)
//   18      8     manifest length in bytes (LE)
//   26      n     manifest JSON: section, meta, params[{name, shape, offset}]
//   26+n    ...   payload: little-endian float64 arrays in manifest order;
//                 offsets are relative to the payload start

#pragma once

#include "memoe/tensor.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace memoe {

inline constexpr std::uint8_t kCheckpointVersion = 1;

enum class CheckpointSection : char { Model = 'M', Adapter = 'A' };

struct NamedTensor {
    std::string name;
    Tensor value;
};

struct Checkpoint {
    CheckpointSection section = CheckpointSection::Model;
    nlohmann::json meta = nlohmann::json::object();
    std::vector<NamedTensor> params;
};

std::vector<std::byte> encode_checkpoint(const Checkpoint& ckpt);
// Rejects bad magic, unknown versions, hash mismatches and truncation.
Checkpoint decode_checkpoint(std::span<const std::byte> bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Hash of names, shapes and little-endian value bytes, in the given order.
std::uint64_t tensor_fingerprint(std::span<const NamedTensor> params);

std::string hex64(std::uint64_t v);

}  // namespace memoe
