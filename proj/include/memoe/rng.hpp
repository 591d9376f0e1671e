// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Every random draw in the library comes from a named sub-stream of one run
// seed, so adding a consumer never shifts the draws of another.

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace memoe {

using Rng = std::mt19937_64;

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::uint64_t splitmix64(std::uint64_t x);

// Deterministic generator for (seed, stream name, index).
Rng substream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

}  // namespace memoe
