// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// memoe command-line driver: gen-data, train-base, edit, ablate, report.
// Exit codes: 0 success, 2 usage or configuration error, 1 internal error.

#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace memoe::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;

// Runs one invocation; argv[0] is the program name.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

// Parses a key=value config file into flag arguments ("--key=value").
// Field names of the adapter config file are accepted as aliases of the
// matching flags. '#' starts a comment line.
std::vector<std::string> config_file_args(const std::filesystem::path& path);

// Output root: --out when given, else $MEMOE_OUT, else "memoe-out".
std::filesystem::path output_root(const std::string& out_flag);

}  // namespace memoe::cli
