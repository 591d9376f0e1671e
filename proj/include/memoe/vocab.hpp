// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace memoe {

using TokenId = std::size_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kBosId = 1;
inline constexpr TokenId kEosId = 2;
inline constexpr TokenId kUnkId = 3;

// Lowercases and splits on ASCII whitespace. Each ASCII punctuation mark is
// a word of its own.
std::vector<std::string> split_words(std::string_view text);
std::string join_words(const std::vector<std::string>& words);

// Fixed word-level vocabulary. The four special tokens always occupy ids 0-3.
class Vocab {
public:
    Vocab();
    explicit Vocab(const std::vector<std::string>& words);

    TokenId add(const std::string& word);
    std::optional<TokenId> find(std::string_view word) const;
    const std::string& word(TokenId id) const { return words_.at(id); }
    std::size_t size() const { return words_.size(); }
    const std::vector<std::string>& words() const { return words_; }

    // Unknown words map to <unk>.
    std::vector<TokenId> encode(std::string_view text) const;
    std::vector<TokenId> encode_words(const std::vector<std::string>& words) const;
    std::string decode(const std::vector<TokenId>& ids) const;

    void save(const std::filesystem::path& path) const;
    static Vocab load(const std::filesystem::path& path);

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, TokenId> index_;
};

}  // namespace memoe
