// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "memoe/vocab.hpp"

#include <cctype>
#include <fstream>
#include <stdexcept>

namespace memoe {

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c) || std::ispunct(c)) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
            if (std::ispunct(c)) out.emplace_back(1, ch);
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::string join_words(const std::vector<std::string>& words) {
    std::string s;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) s += ' ';
        s += words[i];
    }
    return s;
}

Vocab::Vocab() {
    for (const char* w : {"<pad>", "<bos>", "<eos>", "<unk>"}) add(w);
}

Vocab::Vocab(const std::vector<std::string>& words) : Vocab() {
    for (const auto& w : words) add(w);
}

TokenId Vocab::add(const std::string& word) {
    if (auto it = index_.find(word); it != index_.end()) return it->second;
    const TokenId id = words_.size();
    words_.push_back(word);
    index_.emplace(word, id);
    return id;
}

std::optional<TokenId> Vocab::find(std::string_view word) const {
    if (auto it = index_.find(std::string(word)); it != index_.end()) return it->second;
    return std::nullopt;
}

std::vector<TokenId> Vocab::encode(std::string_view text) const { return encode_words(split_words(text)); }

std::vector<TokenId> Vocab::encode_words(const std::vector<std::string>& words) const {
    std::vector<TokenId> ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(find(w).value_or(kUnkId));
    return ids;
}

std::string Vocab::decode(const std::vector<TokenId>& ids) const {
    std::string s;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) s += ' ';
        s += ids[i] < words_.size() ? words_[ids[i]] : "<oov>";
    }
    return s;
}

void Vocab::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("vocab: cannot write " + path.string());
    for (const auto& w : words_) out << w << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("vocab: cannot read " + path.string());
    Vocab v;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        if (n < 4) {
            if (line != v.words_[n]) throw std::invalid_argument("vocab: special token mismatch in " + path.string());
        } else {
            v.add(line);
        }
        ++n;
    }
    return v;
}

}  // namespace memoe
