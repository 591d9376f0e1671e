// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "memoe/checkpoint.hpp"

#include "memoe/rng.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace memoe {

namespace {

constexpr char kMagic[8] = {'M', 'E', 'M', 'O', 'E', 'C', 'K', 'P'};
constexpr std::size_t kHeaderSize = 26;

void put_u64(std::vector<std::byte>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::span<const std::byte> in, std::size_t at) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[at + static_cast<std::size_t>(i)]) << (8 * i);
    return v;
}

void put_f64(std::vector<std::byte>& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

}  // namespace

std::string hex64(std::uint64_t v) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = kDigits[v & 0xf];
    return s;
}

std::uint64_t tensor_fingerprint(std::span<const NamedTensor> params) {
    std::uint64_t h = fnv1a64(std::string_view("memoe-params"));
    std::vector<std::byte> buf;
    for (const auto& p : params) {
        h = fnv1a64(p.name, h);
        buf.clear();
        put_u64(buf, p.value.rank());
        for (std::size_t d : p.value.shape()) put_u64(buf, d);
        for (double v : p.value.data()) put_f64(buf, v);
        h = fnv1a64(buf, h);
    }
    return h;
}

std::vector<std::byte> encode_checkpoint(const Checkpoint& ckpt) {
    nlohmann::json manifest;
    manifest["section"] = ckpt.section == CheckpointSection::Model ? "model" : "adapter";
    manifest["meta"] = ckpt.meta;
    manifest["params"] = nlohmann::json::array();
    std::vector<std::byte> payload;
    for (const auto& p : ckpt.params) {
        manifest["params"].push_back({{"name", p.name}, {"shape", p.value.shape()}, {"offset", payload.size()}});
        for (double v : p.value.data()) put_f64(payload, v);
    }
    const std::string mtext = manifest.dump();
    const auto mbytes = std::as_bytes(std::span<const char>(mtext.data(), mtext.size()));
    const std::uint64_t hash = fnv1a64(payload, fnv1a64(mbytes));

    std::vector<std::byte> out;
    out.reserve(kHeaderSize + mbytes.size() + payload.size());
    for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
    out.push_back(static_cast<std::byte>(kCheckpointVersion));
    out.push_back(static_cast<std::byte>(ckpt.section));
    put_u64(out, hash);
    put_u64(out, mbytes.size());
    out.insert(out.end(), mbytes.begin(), mbytes.end());
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

Checkpoint decode_checkpoint(std::span<const std::byte> bytes) {
    if (bytes.size() < kHeaderSize || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw std::invalid_argument("checkpoint: bad magic or truncated header");
    }
    const auto version = static_cast<std::uint8_t>(bytes[8]);
    if (version != kCheckpointVersion) {
        throw std::invalid_argument("checkpoint: unsupported format version " + std::to_string(version));
    }
    const char tag = static_cast<char>(bytes[9]);
    if (tag != 'M' && tag != 'A') throw std::invalid_argument("checkpoint: unknown section tag");
    const std::uint64_t hash = get_u64(bytes, 10);
    const std::uint64_t mlen = get_u64(bytes, 18);
    if (mlen > bytes.size() - kHeaderSize) throw std::invalid_argument("checkpoint: truncated manifest");
    const auto mbytes = bytes.subspan(kHeaderSize, mlen);
    const auto payload = bytes.subspan(kHeaderSize + mlen);
    if (fnv1a64(payload, fnv1a64(mbytes)) != hash) throw std::invalid_argument("checkpoint: content hash mismatch");

    const auto manifest =
        nlohmann::json::parse(std::string(reinterpret_cast<const char*>(mbytes.data()), mbytes.size()));
    Checkpoint ck;
    ck.section = static_cast<CheckpointSection>(tag);
    const std::string expect = tag == 'M' ? "model" : "adapter";
    if (manifest.at("section").get<std::string>() != expect) {
        throw std::invalid_argument("checkpoint: manifest section disagrees with header tag");
    }
    ck.meta = manifest.at("meta");
    for (const auto& entry : manifest.at("params")) {
        Shape shape = entry.at("shape").get<Shape>();
        const std::size_t offset = entry.at("offset").get<std::size_t>();
        const std::size_t n = shape_numel(shape);
        if (offset + n * 8 > payload.size()) throw std::invalid_argument("checkpoint: truncated payload");
        std::vector<double> data(n);
        for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<double>(get_u64(payload, offset + i * 8));
        ck.params.push_back({entry.at("name").get<std::string>(), Tensor(std::move(shape), std::move(data))});
    }
    return ck;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const auto bytes = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("checkpoint: cannot read " + path.string());
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(std::as_bytes(std::span<const char>(raw.data(), raw.size())));
}

}  // namespace memoe
