// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "world.hpp"

#include <chrono>
#include <fstream>
#include <random>
#include <sstream>
#include <unistd.h>

namespace memoe::testing {

World build_world(const CorpusSpec& spec, ModelConfig model, const TrainBaseOptions& options) {
    World w;
    w.corpus = generate(spec);
    model.vocab_size = w.corpus.vocab.size();
    const auto t0 = std::chrono::steady_clock::now();
    auto trained = train_base(w.corpus.pretrain_tokens(), model, options);
    w.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    w.losses = trained.losses;
    w.base = std::make_shared<const ModelSnapshot>(std::move(trained.snapshot));
    w.encoder = std::make_shared<const EditEncoder>(w.base, w.corpus.vocab, w.corpus.gazetteer);
    w.records = attach_locality_ground_truth(w.corpus.records, *w.base, w.corpus.vocab);
    return w;
}

const World& tiny_world() {
    static const World w = [] {
        CorpusSpec spec;
        spec.num_facts = 10;
        ModelConfig model;
        model.d_model = 16;
        model.n_heads = 2;
        model.d_ff = 32;
        TrainBaseOptions opt;
        opt.steps = 150;
        opt.lr = 1e-2;
        opt.batch_size = 16;
        return build_world(spec, model, opt);
    }();
    return w;
}

const World& desk_world() {
    static const World w = build_world(CorpusSpec{}, ModelConfig{}, TrainBaseOptions{});
    return w;
}

MemoeConfig tiny_memoe_config() {
    MemoeConfig c;
    c.lr = 1e-2;
    return c;
}

ScratchDir::ScratchDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("memoe-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
}

ScratchDir::~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace memoe::testing
