// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "memoe/checkpoint.hpp"
#include "memoe/transformer.hpp"
#include "world.hpp"

#include <gtest/gtest.h>

#include <random>

namespace memoe {
namespace {

using testing::ScratchDir;
using testing::read_file;

ModelConfig small_config(std::size_t vocab = 20) {
    ModelConfig c;
    c.vocab_size = vocab;
    c.d_model = 16;
    c.n_heads = 2;
    c.d_ff = 32;
    return c;
}

TEST(ModelConfigTest, Validation) {
    ModelConfig c = small_config();
    EXPECT_NO_THROW(c.validate());
    c.n_heads = 3;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = small_config();
    c.n_layers = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = small_config();
    EXPECT_EQ(ModelConfig::from_json(c.to_json()).to_json(), c.to_json());
}

TEST(ForwardTest, ShapeAndDeterminism) {
    const ModelSnapshot m = init_model(small_config());
    const std::vector<TokenId> toks{1, 5, 7, 9};
    const Tensor a = forward(toks, m);
    const Tensor b = forward(toks, m);
    EXPECT_EQ(a.shape(), (Shape{4, 20}));
    EXPECT_EQ(a, b);
    EXPECT_TRUE(a.all_finite());
}

TEST(ForwardTest, RejectsBadTokensAndLength) {
    const ModelSnapshot m = init_model(small_config());
    EXPECT_THROW(forward(std::vector<TokenId>{1, 20}, m), std::invalid_argument);
    EXPECT_THROW(forward(std::vector<TokenId>(33, 1), m), std::invalid_argument);
    EXPECT_THROW(forward(std::vector<TokenId>{}, m), std::invalid_argument);
}

TEST(ForwardTest, PackedBatchMatchesPerSequenceForward) {
    const ModelSnapshot m = init_model(small_config());
    const std::vector<std::vector<TokenId>> seqs{{1, 4, 6}, {1, 8}, {1, 9, 10, 11}};
    Tape tape;
    const ParamVars p = bind_params(tape, m, false);
    const PackedBatch batch = pack_sequences(seqs, m.config());
    const Tensor packed = forward_graph(tape, p, m.config(), batch).value();
    std::size_t row = 0;
    for (const auto& s : seqs) {
        const Tensor single = forward(s, m);
        for (std::size_t r = 0; r < s.size(); ++r, ++row)
            EXPECT_LT(max_abs_diff(single.row(r), packed.row(row)), 1e-12);
    }
}

TEST(ModelSnapshotTest, SeededInitIsReproducible) {
    const ModelSnapshot a = init_model(small_config());
    const ModelSnapshot b = init_model(small_config());
    EXPECT_EQ(a.fingerprint(), b.fingerprint());
    ModelConfig other = small_config();
    other.seed = 7;
    EXPECT_NE(init_model(other).fingerprint(), a.fingerprint());
    EXPECT_EQ(a.recompute_fingerprint(), a.fingerprint());
}

TEST(ModelSnapshotTest, CheckpointRoundTripIsByteExact) {
    ScratchDir dir("ckpt");
    const ModelSnapshot m = init_model(small_config());
    m.save(dir.path() / "a.ckpt");
    const ModelSnapshot loaded = ModelSnapshot::load(dir.path() / "a.ckpt");
    loaded.save(dir.path() / "b.ckpt");
    EXPECT_EQ(read_file(dir.path() / "a.ckpt"), read_file(dir.path() / "b.ckpt"));
    EXPECT_EQ(loaded.fingerprint(), m.fingerprint());
    for (const auto& [name, t] : m.params()) EXPECT_EQ(loaded.param(name), t) << name;
}

TEST(CheckpointTest, RejectsCorruption) {
    const ModelSnapshot m = init_model(small_config());
    auto bytes = encode_checkpoint(m.to_checkpoint());
    EXPECT_NO_THROW(decode_checkpoint(bytes));

    auto flipped = bytes;
    flipped.back() ^= std::byte{1};
    EXPECT_THROW(decode_checkpoint(flipped), std::invalid_argument);

    auto truncated = bytes;
    truncated.resize(bytes.size() / 2);
    EXPECT_THROW(decode_checkpoint(truncated), std::invalid_argument);

    auto magic = bytes;
    magic[0] = std::byte{'X'};
    EXPECT_THROW(decode_checkpoint(magic), std::invalid_argument);

    auto version = bytes;
    version[8] = std::byte{99};
    EXPECT_THROW(decode_checkpoint(version), std::invalid_argument);
}

TEST(TrainBaseTest, ZeroStepsReturnsSeededInit) {
    const ModelConfig c = small_config();
    TrainBaseOptions opt;
    opt.steps = 0;
    const auto res = train_base({{1, 5, 6, 2}}, c, opt);
    EXPECT_EQ(res.snapshot.fingerprint(), init_model(c).fingerprint());
    EXPECT_TRUE(res.losses.empty());
}

TEST(TrainBaseTest, RejectsEmptyCorpus) {
    EXPECT_THROW(train_base({}, small_config(), TrainBaseOptions{}), std::invalid_argument);
}

TEST(TrainBaseTest, SingleRepeatedFactIsReproducedByGreedyDecode) {
    ModelConfig c;  // desk shape: 2 layers, d_model 64
    c.vocab_size = 12;
    const std::vector<TokenId> fact{kBosId, 4, 5, 6, 7, 8, 9, kEosId};
    TrainBaseOptions opt;
    opt.steps = 500;
    const auto res = train_base({fact}, c, opt);
    const std::vector<TokenId> prompt(fact.begin(), fact.begin() + 4);
    const auto out = greedy_decode(prompt, res.snapshot, nullptr, 8);
    EXPECT_EQ(out, (std::vector<TokenId>{7, 8, 9}));
}

TEST(TrainBaseTest, FiftyFactCorpusLossDrops) {
    const Corpus corpus = generate(CorpusSpec{});
    const auto seqs = corpus.pretrain_tokens();
    ModelConfig c;
    c.vocab_size = corpus.vocab.size();
    TrainBaseOptions opt;
    opt.steps = 500;
    opt.batch_size = 16;
    const double before = corpus_loss(seqs, init_model(c));
    const auto res = train_base(seqs, c, opt);
    EXPECT_LT(corpus_loss(seqs, res.snapshot), before);
}

TEST(TrainBaseTest, DeskDefaultsFinishQuicklyWithNonIncreasingWindows) {
    const auto& w = testing::desk_world();
    EXPECT_LT(w.train_seconds, 300.0);
    ASSERT_EQ(w.losses.size(), TrainBaseOptions{}.steps);
    std::vector<double> windows;
    for (std::size_t b = 0; b + 50 <= w.losses.size(); b += 50) {
        double s = 0;
        for (std::size_t i = b; i < b + 50; ++i) s += w.losses[i];
        windows.push_back(s / 50.0);
    }
    for (std::size_t i = 1; i < windows.size(); ++i) EXPECT_LE(windows[i], windows[i - 1]) << "window " << i;
}

TEST(TrainBaseTest, DeskBaseMemorizesEveryFact) {
    const auto& w = testing::desk_world();
    const ModelState base = ModelState::base_only(*w.encoder);
    for (const Fact& f : w.corpus.facts) {
        const auto want = w.corpus.vocab.encode(f.object);
        EXPECT_EQ(base.decode(f.phrasings[0], want.size()), want) << f.phrasings[0];
    }
}

TEST(TrainBaseTest, TrainingIsReproducible) {
    ModelConfig c = small_config();
    TrainBaseOptions opt;
    opt.steps = 20;
    const std::vector<std::vector<TokenId>> seqs{{1, 4, 5, 2}, {1, 6, 7, 8, 2}};
    EXPECT_EQ(train_base(seqs, c, opt).snapshot.fingerprint(), train_base(seqs, c, opt).snapshot.fingerprint());
}

TEST(GreedyDecodeTest, ZeroBudgetIsEmptyAndEmptyPromptRejected) {
    const ModelSnapshot m = init_model(small_config());
    EXPECT_TRUE(greedy_decode(std::vector<TokenId>{1, 4}, m, nullptr, 0).empty());
    EXPECT_THROW(greedy_decode(std::vector<TokenId>{}, m, nullptr, 3), std::invalid_argument);
}

TEST(GreedyDecodeTest, EmitsTokenWithTenfoldLogitMargin) {
    // Final norm pinned to e_0, so logits are column 0 of the LM head.
    const ModelSnapshot init = init_model(small_config());
    auto params = init.params();
    const std::size_t d = init.config().d_model;
    params["ln_f.gamma"] = Tensor({d});
    Tensor beta({d});
    beta[0] = 1.0;
    params["ln_f.beta"] = beta;
    Tensor head({20, d});
    for (std::size_t v = 0; v < 20; ++v) head.at(v, 0) = 1.0;
    head.at(13, 0) = 10.0;
    params["lm_head"] = head;
    const ModelSnapshot m(init.config(), params);
    const auto out = greedy_decode(std::vector<TokenId>{1, 4, 5}, m, nullptr, 2);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0], 13u);
    EXPECT_EQ(out, greedy_decode(std::vector<TokenId>{1, 4, 5}, m, nullptr, 2));
}

}  // namespace
}  // namespace memoe
