// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "memoe/rng.hpp"
#include "memoe/tensor.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace memoe {
namespace {

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
    Tensor c({a.rows(), b.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
            c.at(i, j) = s;
        }
    return c;
}

std::vector<long double> softmax_long(const std::vector<double>& v) {
    long double m = *std::max_element(v.begin(), v.end());
    std::vector<long double> e(v.size());
    long double s = 0;
    for (std::size_t i = 0; i < v.size(); ++i) s += e[i] = std::exp(static_cast<long double>(v[i]) - m);
    for (auto& x : e) x /= s;
    return e;
}

// Keeps the k largest by repeated argmax over the not-yet-taken entries.
std::vector<double> top_k_oracle(const std::vector<double>& v, std::size_t k) {
    std::vector<bool> taken(v.size(), false);
    for (std::size_t r = 0; r < k; ++r) {
        std::size_t best = v.size();
        for (std::size_t i = 0; i < v.size(); ++i)
            if (!taken[i] && (best == v.size() || v[i] > v[best])) best = i;
        taken[best] = true;
    }
    std::vector<double> out(v.size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i)
        if (taken[i]) out[i] = v[i];
    return out;
}

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    std::normal_distribution<double> nd;
    Tensor t({r, c});
    for (double& x : t.storage()) x = nd(rng);
    return t;
}

TEST(TensorTest, ShapeMustMatchData) {
    EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
    EXPECT_EQ(Tensor({2, 3}).numel(), 6u);
}

TEST(MatmulTest, IdentityLeavesMatrixUnchanged) {
    const Tensor m = Tensor::matrix({{3, 4}, {5, 6}});
    EXPECT_EQ(matmul(Tensor::identity(2), m), m);
}

TEST(MatmulTest, ZeroMatrixAnnihilates) {
    Rng rng = substream(1, "test");
    const Tensor b = random_matrix(3, 5, rng);
    EXPECT_EQ(matmul(Tensor({4, 3}), b), Tensor({4, 5}));
}

TEST(MatmulTest, MatchesTripleLoopOracle) {
    const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
    const Tensor b = Tensor::matrix({{5}, {6}});
    const Tensor expect = naive_matmul(a, b);
    EXPECT_EQ(expect, Tensor::matrix({{17}, {39}}));
    EXPECT_EQ(matmul(a, b), expect);

    Rng rng = substream(2, "test");
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor x = random_matrix(7, 9, rng), y = random_matrix(9, 4, rng);
        EXPECT_LT(max_abs_diff(matmul(x, y).data(), naive_matmul(x, y).data()), 1e-12);
    }
}

TEST(MatmulTest, MismatchReportsBothShapes) {
    try {
        matmul(Tensor({2, 3}), Tensor({2, 3}));
        FAIL() << "expected rejection";
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    }
}

TEST(MatmulTest, AssociativeOnRandomChains) {
    Rng rng = substream(3, "test");
    for (int trial = 0; trial < 100; ++trial) {
        const Tensor a = random_matrix(4, 4, rng), b = random_matrix(4, 4, rng), c = random_matrix(4, 4, rng);
        EXPECT_LT(max_abs_diff(matmul(matmul(a, b), c).data(), matmul(a, matmul(b, c)).data()), 1e-9);
    }
}

TEST(SoftmaxTest, UniformOnEqualInputs) {
    const auto p = softmax(std::vector<double>{0, 0, 0, 0});
    for (double x : p) EXPECT_DOUBLE_EQ(x, 0.25);
}

TEST(SoftmaxTest, MatchesExtendedPrecisionOracle) {
    const std::vector<double> v{1, 0};
    const auto p = softmax(v);
    const auto o = softmax_long(v);
    EXPECT_NEAR(p[0], 0.73106, 1e-5);
    EXPECT_NEAR(p[1], 0.26894, 1e-5);
    EXPECT_NEAR(p[0], static_cast<double>(o[0]), 1e-15);
}

TEST(SoftmaxTest, ShiftInvariantAndNormalized) {
    Rng rng = substream(4, "test");
    std::uniform_real_distribution<double> u(-50, 50);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> v(1 + trial % 9);
        for (double& x : v) x = u(rng);
        const auto p = softmax(v);
        EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
        for (double x : p) EXPECT_GT(x, 0.0);
        std::vector<double> shifted = v;
        for (double& x : shifted) x += 7.25;
        EXPECT_LT(max_abs_diff(softmax(shifted), p), 1e-12);
        const auto o = softmax_long(v);
        for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(p[i], static_cast<double>(o[i]), 1e-14);
    }
}

TEST(SoftmaxTest, RejectsEmptyInput) {
    EXPECT_THROW(softmax(std::vector<double>{}), std::invalid_argument);
}

TEST(TopKMaskTest, FullKIsIdentity) {
    const std::vector<double> v{0.1, -2, 3.5, 0};
    EXPECT_EQ(top_k_mask(v, v.size()), v);
}

TEST(TopKMaskTest, KeepsLargestWithoutRenormalizing) {
    EXPECT_EQ(top_k_mask(std::vector<double>{0.2, 0.5, 0.3}, 1), (std::vector<double>{0, 0.5, 0}));
}

TEST(TopKMaskTest, TiesGoToLowestIndex) {
    EXPECT_EQ(top_k_mask(std::vector<double>{0.4, 0.4, 0.2}, 1), (std::vector<double>{0.4, 0, 0}));
    EXPECT_EQ(top_k_indices(std::vector<double>{1, 3, 3, 3}, 2), (std::vector<std::size_t>{1, 2}));
}

TEST(TopKMaskTest, RejectsOutOfRangeK) {
    const std::vector<double> v{1, 2};
    EXPECT_THROW(top_k_mask(v, 0), std::invalid_argument);
    EXPECT_THROW(top_k_mask(v, 3), std::invalid_argument);
}

TEST(TopKMaskTest, MatchesOracleAndIsIdempotent) {
    Rng rng = substream(5, "test");
    std::uniform_int_distribution<int> small(0, 3);  // frequent ties
    for (int trial = 0; trial < 2000; ++trial) {
        std::vector<double> v(2 + trial % 6);
        for (double& x : v) x = 0.25 * (1 + small(rng));  // positive, so every entry is eligible
        const std::size_t k = 1 + trial % v.size();
        const auto m = top_k_mask(v, k);
        EXPECT_EQ(m, top_k_oracle(v, k));
        EXPECT_EQ(std::count_if(m.begin(), m.end(), [](double x) { return x != 0.0; }), static_cast<long>(k));
        EXPECT_EQ(top_k_mask(m, k), m);
    }
}

}  // namespace
}  // namespace memoe
