// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "memoe/kmeans.hpp"
#include "memoe/rng.hpp"
#include "world.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

namespace memoe {
namespace {

// Twelve points: six near e_0 + e_1 and six near e_2 + e_3, with a fixed jitter.
std::vector<std::vector<double>> two_families(std::uint64_t seed) {
    Rng rng = substream(seed, "families");
    std::uniform_real_distribution<double> jitter(-0.2, 0.2);
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 12; ++i) {
        std::vector<double> p(6, 0.0);
        const std::size_t base = i % 2 == 0 ? 0 : 2;
        p[base] = 1.0 + jitter(rng);
        p[base + 1] = 1.0 + jitter(rng);
        p[4] = jitter(rng);
        p[5] = jitter(rng);
        pts.push_back(std::move(p));
    }
    return pts;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    return ab / std::sqrt(aa * bb);
}

// Cost of a labeling written out directly: each point against the sum of the
// normalized points in its cluster.
double direct_cost(const std::vector<std::vector<double>>& pts, const std::vector<std::size_t>& labels, std::size_t k) {
    std::vector<std::vector<double>> sum(k, std::vector<double>(pts[0].size(), 0.0));
    for (std::size_t i = 0; i < pts.size(); ++i) {
        double sq = 0;
        for (double x : pts[i]) sq += x * x;
        const double n = std::sqrt(sq);
        for (std::size_t d = 0; d < pts[i].size(); ++d) sum[labels[i]][d] += pts[i][d] / n;
    }
    double cost = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) cost += 1.0 - cosine(pts[i], sum[labels[i]]);
    return cost;
}

// Every nonempty 2-partition, point 0 pinned to cluster 0.
std::vector<std::size_t> brute_force_two(const std::vector<std::vector<double>>& pts) {
    const std::size_t n = pts.size();
    double best = INFINITY;
    std::vector<std::size_t> best_labels;
    for (std::uint32_t mask = 1; mask < (1u << (n - 1)); ++mask) {
        std::vector<std::size_t> labels(n, 0);
        for (std::size_t i = 1; i < n; ++i) labels[i] = (mask >> (i - 1)) & 1u;
        const double c = direct_cost(pts, labels, 2);
        if (c < best - 1e-12) {
            best = c;
            best_labels = labels;
        }
    }
    return best_labels;
}

std::vector<std::size_t> canonical(std::vector<std::size_t> labels) {
    if (!labels.empty() && labels[0] != 0)
        for (auto& l : labels) l = 1 - l;
    return labels;
}

TEST(KMeansTest, MatchesBruteForceOptimalPartition) {
    for (std::uint64_t seed : {1, 2, 3, 42}) {
        const auto pts = two_families(seed);
        const auto oracle = brute_force_two(pts);
        std::vector<std::size_t> families(12);
        for (std::size_t i = 0; i < 12; ++i) families[i] = i % 2;
        ASSERT_EQ(oracle, families) << "fixture is not separable at seed " << seed;
        const auto res = spherical_kmeans(pts, 2, seed);
        EXPECT_EQ(canonical(res.labels), oracle) << seed;
        EXPECT_NEAR(cosine_partition_cost(pts, res.labels, 2), direct_cost(pts, oracle, 2), 1e-12);
    }
}

TEST(KMeansTest, SingleClusterTakesEverything) {
    const auto pts = two_families(5);
    const auto res = spherical_kmeans(pts, 1, 5);
    EXPECT_EQ(res.labels, std::vector<std::size_t>(12, 0));
}

TEST(KMeansTest, SameSeedSameLabels) {
    Rng rng = substream(6, "cloud");
    std::normal_distribution<double> nd;
    std::vector<std::vector<double>> pts(40, std::vector<double>(5));
    for (auto& p : pts)
        for (double& x : p) x = nd(rng);
    const auto a = spherical_kmeans(pts, 5, 9);
    const auto b = spherical_kmeans(pts, 5, 9);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_EQ(a.centroids, b.centroids);
}

TEST(KMeansTest, ObjectiveIsNonIncreasing) {
    Rng rng = substream(7, "cloud");
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::vector<double>> pts(60, std::vector<double>(4));
        for (auto& p : pts)
            for (double& x : p) x = nd(rng);
        const auto res = spherical_kmeans(pts, 4, static_cast<std::uint64_t>(trial));
        ASSERT_FALSE(res.objective_history.empty());
        for (std::size_t i = 1; i < res.objective_history.size(); ++i)
            EXPECT_LE(res.objective_history[i], res.objective_history[i - 1] + 1e-12) << trial << " iter " << i;
        std::set<std::size_t> used(res.labels.begin(), res.labels.end());
        for (std::size_t l : used) EXPECT_LT(l, 4u);
    }
}

TEST(KMeansTest, RejectsBadInput) {
    const auto pts = two_families(8);
    EXPECT_THROW(spherical_kmeans(pts, 0, 1), std::invalid_argument);
    EXPECT_THROW(spherical_kmeans(pts, 13, 1), std::invalid_argument);
    auto ragged = pts;
    ragged[3].pop_back();
    EXPECT_THROW(spherical_kmeans(ragged, 2, 1), std::invalid_argument);
    auto zero = pts;
    zero[4].assign(6, 0.0);
    EXPECT_THROW(spherical_kmeans(zero, 2, 1), std::invalid_argument);
}

TEST(KMeansGroupsTest, DeterministicAndBounded) {
    const auto& w = testing::tiny_world();
    const auto a = kmeans_groups(w.records, *w.encoder, 5, 42);
    EXPECT_EQ(a, kmeans_groups(w.records, *w.encoder, 5, 42));
    ASSERT_EQ(a.size(), w.records.size());
    for (std::size_t g : a) EXPECT_LT(g, 5u);
    EXPECT_EQ(kmeans_groups(w.records, *w.encoder, 1, 42), std::vector<std::size_t>(w.records.size(), 0));
    EXPECT_THROW(kmeans_groups(w.records, *w.encoder, w.records.size() + 1, 42), std::invalid_argument);
}

}  // namespace
}  // namespace memoe
