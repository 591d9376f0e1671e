// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "memoe/kmeans.hpp"

#include "memoe/editor.hpp"
#include "memoe/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace memoe {

namespace {

std::vector<double> unit(std::span<const double> v) {
    const double n = l2_norm(v);
    if (!(n > 0.0) || !std::isfinite(n)) throw std::invalid_argument("kmeans: zero or non-finite vector");
    std::vector<double> out(v.begin(), v.end());
    for (double& x : out) x /= n;
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

KMeansResult spherical_kmeans(std::span<const std::vector<double>> points, std::size_t k, std::uint64_t seed,
                              const KMeansOptions& options) {
    const std::size_t n = points.size();
    if (k == 0) throw std::invalid_argument("kmeans: k must be positive");
    if (k > n) {
        throw std::invalid_argument("kmeans: k=" + std::to_string(k) + " exceeds " + std::to_string(n) + " points");
    }
    const std::size_t d = points.front().size();
    std::vector<std::vector<double>> x;
    x.reserve(n);
    for (const auto& p : points) {
        if (p.size() != d) throw std::invalid_argument("kmeans: ragged points");
        x.push_back(unit(p));
    }

    // k-means++ seeding on the cosine distance.
    Rng rng = substream(seed, "kmeans");
    KMeansResult res;
    std::uniform_int_distribution<std::size_t> first(0, n - 1);
    res.centroids.push_back(x[first(rng)]);
    std::vector<double> dist(n);
    while (res.centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : res.centroids) best = std::min(best, std::max(0.0, 1.0 - dot(x[i], c)));
            dist[i] = best * best;
            total += dist[i];
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double r = u(rng);
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                r -= dist[i];
                if (r < 0.0 && dist[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            // Every point coincides with a centroid; take the next unused index.
            pick = res.centroids.size() % n;
        }
        res.centroids.push_back(x[pick]);
    }

    res.labels.assign(n, 0);
    for (std::size_t it = 0; it < options.max_iters; ++it) {
        double objective = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_sim = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const double s = dot(x[i], res.centroids[c]);
                if (s > best_sim) {
                    best_sim = s;
                    best = c;
                }
            }
            res.labels[i] = best;
            objective += 1.0 - best_sim;
        }
        double moved = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            std::vector<double> sum(d, 0.0);
            std::size_t members = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (res.labels[i] != c) continue;
                ++members;
                for (std::size_t j = 0; j < d; ++j) sum[j] += x[i][j];
            }
            // An empty cluster or a cancelled-out sum keeps its old centroid.
            if (members == 0 || !(l2_norm(sum) > 0.0)) continue;
            auto next = unit(sum);
            moved = std::max(moved, max_abs_diff(next, res.centroids[c]));
            res.centroids[c] = std::move(next);
        }
        res.objective_history.push_back(objective);
        res.iterations = it + 1;
        if (moved <= options.tolerance) break;
    }
    return res;
}

double cosine_partition_cost(std::span<const std::vector<double>> points, std::span<const std::size_t> labels,
                             std::size_t k) {
    if (points.size() != labels.size()) throw std::invalid_argument("partition cost: label count mismatch");
    const std::size_t d = points.empty() ? 0 : points.front().size();
    std::vector<std::vector<double>> x;
    for (const auto& p : points) x.push_back(unit(p));
    std::vector<std::vector<double>> sums(k, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (labels[i] >= k) throw std::invalid_argument("partition cost: label out of range");
        for (std::size_t j = 0; j < d; ++j) sums[labels[i]][j] += x[i][j];
    }
    double cost = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto& s = sums[labels[i]];
        const double n = l2_norm(s);
        cost += n > 0.0 ? 1.0 - dot(x[i], s) / n : 1.0;
    }
    return cost;
}

std::vector<std::size_t> kmeans_groups(std::span<const EditRecord> records, const EditEncoder& encoder, std::size_t k,
                                       std::uint64_t seed) {
    std::vector<std::vector<double>> points;
    points.reserve(records.size());
    for (const auto& r : records) points.push_back(sentence_embedding(encoder.encode_prompt(r.prompt), encoder.base()));
    return spherical_kmeans(points, k, seed).labels;
}

}  // namespace memoe
