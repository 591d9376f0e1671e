// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Spherical k-means: points and centroids live on the unit sphere and the
// distance is 1 - cosine similarity.

#pragma once

#include "memoe/dataset.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace memoe {

class EditEncoder;

struct KMeansOptions {
    std::size_t max_iters = 100;
    double tolerance = 1e-6;  // largest centroid movement that still counts as converged
};

struct KMeansResult {
    std::vector<std::size_t> labels;
    std::vector<std::vector<double>> centroids;
    // Sum of cosine distances to the assigned centroid after each iteration.
    std::vector<double> objective_history;
    std::size_t iterations = 0;
};

// k-means++ seeding from `seed`, then Lloyd iterations with cosine
// assignment (ties to the lowest centroid). Rejects k == 0, k > n, ragged
// or zero vectors.
KMeansResult spherical_kmeans(std::span<const std::vector<double>> points, std::size_t k, std::uint64_t seed,
                              const KMeansOptions& options = {});

// Sum over points of 1 - cos(point, mean direction of its cluster).
double cosine_partition_cost(std::span<const std::vector<double>> points, std::span<const std::size_t> labels,
                             std::size_t k);

// Group ids for records from their mean-pooled prompt token embeddings.
std::vector<std::size_t> kmeans_groups(std::span<const EditRecord> records, const EditEncoder& encoder, std::size_t k,
                                       std::uint64_t seed);

}  // namespace memoe
