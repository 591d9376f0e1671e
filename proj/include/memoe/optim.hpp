// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "memoe/tensor.hpp"

#include <span>
#include <vector>

namespace memoe {

void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, double lr);

// Scales grads in place so their joint L2 norm is at most max_norm; returns
// the norm before clipping.
double clip_global_norm(std::span<Tensor> grads, double max_norm);

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::size_t t = 0;
};

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

}  // namespace memoe
