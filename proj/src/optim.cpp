// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "memoe/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace memoe {

void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, double lr) {
    if (params.size() != grads.size()) throw std::invalid_argument("sgd_step: parameter/gradient count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i]->data();
        auto g = grads[i].data();
        for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j];
    }
}

double clip_global_norm(std::span<Tensor> grads, double max_norm) {
    double sq = 0.0;
    for (const Tensor& g : grads) {
        for (double v : g.data()) sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (Tensor& g : grads) {
            for (double& v : g.storage()) v *= s;
        }
    }
    return norm;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state, double lr,
               double beta1, double beta2, double eps) {
    if (params.size() != grads.size()) throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
    if (state.m.empty()) {
        for (Tensor* p : params) {
            state.m.emplace_back(p->shape());
            state.v.emplace_back(p->shape());
        }
    }
    ++state.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i]->data();
        auto g = grads[i].data();
        auto m = state.m[i].data();
        auto v = state.v[i].data();
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
            v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
            p[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps);
        }
    }
}

}  // namespace memoe
