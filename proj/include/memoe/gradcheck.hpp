// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "memoe/autograd.hpp"

#include <functional>
#include <span>
#include <vector>

namespace memoe {

// Builds a scalar loss on `tape` from the given leaves.
using ScalarGraph = std::function<Var(Tape& tape, std::span<const Var> inputs)>;

struct GradCheckResult {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t worst_input = 0;
    std::size_t worst_index = 0;
    std::size_t coordinates = 0;
    std::vector<Tensor> analytic;  // one per input
    std::vector<Tensor> numeric;
};

// Compares backward() against central differences at every coordinate of
// every input. Relative error is |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult finite_difference_check(const ScalarGraph& f, std::span<const Tensor> inputs, double h = 1e-5);

// Single-input convenience form; returns the worst relative error.
double finite_difference_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double h = 1e-5);

}  // namespace memoe
