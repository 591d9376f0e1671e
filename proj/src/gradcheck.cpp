// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "memoe/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace memoe {

namespace {

double evaluate(const ScalarGraph& f, const std::vector<Tensor>& xs) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(xs.size());
    for (const Tensor& x : xs) vars.push_back(tape.constant(x));
    const double v = f(tape, vars).value().item();
    if (!std::isfinite(v)) throw std::domain_error("finite_difference_check: function returned a non-finite value");
    return v;
}

}  // namespace

GradCheckResult finite_difference_check(const ScalarGraph& f, std::span<const Tensor> inputs, double h) {
    if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("finite_difference_check: step must be positive");

    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Var> leaves;
        for (const Tensor& x : inputs) leaves.push_back(tape.leaf(x));
        Var loss = f(tape, leaves);
        if (!std::isfinite(loss.value().item())) {
            throw std::domain_error("finite_difference_check: function returned a non-finite value");
        }
        tape.backward(loss);
        for (const Var& l : leaves) analytic.push_back(tape.grad(l));
    }

    GradCheckResult res;
    std::vector<Tensor> xs(inputs.begin(), inputs.end());
    for (std::size_t t = 0; t < xs.size(); ++t) {
        Tensor est(xs[t].shape());
        for (std::size_t i = 0; i < xs[t].numel(); ++i) {
            const double orig = xs[t][i];
            xs[t][i] = orig + h;
            const double fp = evaluate(f, xs);
            xs[t][i] = orig - h;
            const double fm = evaluate(f, xs);
            xs[t][i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            est[i] = numeric;
            const double a = analytic[t][i];
            const double abs_err = std::abs(a - numeric);
            const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), 1e-8});
            res.max_abs_error = std::max(res.max_abs_error, abs_err);
            if (rel > res.max_rel_error) {
                res.max_rel_error = rel;
                res.worst_input = t;
                res.worst_index = i;
            }
            ++res.coordinates;
        }
        res.numeric.push_back(std::move(est));
    }
    res.analytic = std::move(analytic);
    return res;
}

double finite_difference_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double h) {
    const ScalarGraph g = [&f](Tape& tape, std::span<const Var> in) { return f(tape, in[0]); };
    return finite_difference_check(g, std::span<const Tensor>(&x, 1), h).max_rel_error;
}

}  // namespace memoe
