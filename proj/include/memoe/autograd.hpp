// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Tape-based reverse-mode differentiation.
//
// Every op appends one node to the tape, so node order is a topological
// order by construction and backward() is a single reverse sweep. Nodes that
// cannot reach a trainable leaf carry no backward closure and never allocate
// gradient storage, which is what keeps frozen-base editing cheap.

#pragma once

#include "memoe/tensor.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace memoe {

class Tape;

struct Var {
    Tape* tape = nullptr;
    std::uint32_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

// Half-open [begin, begin+length) row range of a packed batch.
struct Segment {
    std::size_t begin = 0;
    std::size_t length = 0;
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Frozen input: participates in the forward pass, never gets a gradient.
    Var constant(Tensor t);
    // Trainable leaf: backward() produces a gradient for it.
    Var leaf(Tensor t);

    // Appends an op node. `backward` is dropped when no input needs a gradient.
    Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
    std::size_t size() const { return nodes_.size(); }
    std::span<const std::uint32_t> inputs(Var v) const { return nodes_[v.id].inputs; }

    // Adds `g` into the gradient buffer of `v` (no-op for frozen nodes).
    void accumulate(Var v, const Tensor& g);
    // Mutable gradient buffer for in-place accumulation; nullptr when frozen.
    Tensor* grad_buffer(Var v);

    // Reverse sweep from a scalar loss. Leaves the loss cannot reach end up
    // with an all-zero gradient.
    void backward(Var loss);

    // Gradient of a leaf after backward(); zeros when unreachable.
    Tensor grad(Var leaf) const;

private:
    struct Node {
        Tensor value;
        std::vector<std::uint32_t> inputs;
        BackwardFn backward;
        bool needs_grad = false;
        bool is_leaf = false;
    };

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
};

// --- differentiable ops -----------------------------------------------------

Var matmul(Var a, Var b);
// x[T x in] * w[out x in]^T (+ bias[out]).
Var linear(Var x, Var w);
Var linear(Var x, Var w, Var bias);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var tanh(Var a);
Var gelu(Var a);
Var sum(Var a);
Var mean(Var a);
// Row-wise concatenation along columns: [T x a] ++ [T x b] -> [T x (a+b)].
Var concat_cols(Var a, Var b);
Var softmax_rows(Var a);
// Keeps the k largest entries per row (ties to lowest index); gradient flows
// only through survivors.
Var top_k_mask_rows(Var a, std::size_t k);
// Gathers rows of a [V x d] table.
Var embedding(Var table, std::span<const std::size_t> ids);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
// Multi-head causal self-attention over packed sequences; positions only
// attend within their own segment.
Var causal_attention(Var q, Var k, Var v, std::size_t n_heads, std::span<const Segment> segments);
// Mean next-token cross-entropy; targets < 0 are ignored. Zero when nothing
// is scored.
Var cross_entropy(Var logits, std::span<const int> targets);

}  // namespace memoe
