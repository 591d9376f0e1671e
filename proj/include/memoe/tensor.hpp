// Copyright 2026 The memoe-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors of doubles and the handful of pure kernels the
// rest of the library is written against.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace memoe {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
    static Tensor vector(std::vector<double> v);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor identity(std::size_t n);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    // rows()/cols() treat a rank-1 tensor as a single row.
    std::size_t rows() const;
    std::size_t cols() const;

    bool requires_grad() const { return requires_grad_; }
    void set_requires_grad(bool v) { requires_grad_ = v; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    const double& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

    double item() const;
    bool all_finite() const;

    // Value equality on shape and every element (== on doubles, so +0 == -0).
    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    std::vector<double> data_;
    bool requires_grad_ = false;
};

// Plain matrix product; rejects mismatched inner dimensions.
Tensor matmul(const Tensor& a, const Tensor& b);

// Numerically stable softmax of a non-empty finite vector.
std::vector<double> softmax(std::span<const double> v);

// Zeroes everything except the k largest entries (ties to the lowest index).
// Survivors are copied through untouched.
std::vector<double> top_k_mask(std::span<const double> v, std::size_t k);

// Indices of the k largest entries, ordered by index.
std::vector<std::size_t> top_k_indices(std::span<const double> v, std::size_t k);

std::size_t argmax(std::span<const double> v);

double l2_norm(std::span<const double> v);
double max_abs_diff(std::span<const double> a, std::span<const double> b);

}  // namespace memoe
