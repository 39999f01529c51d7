/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "vlrep/tensor.hpp"

#include "vlrep/error.hpp"

#include <algorithm>
#include <cmath>

namespace vlrep {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), values_(shape_numel(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != shape_numel(shape_))
        throw DimensionError("tensor of shape " + shape_str(shape_) + " given " + std::to_string(values_.size()) +
                             " values");
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(shape_numel(shape_), fill) {}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t i) const {
    if (i >= shape_.size()) throw DimensionError("axis " + std::to_string(i) + " out of range for " + shape_str(shape_));
    return shape_[i];
}

double Tensor::item() const {
    if (values_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape_));
    return values_[0];
}

std::size_t Tensor::row_size() const {
    if (shape_.empty()) throw DimensionError("row access on a scalar tensor");
    return shape_[0] == 0 ? 0 : values_.size() / shape_[0];
}

std::span<const double> Tensor::row(std::size_t r) const {
    const std::size_t n = row_size();
    if (r >= shape_[0]) throw DimensionError("row " + std::to_string(r) + " out of range for " + shape_str(shape_));
    return {values_.data() + r * n, n};
}

std::span<double> Tensor::row(std::size_t r) {
    const std::size_t n = row_size();
    if (r >= shape_[0]) throw DimensionError("row " + std::to_string(r) + " out of range for " + shape_str(shape_));
    return {values_.data() + r * n, n};
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != values_.size())
        throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), values_);
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool Tensor::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(what) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

} // namespace vlrep
