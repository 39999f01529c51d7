/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace vlrep {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of doubles.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> values);
    Tensor(Shape shape, double fill);

    static Tensor vector(std::initializer_list<double> values);
    static Tensor scalar(double v) { return Tensor({}, std::vector<double>{v}); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const;
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    double* data() noexcept { return values_.data(); }
    const double* data() const noexcept { return values_.data(); }
    std::span<double> span() noexcept { return values_; }
    std::span<const double> span() const noexcept { return values_; }
    std::vector<double>& values() noexcept { return values_; }
    const std::vector<double>& values() const noexcept { return values_; }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }
    double item() const;

    /// Contiguous view of row `r` of a rank>=1 tensor (leading dimension).
    std::span<const double> row(std::size_t r) const;
    std::span<double> row(std::size_t r);
    std::size_t row_size() const;

    Tensor reshaped(Shape shape) const;
    void fill(double v);
    bool all_finite() const;

    friend bool operator==(const Tensor& a, const Tensor& b) = default;

  private:
    Shape shape_;
    std::vector<double> values_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

} // namespace vlrep
