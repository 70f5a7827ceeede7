// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "iforge/tensor.hpp"

namespace iforge::ad {

// Guards used by log and div.
inline constexpr double kLogClamp = 1e-7;
inline constexpr double kDivClamp = 1e-12;

enum class Elementwise { Add, Sub, Mul, Div, Neg, Exp, Log, Sigmoid, Relu, Square };

/// Binary kinds require `b`; operands must have equal shapes or one of them
/// must hold a single element (scalar broadcast).
Tensor elementwise(Elementwise kind, const Tensor& a, const std::optional<Tensor>& b = std::nullopt);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
// Gradient passes through inside [lo, hi] and is zero outside.
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor matmul(const Tensor& a, const Tensor& b);
// x[N, in] * w[in, out] + bias[out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor mean(const Tensor& a);
Tensor sum(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
// [N, p] ++ [N, q] -> [N, p + q]
Tensor concat_cols(const Tensor& a, const Tensor& b);
// Rows of a[N, ...] picked by index; indices may repeat.
Tensor index_select(const Tensor& a, std::span<const std::size_t> rows);

// x[C, H, W] -> [Co, H', W'] with a 3x3 kernel w[Co, C, 3, 3], zero padding 1.
Tensor conv2d_3x3(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride);

// Bilinear lookup in grid[C, H, W] at continuous cell coordinates (u, v),
// where integer coordinates are cell centers. Neighbours outside the grid
// read as zero. Returns [N, C]; differentiable w.r.t. the grid.
Tensor bilinear_sample(const Tensor& grid, std::span<const std::array<double, 2>> coords);

Tensor mse(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

}  // namespace iforge::ad
