// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
//
// Dense numeric kernels behind the differentiable ops. Each kernel exists in
// two flavours: `serial` is the straightforward reference loop nest kept for
// testing, `parallel` is the OpenMP version used at runtime. The parallel
// kernels only split work over independent outputs, so every output element is
// summed in the same order regardless of thread count.
#pragma once

#include <cstddef>
#include <span>

namespace iforge::kernels {

/// 3x3 convolution with zero padding of one pixel, CHW layout.
struct ConvGeom {
  std::size_t in_channels = 0;
  std::size_t in_height = 0;
  std::size_t in_width = 0;
  std::size_t out_channels = 0;
  std::size_t stride = 1;

  std::size_t out_height() const { return (in_height - 1) / stride + 1; }
  std::size_t out_width() const { return (in_width - 1) / stride + 1; }
  std::size_t weight_size() const { return out_channels * in_channels * 9; }
};

namespace serial {

// c[m x n] = a[m x k] * b[k x n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);

void conv3x3_forward(const ConvGeom& g, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> bias,
                     std::span<double> output);

// Accumulates into d_input (skipped when empty), d_weight and d_bias.
void conv3x3_backward(const ConvGeom& g, std::span<const double> input,
                      std::span<const double> weight, std::span<const double> d_output,
                      std::span<double> d_input, std::span<double> d_weight,
                      std::span<double> d_bias);

}  // namespace serial

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);

void conv3x3_forward(const ConvGeom& g, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> bias,
                     std::span<double> output);

void conv3x3_backward(const ConvGeom& g, std::span<const double> input,
                      std::span<const double> weight, std::span<const double> d_output,
                      std::span<double> d_input, std::span<double> d_weight,
                      std::span<double> d_bias);

}  // namespace parallel

}  // namespace iforge::kernels
