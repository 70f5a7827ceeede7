// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
#include "iforge/kernels.hpp"

#include <cstdint>

namespace iforge::kernels {

namespace {

inline bool in_range(std::ptrdiff_t v, std::size_t extent) {
  return v >= 0 && static_cast<std::size_t>(v) < extent;
}

// One output element of the convolution. Shared by both flavours so the
// summation order is identical.
inline double conv_output_at(const ConvGeom& g, std::span<const double> input,
                             std::span<const double> weight, std::size_t co, std::size_t oy,
                             std::size_t ox) {
  double acc = 0.0;
  for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
    const double* w = weight.data() + (co * g.in_channels + ci) * 9;
    const double* in = input.data() + ci * g.in_height * g.in_width;
    for (std::size_t ky = 0; ky < 3; ++ky) {
      const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - 1;
      if (!in_range(iy, g.in_height)) continue;
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - 1;
        if (!in_range(ix, g.in_width)) continue;
        acc += w[ky * 3 + kx] * in[iy * g.in_width + ix];
      }
    }
  }
  return acc;
}

}  // namespace

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* row = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) row[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
}

void conv3x3_forward(const ConvGeom& g, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> bias,
                     std::span<double> output) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  for (std::size_t co = 0; co < g.out_channels; ++co)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox)
        output[(co * oh + oy) * ow + ox] = bias[co] + conv_output_at(g, input, weight, co, oy, ox);
}

void conv3x3_backward(const ConvGeom& g, std::span<const double> input,
                      std::span<const double> weight, std::span<const double> d_output,
                      std::span<double> d_input, std::span<double> d_weight,
                      std::span<double> d_bias) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  // Plain scatter loop; the parallel flavour uses gather loops instead.
  for (std::size_t co = 0; co < g.out_channels; ++co) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double go = d_output[(co * oh + oy) * ow + ox];
        d_bias[co] += go;
        for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
          for (std::size_t ky = 0; ky < 3; ++ky) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - 1;
            if (!in_range(iy, g.in_height)) continue;
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - 1;
              if (!in_range(ix, g.in_width)) continue;
              const std::size_t widx = ((co * g.in_channels + ci) * 3 + ky) * 3 + kx;
              const std::size_t iidx = (ci * g.in_height + iy) * g.in_width + ix;
              d_weight[widx] += go * input[iidx];
              if (!d_input.empty()) d_input[iidx] += go * weight[widx];
            }
          }
        }
      }
    }
  }
}

}  // namespace serial

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(m); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* row = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) row[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
}

void conv3x3_forward(const ConvGeom& g, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> bias,
                     std::span<double> output) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const auto rows = static_cast<std::int64_t>(g.out_channels * oh);
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) {
    const auto co = static_cast<std::size_t>(r) / oh;
    const auto oy = static_cast<std::size_t>(r) % oh;
    for (std::size_t ox = 0; ox < ow; ++ox)
      output[(co * oh + oy) * ow + ox] = bias[co] + conv_output_at(g, input, weight, co, oy, ox);
  }
}

void conv3x3_backward(const ConvGeom& g, std::span<const double> input,
                      std::span<const double> weight, std::span<const double> d_output,
                      std::span<double> d_input, std::span<double> d_weight,
                      std::span<double> d_bias) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const auto pairs = static_cast<std::int64_t>(g.out_channels * g.in_channels);
  const auto plane_in = g.in_height * g.in_width;
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < pairs; ++p) {
    const auto co = static_cast<std::size_t>(p) / g.in_channels;
    const auto ci = static_cast<std::size_t>(p) % g.in_channels;
    const double* dout = d_output.data() + co * oh * ow;
    const double* in = input.data() + ci * plane_in;
    double acc[9] = {};
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double d = dout[oy * ow + ox];
        for (std::size_t ky = 0; ky < 3; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - 1;
          if (!in_range(iy, g.in_height)) continue;
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - 1;
            if (in_range(ix, g.in_width)) acc[ky * 3 + kx] += d * in[iy * g.in_width + ix];
          }
        }
      }
    double* dw = d_weight.data() + (co * g.in_channels + ci) * 9;
    for (int t = 0; t < 9; ++t) dw[t] += acc[t];
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t c = 0; c < static_cast<std::int64_t>(g.out_channels); ++c) {
    const double* dout = d_output.data() + static_cast<std::size_t>(c) * oh * ow;
    double acc = 0.0;
    for (std::size_t i = 0; i < oh * ow; ++i) acc += dout[i];
    d_bias[static_cast<std::size_t>(c)] += acc;
  }
  if (d_input.empty()) return;
  // Each thread owns whole input planes, so the scatter needs no atomics.
#pragma omp parallel for schedule(static)
  for (std::int64_t c = 0; c < static_cast<std::int64_t>(g.in_channels); ++c) {
    const auto ci = static_cast<std::size_t>(c);
    double* din = d_input.data() + ci * plane_in;
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      const double* w = weight.data() + (co * g.in_channels + ci) * 9;
      const double* dout = d_output.data() + co * oh * ow;
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ky = 0; ky < 3; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - 1;
          if (!in_range(iy, g.in_height)) continue;
          double* row = din + iy * g.in_width;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const double d = dout[oy * ow + ox];
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - 1;
              if (in_range(ix, g.in_width)) row[ix] += w[ky * 3 + kx] * d;
            }
          }
        }
    }
  }
}

}  // namespace parallel

}  // namespace iforge::kernels
