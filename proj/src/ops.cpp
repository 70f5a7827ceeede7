// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
#include "iforge/ops.hpp"

#include <cmath>
#include <cstdint>

#include "iforge/errors.hpp"
#include "iforge/kernels.hpp"

namespace iforge::ad {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double guard_denominator(double d) {
  if (std::abs(d) >= kDivClamp) return d;
  return d < 0 ? -kDivClamp : kDivClamp;
}

// f(x, y) -> value, and partials evaluated at (x, y).
template <class F, class Dx, class Dy>
Tensor binary(OpKind op, const Tensor& a, const Tensor& b, F f, Dx dfdx, Dy dfdy) {
  const std::size_t na = a.numel(), nb = b.numel();
  IFORGE_REQUIRE(a.shape() == b.shape() || na == 1 || nb == 1,
                 std::string(op_name(op)) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  const Shape shape = (na >= nb) ? a.shape() : b.shape();
  const std::size_t n = numel(shape);
  std::vector<double> out(n);
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[na == 1 ? 0 : i], bv[nb == 1 ? 0 : i]);
  return Tensor::make_result(op, shape, std::move(out), {a, b}, [=](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < n; ++i) {
      const double x = pa.value[na == 1 ? 0 : i];
      const double y = pb.value[nb == 1 ? 0 : i];
      const double g = self.grad[i];
      if (pa.requires_grad) pa.grad_buffer()[na == 1 ? 0 : i] += g * dfdx(x, y);
      if (pb.requires_grad) pb.grad_buffer()[nb == 1 ? 0 : i] += g * dfdy(x, y);
    }
  });
}

// f(x) -> value; df(x, y) with y = f(x).
template <class F, class D>
Tensor unary(OpKind op, const Tensor& a, F f, D df) {
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  const auto av = a.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i]);
  return Tensor::make_result(op, a.shape(), std::move(out), {a}, [=](Node& self) {
    Node& pa = *self.parents[0];
    auto& ga = pa.grad_buffer();
    for (std::size_t i = 0; i < n; ++i) ga[i] += self.grad[i] * df(pa.value[i], self.value[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      OpKind::Add, a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      OpKind::Sub, a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      OpKind::Mul, a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      OpKind::Div, a, b, [](double x, double y) { return x / guard_denominator(y); },
      [](double, double y) { return 1.0 / guard_denominator(y); },
      [](double x, double y) {
        if (std::abs(y) < kDivClamp) return 0.0;
        return -x / (y * y);
      });
}

Tensor neg(const Tensor& a) {
  return unary(
      OpKind::Neg, a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& a) {
  return unary(
      OpKind::Exp, a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      OpKind::Log, a, [](double x) { return std::log(std::max(x, kLogClamp)); },
      [](double x, double) { return x > kLogClamp ? 1.0 / x : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(OpKind::Sigmoid, a, stable_sigmoid,
               [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary(
      OpKind::Relu, a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor square(const Tensor& a) {
  return unary(
      OpKind::Square, a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      OpKind::Scale, a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(
      OpKind::AddScalar, a, [value](double x) { return x + value; },
      [](double, double) { return 1.0; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  IFORGE_REQUIRE(lo <= hi, "clamp: lo > hi");
  return unary(
      OpKind::Clamp, a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor elementwise(Elementwise kind, const Tensor& a, const std::optional<Tensor>& b) {
  const bool binary_kind = kind == Elementwise::Add || kind == Elementwise::Sub ||
                           kind == Elementwise::Mul || kind == Elementwise::Div;
  IFORGE_REQUIRE(!binary_kind || b.has_value(), "binary elementwise op needs two operands");
  switch (kind) {
    case Elementwise::Add: return add(a, *b);
    case Elementwise::Sub: return sub(a, *b);
    case Elementwise::Mul: return mul(a, *b);
    case Elementwise::Div: return div(a, *b);
    case Elementwise::Neg: return neg(a);
    case Elementwise::Exp: return exp(a);
    case Elementwise::Log: return log(a);
    case Elementwise::Sigmoid: return sigmoid(a);
    case Elementwise::Relu: return relu(a);
    case Elementwise::Square: return square(a);
  }
  throw ContractError("unknown elementwise kind");
}

namespace {

std::vector<double> transpose(std::span<const double> a, std::size_t rows, std::size_t cols) {
  std::vector<double> t(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
  return t;
}

void accumulate(std::vector<double>& dst, const std::vector<double>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  IFORGE_REQUIRE(a.shape().size() == 2 && b.shape().size() == 2, "matmul expects rank-2 operands");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  IFORGE_REQUIRE(b.dim(0) == k, "matmul: inner extents differ " + shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()));
  std::vector<double> out(m * n);
  kernels::parallel::matmul(a.data(), b.data(), out, m, k, n);
  return Tensor::make_result(OpKind::MatMul, {m, n}, std::move(out), {a, b}, [=](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      std::vector<double> da(m * k);
      const auto bt = transpose(pb.value, k, n);
      kernels::parallel::matmul(self.grad, bt, da, m, n, k);
      accumulate(pa.grad_buffer(), da);
    }
    if (pb.requires_grad) {
      std::vector<double> db(k * n);
      const auto at = transpose(pa.value, m, k);
      kernels::parallel::matmul(at, self.grad, db, k, m, n);
      accumulate(pb.grad_buffer(), db);
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  IFORGE_REQUIRE(x.shape().size() == 2 && w.shape().size() == 2, "linear expects rank-2 x and w");
  const std::size_t rows = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
  IFORGE_REQUIRE(w.dim(0) == in, "linear: weight rows " + std::to_string(w.dim(0)) +
                                     " != input width " + std::to_string(in));
  IFORGE_REQUIRE(bias.numel() == out_dim, "linear: bias length mismatch");
  std::vector<double> out(rows * out_dim);
  kernels::parallel::matmul(x.data(), w.data(), out, rows, in, out_dim);
  const auto bv = bias.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < out_dim; ++j) out[r * out_dim + j] += bv[j];
  return Tensor::make_result(
      OpKind::Linear, {rows, out_dim}, std::move(out), {x, w, bias}, [=](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        if (px.requires_grad) {
          std::vector<double> dx(rows * in);
          const auto wt = transpose(pw.value, in, out_dim);
          kernels::parallel::matmul(self.grad, wt, dx, rows, out_dim, in);
          accumulate(px.grad_buffer(), dx);
        }
        if (pw.requires_grad) {
          std::vector<double> dw(in * out_dim);
          const auto xt = transpose(px.value, rows, in);
          kernels::parallel::matmul(xt, self.grad, dw, in, rows, out_dim);
          accumulate(pw.grad_buffer(), dw);
        }
        if (pb.requires_grad) {
          auto& gb = pb.grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < out_dim; ++j) gb[j] += self.grad[r * out_dim + j];
        }
      });
}

Tensor sum(const Tensor& a) {
  IFORGE_REQUIRE(a.defined() && a.numel() > 0, "sum of an empty tensor");
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return Tensor::make_result(OpKind::Sum, {1}, {acc}, {a}, [](Node& self) {
    Node& pa = *self.parents[0];
    auto& g = pa.grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  IFORGE_REQUIRE(a.defined() && a.numel() > 0, "mean of an empty tensor");
  const double n = static_cast<double>(a.numel());
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return Tensor::make_result(OpKind::Mean, {1}, {acc / n}, {a}, [n](Node& self) {
    Node& pa = *self.parents[0];
    auto& g = pa.grad_buffer();
    const double share = self.grad[0] / n;
    for (auto& v : g) v += share;
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  IFORGE_REQUIRE(numel(shape) == a.numel(), "reshape: element count changes " +
                                                shape_str(a.shape()) + " -> " + shape_str(shape));
  std::vector<double> out(a.data().begin(), a.data().end());
  return Tensor::make_result(OpKind::Reshape, std::move(shape), std::move(out), {a}, [](Node& self) {
    accumulate(self.parents[0]->grad_buffer(), self.grad);
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  IFORGE_REQUIRE(a.shape().size() == 2 && b.shape().size() == 2, "concat_cols expects rank 2");
  const std::size_t rows = a.dim(0), p = a.dim(1), q = b.dim(1);
  IFORGE_REQUIRE(b.dim(0) == rows, "concat_cols: row counts differ");
  std::vector<double> out(rows * (p + q));
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < p; ++j) out[r * (p + q) + j] = av[r * p + j];
    for (std::size_t j = 0; j < q; ++j) out[r * (p + q) + p + j] = bv[r * q + j];
  }
  return Tensor::make_result(OpKind::ConcatCols, {rows, p + q}, std::move(out), {a, b},
                             [=](Node& self) {
                               Node& pa = *self.parents[0];
                               Node& pb = *self.parents[1];
                               if (pa.requires_grad) {
                                 auto& g = pa.grad_buffer();
                                 for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t j = 0; j < p; ++j)
                                     g[r * p + j] += self.grad[r * (p + q) + j];
                               }
                               if (pb.requires_grad) {
                                 auto& g = pb.grad_buffer();
                                 for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t j = 0; j < q; ++j)
                                     g[r * q + j] += self.grad[r * (p + q) + p + j];
                               }
                             });
}

Tensor index_select(const Tensor& a, std::span<const std::size_t> rows) {
  IFORGE_REQUIRE(!a.shape().empty(), "index_select on a rank-0 tensor");
  IFORGE_REQUIRE(!rows.empty(), "index_select with no indices");
  const std::size_t n = a.dim(0);
  const std::size_t width = a.numel() / n;
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<double> out(idx.size() * width);
  const auto av = a.data();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    IFORGE_REQUIRE(idx[r] < n, "index_select: index out of range");
    for (std::size_t j = 0; j < width; ++j) out[r * width + j] = av[idx[r] * width + j];
  }
  Shape shape = a.shape();
  shape[0] = idx.size();
  return Tensor::make_result(OpKind::IndexSelect, std::move(shape), std::move(out), {a},
                             [idx = std::move(idx), width](Node& self) {
                               auto& g = self.parents[0]->grad_buffer();
                               for (std::size_t r = 0; r < idx.size(); ++r)
                                 for (std::size_t j = 0; j < width; ++j)
                                   g[idx[r] * width + j] += self.grad[r * width + j];
                             });
}

Tensor conv2d_3x3(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride) {
  IFORGE_REQUIRE(x.shape().size() == 3, "conv2d expects a [C,H,W] input");
  IFORGE_REQUIRE(w.shape().size() == 4 && w.dim(2) == 3 && w.dim(3) == 3,
                 "conv2d expects a [Co,Ci,3,3] kernel");
  IFORGE_REQUIRE(w.dim(1) == x.dim(0), "conv2d: channel mismatch");
  IFORGE_REQUIRE(bias.numel() == w.dim(0), "conv2d: bias length mismatch");
  IFORGE_REQUIRE(stride >= 1, "conv2d: stride must be positive");
  kernels::ConvGeom g{x.dim(0), x.dim(1), x.dim(2), w.dim(0), stride};
  std::vector<double> out(g.out_channels * g.out_height() * g.out_width());
  kernels::parallel::conv3x3_forward(g, x.data(), w.data(), bias.data(), out);
  return Tensor::make_result(
      OpKind::Conv2d, {g.out_channels, g.out_height(), g.out_width()}, std::move(out),
      {x, w, bias}, [g](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        std::vector<double> dw(g.weight_size(), 0.0), db(g.out_channels, 0.0);
        std::span<double> dx;
        if (px.requires_grad) dx = px.grad_buffer();
        kernels::parallel::conv3x3_backward(g, px.value, pw.value, self.grad, dx, dw, db);
        if (pw.requires_grad) accumulate(pw.grad_buffer(), dw);
        if (pb.requires_grad) accumulate(pb.grad_buffer(), db);
      });
}

namespace {

struct BilinearTap {
  std::size_t cell[4];
  double weight[4];  // zero for neighbours outside the grid
};

BilinearTap bilinear_tap(double u, double v, std::size_t h, std::size_t w) {
  BilinearTap tap{};
  const double fu = std::floor(u), fv = std::floor(v);
  const double tu = u - fu, tv = v - fv;
  const auto x0 = static_cast<std::int64_t>(fu), y0 = static_cast<std::int64_t>(fv);
  const std::int64_t xs[4] = {x0, x0 + 1, x0, x0 + 1};
  const std::int64_t ys[4] = {y0, y0, y0 + 1, y0 + 1};
  const double ws[4] = {(1 - tu) * (1 - tv), tu * (1 - tv), (1 - tu) * tv, tu * tv};
  for (int k = 0; k < 4; ++k) {
    const bool inside = xs[k] >= 0 && ys[k] >= 0 && xs[k] < static_cast<std::int64_t>(w) &&
                        ys[k] < static_cast<std::int64_t>(h);
    tap.cell[k] = inside ? static_cast<std::size_t>(ys[k]) * w + static_cast<std::size_t>(xs[k]) : 0;
    tap.weight[k] = inside ? ws[k] : 0.0;
  }
  return tap;
}

}  // namespace

Tensor bilinear_sample(const Tensor& grid, std::span<const std::array<double, 2>> coords) {
  IFORGE_REQUIRE(grid.shape().size() == 3, "bilinear_sample expects a [C,H,W] grid");
  IFORGE_REQUIRE(!coords.empty(), "bilinear_sample with no query points");
  const std::size_t c = grid.dim(0), h = grid.dim(1), w = grid.dim(2);
  const std::size_t n = coords.size();
  std::vector<BilinearTap> taps(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = coords[i][0], v = coords[i][1];
    if (!std::isfinite(u) || !std::isfinite(v) || u <= -1.0 || v <= -1.0 ||
        u >= static_cast<double>(w) || v >= static_cast<double>(h)) {
      taps[i] = BilinearTap{};  // entirely outside: all-zero weights
    } else {
      taps[i] = bilinear_tap(u, v, h, w);
    }
  }
  std::vector<double> out(n * c, 0.0);
  const auto gv = grid.data();
  const std::size_t plane = h * w;
#pragma omp parallel for schedule(static)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const BilinearTap& t = taps[i];
    for (std::size_t ch = 0; ch < c; ++ch) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += t.weight[k] * gv[ch * plane + t.cell[k]];
      out[i * c + ch] = acc;
    }
  }
  return Tensor::make_result(OpKind::BilinearSample, {n, c}, std::move(out), {grid},
                             [taps = std::move(taps), c, plane](Node& self) {
                               auto& g = self.parents[0]->grad_buffer();
                               for (std::size_t i = 0; i < taps.size(); ++i) {
                                 const BilinearTap& t = taps[i];
                                 for (std::size_t ch = 0; ch < c; ++ch) {
                                   const double go = self.grad[i * c + ch];
                                   if (go == 0.0) continue;
                                   for (int k = 0; k < 4; ++k)
                                     if (t.weight[k] != 0.0)
                                       g[ch * plane + t.cell[k]] += t.weight[k] * go;
                                 }
                               }
                             });
}

Tensor mse(const Tensor& a, const Tensor& b) { return mean(square(sub(a, b))); }

}  // namespace iforge::ad
