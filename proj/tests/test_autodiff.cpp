// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "iforge/errors.hpp"
#include "iforge/gradcheck.hpp"
#include "iforge/kernels.hpp"
#include "iforge/ops.hpp"
#include "iforge/random.hpp"

using namespace iforge;
using ad::Tensor;

namespace {

Tensor random_tensor(Rng& rng, ad::Shape shape, double lo = -1.0, double hi = 1.0,
                     bool requires_grad = true) {
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(v), requires_grad);
}

}  // namespace

TEST_CASE("elementwise forward values") {
  CHECK(ad::sigmoid(Tensor::scalar(0.0)).item() == doctest::Approx(0.5));
  auto a = Tensor::from_data({2}, {1, 2}, true);
  auto b = Tensor::from_data({2}, {3, 4}, true);
  auto c = a + b;
  CHECK(c.at(0) == 4.0);
  CHECK(c.at(1) == 6.0);
  ad::backward(ad::sum(c));
  CHECK(a.grad()[0] == 1.0);
  CHECK(a.grad()[1] == 1.0);
  CHECK(b.grad()[0] == 1.0);
  CHECK(b.grad()[1] == 1.0);
}

TEST_CASE("square derivative and additive accumulation") {
  auto x = Tensor::scalar(3.0, true);
  ad::backward(ad::square(x));
  CHECK(x.grad()[0] == 6.0);
  ad::backward(ad::square(x));
  CHECK(x.grad()[0] == 12.0);
  x.zero_grad();
  ad::backward(x * x);
  CHECK(x.grad()[0] == 6.0);
}

TEST_CASE("shape contracts") {
  auto a = Tensor::zeros({2});
  auto b = Tensor::zeros({3});
  CHECK_THROWS_AS(a + b, ContractError);
  CHECK_THROWS_AS(ad::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ContractError);
  CHECK_THROWS_AS(ad::backward(Tensor::zeros({2}, true) * Tensor::scalar(2.0)), ContractError);
  CHECK_THROWS_AS(Tensor::from_data({2, 0}, {}), ContractError);
  // scalar broadcast is allowed either way round
  auto s = Tensor::scalar(2.0) * Tensor::from_data({3}, {1, 2, 3});
  CHECK(s.at(2) == 6.0);
}

TEST_CASE("matmul matches a triple loop") {
  Rng rng(7);
  auto a = random_tensor(rng, {3, 4});
  auto b = random_tensor(rng, {4, 2});
  auto c = ad::matmul(a, b);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) {
      double s = 0.0;
      for (int k = 0; k < 4; ++k) s += a.at(i * 4 + k) * b.at(k * 2 + j);
      CHECK(std::abs(c.at(i * 2 + j) - s) < 1e-12);
    }
  auto eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  auto m = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  auto r = ad::matmul(eye, m);
  for (int i = 0; i < 4; ++i) CHECK(r.at(i) == m.at(i));
  CHECK(ad::matmul(Tensor::from_data({1, 2}, {1, 0}), Tensor::from_data({2, 1}, {0, 1})).item() == 0.0);
}

TEST_CASE("mean against compensated summation") {
  CHECK(ad::mean(Tensor::from_data({2}, {2, 4})).item() == 3.0);
  auto z = Tensor::zeros({5}, true);
  ad::backward(ad::mean(z));
  for (double g : z.grad()) CHECK(g == doctest::Approx(0.2));
  CHECK_THROWS_AS(ad::mean(Tensor()), ContractError);

  Rng rng(11);
  auto v = random_tensor(rng, {100}, 0.0, 1.0, false);
  double sum = 0.0, comp = 0.0;
  for (double x : v.data()) {
    const double y = x - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  CHECK(std::abs(ad::mean(v).item() - sum / 100.0) < 1e-12);
}

TEST_CASE("grad_check on simple functions") {
  auto x = Tensor::scalar(3.0, true);
  CHECK(ad::grad_check([&] { return ad::square(x); }, {x}) < 1e-6);

  auto r = Tensor::from_data({3}, {-1.0, 0.0, 2.0}, true);
  const double err = ad::grad_check([&] { return ad::sum(ad::relu(r)); }, {r}, 1e-4,
                                    [&](std::size_t, std::size_t e) { return r.at(e) == 0.0; });
  CHECK(err < 1e-6);

  auto bad = Tensor::scalar(1.0, true);
  CHECK(std::isinf(ad::grad_check(
      [&] { return ad::scale(bad, std::numeric_limits<double>::infinity()); }, {bad})));
}

TEST_CASE("relu subgradient at zero is zero") {
  auto x = Tensor::from_data({1}, {0.0}, true);
  ad::backward(ad::sum(ad::relu(x)));
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("every registered op passes grad_check on 20 random inputs") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 100);
    auto a = random_tensor(rng, {2, 3});
    auto b = random_tensor(rng, {2, 3});
    auto pos = random_tensor(rng, {2, 3}, 0.2, 2.0);
    auto w = random_tensor(rng, {3, 4});
    auto bias = random_tensor(rng, {4});
    const double tol = 1e-4;
    CHECK(ad::grad_check([&] { return ad::sum(a + b); }, {a, b}) < tol);
    CHECK(ad::grad_check([&] { return ad::sum(a - b); }, {a, b}) < tol);
    CHECK(ad::grad_check([&] { return ad::sum(a * b); }, {a, b}) < tol);
    CHECK(ad::grad_check([&] { return ad::sum(a / pos); }, {a, pos}) < tol);
    CHECK(ad::grad_check([&] { return ad::sum(-a); }, {a}) < tol);
    CHECK(ad::grad_check([&] { return ad::sum(ad::exp(a)); }, {a}) < tol);
    CHECK(ad::grad_check([&] { return ad::sum(ad::log(pos)); }, {pos}) < tol);
    CHECK(ad::grad_check([&] { return ad::sum(ad::sigmoid(a)); }, {a}) < tol);
    CHECK(ad::grad_check([&] { return ad::sum(ad::relu(a)); }, {a}) < tol);
    CHECK(ad::grad_check([&] { return ad::sum(ad::square(a)); }, {a}) < tol);
    CHECK(ad::grad_check([&] { return ad::mean(ad::matmul(a, w)); }, {a, w}) < tol);
    CHECK(ad::grad_check([&] { return ad::mean(ad::square(ad::linear(a, w, bias))); }, {a, w, bias}) < tol);
    CHECK(ad::grad_check([&] { return ad::mse(a, b); }, {a, b}) < tol);
    CHECK(ad::grad_check([&] { return ad::sum(ad::square(ad::concat_cols(a, b))); }, {a, b}) < tol);
    CHECK(ad::grad_check([&] { return ad::sum(ad::square(ad::reshape(a, {3, 2}))); }, {a}) < tol);
  }
}

TEST_CASE("conv and bilinear sampling gradients") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    auto x = random_tensor(rng, {2, 6, 5});
    auto w = random_tensor(rng, {3, 2, 3, 3});
    auto b = random_tensor(rng, {3});
    for (std::size_t stride : {1u, 2u}) {
      CHECK(ad::grad_check(
                [&] { return ad::mean(ad::square(ad::conv2d_3x3(x, w, b, stride))); }, {x, w, b}) <
            1e-4);
    }
    std::vector<std::array<double, 2>> coords;
    for (int i = 0; i < 6; ++i) coords.push_back({rng.uniform(-1.5, 5.5), rng.uniform(-1.5, 6.5)});
    CHECK(ad::grad_check([&] { return ad::sum(ad::square(ad::bilinear_sample(x, coords))); }, {x}) <
          1e-4);
  }
}

TEST_CASE("bilinear sampling boundary policy") {
  auto g = Tensor::from_data({1, 2, 2}, {1, 2, 3, 4});
  const std::vector<std::array<double, 2>> coords{{0.0, 0.0}, {0.5, 0.0}, {-5.0, 0.0}, {1.0, 1.0}};
  auto s = ad::bilinear_sample(g, coords);
  CHECK(s.at(0) == 1.0);
  CHECK(s.at(1) == doctest::Approx(1.5));
  CHECK(s.at(2) == 0.0);
  CHECK(s.at(3) == 4.0);
}

TEST_CASE("unreachable leaf keeps no gradient") {
  auto used = Tensor::scalar(2.0, true);
  auto unused = Tensor::scalar(5.0, true);
  ad::backward(ad::square(used));
  CHECK((!unused.has_grad() || unused.grad()[0] == 0.0));
}

TEST_CASE("forward evaluation is bit-identical across repeats") {
  auto run = [] {
    Rng rng(3);
    auto a = random_tensor(rng, {4, 5});
    auto w = random_tensor(rng, {5, 3});
    return ad::sigmoid(ad::matmul(a, w));
  };
  auto r1 = run();
  auto r2 = run();
  for (std::size_t i = 0; i < r1.numel(); ++i) CHECK(r1.at(i) == r2.at(i));
}

TEST_CASE("no-grad guard skips graph construction") {
  auto x = Tensor::scalar(1.0, true);
  Tensor y;
  {
    ad::NoGradGuard guard;
    y = ad::square(x);
  }
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("serial and parallel kernels agree") {
  Rng rng(5);
  std::vector<double> a(7 * 9), b(9 * 4), c1(7 * 4), c2(7 * 4);
  for (auto& v : a) v = rng.uniform(-1, 1);
  for (auto& v : b) v = rng.uniform(-1, 1);
  kernels::serial::matmul(a, b, c1, 7, 9, 4);
  kernels::parallel::matmul(a, b, c2, 7, 9, 4);
  CHECK(c1 == c2);

  for (std::size_t stride : {1u, 2u}) {
    kernels::ConvGeom g{3, 9, 8, 4, stride};
    std::vector<double> in(3 * 9 * 8), w(g.weight_size()), bias(4);
    for (auto& v : in) v = rng.uniform(-1, 1);
    for (auto& v : w) v = rng.uniform(-1, 1);
    for (auto& v : bias) v = rng.uniform(-1, 1);
    const std::size_t n_out = 4 * g.out_height() * g.out_width();
    std::vector<double> o1(n_out), o2(n_out), dout(n_out);
    kernels::serial::conv3x3_forward(g, in, w, bias, o1);
    kernels::parallel::conv3x3_forward(g, in, w, bias, o2);
    CHECK(o1 == o2);
    for (auto& v : dout) v = rng.uniform(-1, 1);
    std::vector<double> di1(in.size()), di2(in.size()), dw1(w.size()), dw2(w.size()), db1(4), db2(4);
    kernels::serial::conv3x3_backward(g, in, w, dout, di1, dw1, db1);
    kernels::parallel::conv3x3_backward(g, in, w, dout, di2, dw2, db2);
    for (std::size_t i = 0; i < di1.size(); ++i) CHECK(std::abs(di1[i] - di2[i]) < 1e-12);
    for (std::size_t i = 0; i < dw1.size(); ++i) CHECK(std::abs(dw1[i] - dw2[i]) < 1e-12);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(db1[i] - db2[i]) < 1e-12);
  }
}
