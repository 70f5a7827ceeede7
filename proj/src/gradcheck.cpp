// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
#include "iforge/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "iforge/errors.hpp"

namespace iforge::ad {

double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double h,
                  const std::function<bool(std::size_t, std::size_t)>& skip) {
  IFORGE_REQUIRE(h > 0, "grad_check step must be positive");
  constexpr double kInf = std::numeric_limits<double>::infinity();

  for (auto& t : inputs) t.zero_grad();
  const Tensor loss = f();
  if (!std::isfinite(loss.item())) return kInf;
  backward(loss);

  double worst = 0.0;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor& t = inputs[ti];
    const std::vector<double> analytic =
        t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                     : std::vector<double>(t.numel(), 0.0);
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (skip && skip(ti, i)) continue;
      const double saved = values[i];
      double plus = 0.0, minus = 0.0;
      {
        NoGradGuard guard;
        values[i] = saved + h;
        plus = f().item();
        values[i] = saved - h;
        minus = f().item();
      }
      values[i] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus) || !std::isfinite(analytic[i])) return kInf;
      const double numeric = (plus - minus) / (2.0 * h);
      worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i])));
    }
  }
  return worst;
}

}  // namespace iforge::ad
