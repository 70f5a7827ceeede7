// Copyright Contributors to the implicit_forge project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "iforge/tensor.hpp"

namespace iforge::ad {

/// Compares reverse-mode gradients of a scalar function against central
/// differences. `f` must close over the leaves in `inputs` and rebuild its
/// graph on every call. Returns max |analytic - numeric| / max(1, |analytic|)
/// over all checked elements, or +inf if any evaluation is non-finite.
/// `skip(input, element)` excludes points where f is not differentiable.
double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double h = 1e-4,
                  const std::function<bool(std::size_t, std::size_t)>& skip = {});

}  // namespace iforge::ad
