#pragma once

#include <functional>
#include <vector>

#include "delaynet/tensor.hpp"

namespace delaynet {

/// Compares reverse-mode gradients against central finite differences
/// (f(p+h) - f(p-h)) / 2h for every element of every parameter. f must be a
/// deterministic map from the current parameter values to a one-element
/// tensor; it is re-evaluated with elements nudged in place. Returns the
/// worst relative error, |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8).
/// h outside [1e-7, 1e-3] is a configuration error; a non-finite loss is a
/// numeric error.
double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                  double h = 1e-5);

}  // namespace delaynet
