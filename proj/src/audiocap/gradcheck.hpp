#pragma once

#include <functional>

#include "tensor.hpp"

namespace audiocap {

/// f(x) returning the value; when grad is non-null it also writes df/dx there.
using ScalarFn = std::function<double(const Tensor& x, Tensor* grad)>;

/// max_i |analytic_i - central_difference_i| / max(1, |analytic_i|).
/// epsilon must lie in [1e-8, 1e-3].
double grad_check(const ScalarFn& f, const Tensor& point, double epsilon);

/// Flattens every entry of a checkpoint into one vector (in entry order) and back.
Tensor flatten(const Checkpoint& ckpt);
void unflatten(const Tensor& flat, Checkpoint& ckpt);

}  // namespace audiocap
