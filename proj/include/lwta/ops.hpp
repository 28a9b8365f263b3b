#pragma once

#include <cstddef>
#include <vector>

#include "lwta/tensor.hpp"

namespace lwta {

// All differentiable ops record themselves on the active tape when an input
// is tracked.

Tensor matmul(const Tensor& a, const Tensor& b);

// Cross-correlation over NHWC input with an h x l x C x F kernel, zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t padding);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
// a + bias broadcast along the last axis.
Tensor add_bias(const Tensor& a, const Tensor& bias);

Tensor exp(const Tensor& a);
// Throws DomainError on non-positive entries.
Tensor log(const Tensor& a);
// Gradient is passed only strictly inside (lo, hi).
Tensor clamp(const Tensor& a, double lo, double hi);
// Elementwise clamp against per-entry bounds, same gradient convention.
Tensor clamp(const Tensor& a, const Tensor& lo, const Tensor& hi);
// Zero gradient everywhere.
Tensor sign(const Tensor& a);
Tensor relu(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Index of the maximum along the last axis; ties go to the lowest index.
std::vector<std::size_t> argmax(const Tensor& a);

// Max-subtracted softmax along `axis` (negative counts from the end).
Tensor softmax(const Tensor& a, int axis = -1);
Tensor log_softmax(const Tensor& a, int axis = -1);

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);
// a[..., index[i]] for each leading position i; result drops the last axis.
Tensor pick(const Tensor& a, const std::vector<std::size_t>& index);

}  // namespace lwta
