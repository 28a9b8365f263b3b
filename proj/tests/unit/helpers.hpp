#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "lwta/network.hpp"
#include "lwta/rng.hpp"
#include "lwta/tensor.hpp"

namespace lwta::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(shape, std::move(v));
}

inline std::vector<std::size_t> random_labels(std::size_t n, std::size_t classes, Rng& rng) {
  std::vector<std::size_t> out(n);
  for (auto& l : out) l = static_cast<std::size_t>(rng.uniform() * static_cast<double>(classes)) % classes;
  return out;
}

// Central difference of a scalar function of one tensor.
inline std::vector<double> numeric_gradient(const std::function<double(const Tensor&)>& f, const Tensor& at,
                                            double h = 1e-5) {
  std::vector<double> g(at.size());
  for (std::size_t i = 0; i < at.size(); ++i) {
    auto plus = at.values();
    auto minus = at.values();
    plus[i] += h;
    minus[i] -= h;
    g[i] = (f(Tensor(at.shape(), plus)) - f(Tensor(at.shape(), minus))) / (2.0 * h);
  }
  return g;
}

inline double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / (std::abs(numeric[i]) + 1e-8));
  }
  return worst;
}

// Analytic gradient of f at `at` via the tape.
inline std::vector<double> tape_gradient(const std::function<Tensor(const Tensor&)>& f, const Tensor& at) {
  const Tensor leaf = at.as_parameter();
  GradientTape tape;
  const Tensor out = f(leaf);
  tape.backward(out);
  return leaf.grad();
}

// Checks d f / d x against central differences, where f returns a scalar tensor.
inline void expect_gradient_matches(const std::function<Tensor(const Tensor&)>& f, const Tensor& at,
                                    double tol = 1e-4) {
  const auto analytic = tape_gradient(f, at);
  const auto numeric = numeric_gradient([&](const Tensor& t) { return f(t).item(); }, at);
  EXPECT_LT(max_relative_error(analytic, numeric), tol);
}

inline void expect_same_values(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "entry " << i;
}

inline void expect_bit_identical(const Tensor& a, const Tensor& b) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i], b[i]) << "entry " << i;
}

}  // namespace lwta::testing
