#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lwta {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::uint64_t tape_id = 0;  // 0: not produced on a tape
  std::size_t node = 0;
};

}  // namespace detail

// Dense row-major n-d array. Copies share storage; values are never modified
// after construction, only the gradient buffer of a leaf accumulates.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  // Leaf whose gradient is accumulated by backward().
  static Tensor parameter(Shape shape, std::vector<double> data);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->data.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }

  std::span<const double> data() const { return impl_->data; }
  const std::vector<double>& values() const { return impl_->data; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  bool has_grad() const { return !impl_->grad.empty(); }
  // Zeros when no gradient has been accumulated yet.
  std::vector<double> grad() const;
  void zero_grad() const { impl_->grad.clear(); }

  // Same values, no gradient tracking.
  Tensor detach() const;
  // Copy of the values as a fresh gradient-tracking leaf.
  Tensor as_parameter() const;

  bool tracked() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  friend class GradientTape;
  friend Tensor record_op(Shape, std::vector<double>, std::vector<Tensor>,
                          std::function<void(std::span<const double>, std::span<std::vector<double>*>)>);

  std::shared_ptr<detail::TensorImpl> impl_;
};

using BackwardFn = std::function<void(std::span<const double> out_grad, std::span<std::vector<double>*> in_grads)>;

// Builds an op result. When a tape is active and any input is tracked, the op
// is appended to the tape; backward receives the output adjoint and one
// accumulation buffer per input (nullptr for inputs that need no gradient).
// Throws NumericError if the data contains NaN or Inf.
Tensor record_op(Shape shape, std::vector<double> data, std::vector<Tensor> inputs, BackwardFn backward);

// Append-only record of differentiable operations. Constructing a tape makes
// it the active tape of the calling thread until it is destroyed.
class GradientTape {
 public:
  GradientTape();
  ~GradientTape();
  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  static GradientTape* active();

  std::size_t size() const { return nodes_.size(); }
  std::uint64_t id() const { return id_; }

  // Populates grad on every tracked leaf reachable from loss. Leaf gradients
  // accumulate over repeated calls.
  void backward(const Tensor& loss);

 private:
  struct Node {
    std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
    BackwardFn backward;
  };

  friend Tensor record_op(Shape, std::vector<double>, std::vector<Tensor>, BackwardFn);

  std::uint64_t id_;
  GradientTape* previous_;
  std::vector<Node> nodes_;
};

// backward() on the thread's active tape.
void backward(const Tensor& loss);

// Suspends gradient recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  GradientTape* saved_;
};

}  // namespace lwta
