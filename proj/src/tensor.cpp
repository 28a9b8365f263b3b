#include "lwta/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include "lwta/error.hpp"

namespace lwta {

namespace {

thread_local GradientTape* t_active_tape = nullptr;
std::atomic<std::uint64_t> g_next_tape_id{1};

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : impl_(std::make_shared<detail::TensorImpl>()) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_to_string(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> data) {
  Tensor t(std::move(shape), std::move(data));
  t.impl_->requires_grad = true;
  return t;
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_to_string(shape()));
  return impl_->data[0];
}

std::vector<double> Tensor::grad() const {
  if (impl_->grad.empty()) return std::vector<double>(size(), 0.0);
  return impl_->grad;
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data); }

Tensor Tensor::as_parameter() const { return parameter(impl_->shape, impl_->data); }

bool Tensor::tracked() const {
  if (impl_->requires_grad) return true;
  const auto* tape = t_active_tape;
  return tape != nullptr && impl_->tape_id == tape->id();
}

Tensor record_op(Shape shape, std::vector<double> data, std::vector<Tensor> inputs, BackwardFn backward) {
  for (double v : data) {
    if (!std::isfinite(v)) throw NumericError("operation produced a non-finite value");
  }
  Tensor out(std::move(shape), std::move(data));
  GradientTape* tape = t_active_tape;
  if (tape == nullptr) return out;
  bool any_tracked = false;
  for (const auto& in : inputs) any_tracked = any_tracked || in.tracked();
  if (!any_tracked) return out;

  GradientTape::Node node;
  node.inputs.reserve(inputs.size());
  for (auto& in : inputs) node.inputs.push_back(in.impl_);
  node.backward = std::move(backward);
  out.impl_->tape_id = tape->id_;
  out.impl_->node = tape->nodes_.size();
  tape->nodes_.push_back(std::move(node));
  return out;
}

GradientTape::GradientTape() : id_(g_next_tape_id.fetch_add(1)), previous_(t_active_tape) { t_active_tape = this; }

GradientTape::~GradientTape() { t_active_tape = previous_; }

GradientTape* GradientTape::active() { return t_active_tape; }

void GradientTape::backward(const Tensor& loss) {
  if (loss.size() != 1) throw ContractError("backward() needs a scalar loss, got " + shape_to_string(loss.shape()));
  const auto& root = loss.impl();
  if (root->tape_id != id_) {
    if (root->requires_grad) {
      // Loss is itself a leaf.
      if (root->grad.empty()) root->grad.assign(1, 0.0);
      root->grad[0] += 1.0;
      return;
    }
    throw ContractError("backward() on a loss that is not recorded on this tape");
  }

  std::vector<std::vector<double>> adjoints(root->node + 1);
  adjoints[root->node].assign(1, 1.0);
  std::vector<std::vector<double>*> buffers;
  for (std::size_t i = root->node + 1; i-- > 0;) {
    auto& gout = adjoints[i];
    if (gout.empty()) continue;
    Node& node = nodes_[i];
    buffers.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      auto& in = *node.inputs[k];
      if (in.tape_id == id_) {
        auto& adj = adjoints[in.node];
        if (adj.empty()) adj.assign(in.data.size(), 0.0);
        buffers[k] = &adj;
      } else if (in.requires_grad) {
        if (in.grad.empty()) in.grad.assign(in.data.size(), 0.0);
        buffers[k] = &in.grad;
      }
    }
    node.backward(gout, buffers);
    gout.clear();
    gout.shrink_to_fit();
  }
}

void backward(const Tensor& loss) {
  GradientTape* tape = GradientTape::active();
  if (tape == nullptr) throw ContractError("backward() called without an active gradient tape");
  tape->backward(loss);
}

NoGradGuard::NoGradGuard() : saved_(t_active_tape) { t_active_tape = nullptr; }

NoGradGuard::~NoGradGuard() { t_active_tape = saved_; }

}  // namespace lwta
