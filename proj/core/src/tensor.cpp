// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdit/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "hdit/error.hpp"

namespace hdit {

namespace {

thread_local bool t_grad_enabled = true;

#ifdef NDEBUG
std::atomic<bool> g_finite_checks{false};
#else
std::atomic<bool> g_finite_checks{true};
#endif

std::atomic<std::uint64_t> g_sequence{0};

template <typename T>
void check_finite(const std::vector<T>& data, const char* op) {
  for (const T v : data) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by op '") + op + "'");
  }
}

}  // namespace

const char* dtype_name(DType dtype) { return dtype == DType::binary32 ? "binary32" : "binary64"; }

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (const auto e : shape) {
    if (e < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

int normalize_axis(int axis, int rank) {
  const int resolved = axis < 0 ? axis + rank : axis;
  if (resolved < 0 || resolved >= rank) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return resolved;
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }
void set_finite_checks(bool enabled) { g_finite_checks.store(enabled, std::memory_order_relaxed); }

namespace detail {
std::uint64_t next_sequence_id() { return g_sequence.fetch_add(1, std::memory_order_relaxed); }
}  // namespace detail

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
  }
  node_ = std::make_shared<detail::Node<T>>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::ones(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(1), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  static const Shape kEmpty;
  return node_ ? node_->shape : kEmpty;
}

template <typename T>
std::int64_t Tensor<T>::extent(int axis) const {
  return shape()[static_cast<std::size_t>(normalize_axis(axis, rank()))];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool value) {
  node_->requires_grad = value;
  return *this;
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->data, false);
}

template <typename T>
void Tensor<T>::backward() const {
  using NodeT = detail::Node<T>;
  if (numel() != 1) throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(shape()));
  if (!node_->requires_grad) throw ShapeError("backward() on a tensor that does not require grad");

  // Collect every reachable node that participates in differentiation.
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> seen;
  std::vector<NodeT*> stack{node_.get()};
  seen.insert(node_.get());
  while (!stack.empty()) {
    NodeT* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  // Sequence ids are assigned at creation, so descending id is a valid
  // reverse topological order and each node is visited exactly once.
  std::sort(order.begin(), order.end(), [](const NodeT* a, const NodeT* b) { return a->seq > b->seq; });

  // Interior gradients are created by the first consumer that writes one and
  // released right after use, so only the live frontier is resident. A node
  // nothing wrote to has a zero gradient and contributes nothing upstream.
  node_->ensure_grad()[0] += T(1);
  for (NodeT* n : order) {
    if (!n->backward || n->grad.empty()) continue;
    n->backward(*n);
    std::vector<T>().swap(n->grad);
  }
}

namespace {

template <typename T>
Tensor<T> make_result_impl(Shape shape, std::vector<T> data, const Tensor<T>* const* inputs, std::size_t count,
                           const char* op, std::function<void(detail::Node<T>&)> backward) {
  if (finite_checks_enabled()) check_finite(data, op);
  Tensor<T> out(std::move(shape), std::move(data), false);
  if (!grad_enabled()) return out;
  bool any = false;
  for (std::size_t i = 0; i < count; ++i) any = any || inputs[i]->requires_grad();
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  node.op = op;
  node.parents.reserve(count);
  for (std::size_t i = 0; i < count; ++i) node.parents.push_back(inputs[i]->node());
  node.backward = std::move(backward);
  return out;
}

}  // namespace

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::initializer_list<const Tensor<T>*> inputs, const char* op,
                      std::function<void(detail::Node<T>&)> backward) {
  return make_result_impl<T>(std::move(shape), std::move(data), inputs.begin(), inputs.size(), op,
                             std::move(backward));
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& inputs, const char* op,
                      std::function<void(detail::Node<T>&)> backward) {
  std::vector<const Tensor<T>*> ptrs;
  ptrs.reserve(inputs.size());
  for (const auto& t : inputs) ptrs.push_back(&t);
  return make_result_impl<T>(std::move(shape), std::move(data), ptrs.data(), ptrs.size(), op, std::move(backward));
}

template class Tensor<float>;
template class Tensor<double>;

template Tensor<float> make_result(Shape, std::vector<float>, std::initializer_list<const Tensor<float>*>,
                                   const char*, std::function<void(detail::Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>, std::initializer_list<const Tensor<double>*>,
                                    const char*, std::function<void(detail::Node<double>&)>);
template Tensor<float> make_result(Shape, std::vector<float>, const std::vector<Tensor<float>>&, const char*,
                                   std::function<void(detail::Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>, const std::vector<Tensor<double>>&, const char*,
                                    std::function<void(detail::Node<double>&)>);

}  // namespace hdit
