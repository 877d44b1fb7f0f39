// Copyright (C) 2026 The hdit-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hdit {

using Shape = std::vector<std::int64_t>;

enum class DType : std::uint8_t { binary32 = 0, binary64 = 1 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::binary32; }
template <>
constexpr DType dtype_of<double>() { return DType::binary64; }

const char* dtype_name(DType dtype);
std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);
/// Resolves a possibly negative axis against `rank`; throws ShapeError when out of range.
int normalize_axis(int axis, int rank);

// Graph recording switch. Recording is on by default; NoGradGuard turns it off
// for its scope (sampling, EMA evaluation, finite-difference probes).
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// When enabled every op result is scanned and a NumericError is thrown on the
// first non-finite element. Default: on in debug builds, off with NDEBUG.
bool finite_checks_enabled();
void set_finite_checks(bool enabled);

namespace detail {

std::uint64_t next_sequence_id();

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty means "no gradient yet"
  bool requires_grad = false;
  std::uint64_t seq = next_sequence_id();
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

}  // namespace detail

/// Dense row-major tensor with an optional gradient slot. A Tensor is a cheap
/// handle: copies share the same node. Op results record their parents and a
/// backward closure while grad mode is on and any input requires grad.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor ones(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->data.size()); }
  /// Extent along `axis`; negative axes count from the back.
  std::int64_t extent(int axis) const;
  static constexpr DType dtype() { return dtype_of<T>(); }

  std::span<const T> data() const { return node_->data; }
  /// Mutable view for parameter updates and test fixtures. Mutating an
  /// intermediate that a recorded graph still references is undefined.
  std::span<T> data_mut() { return node_->data; }
  std::vector<T> to_vector() const { return node_->data; }
  T operator[](std::int64_t flat_index) const { return node_->data[static_cast<std::size_t>(flat_index)]; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool value);
  bool is_leaf() const { return !node_->backward; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> grad_mut() { return node_->ensure_grad(); }
  void zero_grad();

  /// New leaf holding a copy of the values, detached from any graph.
  Tensor detach() const;
  /// Reverse-mode sweep from this scalar. Leaf grads accumulate across calls;
  /// intermediate grads are recomputed each call.
  void backward() const;

  const NodePtr& node() const { return node_; }
  static Tensor from_node(NodePtr node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  NodePtr node_;
};

/// Builds an op result. If recording applies, `backward` is attached and the
/// inputs become parents; otherwise the closure is dropped.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::initializer_list<const Tensor<T>*> inputs,
                      const char* op, std::function<void(detail::Node<T>&)> backward);

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& inputs, const char* op,
                      std::function<void(detail::Node<T>&)> backward);

/// Named learnable parameter; `decay` marks weights that receive AdamW weight decay.
template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
  bool decay = false;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace hdit
