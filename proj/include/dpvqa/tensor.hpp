#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dpvqa/errors.hpp"

namespace dpvqa {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

enum class Precision { f32, f64 };

Precision parse_precision(const std::string& text);
std::string to_string(Precision p);

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until needed; leaves with requires_grad own one from creation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the grads of `inputs`.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

// Dense row-major tensor handle. Copies share the underlying node, so a
// parameter handed to several ops accumulates all of their gradients.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t extent(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  // Only for leaves: optimizer updates and finite-difference probes.
  std::span<T> mutable_data() { return node_->value; }
  T operator[](std::size_t i) const { return node_->value[i]; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad; }
  void zero_grad();

  // Copy of the values as a fresh leaf without history.
  Tensor detach() const;

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Reverse pass from a scalar loss. Gradients are accumulated (not
/// overwritten) into every upstream tensor with requires_grad; the recorded
/// graph between the loss and the leaves is released afterwards.
template <class T>
void backward(const Tensor<T>& loss);

bool grad_enabled();

// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

// Builds an op result; records `inputs` and `backward` only when recording
// is enabled and at least one input requires grad.
template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> value,
                      std::vector<std::shared_ptr<Node<T>>> inputs,
                      std::function<void(Node<T>&)> backward);

}  // namespace detail

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace dpvqa
