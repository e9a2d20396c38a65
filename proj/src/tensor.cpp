#include "dpvqa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace dpvqa {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Precision parse_precision(const std::string& text) {
  if (text == "f32" || text == "32" || text == "float") return Precision::f32;
  if (text == "f64" || text == "64" || text == "double") return Precision::f64;
  throw ContractError("unknown precision '" + text + "' (expected f32 or f64)");
}

std::string to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

namespace {
thread_local bool g_grad_enabled = true;

void check_shape(const Shape& shape) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
}
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  check_shape(shape);
  auto n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::vector<T> data, bool requires_grad) {
  check_shape(shape);
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->value.size(), T(0));
  return Tensor(std::move(node));
}

template <class T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

template <class T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

template <class T>
void Tensor<T>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <class T>
Tensor<T> Tensor<T>::detach() const {
  return from_data(node_->shape, node_->value, false);
}

template <class T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward(): loss does not depend on any tensor that requires grad");
  }

  // Iterative post-order DFS gives a topological order of the recorded graph.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Node<T>* root = loss.node().get();
  if (root->backward) {
    root->grad.assign(1, T(1));
  } else {
    root->ensure_grad();
    root->grad[0] += T(1);
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (!node->backward) continue;
    node->ensure_grad();
    for (auto& in : node->inputs) {
      if (in->requires_grad) in->ensure_grad();
    }
    node->backward(*node);
  }
  // Release the tape; leaves keep their accumulated gradients.
  for (Node<T>* node : order) {
    if (node->backward) {
      node->backward = nullptr;
      node->inputs.clear();
      node->inputs.shrink_to_fit();
    }
  }
}

namespace detail {

template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> value,
                      std::vector<std::shared_ptr<Node<T>>> inputs,
                      std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
#ifndef NDEBUG
  bool inputs_finite = true;
  for (auto& in : inputs) {
    for (T v : in->value) {
      if (!std::isfinite(v)) {
        inputs_finite = false;
        break;
      }
    }
  }
  if (inputs_finite) {
    for (T v : node->value) {
      if (!std::isfinite(v)) throw NumericError("non-finite value produced from finite inputs");
    }
  }
#endif
  if (g_grad_enabled) {
    bool any = std::any_of(inputs.begin(), inputs.end(),
                           [](const auto& n) { return n->requires_grad; });
    if (any) {
      node->requires_grad = true;
      node->inputs = std::move(inputs);
      node->backward = std::move(backward_fn);
    }
  }
  return Tensor<T>(std::move(node));
}

template Tensor<float> make_result(Shape, std::vector<float>,
                                   std::vector<std::shared_ptr<Node<float>>>,
                                   std::function<void(Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>,
                                    std::vector<std::shared_ptr<Node<double>>>,
                                    std::function<void(Node<double>&)>);

}  // namespace detail

template class Tensor<float>;
template class Tensor<double>;
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace dpvqa
