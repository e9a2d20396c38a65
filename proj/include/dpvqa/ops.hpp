#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "dpvqa/tensor.hpp"

namespace dpvqa {

// Differentiable operations. Unless stated otherwise "trailing axis" is the
// last axis, and a binary op accepts either equal shapes or a right operand
// whose shape is a trailing suffix of the left operand's shape (broadcast
// over the leading axes).

/// y = x·wᵀ + b over the trailing axis of x. x: [..., n], w: [m, n], b: [m].
/// Each output is accumulated over n in ascending order, then b is added.
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);
/// Bias-free variant.
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w);

/// Max-subtracted softmax over the trailing axis.
template <class T>
Tensor<T> softmax(const Tensor<T>& x);

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis);
template <class T>
Tensor<T> concat(std::initializer_list<Tensor<T>> parts, std::size_t axis) {
  std::vector<Tensor<T>> v(parts);
  return concat(std::span<const Tensor<T>>(v), axis);
}

/// Stacks equal-shape tensors along a new leading axis.
template <class T>
Tensor<T> stack(std::span<const Tensor<T>> parts);

/// Sum of equal-shape tensors, accumulated in list order.
template <class T>
Tensor<T> add_n(std::span<const Tensor<T>> parts);

template <class T>
Tensor<T> elu(const Tensor<T>& x);
template <class T>
Tensor<T> relu(const Tensor<T>& x);
template <class T>
Tensor<T> tanh(const Tensor<T>& x);
template <class T>
Tensor<T> sigmoid(const Tensor<T>& x);

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Rows of x along axis 0: out[i] = x[indices[i]].
template <class T>
Tensor<T> index_select(const Tensor<T>& x, std::span<const std::size_t> indices);
/// x[i] with axis 0 removed (a rank-1 input yields shape [1]).
template <class T>
Tensor<T> select(const Tensor<T>& x, std::size_t i);
/// x[..., begin:begin+len].
template <class T>
Tensor<T> slice_last(const Tensor<T>& x, std::size_t begin, std::size_t len);

/// Sum of all elements, shape [1].
template <class T>
Tensor<T> sum(const Tensor<T>& x);
/// Sum over one axis (removed from the shape), accumulated in index order.
template <class T>
Tensor<T> reduce_sum(const Tensor<T>& x, std::size_t axis);
template <class T>
Tensor<T> mean(const Tensor<T>& x, std::size_t axis);

/// out[a, ...] = Σ_b weights[a, b] · values[a, b, ...]. weights: [A, B], values: [A, B, ...].
template <class T>
Tensor<T> weighted_sum(const Tensor<T>& weights, const Tensor<T>& values);

template <class T>
Tensor<T> scale(const Tensor<T>& x, T factor);
template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset);

/// −log softmax(logits)[label] for a rank-1 logit vector, shape [1].
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::size_t label);
/// (prediction − target)² for a single-element prediction, shape [1].
template <class T>
Tensor<T> squared_error(const Tensor<T>& prediction, T target);

/// Inverted dropout with a mask drawn from `seed`; identity when rate == 0.
template <class T>
Tensor<T> dropout(const Tensor<T>& x, double rate, std::uint64_t seed);

}  // namespace dpvqa
