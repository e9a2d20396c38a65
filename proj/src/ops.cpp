#include "dpvqa/ops.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace dpvqa {

namespace {

template <class T>
using NodePtr = std::shared_ptr<Node<T>>;

using detail::make_result;

struct Broadcast {
  Shape out;
  std::size_t n_out = 0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
};

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Broadcast broadcast_shapes(const char* op, const Shape& a, const Shape& b) {
  Broadcast bc;
  if (a == b || is_suffix(b, a)) {
    bc.out = a;
  } else if (is_suffix(a, b)) {
    bc.out = b;
  } else {
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                         shape_str(b));
  }
  bc.n_out = shape_numel(bc.out);
  bc.n_a = shape_numel(a);
  bc.n_b = shape_numel(b);
  return bc;
}

// Calls f(i, ia, ib) for every output index with the broadcast operand indices.
template <class F>
void for_broadcast(const Broadcast& bc, F&& f) {
  std::size_t block = std::min(bc.n_a, bc.n_b);
  bool a_full = bc.n_a == bc.n_out;
  bool b_full = bc.n_b == bc.n_out;
  for (std::size_t start = 0; start < bc.n_out; start += block) {
    for (std::size_t k = 0; k < block; ++k) {
      std::size_t i = start + k;
      f(i, a_full ? i : k, b_full ? i : k);
    }
  }
}

template <class T>
Tensor<T> unary(const Tensor<T>& x, T (*fwd)(T), T (*dydx)(T x, T y)) {
  std::vector<T> out(x.numel());
  auto xs = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xs[i]);
  return make_result<T>(x.shape(), std::move(out), {x.node()}, [dydx](Node<T>& self) {
    auto& in = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      in.grad[i] += self.grad[i] * dydx(in.value[i], self.value[i]);
    }
  });
}

template <class T>
T elu_fwd(T x) {
  return x >= T(0) ? x : std::expm1(x);
}
template <class T>
T elu_grad(T x, T y) {
  return x >= T(0) ? T(1) : y + T(1);
}
template <class T>
T relu_fwd(T x) {
  return x > T(0) ? x : T(0);
}
template <class T>
T relu_grad(T x, T) {
  return x > T(0) ? T(1) : T(0);
}
template <class T>
T tanh_fwd(T x) {
  return std::tanh(x);
}
template <class T>
T tanh_grad(T, T y) {
  return T(1) - y * y;
}
template <class T>
T sigmoid_fwd(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  T e = std::exp(x);
  return e / (T(1) + e);
}
template <class T>
T sigmoid_grad(T, T y) {
  return y * (T(1) - y);
}

template <class T>
Tensor<T> linear_impl(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (ws.size() != 2 || xs.back() != ws[1]) {
    throw DimensionError("linear: input " + shape_str(xs) + " does not match weight " +
                         shape_str(ws));
  }
  const std::size_t m = ws[0];
  const std::size_t n = ws[1];
  if (b && (b->rank() != 1 || b->extent(0) != m)) {
    throw DimensionError("linear: bias " + shape_str(b->shape()) + " does not match weight " +
                         shape_str(ws));
  }
  const std::size_t rows = x.numel() / n;

  auto wv = w.data();
  std::vector<T> wt(n * m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) wt[j * m + i] = wv[i * n + j];
  }

  auto xv = x.data();
  std::vector<T> out(rows * m);
  std::vector<T> acc(m);
  for (std::size_t r = 0; r < rows; ++r) {
    std::fill(acc.begin(), acc.end(), T(0));
    const T* xr = xv.data() + r * n;
    for (std::size_t j = 0; j < n; ++j) {
      const T xj = xr[j];
      if (xj == T(0)) continue;  // exact: adding ±0 leaves a finite sum unchanged
      const T* wrow = wt.data() + j * m;
      T* a = acc.data();
      for (std::size_t i = 0; i < m; ++i) a[i] += xj * wrow[i];
    }
    T* o = out.data() + r * m;
    if (b) {
      auto bv = b->data();
      for (std::size_t i = 0; i < m; ++i) o[i] = acc[i] + bv[i];
    } else {
      std::copy(acc.begin(), acc.end(), o);
    }
  }

  Shape out_shape = xs;
  out_shape.back() = m;
  std::vector<NodePtr<T>> inputs{x.node(), w.node()};
  if (b) inputs.push_back(b->node());
  return make_result<T>(std::move(out_shape), std::move(out), std::move(inputs),
                        [rows, m, n](Node<T>& self) {
                          auto& xn = *self.inputs[0];
                          auto& wn = *self.inputs[1];
                          const T* dy = self.grad.data();
                          if (xn.requires_grad) {
                            for (std::size_t r = 0; r < rows; ++r) {
                              T* dx = xn.grad.data() + r * n;
                              for (std::size_t i = 0; i < m; ++i) {
                                const T g = dy[r * m + i];
                                if (g == T(0)) continue;
                                const T* wrow = wn.value.data() + i * n;
                                for (std::size_t j = 0; j < n; ++j) dx[j] += g * wrow[j];
                              }
                            }
                          }
                          if (wn.requires_grad) {
                            for (std::size_t r = 0; r < rows; ++r) {
                              const T* xr = xn.value.data() + r * n;
                              for (std::size_t i = 0; i < m; ++i) {
                                const T g = dy[r * m + i];
                                if (g == T(0)) continue;
                                T* dw = wn.grad.data() + i * n;
                                for (std::size_t j = 0; j < n; ++j) dw[j] += g * xr[j];
                              }
                            }
                          }
                          if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
                            T* db = self.inputs[2]->grad.data();
                            for (std::size_t r = 0; r < rows; ++r) {
                              for (std::size_t i = 0; i < m; ++i) db[i] += dy[r * m + i];
                            }
                          }
                        });
}

}  // namespace

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  return linear_impl(x, w, &b);
}

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w) {
  return linear_impl<T>(x, w, nullptr);
}

template <class T>
Tensor<T> softmax(const Tensor<T>& x) {
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  auto xv = x.data();
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data() + r * n;
    T* o = out.data() + r * n;
    T mx = *std::max_element(xr, xr + n);
    T total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      o[i] = std::exp(xr[i] - mx);
      total += o[i];
    }
    for (std::size_t i = 0; i < n; ++i) o[i] /= total;
  }
  return make_result<T>(x.shape(), std::move(out), {x.node()}, [rows, n](Node<T>& self) {
    auto& in = *self.inputs[0];
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = self.value.data() + r * n;
      const T* dy = self.grad.data() + r * n;
      T dot = 0;
      for (std::size_t i = 0; i < n; ++i) dot += dy[i] * y[i];
      T* dx = in.grad.data() + r * n;
      for (std::size_t i = 0; i < n; ++i) dx[i] += y[i] * (dy[i] - dot);
    }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  auto bc = broadcast_shapes("mul", a.shape(), b.shape());
  std::vector<T> out(bc.n_out);
  auto av = a.data();
  auto bv = b.data();
  for_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = av[ia] * bv[ib]; });
  return make_result<T>(bc.out, std::move(out), {a.node(), b.node()}, [bc](Node<T>& self) {
    auto& an = *self.inputs[0];
    auto& bn = *self.inputs[1];
    for_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      if (an.requires_grad) an.grad[ia] += self.grad[i] * bn.value[ib];
      if (bn.requires_grad) bn.grad[ib] += self.grad[i] * an.value[ia];
    });
  });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  auto bc = broadcast_shapes("add", a.shape(), b.shape());
  std::vector<T> out(bc.n_out);
  auto av = a.data();
  auto bv = b.data();
  for_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = av[ia] + bv[ib]; });
  return make_result<T>(bc.out, std::move(out), {a.node(), b.node()}, [bc](Node<T>& self) {
    auto& an = *self.inputs[0];
    auto& bn = *self.inputs[1];
    for_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      if (an.requires_grad) an.grad[ia] += self.grad[i];
      if (bn.requires_grad) bn.grad[ib] += self.grad[i];
    });
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  auto bc = broadcast_shapes("sub", a.shape(), b.shape());
  std::vector<T> out(bc.n_out);
  auto av = a.data();
  auto bv = b.data();
  for_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = av[ia] - bv[ib]; });
  return make_result<T>(bc.out, std::move(out), {a.node(), b.node()}, [bc](Node<T>& self) {
    auto& an = *self.inputs[0];
    auto& bn = *self.inputs[1];
    for_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      if (an.requires_grad) an.grad[ia] += self.grad[i];
      if (bn.requires_grad) bn.grad[ib] -= self.grad[i];
    });
  });
}

template <class T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> chunk(parts.size());
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Shape& s = parts[p].shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) ok = false;
    }
    if (!ok) {
      throw DimensionError("concat: shape " + shape_str(s) + " incompatible with " +
                           shape_str(first) + " on axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  std::size_t row = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    chunk[p] = parts[p].numel() / outer;
    row += chunk[p];
  }

  std::vector<T> out(outer * row);
  std::vector<NodePtr<T>> inputs;
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto v = parts[p].data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.data() + o * chunk[p], chunk[p], out.data() + o * row + offset);
    }
    offset += chunk[p];
    inputs.push_back(parts[p].node());
  }
  return make_result<T>(std::move(out_shape), std::move(out), std::move(inputs),
                        [outer, row, chunk](Node<T>& self) {
                          std::size_t off = 0;
                          for (std::size_t p = 0; p < self.inputs.size(); ++p) {
                            auto& in = *self.inputs[p];
                            if (in.requires_grad) {
                              for (std::size_t o = 0; o < outer; ++o) {
                                const T* g = self.grad.data() + o * row + off;
                                T* d = in.grad.data() + o * chunk[p];
                                for (std::size_t k = 0; k < chunk[p]; ++k) d[k] += g[k];
                              }
                            }
                            off += chunk[p];
                          }
                        });
}

template <class T>
Tensor<T> stack(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ContractError("stack: no inputs");
  const Shape& first = parts[0].shape();
  for (const auto& p : parts) {
    if (p.shape() != first) {
      throw DimensionError("stack: shape " + shape_str(p.shape()) + " differs from " +
                           shape_str(first));
    }
  }
  const std::size_t n = parts[0].numel();
  std::vector<T> out(n * parts.size());
  std::vector<NodePtr<T>> inputs;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    std::copy_n(parts[p].data().data(), n, out.data() + p * n);
    inputs.push_back(parts[p].node());
  }
  Shape out_shape{parts.size()};
  out_shape.insert(out_shape.end(), first.begin(), first.end());
  return make_result<T>(std::move(out_shape), std::move(out), std::move(inputs), [n](Node<T>& self) {
    for (std::size_t p = 0; p < self.inputs.size(); ++p) {
      auto& in = *self.inputs[p];
      if (!in.requires_grad) continue;
      const T* g = self.grad.data() + p * n;
      for (std::size_t k = 0; k < n; ++k) in.grad[k] += g[k];
    }
  });
}

template <class T>
Tensor<T> add_n(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ContractError("add_n: no inputs");
  const Shape& first = parts[0].shape();
  std::vector<T> out(parts[0].numel(), T(0));
  std::vector<NodePtr<T>> inputs;
  for (const auto& p : parts) {
    if (p.shape() != first) {
      throw DimensionError("add_n: shape " + shape_str(p.shape()) + " differs from " +
                           shape_str(first));
    }
    auto v = p.data();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += v[k];
    inputs.push_back(p.node());
  }
  return make_result<T>(first, std::move(out), std::move(inputs), [](Node<T>& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      for (std::size_t k = 0; k < self.grad.size(); ++k) in->grad[k] += self.grad[k];
    }
  });
}

template <class T>
Tensor<T> elu(const Tensor<T>& x) {
  return unary<T>(x, &elu_fwd<T>, &elu_grad<T>);
}
template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary<T>(x, &relu_fwd<T>, &relu_grad<T>);
}
template <class T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary<T>(x, &tanh_fwd<T>, &tanh_grad<T>);
}
template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary<T>(x, &sigmoid_fwd<T>, &sigmoid_grad<T>);
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>(std::move(shape), std::move(out), {x.node()}, [](Node<T>& self) {
    auto& in = *self.inputs[0];
    for (std::size_t k = 0; k < self.grad.size(); ++k) in.grad[k] += self.grad[k];
  });
}

template <class T>
Tensor<T> index_select(const Tensor<T>& x, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ContractError("index_select: empty index list");
  const std::size_t rows = x.extent(0);
  const std::size_t width = x.numel() / rows;
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<T> out(idx.size() * width);
  auto v = x.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= rows) {
      throw ContractError("index_select: index " + std::to_string(idx[i]) +
                          " out of range for " + shape_str(x.shape()));
    }
    std::copy_n(v.data() + idx[i] * width, width, out.data() + i * width);
  }
  Shape out_shape = x.shape();
  out_shape[0] = idx.size();
  return make_result<T>(std::move(out_shape), std::move(out), {x.node()},
                        [idx = std::move(idx), width](Node<T>& self) {
                          auto& in = *self.inputs[0];
                          for (std::size_t i = 0; i < idx.size(); ++i) {
                            const T* g = self.grad.data() + i * width;
                            T* d = in.grad.data() + idx[i] * width;
                            for (std::size_t k = 0; k < width; ++k) d[k] += g[k];
                          }
                        });
}

template <class T>
Tensor<T> select(const Tensor<T>& x, std::size_t i) {
  const std::size_t rows = x.extent(0);
  if (i >= rows) {
    throw ContractError("select: index " + std::to_string(i) + " out of range for " +
                        shape_str(x.shape()));
  }
  const std::size_t width = x.numel() / rows;
  std::vector<T> out(x.data().begin() + i * width, x.data().begin() + (i + 1) * width);
  Shape out_shape(x.shape().begin() + 1, x.shape().end());
  if (out_shape.empty()) out_shape = {1};
  return make_result<T>(std::move(out_shape), std::move(out), {x.node()}, [i, width](Node<T>& self) {
    auto& in = *self.inputs[0];
    T* d = in.grad.data() + i * width;
    for (std::size_t k = 0; k < width; ++k) d[k] += self.grad[k];
  });
}

template <class T>
Tensor<T> slice_last(const Tensor<T>& x, std::size_t begin, std::size_t len) {
  const std::size_t n = x.shape().back();
  if (len == 0 || begin + len > n) {
    throw DimensionError("slice_last: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + len) + ") out of bounds for " +
                         shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / n;
  std::vector<T> out(rows * len);
  auto v = x.data();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(v.data() + r * n + begin, len, out.data() + r * len);
  Shape out_shape = x.shape();
  out_shape.back() = len;
  return make_result<T>(std::move(out_shape), std::move(out), {x.node()},
                        [rows, n, begin, len](Node<T>& self) {
                          auto& in = *self.inputs[0];
                          for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t k = 0; k < len; ++k) {
                              in.grad[r * n + begin + k] += self.grad[r * len + k];
                            }
                          }
                        });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.data()) total += v;
  return make_result<T>({1}, {total}, {x.node()}, [](Node<T>& self) {
    auto& in = *self.inputs[0];
    for (auto& g : in.grad) g += self.grad[0];
  });
}

template <class T>
Tensor<T> reduce_sum(const Tensor<T>& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) {
    throw DimensionError("reduce_sum: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t n = s[axis];
  std::vector<T> out(outer * inner, T(0));
  auto v = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    T* dst = out.data() + o * inner;
    for (std::size_t a = 0; a < n; ++a) {
      const T* src = v.data() + (o * n + a) * inner;
      for (std::size_t k = 0; k < inner; ++k) dst[k] += src[k];
    }
  }
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (out_shape.empty()) out_shape = {1};
  return make_result<T>(std::move(out_shape), std::move(out), {x.node()},
                        [outer, inner, n](Node<T>& self) {
                          auto& in = *self.inputs[0];
                          for (std::size_t o = 0; o < outer; ++o) {
                            const T* g = self.grad.data() + o * inner;
                            for (std::size_t a = 0; a < n; ++a) {
                              T* d = in.grad.data() + (o * n + a) * inner;
                              for (std::size_t k = 0; k < inner; ++k) d[k] += g[k];
                            }
                          }
                        });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) {
    throw DimensionError("mean: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t n = s[axis];
  const T count = static_cast<T>(n);
  std::vector<T> out(outer * inner, T(0));
  auto v = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    T* dst = out.data() + o * inner;
    for (std::size_t a = 0; a < n; ++a) {
      const T* src = v.data() + (o * n + a) * inner;
      for (std::size_t k = 0; k < inner; ++k) dst[k] += src[k];
    }
    for (std::size_t k = 0; k < inner; ++k) dst[k] /= count;
  }
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (out_shape.empty()) out_shape = {1};
  return make_result<T>(std::move(out_shape), std::move(out), {x.node()},
                        [outer, inner, n, count](Node<T>& self) {
                          auto& in = *self.inputs[0];
                          for (std::size_t o = 0; o < outer; ++o) {
                            const T* g = self.grad.data() + o * inner;
                            for (std::size_t a = 0; a < n; ++a) {
                              T* d = in.grad.data() + (o * n + a) * inner;
                              for (std::size_t k = 0; k < inner; ++k) d[k] += g[k] / count;
                            }
                          }
                        });
}

template <class T>
Tensor<T> weighted_sum(const Tensor<T>& weights, const Tensor<T>& values) {
  const Shape& ws = weights.shape();
  const Shape& vs = values.shape();
  if (ws.size() != 2 || vs.size() < 2 || vs[0] != ws[0] || vs[1] != ws[1]) {
    throw DimensionError("weighted_sum: weights " + shape_str(ws) + " do not match values " +
                         shape_str(vs));
  }
  const std::size_t A = ws[0], B = ws[1];
  const std::size_t C = values.numel() / (A * B);
  std::vector<T> out(A * C, T(0));
  auto w = weights.data();
  auto v = values.data();
  for (std::size_t a = 0; a < A; ++a) {
    T* o = out.data() + a * C;
    for (std::size_t b = 0; b < B; ++b) {
      const T wb = w[a * B + b];
      const T* src = v.data() + (a * B + b) * C;
      for (std::size_t c = 0; c < C; ++c) o[c] += wb * src[c];
    }
  }
  Shape out_shape{A};
  out_shape.insert(out_shape.end(), vs.begin() + 2, vs.end());
  if (out_shape.size() == 1) out_shape.push_back(1);
  return make_result<T>(std::move(out_shape), std::move(out), {weights.node(), values.node()},
                        [A, B, C](Node<T>& self) {
                          auto& wn = *self.inputs[0];
                          auto& vn = *self.inputs[1];
                          for (std::size_t a = 0; a < A; ++a) {
                            const T* g = self.grad.data() + a * C;
                            for (std::size_t b = 0; b < B; ++b) {
                              const std::size_t row = (a * B + b) * C;
                              if (wn.requires_grad) {
                                T acc = 0;
                                for (std::size_t c = 0; c < C; ++c) acc += g[c] * vn.value[row + c];
                                wn.grad[a * B + b] += acc;
                              }
                              if (vn.requires_grad) {
                                const T wb = wn.value[a * B + b];
                                for (std::size_t c = 0; c < C; ++c) vn.grad[row + c] += wb * g[c];
                              }
                            }
                          }
                        });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return make_result<T>(x.shape(), std::move(out), {x.node()}, [factor](Node<T>& self) {
    auto& in = *self.inputs[0];
    for (std::size_t k = 0; k < self.grad.size(); ++k) in.grad[k] += self.grad[k] * factor;
  });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v += offset;
  return make_result<T>(x.shape(), std::move(out), {x.node()}, [](Node<T>& self) {
    auto& in = *self.inputs[0];
    for (std::size_t k = 0; k < self.grad.size(); ++k) in.grad[k] += self.grad[k];
  });
}

template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::size_t label) {
  const std::size_t n = logits.numel();
  if (label >= n) {
    throw VocabularyError("cross_entropy: label " + std::to_string(label) +
                          " outside logit vector of size " + std::to_string(n));
  }
  auto x = logits.data();
  T mx = *std::max_element(x.begin(), x.end());
  T total = 0;
  for (T v : x) total += std::exp(v - mx);
  T loss = mx + std::log(total) - x[label];
  return make_result<T>({1}, {loss}, {logits.node()}, [label, n](Node<T>& self) {
    auto& in = *self.inputs[0];
    T m = *std::max_element(in.value.begin(), in.value.end());
    T z = 0;
    for (T v : in.value) z += std::exp(v - m);
    const T g = self.grad[0];
    for (std::size_t k = 0; k < n; ++k) {
      T p = std::exp(in.value[k] - m) / z;
      in.grad[k] += g * (p - (k == label ? T(1) : T(0)));
    }
  });
}

template <class T>
Tensor<T> squared_error(const Tensor<T>& prediction, T target) {
  if (prediction.numel() != 1) {
    throw DimensionError("squared_error: prediction must have one element, got " +
                         shape_str(prediction.shape()));
  }
  T diff = prediction[0] - target;
  return make_result<T>({1}, {diff * diff}, {prediction.node()}, [diff](Node<T>& self) {
    self.inputs[0]->grad[0] += self.grad[0] * T(2) * diff;
  });
}

template <class T>
Tensor<T> dropout(const Tensor<T>& x, double rate, std::uint64_t seed) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ContractError("dropout: rate must be < 1");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(1.0 - rate);
  const T factor = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(x.numel());
  for (auto& m : mask) m = keep(rng) ? factor : T(0);
  auto maskt = Tensor<T>::from_data(x.shape(), std::move(mask));
  return mul(x, maskt);
}

#define DPVQA_INSTANTIATE_OPS(T)                                                     \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);   \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> softmax(const Tensor<T>&);                                      \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> concat(std::span<const Tensor<T>>, std::size_t);                \
  template Tensor<T> stack(std::span<const Tensor<T>>);                              \
  template Tensor<T> add_n(std::span<const Tensor<T>>);                              \
  template Tensor<T> elu(const Tensor<T>&);                                          \
  template Tensor<T> relu(const Tensor<T>&);                                         \
  template Tensor<T> tanh(const Tensor<T>&);                                         \
  template Tensor<T> sigmoid(const Tensor<T>&);                                      \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                               \
  template Tensor<T> index_select(const Tensor<T>&, std::span<const std::size_t>);   \
  template Tensor<T> select(const Tensor<T>&, std::size_t);                          \
  template Tensor<T> slice_last(const Tensor<T>&, std::size_t, std::size_t);         \
  template Tensor<T> sum(const Tensor<T>&);                                          \
  template Tensor<T> reduce_sum(const Tensor<T>&, std::size_t);                      \
  template Tensor<T> mean(const Tensor<T>&, std::size_t);                            \
  template Tensor<T> weighted_sum(const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> scale(const Tensor<T>&, T);                                     \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::size_t);                   \
  template Tensor<T> squared_error(const Tensor<T>&, T);                             \
  template Tensor<T> dropout(const Tensor<T>&, double, std::uint64_t);

DPVQA_INSTANTIATE_OPS(float)
DPVQA_INSTANTIATE_OPS(double)

}  // namespace dpvqa
