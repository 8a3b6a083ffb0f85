#pragma once

#include <cmath>
#include <cstring>
#include <numeric>

#include "gdnet/tensor.hpp"

namespace gdnet {

namespace detail {

template <typename T>
std::shared_ptr<TensorNode<T>> make_node(
    const char* op, Shape shape, std::vector<T> value,
    std::vector<std::shared_ptr<TensorNode<T>>> parents,
    std::function<void(TensorNode<T>&)> backprop) {
  auto n = std::make_shared<TensorNode<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  bool rg = false;
  for (auto& p : parents) rg = rg || p->requires_grad;
  n->requires_grad = rg;
  if (rg) {  // graph is only recorded when some input needs gradient
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

inline std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

inline Shape broadcast_shapes(const char* op, const Shape& a, const Shape& b) {
  const std::size_t nd = std::max(a.size(), b.size());
  Shape out(nd, 1);
  for (std::size_t i = 0; i < nd; ++i) {
    const std::size_t ea = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
    const std::size_t eb = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
    if (ea != eb && ea != 1 && eb != 1)
      fail(op, "shapes " + shape_str(a) + " and " + shape_str(b) +
                   " are not broadcast-compatible");
    out[i] = std::max(ea, eb);
  }
  return out;
}

// Strides of `in` expanded right-aligned against `out`; 0 on broadcast axes.
inline std::vector<std::size_t> broadcast_strides(const Shape& in,
                                                  const Shape& out) {
  auto st = row_major_strides(in);
  std::vector<std::size_t> r(out.size(), 0);
  const std::size_t off = out.size() - in.size();
  for (std::size_t i = 0; i < in.size(); ++i)
    r[off + i] = (in[i] == 1 && out[off + i] != 1) ? 0 : st[i];
  return r;
}

// Odometer over `out`, yielding flat offsets into two broadcast inputs.
template <typename Fn>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, Fn&& fn) {
  const std::size_t n = numel(out);
  std::vector<std::size_t> idx(out.size(), 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < n; ++o) {
    fn(o, ia, ib);
    for (std::size_t d = out.size(); d-- > 0;) {
      ia += sa[d];
      ib += sb[d];
      if (++idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

// Deterministic row-major GEMM kernels (C += op(A)·op(B)).
template <typename T>
void gemm_nn(const T* A, const T* B, T* C, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const T a = A[i * k + p];
      const T* brow = B + p * n;
      T* crow = C + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
}

template <typename T>
void gemm_nt(const T* A, const T* B, T* C, std::size_t m, std::size_t k,
             std::size_t n) {  // A m×k, B n×k
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T acc = 0;
      const T* arow = A + i * k;
      const T* brow = B + j * k;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      C[i * n + j] += acc;
    }
}

template <typename T>
void gemm_tn(const T* A, const T* B, T* C, std::size_t m, std::size_t k,
             std::size_t n) {  // A k×m, B k×n
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < m; ++i) {
      const T a = A[p * m + i];
      const T* brow = B + p * n;
      T* crow = C + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
    }
}

// Generic broadcasting binary op. fv computes the value, da/db the partial
// derivatives w.r.t. each operand at a given element.
template <typename T, typename FV, typename DA, typename DB>
Tensor<T> binary_op(const char* op, const Tensor<T>& a, const Tensor<T>& b,
                    FV fv, DA da, DB db) {
  auto an = a.node();
  auto bn = b.node();
  const Shape out = broadcast_shapes(op, an->shape, bn->shape);
  const auto sa = broadcast_strides(an->shape, out);
  const auto sb = broadcast_strides(bn->shape, out);
  std::vector<T> v(numel(out));
  if (an->shape == bn->shape) {
    for (std::size_t i = 0; i < v.size(); ++i)
      v[i] = fv(an->value[i], bn->value[i]);
  } else {
    for_each_broadcast(out, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      v[o] = fv(an->value[ia], bn->value[ib]);
    });
  }
  auto backprop = [out, sa, sb, da, db](TensorNode<T>& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    for_each_broadcast(out, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
      const T g = n.grad[o];
      if (pa.requires_grad) pa.grad[ia] += g * da(pa.value[ia], pb.value[ib]);
      if (pb.requires_grad) pb.grad[ib] += g * db(pa.value[ia], pb.value[ib]);
    });
  };
  return Tensor<T>(make_node<T>(op, out, std::move(v), {an, bn}, backprop));
}

template <typename T, typename FV, typename DF>
Tensor<T> unary_op(const char* op, const Tensor<T>& x, FV fv, DF df) {
  auto xn = x.node();
  std::vector<T> v(xn->value.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = fv(xn->value[i]);
  auto backprop = [df](TensorNode<T>& n) {
    auto& p = *n.parents[0];
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      p.grad[i] += n.grad[i] * df(p.value[i], n.value[i]);
  };
  return Tensor<T>(make_node<T>(op, xn->shape, std::move(v), {xn}, backprop));
}

}  // namespace detail

// ---- elementwise ----

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op<T>("add", a, b, [](T x, T y) { return x + y; },
                              [](T, T) { return T(1); }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op<T>("sub", a, b, [](T x, T y) { return x - y; },
                              [](T, T) { return T(1); }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op<T>("mul", a, b, [](T x, T y) { return x * y; },
                              [](T, T y) { return y; }, [](T x, T) { return x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op<T>("div", a, b, [](T x, T y) { return x / y; },
                              [](T, T y) { return T(1) / y; },
                              [](T x, T y) { return -x / (y * y); });
}

template <typename T>
Tensor<T> scalar_mul(const Tensor<T>& x, T c) {
  return detail::unary_op<T>("scalar_mul", x, [c](T v) { return c * v; },
                             [c](T, T) { return c; });
}

template <typename T>
Tensor<T> scalar_add(const Tensor<T>& x, T c) {
  return detail::unary_op<T>("scalar_add", x, [c](T v) { return v + c; },
                             [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return scalar_mul(x, T(-1));
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return detail::unary_op<T>("exp", x, [](T v) { return std::exp(v); },
                             [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  for (T v : x.data())
    if (!(v > T(0))) fail("log", "operand must be strictly positive, got " + std::to_string(v));
  return detail::unary_op<T>("log", x, [](T v) { return std::log(v); },
                             [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  for (T v : x.data())
    if (!(v >= T(0))) fail("sqrt", "operand must be nonnegative, got " + std::to_string(v));
  return detail::unary_op<T>("sqrt", x, [](T v) { return std::sqrt(v); },
                             [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return detail::unary_op<T>("abs", x, [](T v) { return std::abs(v); },
                             [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary_op<T>("relu", x, [](T v) { return v > T(0) ? v : T(0); },
                             [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  return detail::unary_op<T>(
      "gelu", x,
      [](T v) { return T(0.5) * v * (T(1) + T(std::erf(double(v) * inv_sqrt2))); },
      [](T v, T) {
        const double cdf = 0.5 * (1.0 + std::erf(double(v) * inv_sqrt2));
        const double pdf = inv_sqrt2pi * std::exp(-0.5 * double(v) * double(v));
        return T(cdf + double(v) * pdf);
      });
}

// ---- softmax over the last axis ----

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  auto xn = x.node();
  if (xn->shape.empty()) fail("softmax", "rank-0 tensor");
  const std::size_t cols = xn->shape.back();
  const std::size_t rows = numel(xn->shape) / cols;
  std::vector<T> v(xn->value.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xn->value.data() + r * cols;
    T* out = v.data() + r * cols;
    T mx = in[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, in[j]);
    T sum = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      out[j] = std::exp(in[j] - mx);
      sum += out[j];
    }
    const T inv = T(1) / sum;
    for (std::size_t j = 0; j < cols; ++j) out[j] *= inv;
  }
  auto backprop = [rows, cols](TensorNode<T>& n) {
    auto& p = *n.parents[0];
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = n.value.data() + r * cols;
      const T* g = n.grad.data() + r * cols;
      T dot = 0;
      for (std::size_t j = 0; j < cols; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < cols; ++j)
        p.grad[r * cols + j] += y[j] * (g[j] - dot);
    }
  };
  return Tensor<T>(detail::make_node<T>("softmax", xn->shape, std::move(v), {xn}, backprop));
}

// ---- matmul / transpose ----

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  auto an = a.node();
  auto bn = b.node();
  if (an->shape.size() != 2 || bn->shape.size() != 2)
    fail("matmul", "expects 2-D operands, got " + shape_str(an->shape) + " and " +
                       shape_str(bn->shape));
  const std::size_t m = an->shape[0], k = an->shape[1];
  const std::size_t k2 = bn->shape[0], n = bn->shape[1];
  if (k != k2)
    fail("matmul", "inner dimensions differ: " + shape_str(an->shape) + " vs " +
                       shape_str(bn->shape));
  std::vector<T> v(m * n, T(0));
  detail::gemm_nn(an->value.data(), bn->value.data(), v.data(), m, k, n);
  auto backprop = [m, k, n](TensorNode<T>& nd) {
    auto& pa = *nd.parents[0];
    auto& pb = *nd.parents[1];
    if (pa.requires_grad)  // dA = G·Bᵀ
      detail::gemm_nt(nd.grad.data(), pb.value.data(), pa.grad.data(), m, n, k);
    if (pb.requires_grad)  // dB = Aᵀ·G
      detail::gemm_tn(pa.value.data(), nd.grad.data(), pb.grad.data(), k, m, n);
  };
  return Tensor<T>(detail::make_node<T>("matmul", {m, n}, std::move(v), {an, bn}, backprop));
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  auto xn = x.node();
  if (xn->shape.size() != 2)
    fail("transpose", "expects 2-D operand, got " + shape_str(xn->shape));
  const std::size_t m = xn->shape[0], n = xn->shape[1];
  std::vector<T> v(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) v[j * m + i] = xn->value[i * n + j];
  auto backprop = [m, n](TensorNode<T>& nd) {
    auto& p = *nd.parents[0];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += nd.grad[j * m + i];
  };
  return Tensor<T>(detail::make_node<T>("transpose", {n, m}, std::move(v), {xn}, backprop));
}

// ---- reductions ----

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  auto xn = x.node();
  T acc = 0;  // sequential left-to-right for run-to-run determinism
  for (T v : xn->value) acc += v;
  auto backprop = [](TensorNode<T>& nd) {
    auto& p = *nd.parents[0];
    const T g = nd.grad[0];
    for (auto& gv : p.grad) gv += g;
  };
  return Tensor<T>(detail::make_node<T>("sum", {1}, {acc}, {xn}, backprop));
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scalar_mul(sum(x), T(1) / T(x.size()));
}

// ---- shape manipulation ----

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  auto xn = x.node();
  if (numel(shape) != xn->value.size())
    fail("reshape", "cannot reshape " + shape_str(xn->shape) + " to " + shape_str(shape));
  std::vector<T> v = xn->value;
  auto backprop = [](TensorNode<T>& nd) {
    auto& p = *nd.parents[0];
    for (std::size_t i = 0; i < nd.grad.size(); ++i) p.grad[i] += nd.grad[i];
  };
  return Tensor<T>(detail::make_node<T>("reshape", std::move(shape), std::move(v), {xn}, backprop));
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis) {
  if (xs.empty()) fail("concat", "empty input list");
  const Shape& s0 = xs[0].shape();
  if (axis >= s0.size()) fail("concat", "axis out of range");
  Shape out = s0;
  out[axis] = 0;
  for (const auto& t : xs) {
    const Shape& s = t.shape();
    if (s.size() != s0.size()) fail("concat", "rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d)
      if (d != axis && s[d] != s0[d])
        fail("concat", "shape mismatch off-axis: " + shape_str(s) + " vs " + shape_str(s0));
    out[axis] += s[axis];
  }
  const std::size_t outer = std::accumulate(s0.begin(), s0.begin() + axis,
                                            std::size_t(1), std::multiplies<>());
  const std::size_t inner = std::accumulate(s0.begin() + axis + 1, s0.end(),
                                            std::size_t(1), std::multiplies<>());
  std::vector<T> v(numel(out));
  const std::size_t out_block = out[axis] * inner;
  std::vector<std::shared_ptr<TensorNode<T>>> parents;
  std::vector<std::size_t> offsets;  // element offset of each input inside a block
  std::size_t off = 0;
  for (const auto& t : xs) {
    parents.push_back(t.node());
    offsets.push_back(off);
    const std::size_t blk = t.shape()[axis] * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(t.data().data() + o * blk, blk, v.data() + o * out_block + off);
    off += blk;
  }
  auto backprop = [outer, out_block, offsets](TensorNode<T>& nd) {
    for (std::size_t pi = 0; pi < nd.parents.size(); ++pi) {
      auto& p = *nd.parents[pi];
      if (!p.requires_grad) continue;
      const std::size_t blk = p.value.size() / outer;
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < blk; ++i)
          p.grad[o * blk + i] += nd.grad[o * out_block + offsets[pi] + i];
    }
  };
  return Tensor<T>(detail::make_node<T>("concat", std::move(out), std::move(v),
                                        std::move(parents), backprop));
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start,
                std::size_t end) {
  auto xn = x.node();
  const Shape& s = xn->shape;
  if (axis >= s.size()) fail("slice", "axis out of range for " + shape_str(s));
  if (start >= end || end > s[axis])
    fail("slice", "range [" + std::to_string(start) + "," + std::to_string(end) +
                      ") invalid for axis extent " + std::to_string(s[axis]));
  Shape out = s;
  out[axis] = end - start;
  const std::size_t outer = std::accumulate(s.begin(), s.begin() + axis,
                                            std::size_t(1), std::multiplies<>());
  const std::size_t inner = std::accumulate(s.begin() + axis + 1, s.end(),
                                            std::size_t(1), std::multiplies<>());
  const std::size_t in_block = s[axis] * inner;
  const std::size_t out_block = (end - start) * inner;
  std::vector<T> v(numel(out));
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(xn->value.data() + o * in_block + start * inner, out_block,
                v.data() + o * out_block);
  auto backprop = [outer, in_block, out_block, start, inner](TensorNode<T>& nd) {
    auto& p = *nd.parents[0];
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < out_block; ++i)
        p.grad[o * in_block + start * inner + i] += nd.grad[o * out_block + i];
  };
  return Tensor<T>(detail::make_node<T>("slice", std::move(out), std::move(v), {xn}, backprop));
}

template <typename T>
Tensor<T> broadcast_to(const Tensor<T>& x, const Shape& target) {
  auto xn = x.node();
  // validate right-aligned compatibility
  detail::broadcast_shapes("broadcast_to", xn->shape, target);
  const Shape probe = detail::broadcast_shapes("broadcast_to", xn->shape, target);
  if (probe != target)
    fail("broadcast_to", shape_str(xn->shape) + " does not broadcast to " + shape_str(target));
  const auto sx = detail::broadcast_strides(xn->shape, target);
  const std::vector<std::size_t> szero(target.size(), 0);
  std::vector<T> v(numel(target));
  detail::for_each_broadcast(target, sx, szero,
                             [&](std::size_t o, std::size_t ix, std::size_t) { v[o] = xn->value[ix]; });
  auto backprop = [target, sx, szero](TensorNode<T>& nd) {
    auto& p = *nd.parents[0];
    detail::for_each_broadcast(target, sx, szero, [&](std::size_t o, std::size_t ix, std::size_t) {
      p.grad[ix] += nd.grad[o];
    });
  };
  return Tensor<T>(detail::make_node<T>("broadcast_to", target, std::move(v), {xn}, backprop));
}

// ---- conv2d (CHW layout) ----

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 std::size_t stride = 1, std::size_t pad = 0) {
  auto xn = x.node();
  auto wn = w.node();
  auto bn = bias.node();
  if (xn->shape.size() != 3) fail("conv2d", "input must be [C,H,W], got " + shape_str(xn->shape));
  if (wn->shape.size() != 4) fail("conv2d", "weight must be [Co,Ci,kh,kw], got " + shape_str(wn->shape));
  const std::size_t ci = xn->shape[0], h = xn->shape[1], wd = xn->shape[2];
  const std::size_t co = wn->shape[0], kh = wn->shape[2], kw = wn->shape[3];
  if (wn->shape[1] != ci)
    fail("conv2d", "channel mismatch: input " + shape_str(xn->shape) + " weight " + shape_str(wn->shape));
  if (bn->shape != Shape{co}) fail("conv2d", "bias must be [Co]");
  if (h + 2 * pad < kh || wd + 2 * pad < kw) fail("conv2d", "kernel larger than padded input");
  const std::size_t ho = (h + 2 * pad - kh) / stride + 1;
  const std::size_t wo = (wd + 2 * pad - kw) / stride + 1;

  std::vector<T> v(co * ho * wo);
  for (std::size_t c = 0; c < co; ++c)
    std::fill_n(v.data() + c * ho * wo, ho * wo, bn->value[c]);
  for (std::size_t c = 0; c < co; ++c)
    for (std::size_t q = 0; q < ci; ++q)
      for (std::size_t ky = 0; ky < kh; ++ky)
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const T wv = wn->value[((c * ci + q) * kh + ky) * kw + kx];
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const std::ptrdiff_t iy = std::ptrdiff_t(oy * stride + ky) - std::ptrdiff_t(pad);
            if (iy < 0 || iy >= std::ptrdiff_t(h)) continue;
            const T* xrow = xn->value.data() + (q * h + iy) * wd;
            T* orow = v.data() + (c * ho + oy) * wo;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const std::ptrdiff_t ix = std::ptrdiff_t(ox * stride + kx) - std::ptrdiff_t(pad);
              if (ix < 0 || ix >= std::ptrdiff_t(wd)) continue;
              orow[ox] += wv * xrow[ix];
            }
          }
        }

  auto backprop = [ci, h, wd, co, kh, kw, ho, wo, stride, pad](TensorNode<T>& nd) {
    auto& px = *nd.parents[0];
    auto& pw = *nd.parents[1];
    auto& pb = *nd.parents[2];
    if (pb.requires_grad)
      for (std::size_t c = 0; c < co; ++c) {
        T acc = 0;
        const T* g = nd.grad.data() + c * ho * wo;
        for (std::size_t i = 0; i < ho * wo; ++i) acc += g[i];
        pb.grad[c] += acc;
      }
    for (std::size_t c = 0; c < co; ++c)
      for (std::size_t q = 0; q < ci; ++q)
        for (std::size_t ky = 0; ky < kh; ++ky)
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::size_t wi = ((c * ci + q) * kh + ky) * kw + kx;
            const T wv = pw.value[wi];
            T wacc = 0;
            for (std::size_t oy = 0; oy < ho; ++oy) {
              const std::ptrdiff_t iy = std::ptrdiff_t(oy * stride + ky) - std::ptrdiff_t(pad);
              if (iy < 0 || iy >= std::ptrdiff_t(h)) continue;
              const T* xrow = px.value.data() + (q * h + iy) * wd;
              T* gxrow = px.requires_grad ? px.grad.data() + (q * h + iy) * wd : nullptr;
              const T* grow = nd.grad.data() + (c * ho + oy) * wo;
              for (std::size_t ox = 0; ox < wo; ++ox) {
                const std::ptrdiff_t ix = std::ptrdiff_t(ox * stride + kx) - std::ptrdiff_t(pad);
                if (ix < 0 || ix >= std::ptrdiff_t(wd)) continue;
                wacc += grow[ox] * xrow[ix];
                if (gxrow) gxrow[ix] += grow[ox] * wv;
              }
            }
            if (pw.requires_grad) pw.grad[wi] += wacc;
          }
  };
  return Tensor<T>(detail::make_node<T>("conv2d", {co, ho, wo}, std::move(v),
                                        {xn, wn, bn}, backprop));
}

// ---- bilinear upsampling (CHW, half-pixel centers) ----

template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, std::size_t ho, std::size_t wo) {
  auto xn = x.node();
  if (xn->shape.size() != 3)
    fail("upsample_bilinear", "input must be [C,H,W], got " + shape_str(xn->shape));
  const std::size_t c = xn->shape[0], h = xn->shape[1], w = xn->shape[2];
  if (ho == 0 || wo == 0) fail("upsample_bilinear", "target extent must be positive");

  struct Tap {
    std::size_t i0, i1;
    T w1;  // weight on i1; i0 gets 1-w1
  };
  auto make_taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> taps(out);
    for (std::size_t o = 0; o < out; ++o) {
      double src = (double(o) + 0.5) * double(in) / double(out) - 0.5;
      src = std::max(0.0, std::min(src, double(in - 1)));
      const std::size_t i0 = std::size_t(src);
      const std::size_t i1 = std::min(i0 + 1, in - 1);
      taps[o] = {i0, i1, T(src - double(i0))};
    }
    return taps;
  };
  const auto ty = make_taps(h, ho);
  const auto tx = make_taps(w, wo);

  std::vector<T> v(c * ho * wo);
  for (std::size_t q = 0; q < c; ++q)
    for (std::size_t oy = 0; oy < ho; ++oy) {
      const T* r0 = xn->value.data() + (q * h + ty[oy].i0) * w;
      const T* r1 = xn->value.data() + (q * h + ty[oy].i1) * w;
      const T wy = ty[oy].w1;
      T* orow = v.data() + (q * ho + oy) * wo;
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const T wx = tx[ox].w1;
        const T a = r0[tx[ox].i0] * (T(1) - wx) + r0[tx[ox].i1] * wx;
        const T b = r1[tx[ox].i0] * (T(1) - wx) + r1[tx[ox].i1] * wx;
        orow[ox] = a * (T(1) - wy) + b * wy;
      }
    }
  auto backprop = [c, h, w, ho, wo, ty, tx](TensorNode<T>& nd) {
    auto& p = *nd.parents[0];
    for (std::size_t q = 0; q < c; ++q)
      for (std::size_t oy = 0; oy < ho; ++oy) {
        T* g0 = p.grad.data() + (q * h + ty[oy].i0) * w;
        T* g1 = p.grad.data() + (q * h + ty[oy].i1) * w;
        const T wy = ty[oy].w1;
        const T* grow = nd.grad.data() + (q * ho + oy) * wo;
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const T wx = tx[ox].w1;
          const T g = grow[ox];
          g0[tx[ox].i0] += g * (T(1) - wy) * (T(1) - wx);
          g0[tx[ox].i1] += g * (T(1) - wy) * wx;
          g1[tx[ox].i0] += g * wy * (T(1) - wx);
          g1[tx[ox].i1] += g * wy * wx;
        }
      }
  };
  return Tensor<T>(detail::make_node<T>("upsample_bilinear", {c, ho, wo},
                                        std::move(v), {xn}, backprop));
}

// ---- constants ----

template <typename T>
Tensor<T> identity_matrix(std::size_t n) {
  std::vector<T> v(n * n, T(0));
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = T(1);
  return Tensor<T>::from_data({n, n}, std::move(v));
}

}  // namespace gdnet
