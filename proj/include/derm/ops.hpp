#ifndef DERM_OPS_HPP
#define DERM_OPS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "derm/rng.hpp"
#include "derm/tensor.hpp"

// Differentiable operations over Tensor<T>. Every op takes an optional
// Graph<T>*; with a null graph (or all-constant inputs) it is a plain
// forward evaluation. Convolution uses the cross-correlation convention.
// No implicit broadcasting beyond scalar*tensor.

namespace derm::ops {

namespace detail {

// C[m x n] += A[m x k] * B[k x n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      if (av == T(0)) continue;
      const T* brow = b + p * n;
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

// C[m x n] += A[m x k] * B[n x k]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T acc = T(0);
      const T* arow = a + i * k;
      const T* brow = b + j * k;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
}

// C[m x n] += A[k x m]^T * B[k x n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t k, std::size_t m, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < m; ++i) {
      const T av = a[p * m + i];
      if (av == T(0)) continue;
      const T* brow = b + p * n;
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

template <typename T>
bool recording(const Graph<T>* g, const Tensor<T>& a) {
  return g != nullptr && a.node >= 0;
}

template <typename T>
bool recording(const Graph<T>* g, const Tensor<T>& a, const Tensor<T>& b) {
  return g != nullptr && (a.node >= 0 || b.node >= 0);
}

template <typename T>
bool recording(const Graph<T>* g, const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& c) {
  return g != nullptr && (a.node >= 0 || b.node >= 0 || c.node >= 0);
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b)
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(Graph<T>* g, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape) + " and " + shape_str(b.shape));
  const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor<T> c({m, n});
  detail::gemm_nn(a.data.data(), b.data.data(), c.data.data(), m, k, n);
  if (detail::recording(g, a, b)) {
    const int an = a.node, bn = b.node;
    auto ad = a.data;
    auto bd = b.data;
    c.node = g->record(c.size(), {an, bn}, [=](Graph<T>& gr, const std::vector<T>& go) {
      if (an >= 0) detail::gemm_nt(go.data(), bd.data(), gr.grad_buffer(an).data(), m, n, k);
      if (bn >= 0) detail::gemm_tn(ad.data(), go.data(), gr.grad_buffer(bn).data(), m, k, n);
    });
  }
  return c;
}

// Batched matmul: [N,m,k] x [N,k,n] -> [N,m,n]
template <typename T>
Tensor<T> bmm(Graph<T>* g, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.shape[0] != b.shape[0] || a.shape[2] != b.shape[1])
    throw ShapeError("bmm: incompatible shapes " + shape_str(a.shape) + " and " + shape_str(b.shape));
  const std::size_t N = a.shape[0], m = a.shape[1], k = a.shape[2], n = b.shape[2];
  Tensor<T> c({N, m, n});
  for (std::size_t s = 0; s < N; ++s)
    detail::gemm_nn(a.data.data() + s * m * k, b.data.data() + s * k * n, c.data.data() + s * m * n, m, k, n);
  if (detail::recording(g, a, b)) {
    const int an = a.node, bn = b.node;
    auto ad = a.data;
    auto bd = b.data;
    c.node = g->record(c.size(), {an, bn}, [=](Graph<T>& gr, const std::vector<T>& go) {
      for (std::size_t s = 0; s < N; ++s) {
        const T* gos = go.data() + s * m * n;
        if (an >= 0)
          detail::gemm_nt(gos, bd.data() + s * k * n, gr.grad_buffer(an).data() + s * m * k, m, n, k);
        if (bn >= 0)
          detail::gemm_tn(ad.data() + s * m * k, gos, gr.grad_buffer(bn).data() + s * k * n, m, k, n);
      }
    });
  }
  return c;
}

template <typename T>
Tensor<T> add(Graph<T>* g, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a.shape, b.shape, "add");
  Tensor<T> c(a.shape);
  for (std::size_t i = 0; i < c.size(); ++i) c.data[i] = a.data[i] + b.data[i];
  if (detail::recording(g, a, b)) {
    const int an = a.node, bn = b.node;
    c.node = g->record(c.size(), {an, bn}, [=](Graph<T>& gr, const std::vector<T>& go) {
      if (an >= 0) {
        auto& ga = gr.grad_buffer(an);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (bn >= 0) {
        auto& gb = gr.grad_buffer(bn);
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
      }
    });
  }
  return c;
}

template <typename T>
Tensor<T> mul(Graph<T>* g, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a.shape, b.shape, "mul");
  Tensor<T> c(a.shape);
  for (std::size_t i = 0; i < c.size(); ++i) c.data[i] = a.data[i] * b.data[i];
  if (detail::recording(g, a, b)) {
    const int an = a.node, bn = b.node;
    auto ad = a.data;
    auto bd = b.data;
    c.node = g->record(c.size(), {an, bn}, [=](Graph<T>& gr, const std::vector<T>& go) {
      if (an >= 0) {
        auto& ga = gr.grad_buffer(an);
        for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bd[i];
      }
      if (bn >= 0) {
        auto& gb = gr.grad_buffer(bn);
        for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * ad[i];
      }
    });
  }
  return c;
}

template <typename T>
Tensor<T> scale(Graph<T>* g, const Tensor<T>& a, T s) {
  Tensor<T> c(a.shape);
  for (std::size_t i = 0; i < c.size(); ++i) c.data[i] = a.data[i] * s;
  if (detail::recording(g, a)) {
    const int an = a.node;
    c.node = g->record(c.size(), {an}, [=](Graph<T>& gr, const std::vector<T>& go) {
      auto& ga = gr.grad_buffer(an);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * s;
    });
  }
  return c;
}

template <typename T>
Tensor<T> sub(Graph<T>* g, const Tensor<T>& a, const Tensor<T>& b) {
  return add(g, a, scale(g, b, T(-1)));
}

template <typename T>
Tensor<T> relu(Graph<T>* g, const Tensor<T>& a) {
  Tensor<T> c(a.shape);
  for (std::size_t i = 0; i < c.size(); ++i) c.data[i] = a.data[i] > T(0) ? a.data[i] : T(0);
  if (detail::recording(g, a)) {
    const int an = a.node;
    auto ad = a.data;
    c.node = g->record(c.size(), {an}, [=](Graph<T>& gr, const std::vector<T>& go) {
      auto& ga = gr.grad_buffer(an);
      // relu'(0) := 0
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += ad[i] > T(0) ? go[i] : T(0);
    });
  }
  return c;
}

template <typename T>
Tensor<T> sigmoid(Graph<T>* g, const Tensor<T>& a) {
  Tensor<T> c(a.shape);
  for (std::size_t i = 0; i < c.size(); ++i) c.data[i] = T(1) / (T(1) + std::exp(-a.data[i]));
  if (detail::recording(g, a)) {
    const int an = a.node;
    auto yd = c.data;
    c.node = g->record(c.size(), {an}, [=](Graph<T>& gr, const std::vector<T>& go) {
      auto& ga = gr.grad_buffer(an);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * yd[i] * (T(1) - yd[i]);
    });
  }
  return c;
}

template <typename T>
Tensor<T> silu(Graph<T>* g, const Tensor<T>& a) {
  Tensor<T> c(a.shape);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const T s = T(1) / (T(1) + std::exp(-a.data[i]));
    c.data[i] = a.data[i] * s;
  }
  if (detail::recording(g, a)) {
    const int an = a.node;
    auto ad = a.data;
    c.node = g->record(c.size(), {an}, [=](Graph<T>& gr, const std::vector<T>& go) {
      auto& ga = gr.grad_buffer(an);
      for (std::size_t i = 0; i < go.size(); ++i) {
        const T s = T(1) / (T(1) + std::exp(-ad[i]));
        ga[i] += go[i] * s * (T(1) + ad[i] * (T(1) - s));
      }
    });
  }
  return c;
}

template <typename T>
Tensor<T> log_elem(Graph<T>* g, const Tensor<T>& a) {
  Tensor<T> c(a.shape);
  for (std::size_t i = 0; i < c.size(); ++i) c.data[i] = std::log(a.data[i]);
  if (detail::recording(g, a)) {
    const int an = a.node;
    auto ad = a.data;
    c.node = g->record(c.size(), {an}, [=](Graph<T>& gr, const std::vector<T>& go) {
      auto& ga = gr.grad_buffer(an);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] / ad[i];
    });
  }
  return c;
}

// Gradient passes only strictly inside (lo, hi).
template <typename T>
Tensor<T> clamp(Graph<T>* g, const Tensor<T>& a, T lo, T hi) {
  Tensor<T> c(a.shape);
  for (std::size_t i = 0; i < c.size(); ++i) c.data[i] = std::min(hi, std::max(lo, a.data[i]));
  if (detail::recording(g, a)) {
    const int an = a.node;
    auto ad = a.data;
    c.node = g->record(c.size(), {an}, [=](Graph<T>& gr, const std::vector<T>& go) {
      auto& ga = gr.grad_buffer(an);
      for (std::size_t i = 0; i < go.size(); ++i)
        if (ad[i] > lo && ad[i] < hi) ga[i] += go[i];
    });
  }
  return c;
}

template <typename T>
Tensor<T> sum_all(Graph<T>* g, const Tensor<T>& a) {
  Tensor<T> c(Shape{1});
  T acc = T(0);
  for (auto v : a.data) acc += v;
  c.data[0] = acc;
  if (detail::recording(g, a)) {
    const int an = a.node;
    const std::size_t n = a.size();
    c.node = g->record(1, {an}, [=](Graph<T>& gr, const std::vector<T>& go) {
      auto& ga = gr.grad_buffer(an);
      for (std::size_t i = 0; i < n; ++i) ga[i] += go[0];
    });
  }
  return c;
}

// x[N x d] + row vector b[d]
template <typename T>
Tensor<T> add_rowwise(Graph<T>* g, const Tensor<T>& x, const Tensor<T>& b) {
  if (x.rank() != 2 || b.rank() != 1 || x.shape[1] != b.shape[0])
    throw ShapeError("add_rowwise: shapes " + shape_str(x.shape) + " and " + shape_str(b.shape));
  const std::size_t n = x.shape[0], d = x.shape[1];
  Tensor<T> c(x.shape);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) c.data[i * d + j] = x.data[i * d + j] + b.data[j];
  if (detail::recording(g, x, b)) {
    const int xn = x.node, bn = b.node;
    c.node = g->record(c.size(), {xn, bn}, [=](Graph<T>& gr, const std::vector<T>& go) {
      if (xn >= 0) {
        auto& gx = gr.grad_buffer(xn);
        for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
      }
      if (bn >= 0) {
        auto& gb = gr.grad_buffer(bn);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) gb[j] += go[i * d + j];
      }
    });
  }
  return c;
}

template <typename T>
Tensor<T> reshape(Graph<T>* g, const Tensor<T>& a, Shape new_shape) {
  if (shape_numel(new_shape) != a.size())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape) + " as " + shape_str(new_shape));
  Tensor<T> c(std::move(new_shape), a.data);
  if (detail::recording(g, a)) {
    const int an = a.node;
    c.node = g->record(c.size(), {an}, [=](Graph<T>& gr, const std::vector<T>& go) {
      auto& ga = gr.grad_buffer(an);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    });
  }
  return c;
}

namespace detail {

inline std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
  return st;
}

// out[perm-reordered index] = in[index]; returns data of the permuted view.
template <typename T>
std::vector<T> permute_raw(const std::vector<T>& in, const Shape& in_shape,
                           const std::vector<std::size_t>& perm) {
  const auto in_strides = strides_of(in_shape);
  Shape out_shape(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = in_shape[perm[i]];
  const auto out_strides = strides_of(out_shape);
  std::vector<T> out(in.size());
  const std::size_t rank = perm.size();
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < out.size(); ++flat) {
    std::size_t rem = flat, src = 0;
    for (std::size_t i = 0; i < rank; ++i) {
      const std::size_t q = rem / out_strides[i];
      rem %= out_strides[i];
      src += q * in_strides[perm[i]];
    }
    out[flat] = in[src];
  }
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> permute(Graph<T>* g, const Tensor<T>& a, std::vector<std::size_t> perm) {
  if (perm.size() != a.rank()) throw ShapeError("permute: rank mismatch for " + shape_str(a.shape));
  Shape out_shape(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = a.shape[perm[i]];
  Tensor<T> c(out_shape, detail::permute_raw(a.data, a.shape, perm));
  if (detail::recording(g, a)) {
    const int an = a.node;
    std::vector<std::size_t> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
    auto cshape = c.shape;
    c.node = g->record(c.size(), {an}, [=](Graph<T>& gr, const std::vector<T>& go) {
      auto back = detail::permute_raw(go, cshape, inv);
      auto& ga = gr.grad_buffer(an);
      for (std::size_t i = 0; i < back.size(); ++i) ga[i] += back[i];
    });
  }
  return c;
}

template <typename T>
Tensor<T> transpose2d(Graph<T>* g, const Tensor<T>& a) {
  return permute(g, a, {1, 0});
}

// Concatenate two 2D tensors along columns: [B x d1],[B x d2] -> [B x (d1+d2)]
template <typename T>
Tensor<T> concat_cols(Graph<T>* g, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[0] != b.shape[0])
    throw ShapeError("concat_cols: shapes " + shape_str(a.shape) + " and " + shape_str(b.shape));
  const std::size_t n = a.shape[0], d1 = a.shape[1], d2 = b.shape[1];
  Tensor<T> c({n, d1 + d2});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data.data() + i * d1, d1, c.data.data() + i * (d1 + d2));
    std::copy_n(b.data.data() + i * d2, d2, c.data.data() + i * (d1 + d2) + d1);
  }
  if (detail::recording(g, a, b)) {
    const int an = a.node, bn = b.node;
    c.node = g->record(c.size(), {an, bn}, [=](Graph<T>& gr, const std::vector<T>& go) {
      for (std::size_t i = 0; i < n; ++i) {
        if (an >= 0) {
          auto& ga = gr.grad_buffer(an);
          for (std::size_t j = 0; j < d1; ++j) ga[i * d1 + j] += go[i * (d1 + d2) + j];
        }
        if (bn >= 0) {
          auto& gb = gr.grad_buffer(bn);
          for (std::size_t j = 0; j < d2; ++j) gb[i * d2 + j] += go[i * (d1 + d2) + d1 + j];
        }
      }
    });
  }
  return c;
}

template <typename T>
Tensor<T> mean_over_axis(Graph<T>* g, const Tensor<T>& a, std::size_t axis) {
  if (axis >= a.rank()) throw ShapeError("mean_over_axis: axis out of range for " + shape_str(a.shape));
  std::size_t outer = 1, inner = 1;
  const std::size_t len = a.shape[axis];
  for (std::size_t i = 0; i < axis; ++i) outer *= a.shape[i];
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.shape[i];
  Shape out_shape;
  for (std::size_t i = 0; i < a.rank(); ++i)
    if (i != axis) out_shape.push_back(a.shape[i]);
  if (out_shape.empty()) out_shape.push_back(1);
  Tensor<T> c(out_shape);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      T acc = T(0);
      for (std::size_t j = 0; j < len; ++j) acc += a.data[(o * len + j) * inner + i];
      c.data[o * inner + i] = acc / static_cast<T>(len);
    }
  if (detail::recording(g, a)) {
    const int an = a.node;
    c.node = g->record(c.size(), {an}, [=](Graph<T>& gr, const std::vector<T>& go) {
      auto& ga = gr.grad_buffer(an);
      const T invn = T(1) / static_cast<T>(len);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) {
          const T gv = go[o * inner + i] * invn;
          for (std::size_t j = 0; j < len; ++j) ga[(o * len + j) * inner + i] += gv;
        }
    });
  }
  return c;
}

template <typename T>
Tensor<T> softmax_over_axis(Graph<T>* g, const Tensor<T>& a, std::size_t axis) {
  if (axis >= a.rank()) throw ShapeError("softmax_over_axis: axis out of range for " + shape_str(a.shape));
  std::size_t outer = 1, inner = 1;
  const std::size_t len = a.shape[axis];
  for (std::size_t i = 0; i < axis; ++i) outer *= a.shape[i];
  for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.shape[i];
  Tensor<T> c(a.shape);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      T mx = a.data[(o * len) * inner + i];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, a.data[(o * len + j) * inner + i]);
      T denom = T(0);
      for (std::size_t j = 0; j < len; ++j) {
        const T e = std::exp(a.data[(o * len + j) * inner + i] - mx);
        c.data[(o * len + j) * inner + i] = e;
        denom += e;
      }
      for (std::size_t j = 0; j < len; ++j) c.data[(o * len + j) * inner + i] /= denom;
    }
  if (detail::recording(g, a)) {
    const int an = a.node;
    auto yd = c.data;
    c.node = g->record(c.size(), {an}, [=](Graph<T>& gr, const std::vector<T>& go) {
      auto& ga = gr.grad_buffer(an);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) {
          T dot = T(0);
          for (std::size_t j = 0; j < len; ++j) {
            const std::size_t idx = (o * len + j) * inner + i;
            dot += go[idx] * yd[idx];
          }
          for (std::size_t j = 0; j < len; ++j) {
            const std::size_t idx = (o * len + j) * inner + i;
            ga[idx] += yd[idx] * (go[idx] - dot);
          }
        }
    });
  }
  return c;
}

// Layer normalization over the last axis with affine scale/shift.
template <typename T>
Tensor<T> layer_norm(Graph<T>* g, const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5)) {
  if (x.rank() < 1) throw ShapeError("layer_norm: scalar input");
  const std::size_t f = x.shape.back();
  if (gamma.shape != Shape{f} || beta.shape != Shape{f})
    throw ShapeError("layer_norm: affine params must be [" + std::to_string(f) + "]");
  const std::size_t rows = x.size() / f;
  Tensor<T> c(x.shape);
  std::vector<T> xhat(x.size()), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = x.data.data() + r * f;
    T mean = T(0);
    for (std::size_t j = 0; j < f; ++j) mean += row[j];
    mean /= static_cast<T>(f);
    T var = T(0);
    for (std::size_t j = 0; j < f; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<T>(f);
    const T inv = T(1) / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t j = 0; j < f; ++j) {
      const T h = (row[j] - mean) * inv;
      xhat[r * f + j] = h;
      c.data[r * f + j] = gamma.data[j] * h + beta.data[j];
    }
  }
  if (detail::recording(g, x, gamma, beta)) {
    const int xn = x.node, gn = gamma.node, bn = beta.node;
    auto gammad = gamma.data;
    c.node = g->record(c.size(), {xn, gn, bn}, [=](Graph<T>& gr, const std::vector<T>& go) {
      for (std::size_t r = 0; r < rows; ++r) {
        const T* gor = go.data() + r * f;
        const T* xh = xhat.data() + r * f;
        if (gn >= 0) {
          auto& gg = gr.grad_buffer(gn);
          for (std::size_t j = 0; j < f; ++j) gg[j] += gor[j] * xh[j];
        }
        if (bn >= 0) {
          auto& gb = gr.grad_buffer(bn);
          for (std::size_t j = 0; j < f; ++j) gb[j] += gor[j];
        }
        if (xn >= 0) {
          T mean_h = T(0), mean_hx = T(0);
          for (std::size_t j = 0; j < f; ++j) {
            const T h = gor[j] * gammad[j];
            mean_h += h;
            mean_hx += h * xh[j];
          }
          mean_h /= static_cast<T>(f);
          mean_hx /= static_cast<T>(f);
          auto& gx = gr.grad_buffer(xn);
          for (std::size_t j = 0; j < f; ++j) {
            const T h = gor[j] * gammad[j];
            gx[r * f + j] += inv_std[r] * (h - mean_h - xh[j] * mean_hx);
          }
        }
      }
    });
  }
  return c;
}

// 2D cross-correlation with zero padding.
// input [B,C,H,W], kernel [O,C,kh,kw], bias [O] -> [B,O,H',W']
template <typename T>
Tensor<T> conv2d(Graph<T>* g, const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding) {
  if (input.rank() != 4 || kernel.rank() != 4 || input.shape[1] != kernel.shape[1])
    throw ShapeError("conv2d: incompatible shapes " + shape_str(input.shape) + " and " +
                     shape_str(kernel.shape));
  const std::size_t B = input.shape[0], C = input.shape[1], H = input.shape[2], W = input.shape[3];
  const std::size_t O = kernel.shape[0], kh = kernel.shape[2], kw = kernel.shape[3];
  if (bias.shape != Shape{O}) throw ShapeError("conv2d: bias must be [" + std::to_string(O) + "]");
  if (kh > H + 2 * padding || kw > W + 2 * padding)
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape) + " larger than padded input " +
                     shape_str(input.shape));
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t Ho = (H + 2 * padding - kh) / stride + 1;
  const std::size_t Wo = (W + 2 * padding - kw) / stride + 1;
  const std::size_t ckk = C * kh * kw, hw = Ho * Wo;

  auto im2col = [=](const T* img, std::vector<T>& col) {
    std::fill(col.begin(), col.end(), T(0));
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t ki = 0; ki < kh; ++ki)
        for (std::size_t kj = 0; kj < kw; ++kj) {
          T* dst = col.data() + ((c * kh + ki) * kw + kj) * hw;
          for (std::size_t oy = 0; oy < Ho; ++oy) {
            const long iy = static_cast<long>(oy * stride + ki) - static_cast<long>(padding);
            if (iy < 0 || iy >= static_cast<long>(H)) continue;
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              const long ix = static_cast<long>(ox * stride + kj) - static_cast<long>(padding);
              if (ix < 0 || ix >= static_cast<long>(W)) continue;
              dst[oy * Wo + ox] = img[(c * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix)];
            }
          }
        }
  };

  Tensor<T> out({B, O, Ho, Wo});
  std::vector<T> col(ckk * hw);
  for (std::size_t b = 0; b < B; ++b) {
    im2col(input.data.data() + b * C * H * W, col);
    T* om = out.data.data() + b * O * hw;
    for (std::size_t o = 0; o < O; ++o) std::fill_n(om + o * hw, hw, bias.data[o]);
    detail::gemm_nn(kernel.data.data(), col.data(), om, O, ckk, hw);
  }

  if (detail::recording(g, input, kernel, bias)) {
    const int in_n = input.node, k_n = kernel.node, b_n = bias.node;
    auto input_d = input.data;
    auto kernel_d = kernel.data;
    out.node = g->record(out.size(), {in_n, k_n, b_n}, [=](Graph<T>& gr, const std::vector<T>& go) {
      std::vector<T> colb(ckk * hw), dcol(ckk * hw);
      for (std::size_t b = 0; b < B; ++b) {
        const T* gom = go.data() + b * O * hw;
        if (b_n >= 0) {
          auto& gb = gr.grad_buffer(b_n);
          for (std::size_t o = 0; o < O; ++o)
            for (std::size_t i = 0; i < hw; ++i) gb[o] += gom[o * hw + i];
        }
        if (k_n >= 0) {
          im2col(input_d.data() + b * C * H * W, colb);
          detail::gemm_nt(gom, colb.data(), gr.grad_buffer(k_n).data(), O, hw, ckk);
        }
        if (in_n >= 0) {
          std::fill(dcol.begin(), dcol.end(), T(0));
          detail::gemm_tn(kernel_d.data(), gom, dcol.data(), O, ckk, hw);
          // col2im accumulate
          auto& gi = gr.grad_buffer(in_n);
          T* gimg = gi.data() + b * C * H * W;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ki = 0; ki < kh; ++ki)
              for (std::size_t kj = 0; kj < kw; ++kj) {
                const T* src = dcol.data() + ((c * kh + ki) * kw + kj) * hw;
                for (std::size_t oy = 0; oy < Ho; ++oy) {
                  const long iy = static_cast<long>(oy * stride + ki) - static_cast<long>(padding);
                  if (iy < 0 || iy >= static_cast<long>(H)) continue;
                  for (std::size_t ox = 0; ox < Wo; ++ox) {
                    const long ix = static_cast<long>(ox * stride + kj) - static_cast<long>(padding);
                    if (ix < 0 || ix >= static_cast<long>(W)) continue;
                    gimg[(c * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix)] +=
                        src[oy * Wo + ox];
                  }
                }
              }
        }
      }
    });
  }
  return out;
}

// 2x2 max pooling with stride 2. Ties resolve to the first scanned element.
template <typename T>
Tensor<T> maxpool2x2(Graph<T>* g, const Tensor<T>& x) {
  if (x.rank() != 4 || x.shape[2] % 2 != 0 || x.shape[3] % 2 != 0)
    throw ShapeError("maxpool2x2: needs [B,C,H,W] with even H and W, got " + shape_str(x.shape));
  const std::size_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
  const std::size_t Ho = H / 2, Wo = W / 2;
  Tensor<T> out({B, C, Ho, Wo});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const T* plane = x.data.data() + bc * H * W;
    for (std::size_t oy = 0; oy < Ho; ++oy)
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        std::size_t best = (2 * oy) * W + 2 * ox;
        T bv = plane[best];
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (2 * oy + dy) * W + (2 * ox + dx);
            if (plane[idx] > bv) {
              bv = plane[idx];
              best = idx;
            }
          }
        out.data[bc * Ho * Wo + oy * Wo + ox] = bv;
        argmax[bc * Ho * Wo + oy * Wo + ox] = bc * H * W + best;
      }
  }
  if (detail::recording(g, x)) {
    const int xn = x.node;
    out.node = g->record(out.size(), {xn}, [=](Graph<T>& gr, const std::vector<T>& go) {
      auto& gx = gr.grad_buffer(xn);
      for (std::size_t i = 0; i < go.size(); ++i) gx[argmax[i]] += go[i];
    });
  }
  return out;
}

// Inverted dropout; always draws size() uniforms so the stream advance is
// shape-determined.
template <typename T>
Tensor<T> dropout(Graph<T>* g, const Tensor<T>& x, double prob, Rng& rng) {
  Tensor<T> out(x.shape);
  std::vector<T> mask(x.size());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - prob));
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = rng.uniform() < prob ? T(0) : keep_scale;
    out.data[i] = x.data[i] * mask[i];
  }
  if (detail::recording(g, x)) {
    const int xn = x.node;
    out.node = g->record(out.size(), {xn}, [=](Graph<T>& gr, const std::vector<T>& go) {
      auto& gx = gr.grad_buffer(xn);
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * mask[i];
    });
  }
  return out;
}

}  // namespace derm::ops

#endif
