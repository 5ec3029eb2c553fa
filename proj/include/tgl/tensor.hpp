#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "tgl/errors.hpp"
#include "tgl/thread_pool.hpp"

namespace tgl {

// Dense row-major tensor. The artifact runs on float; the double
// instantiation exists so finite-difference oracles are free of f32 noise.
template <typename S>
struct TensorT {
  std::vector<int64_t> shape;
  std::vector<S> data;

  TensorT() = default;
  explicit TensorT(std::vector<int64_t> shp) : shape(std::move(shp)) {
    data.assign(static_cast<size_t>(numel_of(shape)), S(0));
  }

  static TensorT zeros(std::initializer_list<int64_t> shp) {
    return TensorT(std::vector<int64_t>(shp));
  }
  static TensorT zeros_like(const TensorT& other) { return TensorT(other.shape); }

  static int64_t numel_of(const std::vector<int64_t>& shp) {
    int64_t n = 1;
    for (int64_t d : shp) n *= d;
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t rows() const { return shape.empty() ? 0 : shape[0]; }
  int64_t cols() const { return shape.size() < 2 ? (shape.empty() ? 0 : 1) : shape[1]; }

  S& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * cols() + j)]; }
  S at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * cols() + j)]; }

  S* row_ptr(int64_t i) { return data.data() + i * cols(); }
  const S* row_ptr(int64_t i) const { return data.data() + i * cols(); }

  void fill(S v) { std::fill(data.begin(), data.end(), v); }
  void zero() { fill(S(0)); }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (S v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
  }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

namespace detail {
inline void shape_fail(const char* op, const std::string& a, const std::string& b) {
  throw DataError(std::string(op) + ": shape mismatch " + a + " vs " + b);
}
}  // namespace detail

#ifndef NDEBUG
#define TGL_DEBUG_CHECK_FINITE(t, op)                                   \
  do {                                                                  \
    if (!(t).all_finite()) throw DataError(std::string(op) + ": non-finite output"); \
  } while (0)
#else
#define TGL_DEBUG_CHECK_FINITE(t, op) (void)0
#endif

// C = A * B (or C += when accumulate). Loop order i-k-j: every C[i,j] sums
// over k in ascending order, so the result is bit-stable for any schedule.
template <typename S>
void matmul_into(const TensorT<S>& a, const TensorT<S>& b, TensorT<S>& c,
                 bool accumulate = false) {
  if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0])
    detail::shape_fail("matmul", a.shape_str(), b.shape_str());
  const int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  if (c.shape != std::vector<int64_t>{m, n}) detail::shape_fail("matmul out", c.shape_str(), "[" + std::to_string(m) + "x" + std::to_string(n) + "]");
  const S* pa = a.data.data();
  const S* pb = b.data.data();
  S* pc = c.data.data();
  ThreadPool::instance().parallel_for(m, [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      S* crow = pc + i * n;
      if (!accumulate) {
        for (int64_t j = 0; j < n; ++j) crow[j] = S(0);
      }
      const S* arow = pa + i * k;
      for (int64_t kk = 0; kk < k; ++kk) {
        const S av = arow[kk];
        const S* brow = pb + kk * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
}

template <typename S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
  TensorT<S> c({a.shape[0], b.shape.size() == 2 ? b.shape[1] : 1});
  matmul_into(a, b, c, false);
  return c;
}

// C (+)= A * B^T.
template <typename S>
void matmul_nt_into(const TensorT<S>& a, const TensorT<S>& b, TensorT<S>& c,
                    bool accumulate = false) {
  if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[1])
    detail::shape_fail("matmul_nt", a.shape_str(), b.shape_str());
  const int64_t m = a.shape[0], k = a.shape[1], n = b.shape[0];
  if (c.shape != std::vector<int64_t>{m, n}) detail::shape_fail("matmul_nt out", c.shape_str(), "");
  const S* pa = a.data.data();
  const S* pb = b.data.data();
  S* pc = c.data.data();
  ThreadPool::instance().parallel_for(m, [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      const S* arow = pa + i * k;
      S* crow = pc + i * n;
      for (int64_t j = 0; j < n; ++j) {
        const S* brow = pb + j * k;
        S acc = S(0);
        for (int64_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
        crow[j] = accumulate ? crow[j] + acc : acc;
      }
    }
  });
}

// C (+)= A^T * B.
template <typename S>
void matmul_tn_into(const TensorT<S>& a, const TensorT<S>& b, TensorT<S>& c,
                    bool accumulate = false) {
  if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[0] != b.shape[0])
    detail::shape_fail("matmul_tn", a.shape_str(), b.shape_str());
  const int64_t k = a.shape[0], m = a.shape[1], n = b.shape[1];
  if (c.shape != std::vector<int64_t>{m, n}) detail::shape_fail("matmul_tn out", c.shape_str(), "");
  const S* pa = a.data.data();
  const S* pb = b.data.data();
  S* pc = c.data.data();
  ThreadPool::instance().parallel_for(m, [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      S* crow = pc + i * n;
      if (!accumulate) {
        for (int64_t j = 0; j < n; ++j) crow[j] = S(0);
      }
      for (int64_t kk = 0; kk < k; ++kk) {
        const S av = pa[kk * m + i];
        const S* brow = pb + kk * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
}

template <typename S>
void add_row_inplace(TensorT<S>& x, const TensorT<S>& row) {
  const int64_t m = x.rows(), n = x.cols();
  if (row.numel() != n) detail::shape_fail("add_row", x.shape_str(), row.shape_str());
  for (int64_t i = 0; i < m; ++i) {
    S* xr = x.row_ptr(i);
    for (int64_t j = 0; j < n; ++j) xr[j] += row.data[static_cast<size_t>(j)];
  }
}

// grad_b += column sums of g, in ascending row order.
template <typename S>
void accumulate_col_sums(const TensorT<S>& g, TensorT<S>& bias_grad) {
  const int64_t m = g.rows(), n = g.cols();
  if (bias_grad.numel() != n) detail::shape_fail("col_sums", g.shape_str(), bias_grad.shape_str());
  for (int64_t i = 0; i < m; ++i) {
    const S* gr = g.row_ptr(i);
    for (int64_t j = 0; j < n; ++j) bias_grad.data[static_cast<size_t>(j)] += gr[j];
  }
}

template <typename S>
void axpy(TensorT<S>& y, S alpha, const TensorT<S>& x) {
  if (!y.same_shape(x)) detail::shape_fail("axpy", y.shape_str(), x.shape_str());
  for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += alpha * x.data[i];
}

template <typename S>
void scale_inplace(TensorT<S>& x, S alpha) {
  for (auto& v : x.data) v *= alpha;
}

// Horizontal concat [a ‖ b].
template <typename S>
TensorT<S> hconcat(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.rows() != b.rows()) detail::shape_fail("hconcat", a.shape_str(), b.shape_str());
  const int64_t m = a.rows(), na = a.cols(), nb = b.cols();
  TensorT<S> out({m, na + nb});
  for (int64_t i = 0; i < m; ++i) {
    S* o = out.row_ptr(i);
    const S* pa = a.row_ptr(i);
    const S* pb = b.row_ptr(i);
    for (int64_t j = 0; j < na; ++j) o[j] = pa[j];
    for (int64_t j = 0; j < nb; ++j) o[na + j] = pb[j];
  }
  return out;
}

template <typename S>
void hsplit_into(const TensorT<S>& x, TensorT<S>& left, TensorT<S>& right) {
  const int64_t m = x.rows(), na = left.cols(), nb = right.cols();
  if (left.rows() != m || right.rows() != m || na + nb != x.cols())
    detail::shape_fail("hsplit", x.shape_str(), left.shape_str());
  for (int64_t i = 0; i < m; ++i) {
    const S* p = x.row_ptr(i);
    S* pl = left.row_ptr(i);
    S* pr = right.row_ptr(i);
    for (int64_t j = 0; j < na; ++j) pl[j] = p[j];
    for (int64_t j = 0; j < nb; ++j) pr[j] = p[na + j];
  }
}

template <typename Src, typename Dst>
TensorT<Dst> tensor_cast(const TensorT<Src>& x) {
  TensorT<Dst> out(x.shape);
  for (size_t i = 0; i < x.data.size(); ++i) out.data[i] = static_cast<Dst>(x.data[i]);
  return out;
}

}  // namespace tgl
