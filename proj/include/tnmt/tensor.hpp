#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "tnmt/common.hpp"
#include "tnmt/kernels.hpp"

namespace tnmt {

template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::shared_ptr<std::vector<T>> data;
  std::shared_ptr<std::vector<T>> grad;  // allocated iff requires_grad
  bool requires_grad = false;

  std::size_t size() const { return data ? data->size() : 0; }
  T* ptr() { return data->data(); }
  const T* ptr() const { return data->data(); }
  T* gptr() { return grad->data(); }

  T item() const {
    if (size() != 1) throw Error("shape", "item() on non-scalar tensor");
    return (*data)[0];
  }

  void zero_grad() {
    if (grad) std::fill(grad->begin(), grad->end(), T(0));
  }
};

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

namespace detail {
inline std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}
inline std::string shape_str(const std::vector<std::size_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i)
    out += (i ? "x" : "") + std::to_string(s[i]);
  return out + "]";
}
}  // namespace detail

template <typename T>
TensorPtr<T> make_tensor(std::vector<std::size_t> shape,
                         bool requires_grad = false) {
  auto t = std::make_shared<Tensor<T>>();
  std::size_t n = detail::shape_numel(shape);
  t->shape = std::move(shape);
  t->data = std::make_shared<std::vector<T>>(n, T(0));
  t->requires_grad = requires_grad;
  if (requires_grad) t->grad = std::make_shared<std::vector<T>>(n, T(0));
  return t;
}

template <typename T>
TensorPtr<T> make_tensor(std::vector<std::size_t> shape, std::vector<T> values,
                         bool requires_grad = false) {
  auto t = make_tensor<T>(std::move(shape), requires_grad);
  if (values.size() != t->size())
    throw Error("shape", "value count does not match shape");
  *t->data = std::move(values);
  return t;
}

// Reverse-mode tape. Forward ops record a backward closure; backward()
// replays them once in reverse creation order. The tape is rebuilt for every
// forward pass and is confined to one logical thread.
template <typename T>
class Tape {
 public:
  bool training = false;       // enables dropout
  bool debug_checks = false;   // finite check after every op
  bool grad_enabled = true;    // false: inference mode, nothing recorded
  Rng* rng = nullptr;          // dropout mask source

  void clear() {
    ops_.clear();
    backward_done_ = false;
  }

  void backward(const TensorPtr<T>& loss) {
    if (loss->size() != 1) throw Error("shape", "backward needs scalar loss");
    if (ops_.empty()) throw Error("state", "backward on empty tape");
    if (backward_done_)
      throw Error("state", "double backward without tape reset");
    backward_done_ = true;
    if (loss->requires_grad) (*loss->grad)[0] += T(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

  // ---- ops ----

  TensorPtr<T> matmul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (a->shape.size() != 2 || b->shape.size() != 2 ||
        a->shape[1] != b->shape[0])
      throw Error("shape", "matmul mismatch " + detail::shape_str(a->shape) +
                               " * " + detail::shape_str(b->shape));
    std::size_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
    auto out = result({m, n}, a, b);
    kernels::matmul_acc(a->ptr(), b->ptr(), out->ptr(), m, k, n);
    record(out, [a, b, out, m, k, n]() {
      const T* g = out->grad->data();
      if (a->requires_grad) kernels::matmul_nt_acc(g, b->ptr(), a->gptr(), m, n, k);
      if (b->requires_grad) kernels::matmul_tn_acc(a->ptr(), g, b->gptr(), m, k, n);
    });
    return out;
  }

  // [N,L,K] x [N,K,M] -> [N,L,M]
  TensorPtr<T> bmm(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    check3(a, b, a->shape[2], b->shape[1], "bmm");
    std::size_t N = a->shape[0], L = a->shape[1], K = a->shape[2],
                M = b->shape[2];
    auto out = result({N, L, M}, a, b);
    for (std::size_t i = 0; i < N; ++i)
      kernels::matmul_acc(a->ptr() + i * L * K, b->ptr() + i * K * M,
                          out->ptr() + i * L * M, L, K, M);
    record(out, [a, b, out, N, L, K, M]() {
      for (std::size_t i = 0; i < N; ++i) {
        const T* g = out->grad->data() + i * L * M;
        if (a->requires_grad)
          kernels::matmul_nt_acc(g, b->ptr() + i * K * M, a->gptr() + i * L * K,
                                 L, M, K);
        if (b->requires_grad)
          kernels::matmul_tn_acc(a->ptr() + i * L * K, g, b->gptr() + i * K * M,
                                 L, K, M);
      }
    });
    return out;
  }

  // [N,L,K] x [N,M,K]^T -> [N,L,M]
  TensorPtr<T> bmm_nt(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    check3(a, b, a->shape[2], b->shape[2], "bmm_nt");
    std::size_t N = a->shape[0], L = a->shape[1], K = a->shape[2],
                M = b->shape[1];
    auto out = result({N, L, M}, a, b);
    for (std::size_t i = 0; i < N; ++i)
      kernels::matmul_nt_acc(a->ptr() + i * L * K, b->ptr() + i * M * K,
                             out->ptr() + i * L * M, L, K, M);
    record(out, [a, b, out, N, L, K, M]() {
      for (std::size_t i = 0; i < N; ++i) {
        const T* g = out->grad->data() + i * L * M;
        // dA = G * B ; dB = G^T * A
        if (a->requires_grad)
          kernels::matmul_acc(g, b->ptr() + i * M * K, a->gptr() + i * L * K, L,
                              M, K);
        if (b->requires_grad)
          kernels::matmul_tn_acc(g, a->ptr() + i * L * K, b->gptr() + i * M * K,
                                 L, M, K);
      }
    });
    return out;
  }

  TensorPtr<T> add(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (a->size() != b->size())
      throw Error("shape", "add mismatch " + detail::shape_str(a->shape) +
                               " + " + detail::shape_str(b->shape));
    auto out = result(a->shape, a, b);
    const T* pa = a->ptr();
    const T* pb = b->ptr();
    T* po = out->ptr();
    for (std::size_t i = 0; i < out->size(); ++i) po[i] = pa[i] + pb[i];
    record(out, [a, b, out]() {
      const T* g = out->grad->data();
      if (a->requires_grad)
        for (std::size_t i = 0; i < out->size(); ++i) (*a->grad)[i] += g[i];
      if (b->requires_grad)
        for (std::size_t i = 0; i < out->size(); ++i) (*b->grad)[i] += g[i];
    });
    return out;
  }

  // a: [..., D], bias: [D]
  TensorPtr<T> add_bias(const TensorPtr<T>& a, const TensorPtr<T>& bias) {
    std::size_t d = bias->size();
    if (a->shape.empty() || a->shape.back() != d)
      throw Error("shape", "add_bias last dim mismatch");
    auto out = result(a->shape, a, bias);
    std::size_t rows = a->size() / d;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < d; ++j)
        (*out->data)[r * d + j] = (*a->data)[r * d + j] + (*bias->data)[j];
    record(out, [a, bias, out, rows, d]() {
      const T* g = out->grad->data();
      if (a->requires_grad)
        for (std::size_t i = 0; i < out->size(); ++i) (*a->grad)[i] += g[i];
      if (bias->requires_grad)
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) (*bias->grad)[j] += g[r * d + j];
    });
    return out;
  }

  TensorPtr<T> mul(const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (a->size() != b->size()) throw Error("shape", "mul size mismatch");
    auto out = result(a->shape, a, b);
    for (std::size_t i = 0; i < out->size(); ++i)
      (*out->data)[i] = (*a->data)[i] * (*b->data)[i];
    record(out, [a, b, out]() {
      const T* g = out->grad->data();
      if (a->requires_grad)
        for (std::size_t i = 0; i < out->size(); ++i)
          (*a->grad)[i] += g[i] * (*b->data)[i];
      if (b->requires_grad)
        for (std::size_t i = 0; i < out->size(); ++i)
          (*b->grad)[i] += g[i] * (*a->data)[i];
    });
    return out;
  }

  TensorPtr<T> scale(const TensorPtr<T>& a, T c) {
    auto out = result(a->shape, a, a);
    for (std::size_t i = 0; i < out->size(); ++i)
      (*out->data)[i] = (*a->data)[i] * c;
    record(out, [a, out, c]() {
      if (!a->requires_grad) return;
      const T* g = out->grad->data();
      for (std::size_t i = 0; i < out->size(); ++i) (*a->grad)[i] += g[i] * c;
    });
    return out;
  }

  TensorPtr<T> relu(const TensorPtr<T>& a) {
    auto out = result(a->shape, a, a);
    for (std::size_t i = 0; i < out->size(); ++i)
      (*out->data)[i] = (*a->data)[i] > T(0) ? (*a->data)[i] : T(0);
    record(out, [a, out]() {
      if (!a->requires_grad) return;
      const T* g = out->grad->data();
      for (std::size_t i = 0; i < out->size(); ++i)
        if ((*a->data)[i] > T(0)) (*a->grad)[i] += g[i];
    });
    return out;
  }

  TensorPtr<T> transpose2d(const TensorPtr<T>& a) {
    if (a->shape.size() != 2) throw Error("shape", "transpose2d needs 2-d");
    std::size_t m = a->shape[0], n = a->shape[1];
    auto out = result({n, m}, a, a);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        (*out->data)[j * m + i] = (*a->data)[i * n + j];
    record(out, [a, out, m, n]() {
      if (!a->requires_grad) return;
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
          (*a->grad)[i * n + j] += (*out->grad)[j * m + i];
    });
    return out;
  }

  // concat along axis 0; all inputs share trailing shape
  TensorPtr<T> concat_rows(const std::vector<TensorPtr<T>>& parts) {
    if (parts.empty()) throw Error("shape", "concat of nothing");
    std::vector<std::size_t> shape = parts[0]->shape;
    std::size_t rows = 0;
    std::size_t inner = parts[0]->size() / parts[0]->shape[0];
    for (auto& p : parts) {
      if (p->size() / p->shape[0] != inner)
        throw Error("shape", "concat trailing shape mismatch");
      rows += p->shape[0];
    }
    shape[0] = rows;
    bool rg = false;
    for (auto& p : parts) rg = rg || p->requires_grad;
    auto out = make_tensor<T>(shape, grad_enabled && rg);
    std::size_t off = 0;
    for (auto& p : parts) {
      std::copy(p->data->begin(), p->data->end(), out->data->begin() + off);
      off += p->size();
    }
    record(out, [parts, out]() {
      std::size_t off = 0;
      for (auto& p : parts) {
        if (p->requires_grad)
          for (std::size_t i = 0; i < p->size(); ++i)
            (*p->grad)[i] += (*out->grad)[off + i];
        off += p->size();
      }
    });
    return out;
  }

  // numerically stable softmax along `axis`
  TensorPtr<T> softmax(const TensorPtr<T>& a, int axis) {
    auto [outer, len, inner] = axis_strides(a, axis);
    auto out = result(a->shape, a, a);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const T* x = a->ptr() + o * len * inner + in;
        T* y = out->ptr() + o * len * inner + in;
        T mx = x[0];
        for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, x[i * inner]);
        T z = 0;
        for (std::size_t i = 0; i < len; ++i) {
          T e = std::exp(x[i * inner] - mx);
          y[i * inner] = e;
          z += e;
        }
        for (std::size_t i = 0; i < len; ++i) y[i * inner] /= z;
      }
    record(out, [a, out, outer = outer, len = len, inner = inner]() {
      if (!a->requires_grad) return;
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
          const T* y = out->ptr() + o * len * inner + in;
          const T* g = out->grad->data() + o * len * inner + in;
          T dot = 0;
          for (std::size_t i = 0; i < len; ++i) dot += y[i * inner] * g[i * inner];
          T* ga = a->grad->data() + o * len * inner + in;
          for (std::size_t i = 0; i < len; ++i)
            ga[i * inner] += y[i * inner] * (g[i * inner] - dot);
        }
    });
    return out;
  }

  // softmax over the last dim with boolean key mask (true = disallowed).
  // mask has the same row structure as a; rows stride over disallowed flags.
  // An all-masked row is an error.
  TensorPtr<T> masked_softmax_lastdim(const TensorPtr<T>& a,
                                      const std::vector<std::uint8_t>& mask) {
    if (mask.size() != a->size())
      throw Error("shape", "mask size mismatch in masked softmax");
    std::size_t len = a->shape.back();
    std::size_t rows = a->size() / len;
    auto out = result(a->shape, a, a);
    constexpr T kNegInf = -std::numeric_limits<T>::infinity();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* x = a->ptr() + r * len;
      const std::uint8_t* ms = mask.data() + r * len;
      T* y = out->ptr() + r * len;
      T mx = kNegInf;
      for (std::size_t i = 0; i < len; ++i)
        if (!ms[i]) mx = std::max(mx, x[i]);
      if (mx == kNegInf)
        throw Error("data", "attention row with every key masked");
      T z = 0;
      for (std::size_t i = 0; i < len; ++i) {
        T e = ms[i] ? T(0) : std::exp(x[i] - mx);
        y[i] = e;
        z += e;
      }
      for (std::size_t i = 0; i < len; ++i) y[i] /= z;
    }
    record(out, [a, out, len, rows]() {
      if (!a->requires_grad) return;
      for (std::size_t r = 0; r < rows; ++r) {
        const T* y = out->ptr() + r * len;
        const T* g = out->grad->data() + r * len;
        T dot = 0;
        for (std::size_t i = 0; i < len; ++i) dot += y[i] * g[i];
        T* ga = a->grad->data() + r * len;
        for (std::size_t i = 0; i < len; ++i) ga[i] += y[i] * (g[i] - dot);
      }
    });
    return out;
  }

  // per-position normalization over the last dim, then affine
  TensorPtr<T> layer_norm(const TensorPtr<T>& a, const TensorPtr<T>& gain,
                          const TensorPtr<T>& bias, T eps) {
    std::size_t d = a->shape.back();
    if (gain->size() != d || bias->size() != d)
      throw Error("shape", "layer_norm gain/bias must match last dim");
    std::size_t rows = a->size() / d;
    auto out = result(a->shape, a, gain);
    // cache per-row mean and inverse stddev for backward
    auto mean = std::make_shared<std::vector<T>>(rows);
    auto istd = std::make_shared<std::vector<T>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* x = a->ptr() + r * d;
      T m = 0;
      for (std::size_t j = 0; j < d; ++j) m += x[j];
      m /= T(d);
      T v = 0;
      for (std::size_t j = 0; j < d; ++j) v += (x[j] - m) * (x[j] - m);
      v /= T(d);
      T is = T(1) / std::sqrt(v + eps);
      (*mean)[r] = m;
      (*istd)[r] = is;
      T* y = out->ptr() + r * d;
      for (std::size_t j = 0; j < d; ++j)
        y[j] = (x[j] - m) * is * (*gain->data)[j] + (*bias->data)[j];
    }
    record(out, [a, gain, bias, out, mean, istd, rows, d]() {
      const T* g = out->grad->data();
      for (std::size_t r = 0; r < rows; ++r) {
        const T* x = a->ptr() + r * d;
        T m = (*mean)[r], is = (*istd)[r];
        if (gain->requires_grad || bias->requires_grad) {
          for (std::size_t j = 0; j < d; ++j) {
            T xhat = (x[j] - m) * is;
            if (gain->requires_grad) (*gain->grad)[j] += g[r * d + j] * xhat;
            if (bias->requires_grad) (*bias->grad)[j] += g[r * d + j];
          }
        }
        if (a->requires_grad) {
          // dL/dx via the standard layer-norm backward
          T sum_gy = 0, sum_gyx = 0;
          for (std::size_t j = 0; j < d; ++j) {
            T gy = g[r * d + j] * (*gain->data)[j];
            T xhat = (x[j] - m) * is;
            sum_gy += gy;
            sum_gyx += gy * xhat;
          }
          for (std::size_t j = 0; j < d; ++j) {
            T gy = g[r * d + j] * (*gain->data)[j];
            T xhat = (x[j] - m) * is;
            (*a->grad)[r * d + j] +=
                is * (gy - sum_gy / T(d) - xhat * sum_gyx / T(d));
          }
        }
      }
    });
    return out;
  }

  // rows of `table` selected by ids -> [ids.size(), d]
  TensorPtr<T> embedding(const TensorPtr<T>& table,
                         const std::vector<int>& ids) {
    if (table->shape.size() != 2)
      throw Error("shape", "embedding table must be 2-d");
    std::size_t v = table->shape[0], d = table->shape[1];
    auto out = result({ids.size(), d}, table, table);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v)
        throw Error("data", "embedding id out of range: " +
                                std::to_string(ids[i]));
      std::copy(table->ptr() + ids[i] * d, table->ptr() + (ids[i] + 1) * d,
                out->ptr() + i * d);
    }
    record(out, [table, out, ids, d]() {
      if (!table->requires_grad) return;
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < d; ++j)
          (*table->grad)[ids[i] * d + j] += (*out->grad)[i * d + j];
    });
    return out;
  }

  // [B, L, D] -> [B*H, L, D/H]  (viewed from a {B*L, D} or {B,L,D} buffer)
  TensorPtr<T> split_heads(const TensorPtr<T>& a, std::size_t B, std::size_t L,
                           std::size_t H) {
    std::size_t D = a->size() / (B * L);
    if (D % H != 0) throw Error("shape", "d_model not divisible by heads");
    std::size_t dh = D / H;
    auto out = result({B * H, L, dh}, a, a);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t l = 0; l < L; ++l)
        for (std::size_t h = 0; h < H; ++h)
          std::copy(a->ptr() + (b * L + l) * D + h * dh,
                    a->ptr() + (b * L + l) * D + (h + 1) * dh,
                    out->ptr() + ((b * H + h) * L + l) * dh);
    record(out, [a, out, B, L, H, D, dh]() {
      if (!a->requires_grad) return;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t l = 0; l < L; ++l)
          for (std::size_t h = 0; h < H; ++h)
            for (std::size_t j = 0; j < dh; ++j)
              (*a->grad)[(b * L + l) * D + h * dh + j] +=
                  (*out->grad)[((b * H + h) * L + l) * dh + j];
    });
    return out;
  }

  // inverse of split_heads: [B*H, L, dh] -> [B*L, D]
  TensorPtr<T> merge_heads(const TensorPtr<T>& a, std::size_t B, std::size_t L,
                           std::size_t H) {
    std::size_t dh = a->shape.back();
    std::size_t D = H * dh;
    auto out = result({B * L, D}, a, a);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t l = 0; l < L; ++l)
        for (std::size_t h = 0; h < H; ++h)
          std::copy(a->ptr() + ((b * H + h) * L + l) * dh,
                    a->ptr() + ((b * H + h) * L + l + 1) * dh,
                    out->ptr() + (b * L + l) * D + h * dh);
    record(out, [a, out, B, L, H, D, dh]() {
      if (!a->requires_grad) return;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t l = 0; l < L; ++l)
          for (std::size_t h = 0; h < H; ++h)
            for (std::size_t j = 0; j < dh; ++j)
              (*a->grad)[((b * H + h) * L + l) * dh + j] +=
                  (*out->grad)[(b * L + l) * D + h * dh + j];
    });
    return out;
  }

  // inverted dropout: active only in training mode, identity otherwise
  TensorPtr<T> dropout(const TensorPtr<T>& a, double rate) {
    if (rate < 0.0 || rate >= 1.0) throw Error("config", "dropout rate in [0,1)");
    if (!training || rate == 0.0) return a;
    if (!rng) throw Error("state", "dropout needs a tape rng in training mode");
    auto keep = std::make_shared<std::vector<std::uint8_t>>(a->size());
    T inv = T(1.0 / (1.0 - rate));
    auto out = result(a->shape, a, a);
    for (std::size_t i = 0; i < a->size(); ++i) {
      (*keep)[i] = rng->uniform() >= rate;
      (*out->data)[i] = (*keep)[i] ? (*a->data)[i] * inv : T(0);
    }
    record(out, [a, out, keep, inv]() {
      if (!a->requires_grad) return;
      for (std::size_t i = 0; i < a->size(); ++i)
        if ((*keep)[i]) (*a->grad)[i] += (*out->grad)[i] * inv;
    });
    return out;
  }

  TensorPtr<T> sum(const TensorPtr<T>& a) {
    auto out = result({1}, a, a);
    T s = 0;
    for (std::size_t i = 0; i < a->size(); ++i) s += (*a->data)[i];
    (*out->data)[0] = s;
    record(out, [a, out]() {
      if (!a->requires_grad) return;
      T g = (*out->grad)[0];
      for (std::size_t i = 0; i < a->size(); ++i) (*a->grad)[i] += g;
    });
    return out;
  }

  // mean over non-pad positions of -sum_v q(v) log p(v), with q putting
  // (1-epsilon) on the gold token and epsilon/(V-1) elsewhere
  TensorPtr<T> cross_entropy_label_smoothed(const TensorPtr<T>& logits,
                                            const std::vector<int>& targets,
                                            double epsilon, int pad_id) {
    if (logits->shape.size() != 2)
      throw Error("shape", "cross entropy expects [T x V] logits");
    if (epsilon < 0.0 || epsilon >= 1.0)
      throw Error("config", "label smoothing epsilon in [0,1)");
    std::size_t n = logits->shape[0], V = logits->shape[1];
    if (targets.size() != n)
      throw Error("shape", "target count does not match logit rows");
    std::size_t live = 0;
    for (int t : targets)
      if (t != pad_id) ++live;
    if (live == 0) throw Error("data", "no supervised positions");
    auto out = result({1}, logits, logits);
    // cache log-softmax rows for the backward pass
    auto logp = std::make_shared<std::vector<T>>(logits->size());
    T total = 0;
    T off_w = V > 1 ? T(epsilon / double(V - 1)) : T(0);
    T gold_w = T(1.0 - epsilon);
    for (std::size_t r = 0; r < n; ++r) {
      if (targets[r] == pad_id) continue;
      if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= V)
        throw Error("data", "target id out of range");
      const T* x = logits->ptr() + r * V;
      T mx = x[0];
      for (std::size_t v = 1; v < V; ++v) mx = std::max(mx, x[v]);
      T z = 0;
      for (std::size_t v = 0; v < V; ++v) z += std::exp(x[v] - mx);
      T logz = std::log(z) + mx;
      T row = 0;
      for (std::size_t v = 0; v < V; ++v) {
        T lp = x[v] - logz;
        (*logp)[r * V + v] = lp;
        T q = (static_cast<int>(v) == targets[r]) ? gold_w : off_w;
        row -= q * lp;
      }
      total += row;
    }
    (*out->data)[0] = total / T(live);
    record(out, [logits, out, logp, targets, pad_id, n, V, live, gold_w,
                 off_w]() {
      if (!logits->requires_grad) return;
      T g = (*out->grad)[0] / T(live);
      for (std::size_t r = 0; r < n; ++r) {
        if (targets[r] == pad_id) continue;
        T* gl = logits->grad->data() + r * V;
        for (std::size_t v = 0; v < V; ++v) {
          T p = std::exp((*logp)[r * V + v]);
          T q = (static_cast<int>(v) == targets[r]) ? gold_w : off_w;
          gl[v] += g * (p - q);
        }
      }
    });
    return out;
  }

 private:
  std::vector<std::function<void()>> ops_;
  bool backward_done_ = false;

  TensorPtr<T> result(const std::vector<std::size_t>& shape,
                      const TensorPtr<T>& a, const TensorPtr<T>& b) {
    return make_tensor<T>(shape,
                          grad_enabled && (a->requires_grad || b->requires_grad));
  }

  void record(const TensorPtr<T>& out, std::function<void()> fn) {
    if (debug_checks) {
      for (T v : *out->data)
        if (!std::isfinite(v))
          throw Error("numeric", "non-finite value produced by op");
    }
    if (out->requires_grad) ops_.push_back(std::move(fn));
  }

  void check3(const TensorPtr<T>& a, const TensorPtr<T>& b, std::size_t ka,
              std::size_t kb, const char* name) {
    if (a->shape.size() != 3 || b->shape.size() != 3 ||
        a->shape[0] != b->shape[0] || ka != kb)
      throw Error("shape", std::string(name) + " mismatch " +
                               detail::shape_str(a->shape) + " * " +
                               detail::shape_str(b->shape));
  }

  std::tuple<std::size_t, std::size_t, std::size_t> axis_strides(
      const TensorPtr<T>& a, int axis) {
    int nd = static_cast<int>(a->shape.size());
    if (axis < 0) axis += nd;
    if (axis < 0 || axis >= nd) throw Error("shape", "softmax axis out of range");
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= a->shape[i];
    for (int i = axis + 1; i < nd; ++i) inner *= a->shape[i];
    return {outer, a->shape[axis], inner};
  }
};

// zero-cost view with a new shape; shares data and grad buffers
template <typename T>
TensorPtr<T> view(const TensorPtr<T>& a, std::vector<std::size_t> shape) {
  if (detail::shape_numel(shape) != a->size())
    throw Error("shape", "view element count mismatch");
  auto t = std::make_shared<Tensor<T>>();
  t->shape = std::move(shape);
  t->data = a->data;
  t->grad = a->grad;
  t->requires_grad = a->requires_grad;
  return t;
}

}  // namespace tnmt
