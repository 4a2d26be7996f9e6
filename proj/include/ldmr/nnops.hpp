#pragma once

#include <cmath>
#include <vector>

#include "ldmr/parallel.hpp"
#include "ldmr/tensor.hpp"

namespace ldmr::nn {

// Row-major GEMM: C = alpha * op(A) * op(B) + beta * C. Backed by BLAS,
// pinned to one internal thread; parallelism lives in the callers' fixed
// chunk grids.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
          const float* a, int lda, const float* b, int ldb, float beta,
          float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
          const double* a, int lda, const double* b, int ldb, double beta,
          double* c, int ldc);

inline int conv_out_dim(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

namespace detail {

// col(k, n) for output rows [r0, r1): k = (ci*KH + kh)*KW + kw,
// n = (r - r0)*Wout + c.
template <typename T>
void im2col_band(const T* x, int cin, int h, int w, int kh, int kw, int stride,
                 int pad, int wout, int r0, int r1, T* col) {
  const int band = (r1 - r0) * wout;
  for (int ci = 0; ci < cin; ++ci)
    for (int dy = 0; dy < kh; ++dy)
      for (int dx = 0; dx < kw; ++dx) {
        T* dst = col + (static_cast<std::size_t>(ci) * kh * kw + dy * kw + dx) *
                           band;
        for (int r = r0; r < r1; ++r) {
          int yy = r * stride + dy - pad;
          const T* src = (yy >= 0 && yy < h)
                             ? x + (static_cast<std::size_t>(ci) * h + yy) * w
                             : nullptr;
          for (int c = 0; c < wout; ++c) {
            int xx = c * stride + dx - pad;
            *dst++ = (src && xx >= 0 && xx < w) ? src[xx] : T(0);
          }
        }
      }
}

template <typename T>
void col2im(const T* col, int cin, int h, int w, int kh, int kw, int stride,
            int pad, int hout, int wout, T* x) {
  for (int ci = 0; ci < cin; ++ci)
    for (int dy = 0; dy < kh; ++dy)
      for (int dx = 0; dx < kw; ++dx) {
        const T* src =
            col + (static_cast<std::size_t>(ci) * kh * kw + dy * kw + dx) *
                      (static_cast<std::size_t>(hout) * wout);
        for (int r = 0; r < hout; ++r) {
          int yy = r * stride + dy - pad;
          if (yy < 0 || yy >= h) {
            src += wout;
            continue;
          }
          T* dst = x + (static_cast<std::size_t>(ci) * h + yy) * w;
          for (int c = 0; c < wout; ++c) {
            int xx = c * stride + dx - pad;
            if (xx >= 0 && xx < w) dst[xx] += src[c];
            ++src;
          }
        }
      }
}

}  // namespace detail

// Cross-correlation with zero padding; x (B,Cin,H,W), w (Cout,Cin,KH,KW),
// bias per output channel. Spatial size is preserved for 3x3/s1/p1.
template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const TensorT<T>& w,
                          const std::vector<T>& bias, int stride = 1,
                          int pad = 1) {
  require(x.shape.size() == 4 && w.shape.size() == 4, ErrorCode::precondition,
          "conv2d expects 4-d tensors");
  require(x.dim(1) == w.dim(1), ErrorCode::precondition,
          "conv2d channel mismatch");
  require(bias.size() == static_cast<std::size_t>(w.dim(0)),
          ErrorCode::precondition, "conv2d bias size mismatch");
  const int b = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int hout = conv_out_dim(h, kh, stride, pad);
  const int wout = conv_out_dim(wd, kw, stride, pad);
  require(hout > 0 && wout > 0, ErrorCode::precondition,
          "conv2d output would be empty");
  const int k = cin * kh * kw;

  TensorT<T> out({b, cout, hout, wout});
  // fixed (sample x band) grid; every item writes a disjoint output slab
  const int bands = (b == 1) ? std::min(16, hout) : 1;
  const int rows_per_band = (hout + bands - 1) / bands;
  const int64_t items = static_cast<int64_t>(b) * bands;
  parallel_chunks(items, static_cast<int>(items), [&](int, int64_t lo,
                                                      int64_t hi) {
    std::vector<T> col;
    for (int64_t it = lo; it < hi; ++it) {
      int bi = static_cast<int>(it) / bands;
      int band = static_cast<int>(it) % bands;
      int r0 = band * rows_per_band;
      int r1 = std::min(hout, r0 + rows_per_band);
      if (r0 >= r1) continue;
      int n = (r1 - r0) * wout;
      col.resize(static_cast<std::size_t>(k) * n);
      detail::im2col_band(x.ptr() + static_cast<std::size_t>(bi) * cin * h * wd,
                          cin, h, wd, kh, kw, stride, pad, wout, r0, r1,
                          col.data());
      T* cbase = out.ptr() +
                 (static_cast<std::size_t>(bi) * cout * hout + r0) * wout;
      gemm(false, false, cout, n, k, T(1), w.ptr(), k, col.data(), n, T(0),
           cbase, hout * wout);
      for (int co = 0; co < cout; ++co) {
        T* dst = cbase + static_cast<std::size_t>(co) * hout * wout;
        for (int i = 0; i < n; ++i) dst[i] += bias[co];
      }
    }
  });
  return out;
}

template <typename T>
struct Conv2dGrads {
  TensorT<T> x;
  TensorT<T> w;
  std::vector<T> bias;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const TensorT<T>& grad_out, const TensorT<T>& x,
                               const TensorT<T>& w, int stride = 1,
                               int pad = 1, bool need_grad_x = true) {
  const int b = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int hout = grad_out.dim(2), wout = grad_out.dim(3);
  require(grad_out.dim(0) == b && grad_out.dim(1) == cout,
          ErrorCode::precondition, "grad_out shape mismatch");
  const int k = cin * kh * kw;
  const int n = hout * wout;

  Conv2dGrads<T> g;
  if (need_grad_x) g.x = TensorT<T>({b, cin, h, wd});
  g.w = TensorT<T>({cout, cin, kh, kw});
  g.bias.assign(cout, T(0));

  // per-sample partial weight grads, reduced in sample order
  const int chunks = std::min(8, b);
  std::vector<TensorT<T>> wparts(chunks, TensorT<T>({cout, cin, kh, kw}));
  parallel_chunks(b, chunks, [&](int chunk, int64_t lo, int64_t hi) {
    std::vector<T> col(static_cast<std::size_t>(k) * n);
    std::vector<T> colgrad;
    for (int64_t bi = lo; bi < hi; ++bi) {
      const T* go = grad_out.ptr() + static_cast<std::size_t>(bi) * cout * n;
      detail::im2col_band(x.ptr() + static_cast<std::size_t>(bi) * cin * h * wd,
                          cin, h, wd, kh, kw, stride, pad, wout, 0, hout,
                          col.data());
      // dW += gout * col^T
      gemm(false, true, cout, k, n, T(1), go, n, col.data(), n, T(1),
           wparts[chunk].ptr(), k);
      if (need_grad_x) {
        colgrad.resize(static_cast<std::size_t>(k) * n);
        // colgrad = W^T * gout
        gemm(true, false, k, n, cout, T(1), w.ptr(), k, go, n, T(0),
             colgrad.data(), n);
        detail::col2im(colgrad.data(), cin, h, wd, kh, kw, stride, pad, hout,
                       wout,
                       g.x.ptr() + static_cast<std::size_t>(bi) * cin * h * wd);
      }
    }
  });
  for (const auto& part : wparts)
    for (std::size_t i = 0; i < g.w.data.size(); ++i)
      g.w.data[i] += part.data[i];

  // bias grad: per-channel sum of grad_out
  for (int bi = 0; bi < b; ++bi)
    for (int co = 0; co < cout; ++co) {
      const T* go = grad_out.ptr() +
                    (static_cast<std::size_t>(bi) * cout + co) * n;
      T s = 0;
      for (int i = 0; i < n; ++i) s += go[i];
      g.bias[co] += s;
    }
  return g;
}

// ---------------------------------------------------------------------------
// batch normalization (per channel over batch and spatial dims)

template <typename T>
struct BnCache {
  TensorT<T> xhat;
  std::vector<T> inv_std;  // per channel
};

template <typename T>
struct BnGrads {
  TensorT<T> x;
  std::vector<T> gamma;
  std::vector<T> beta;
};

template <typename T>
TensorT<T> batchnorm_forward_train(const TensorT<T>& x,
                                   const std::vector<T>& gamma,
                                   const std::vector<T>& beta, T eps,
                                   BnCache<T>& cache,
                                   std::vector<T>* running_mean = nullptr,
                                   std::vector<T>* running_var = nullptr,
                                   T momentum = T(0.1)) {
  require(x.shape.size() == 4, ErrorCode::precondition,
          "batchnorm expects 4-d input");
  require(x.dim(0) >= 2, ErrorCode::precondition,
          "batchnorm train mode needs batch >= 2");
  const int b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const int64_t m = static_cast<int64_t>(b) * hw;
  TensorT<T> out(x.shape);
  cache.xhat = TensorT<T>(x.shape);
  cache.inv_std.assign(c, T(0));
  for (int ch = 0; ch < c; ++ch) {
    double mean = 0;
    for (int bi = 0; bi < b; ++bi) {
      const T* src = x.ptr() + (static_cast<std::size_t>(bi) * c + ch) * hw;
      for (int i = 0; i < hw; ++i) mean += src[i];
    }
    mean /= static_cast<double>(m);
    double var = 0;
    for (int bi = 0; bi < b; ++bi) {
      const T* src = x.ptr() + (static_cast<std::size_t>(bi) * c + ch) * hw;
      for (int i = 0; i < hw; ++i) {
        double d = src[i] - mean;
        var += d * d;
      }
    }
    var /= static_cast<double>(m);  // biased, used for normalization
    T inv = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    cache.inv_std[ch] = inv;
    for (int bi = 0; bi < b; ++bi) {
      const T* src = x.ptr() + (static_cast<std::size_t>(bi) * c + ch) * hw;
      T* xh = cache.xhat.ptr() + (static_cast<std::size_t>(bi) * c + ch) * hw;
      T* dst = out.ptr() + (static_cast<std::size_t>(bi) * c + ch) * hw;
      for (int i = 0; i < hw; ++i) {
        xh[i] = static_cast<T>((src[i] - mean) * inv);
        dst[i] = gamma[ch] * xh[i] + beta[ch];
      }
    }
    if (running_mean && running_var) {
      double unbiased = var * static_cast<double>(m) / (m - 1);
      (*running_mean)[ch] = static_cast<T>((1 - momentum) * (*running_mean)[ch] +
                                           momentum * mean);
      (*running_var)[ch] = static_cast<T>((1 - momentum) * (*running_var)[ch] +
                                          momentum * unbiased);
    }
  }
  return out;
}

template <typename T>
TensorT<T> batchnorm_forward_eval(const TensorT<T>& x,
                                  const std::vector<T>& gamma,
                                  const std::vector<T>& beta,
                                  const std::vector<T>& running_mean,
                                  const std::vector<T>& running_var, T eps) {
  require(x.shape.size() == 4, ErrorCode::precondition,
          "batchnorm expects 4-d input");
  const int b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  TensorT<T> out(x.shape);
  for (int ch = 0; ch < c; ++ch) {
    T inv = static_cast<T>(
        1.0 / std::sqrt(static_cast<double>(running_var[ch]) +
                        static_cast<double>(eps)));
    T scale = gamma[ch] * inv;
    T shift = beta[ch] - scale * running_mean[ch];
    for (int bi = 0; bi < b; ++bi) {
      const T* src = x.ptr() + (static_cast<std::size_t>(bi) * c + ch) * hw;
      T* dst = out.ptr() + (static_cast<std::size_t>(bi) * c + ch) * hw;
      for (int i = 0; i < hw; ++i) dst[i] = scale * src[i] + shift;
    }
  }
  return out;
}

template <typename T>
BnGrads<T> batchnorm_backward(const TensorT<T>& grad_out,
                              const BnCache<T>& cache,
                              const std::vector<T>& gamma) {
  const int b = grad_out.dim(0), c = grad_out.dim(1),
            hw = grad_out.dim(2) * grad_out.dim(3);
  const int64_t m = static_cast<int64_t>(b) * hw;
  BnGrads<T> g;
  g.x = TensorT<T>(grad_out.shape);
  g.gamma.assign(c, T(0));
  g.beta.assign(c, T(0));
  for (int ch = 0; ch < c; ++ch) {
    double sum_gy = 0, sum_gy_xhat = 0;
    for (int bi = 0; bi < b; ++bi) {
      const T* go =
          grad_out.ptr() + (static_cast<std::size_t>(bi) * c + ch) * hw;
      const T* xh =
          cache.xhat.ptr() + (static_cast<std::size_t>(bi) * c + ch) * hw;
      for (int i = 0; i < hw; ++i) {
        sum_gy += go[i];
        sum_gy_xhat += static_cast<double>(go[i]) * xh[i];
      }
    }
    g.beta[ch] = static_cast<T>(sum_gy);
    g.gamma[ch] = static_cast<T>(sum_gy_xhat);
    const double c1 = sum_gy / static_cast<double>(m);
    const double c2 = sum_gy_xhat / static_cast<double>(m);
    const double scale = gamma[ch] * cache.inv_std[ch];
    for (int bi = 0; bi < b; ++bi) {
      const T* go =
          grad_out.ptr() + (static_cast<std::size_t>(bi) * c + ch) * hw;
      const T* xh =
          cache.xhat.ptr() + (static_cast<std::size_t>(bi) * c + ch) * hw;
      T* gx = g.x.ptr() + (static_cast<std::size_t>(bi) * c + ch) * hw;
      for (int i = 0; i < hw; ++i)
        gx[i] = static_cast<T>(scale * (go[i] - c1 - xh[i] * c2));
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& x) {
  TensorT<T> out(x.shape);
  for (std::size_t i = 0; i < x.data.size(); ++i)
    out.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
  return out;
}

// grad routed through the positive lanes of the cached output
template <typename T>
TensorT<T> relu_backward(const TensorT<T>& grad_out, const TensorT<T>& out) {
  TensorT<T> g(grad_out.shape);
  for (std::size_t i = 0; i < g.data.size(); ++i)
    g.data[i] = out.data[i] > T(0) ? grad_out.data[i] : T(0);
  return g;
}

template <typename T>
TensorT<T> add_forward(const TensorT<T>& a, const TensorT<T>& b) {
  require(a.shape == b.shape, ErrorCode::precondition, "add shape mismatch");
  TensorT<T> out(a.shape);
  for (std::size_t i = 0; i < a.data.size(); ++i)
    out.data[i] = a.data[i] + b.data[i];
  return out;
}

template <typename T>
void add_inplace(TensorT<T>& a, const TensorT<T>& b) {
  require(a.shape == b.shape, ErrorCode::precondition, "add shape mismatch");
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

// ---------------------------------------------------------------------------
// 2x2 stride-2 max pooling (feature extractor)

template <typename T>
struct PoolCache {
  std::vector<int32_t> argmax;
  std::vector<int> in_shape;
};

template <typename T>
TensorT<T> maxpool2_forward(const TensorT<T>& x, PoolCache<T>& cache) {
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int ho = h / 2, wo = w / 2;
  require(ho > 0 && wo > 0, ErrorCode::precondition, "pool input too small");
  TensorT<T> out({b, c, ho, wo});
  cache.in_shape = x.shape;
  cache.argmax.resize(out.data.size());
  for (int bi = 0; bi < b; ++bi)
    for (int ch = 0; ch < c; ++ch) {
      const T* src = x.ptr() + (static_cast<std::size_t>(bi) * c + ch) * h * w;
      T* dst = out.ptr() + (static_cast<std::size_t>(bi) * c + ch) * ho * wo;
      int32_t* am = cache.argmax.data() +
                    (static_cast<std::size_t>(bi) * c + ch) * ho * wo;
      for (int r = 0; r < ho; ++r)
        for (int cc = 0; cc < wo; ++cc) {
          int base = 2 * r * w + 2 * cc;
          int best = base;
          T bv = src[base];
          const int cand[3] = {base + 1, base + w, base + w + 1};
          for (int k = 0; k < 3; ++k)
            if (src[cand[k]] > bv) {
              bv = src[cand[k]];
              best = cand[k];
            }
          dst[r * wo + cc] = bv;
          am[r * wo + cc] = best;
        }
    }
  return out;
}

template <typename T>
TensorT<T> maxpool2_backward(const TensorT<T>& grad_out,
                             const PoolCache<T>& cache) {
  TensorT<T> g(cache.in_shape);
  const int b = grad_out.dim(0), c = grad_out.dim(1),
            ho = grad_out.dim(2), wo = grad_out.dim(3);
  const int h = cache.in_shape[2], w = cache.in_shape[3];
  for (int bi = 0; bi < b; ++bi)
    for (int ch = 0; ch < c; ++ch) {
      const T* go =
          grad_out.ptr() + (static_cast<std::size_t>(bi) * c + ch) * ho * wo;
      const int32_t* am = cache.argmax.data() +
                          (static_cast<std::size_t>(bi) * c + ch) * ho * wo;
      T* gx = g.ptr() + (static_cast<std::size_t>(bi) * c + ch) * h * w;
      for (int i = 0; i < ho * wo; ++i) gx[am[i]] += go[i];
    }
  return g;
}

}  // namespace ldmr::nn
