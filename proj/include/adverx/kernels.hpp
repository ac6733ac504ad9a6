#pragma once

// Dense NN kernels in two flavors:
//   ref:: straightforward serial loops, the reference semantics
//   par:: OpenMP-parallel, GEMM-backed (Eigen) production path
// Dispatch is by Exec. The parallel path partitions work so results do not
// depend on the schedule; conv weight gradients reduce over a fixed chunk
// grid, so they are bit-stable for a given chunk layout regardless of
// thread count.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "adverx/tensor.hpp"

namespace adverx {

enum class Exec { SerialRef, Parallel };

struct Conv2dDims {
  int64_t n = 0, cin = 0, h = 0, w = 0;
  int64_t cout = 0, k = 0, stride = 1, pad = 0;
  int64_t ho() const { return (h + 2 * pad - k) / stride + 1; }
  int64_t wo() const { return (w + 2 * pad - k) / stride + 1; }
};

namespace kernels {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapRM = Eigen::Map<RowMat<T>>;
template <class T>
using CMapRM = Eigen::Map<const RowMat<T>>;

// C (+)= A(M,K) * B(K,N), row-major raw pointers.
template <class T>
inline void gemm(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C,
                 bool accumulate) {
  CMapRM<T> a(A, M, K);
  CMapRM<T> b(B, K, N);
  MapRM<T> c(C, M, N);
  if (accumulate)
    c.noalias() += a * b;
  else
    c.noalias() = a * b;
}

// C (+)= A^T where A is (K,M); B is (K,N).
template <class T>
inline void gemm_at(int64_t M, int64_t N, int64_t K, const T* A, const T* B,
                    T* C, bool accumulate) {
  CMapRM<T> a(A, K, M);
  CMapRM<T> b(B, K, N);
  MapRM<T> c(C, M, N);
  if (accumulate)
    c.noalias() += a.transpose() * b;
  else
    c.noalias() = a.transpose() * b;
}

// C (+)= A(M,K) * B^T where B is (N,K).
template <class T>
inline void gemm_bt(int64_t M, int64_t N, int64_t K, const T* A, const T* B,
                    T* C, bool accumulate) {
  CMapRM<T> a(A, M, K);
  CMapRM<T> b(B, N, K);
  MapRM<T> c(C, M, N);
  if (accumulate)
    c.noalias() += a * b.transpose();
  else
    c.noalias() = a * b.transpose();
}

// col is (cin*k*k, ho*wo) row-major for one sample.
template <class T>
inline void im2col(const T* x, const Conv2dDims& d, T* col) {
  const int64_t ho = d.ho(), wo = d.wo();
  for (int64_t ci = 0; ci < d.cin; ++ci) {
    const T* xc = x + ci * d.h * d.w;
    for (int64_t ki = 0; ki < d.k; ++ki) {
      for (int64_t kj = 0; kj < d.k; ++kj) {
        T* row = col + ((ci * d.k + ki) * d.k + kj) * ho * wo;
        for (int64_t oh = 0; oh < ho; ++oh) {
          const int64_t ih = oh * d.stride - d.pad + ki;
          if (ih < 0 || ih >= d.h) {
            for (int64_t ow = 0; ow < wo; ++ow) row[oh * wo + ow] = T(0);
            continue;
          }
          const T* xrow = xc + ih * d.w;
          for (int64_t ow = 0; ow < wo; ++ow) {
            const int64_t iw = ow * d.stride - d.pad + kj;
            row[oh * wo + ow] = (iw >= 0 && iw < d.w) ? xrow[iw] : T(0);
          }
        }
      }
    }
  }
}

// Scatter-add of a column matrix back to image layout (dX accumulation).
template <class T>
inline void col2im_add(const T* col, const Conv2dDims& d, T* x) {
  const int64_t ho = d.ho(), wo = d.wo();
  for (int64_t ci = 0; ci < d.cin; ++ci) {
    T* xc = x + ci * d.h * d.w;
    for (int64_t ki = 0; ki < d.k; ++ki) {
      for (int64_t kj = 0; kj < d.k; ++kj) {
        const T* row = col + ((ci * d.k + ki) * d.k + kj) * ho * wo;
        for (int64_t oh = 0; oh < ho; ++oh) {
          const int64_t ih = oh * d.stride - d.pad + ki;
          if (ih < 0 || ih >= d.h) continue;
          T* xrow = xc + ih * d.w;
          for (int64_t ow = 0; ow < wo; ++ow) {
            const int64_t iw = ow * d.stride - d.pad + kj;
            if (iw >= 0 && iw < d.w) xrow[iw] += row[oh * wo + ow];
          }
        }
      }
    }
  }
}

namespace ref {

template <class T>
void conv2d_forward(const T* x, const T* w, const T* b, T* y,
                    const Conv2dDims& d) {
  const int64_t ho = d.ho(), wo = d.wo();
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t co = 0; co < d.cout; ++co)
      for (int64_t oh = 0; oh < ho; ++oh)
        for (int64_t ow = 0; ow < wo; ++ow) {
          T acc = b ? b[co] : T(0);
          for (int64_t ci = 0; ci < d.cin; ++ci)
            for (int64_t ki = 0; ki < d.k; ++ki)
              for (int64_t kj = 0; kj < d.k; ++kj) {
                const int64_t ih = oh * d.stride - d.pad + ki;
                const int64_t iw = ow * d.stride - d.pad + kj;
                if (ih < 0 || ih >= d.h || iw < 0 || iw >= d.w) continue;
                acc += x[((n * d.cin + ci) * d.h + ih) * d.w + iw] *
                       w[((co * d.cin + ci) * d.k + ki) * d.k + kj];
              }
          y[((n * d.cout + co) * ho + oh) * wo + ow] = acc;
        }
}

template <class T>
void conv2d_backward_input(const T* dy, const T* w, T* dx,
                           const Conv2dDims& d) {
  const int64_t ho = d.ho(), wo = d.wo();
  std::fill(dx, dx + d.n * d.cin * d.h * d.w, T(0));
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t co = 0; co < d.cout; ++co)
      for (int64_t oh = 0; oh < ho; ++oh)
        for (int64_t ow = 0; ow < wo; ++ow) {
          const T g = dy[((n * d.cout + co) * ho + oh) * wo + ow];
          for (int64_t ci = 0; ci < d.cin; ++ci)
            for (int64_t ki = 0; ki < d.k; ++ki)
              for (int64_t kj = 0; kj < d.k; ++kj) {
                const int64_t ih = oh * d.stride - d.pad + ki;
                const int64_t iw = ow * d.stride - d.pad + kj;
                if (ih < 0 || ih >= d.h || iw < 0 || iw >= d.w) continue;
                dx[((n * d.cin + ci) * d.h + ih) * d.w + iw] +=
                    g * w[((co * d.cin + ci) * d.k + ki) * d.k + kj];
              }
        }
}

template <class T>
void conv2d_backward_params(const T* dy, const T* x, T* dw, T* db,
                            const Conv2dDims& d) {
  const int64_t ho = d.ho(), wo = d.wo();
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t co = 0; co < d.cout; ++co)
      for (int64_t oh = 0; oh < ho; ++oh)
        for (int64_t ow = 0; ow < wo; ++ow) {
          const T g = dy[((n * d.cout + co) * ho + oh) * wo + ow];
          if (db) db[co] += g;
          for (int64_t ci = 0; ci < d.cin; ++ci)
            for (int64_t ki = 0; ki < d.k; ++ki)
              for (int64_t kj = 0; kj < d.k; ++kj) {
                const int64_t ih = oh * d.stride - d.pad + ki;
                const int64_t iw = ow * d.stride - d.pad + kj;
                if (ih < 0 || ih >= d.h || iw < 0 || iw >= d.w) continue;
                dw[((co * d.cin + ci) * d.k + ki) * d.k + kj] +=
                    g * x[((n * d.cin + ci) * d.h + ih) * d.w + iw];
              }
        }
}

}  // namespace ref

namespace par {

template <class T>
void conv2d_forward(const T* x, const T* w, const T* b, T* y,
                    const Conv2dDims& d) {
  const int64_t ho = d.ho(), wo = d.wo();
  const int64_t col_sz = d.cin * d.k * d.k * ho * wo;
  const int64_t xs = d.cin * d.h * d.w, ys = d.cout * ho * wo;
#pragma omp parallel
  {
    std::vector<T> col(static_cast<size_t>(col_sz));
#pragma omp for schedule(static)
    for (int64_t n = 0; n < d.n; ++n) {
      im2col(x + n * xs, d, col.data());
      gemm(d.cout, ho * wo, d.cin * d.k * d.k, w, col.data(), y + n * ys,
           false);
      if (b) {
        T* yn = y + n * ys;
        for (int64_t co = 0; co < d.cout; ++co) {
          const T bc = b[co];
          for (int64_t i = 0; i < ho * wo; ++i) yn[co * ho * wo + i] += bc;
        }
      }
    }
  }
}

template <class T>
void conv2d_backward_input(const T* dy, const T* w, T* dx,
                           const Conv2dDims& d) {
  const int64_t ho = d.ho(), wo = d.wo();
  const int64_t col_sz = d.cin * d.k * d.k * ho * wo;
  const int64_t xs = d.cin * d.h * d.w, ys = d.cout * ho * wo;
#pragma omp parallel
  {
    std::vector<T> col(static_cast<size_t>(col_sz));
#pragma omp for schedule(static)
    for (int64_t n = 0; n < d.n; ++n) {
      // dcol = W^T (cinkk, cout) * dy_n (cout, howo)
      gemm_at(d.cin * d.k * d.k, ho * wo, d.cout, w, dy + n * ys, col.data(),
              false);
      T* dxn = dx + n * xs;
      std::fill(dxn, dxn + xs, T(0));
      col2im_add(col.data(), d, dxn);
    }
  }
}

// Weight gradient reduces over samples. Partial sums are computed on a
// fixed chunk grid and combined in chunk order, independent of the number
// of worker threads.
template <class T>
void conv2d_backward_params(const T* dy, const T* x, T* dw, T* db,
                            const Conv2dDims& d) {
  const int64_t ho = d.ho(), wo = d.wo();
  const int64_t col_sz = d.cin * d.k * d.k * ho * wo;
  const int64_t xs = d.cin * d.h * d.w, ys = d.cout * ho * wo;
  const int64_t wsz = d.cout * d.cin * d.k * d.k;
  const int64_t nchunks = std::min<int64_t>(d.n, 8);
  std::vector<std::vector<T>> dw_part(static_cast<size_t>(nchunks));
  std::vector<std::vector<T>> db_part(static_cast<size_t>(nchunks));
#pragma omp parallel
  {
    std::vector<T> col(static_cast<size_t>(col_sz));
#pragma omp for schedule(static)
    for (int64_t c = 0; c < nchunks; ++c) {
      auto& dwc = dw_part[size_t(c)];
      auto& dbc = db_part[size_t(c)];
      dwc.assign(size_t(wsz), T(0));
      dbc.assign(size_t(d.cout), T(0));
      const int64_t lo = d.n * c / nchunks, hi = d.n * (c + 1) / nchunks;
      for (int64_t n = lo; n < hi; ++n) {
        im2col(x + n * xs, d, col.data());
        // dW += dy_n (cout, howo) * col^T (howo, cinkk)
        gemm_bt(d.cout, d.cin * d.k * d.k, ho * wo, dy + n * ys, col.data(),
                dwc.data(), true);
        const T* dyn = dy + n * ys;
        for (int64_t co = 0; co < d.cout; ++co) {
          T acc = T(0);
          for (int64_t i = 0; i < ho * wo; ++i) acc += dyn[co * ho * wo + i];
          dbc[size_t(co)] += acc;
        }
      }
    }
  }
  for (int64_t c = 0; c < nchunks; ++c) {
    for (int64_t i = 0; i < wsz; ++i) dw[i] += dw_part[size_t(c)][size_t(i)];
    if (db)
      for (int64_t i = 0; i < d.cout; ++i) db[i] += db_part[size_t(c)][size_t(i)];
  }
}

}  // namespace par

template <class T>
void conv2d_forward(Exec ex, const T* x, const T* w, const T* b, T* y,
                    const Conv2dDims& d) {
  if (ex == Exec::Parallel)
    par::conv2d_forward(x, w, b, y, d);
  else
    ref::conv2d_forward(x, w, b, y, d);
}

template <class T>
void conv2d_backward_input(Exec ex, const T* dy, const T* w, T* dx,
                           const Conv2dDims& d) {
  if (ex == Exec::Parallel)
    par::conv2d_backward_input(dy, w, dx, d);
  else
    ref::conv2d_backward_input(dy, w, dx, d);
}

template <class T>
void conv2d_backward_params(Exec ex, const T* dy, const T* x, T* dw, T* db,
                            const Conv2dDims& d) {
  if (ex == Exec::Parallel)
    par::conv2d_backward_params(dy, x, dw, db, d);
  else
    ref::conv2d_backward_params(dy, x, dw, db, d);
}

// ---- batch-statistics normalization --------------------------------------
// Mean and biased variance are taken over (N,H,W) per channel, always from
// the tensor being normalized. Reductions accumulate in double through
// per-sample partial sums that are sorted before combining, so the result
// is bit-identical under any permutation of the batch and in both flavors;
// parallelism is across channels.

template <class T>
inline double ordered_partial_sum(std::vector<double>& partials) {
  std::sort(partials.begin(), partials.end());
  double total = 0.0;
  for (double p : partials) total += p;
  return total;
}

template <class T>
void batchstat_forward(Exec ex, const T* x, const T* gamma, const T* beta,
                       T eps, int64_t n, int64_t c, int64_t hw, T* y, T* xhat,
                       T* mean_out, T* inv_std_out) {
  const int64_t m = n * hw;
#pragma omp parallel for schedule(static) if (ex == Exec::Parallel)
  for (int64_t ch = 0; ch < c; ++ch) {
    std::vector<double> partials(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
      const T* xc = x + (i * c + ch) * hw;
      double s = 0.0;
      for (int64_t j = 0; j < hw; ++j) s += double(xc[j]);
      partials[size_t(i)] = s;
    }
    const double mean = ordered_partial_sum<T>(partials) / double(m);
    for (int64_t i = 0; i < n; ++i) {
      const T* xc = x + (i * c + ch) * hw;
      double s = 0.0;
      for (int64_t j = 0; j < hw; ++j) {
        const double dlt = double(xc[j]) - mean;
        s += dlt * dlt;
      }
      partials[size_t(i)] = s;
    }
    const double var = ordered_partial_sum<T>(partials) / double(m);
    const T mean_t = T(mean);
    const T inv_std = T(1.0 / std::sqrt(var + double(eps)));
    mean_out[ch] = mean_t;
    inv_std_out[ch] = inv_std;
    const T g = gamma[ch], bt = beta[ch];
    for (int64_t i = 0; i < n; ++i) {
      const T* xc = x + (i * c + ch) * hw;
      T* yc = y + (i * c + ch) * hw;
      T* hc = xhat + (i * c + ch) * hw;
      for (int64_t j = 0; j < hw; ++j) {
        const T h = (xc[j] - mean_t) * inv_std;
        hc[j] = h;
        yc[j] = g * h + bt;
      }
    }
  }
}

template <class T>
void batchstat_backward(Exec ex, const T* dy, const T* xhat, const T* gamma,
                        const T* inv_std, int64_t n, int64_t c, int64_t hw,
                        T* dx, T* dgamma, T* dbeta) {
  const int64_t m = n * hw;
#pragma omp parallel for schedule(static) if (ex == Exec::Parallel)
  for (int64_t ch = 0; ch < c; ++ch) {
    std::vector<double> p_dy(static_cast<size_t>(n)), p_dy_h(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
      const T* dyc = dy + (i * c + ch) * hw;
      const T* hc = xhat + (i * c + ch) * hw;
      double s = 0.0, sh = 0.0;
      for (int64_t j = 0; j < hw; ++j) {
        s += double(dyc[j]);
        sh += double(dyc[j]) * double(hc[j]);
      }
      p_dy[size_t(i)] = s;
      p_dy_h[size_t(i)] = sh;
    }
    const T sum_dy = T(ordered_partial_sum<T>(p_dy));
    const T sum_dy_h = T(ordered_partial_sum<T>(p_dy_h));
    dgamma[ch] += sum_dy_h;
    dbeta[ch] += sum_dy;
    const T scale = gamma[ch] * inv_std[ch] / T(m);
    for (int64_t i = 0; i < n; ++i) {
      const T* dyc = dy + (i * c + ch) * hw;
      const T* hc = xhat + (i * c + ch) * hw;
      T* dxc = dx + (i * c + ch) * hw;
      for (int64_t j = 0; j < hw; ++j)
        dxc[j] = scale * (T(m) * dyc[j] - sum_dy - hc[j] * sum_dy_h);
    }
  }
}

// ---- elementwise ----------------------------------------------------------

template <class T>
void leaky_relu_forward(Exec ex, const T* x, T* y, int64_t n, T slope) {
#pragma omp parallel for schedule(static) if (ex == Exec::Parallel && n > 4096)
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : slope * x[i];
}

// Uses the stored output; slope > 0 keeps the sign of the input.
template <class T>
void leaky_relu_backward(Exec ex, const T* dy, const T* y, T* dx, int64_t n,
                         T slope) {
#pragma omp parallel for schedule(static) if (ex == Exec::Parallel && n > 4096)
  for (int64_t i = 0; i < n; ++i) dx[i] = y[i] > T(0) ? dy[i] : slope * dy[i];
}

template <class T>
void sigmoid_forward(Exec ex, const T* x, T* y, int64_t n) {
#pragma omp parallel for schedule(static) if (ex == Exec::Parallel && n > 4096)
  for (int64_t i = 0; i < n; ++i) y[i] = T(1) / (T(1) + std::exp(-x[i]));
}

template <class T>
void sigmoid_backward(Exec ex, const T* dy, const T* y, T* dx, int64_t n) {
#pragma omp parallel for schedule(static) if (ex == Exec::Parallel && n > 4096)
  for (int64_t i = 0; i < n; ++i) dx[i] = dy[i] * y[i] * (T(1) - y[i]);
}

// ---- nearest-neighbor 2x upsampling ---------------------------------------

template <class T>
void upsample2_forward(Exec ex, const T* x, T* y, int64_t nc, int64_t h,
                       int64_t w) {
#pragma omp parallel for schedule(static) if (ex == Exec::Parallel)
  for (int64_t p = 0; p < nc; ++p) {
    const T* xp = x + p * h * w;
    T* yp = y + p * 4 * h * w;
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) {
        const T v = xp[i * w + j];
        T* row0 = yp + (2 * i) * 2 * w + 2 * j;
        T* row1 = yp + (2 * i + 1) * 2 * w + 2 * j;
        row0[0] = v;
        row0[1] = v;
        row1[0] = v;
        row1[1] = v;
      }
  }
}

template <class T>
void upsample2_backward(Exec ex, const T* dy, T* dx, int64_t nc, int64_t h,
                        int64_t w) {
#pragma omp parallel for schedule(static) if (ex == Exec::Parallel)
  for (int64_t p = 0; p < nc; ++p) {
    const T* dyp = dy + p * 4 * h * w;
    T* dxp = dx + p * h * w;
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) {
        const T* row0 = dyp + (2 * i) * 2 * w + 2 * j;
        const T* row1 = dyp + (2 * i + 1) * 2 * w + 2 * j;
        dxp[i * w + j] = row0[0] + row0[1] + row1[0] + row1[1];
      }
  }
}

// ---- fully connected -------------------------------------------------------
// x: (n, in), w: (out, in), y: (n, out)

template <class T>
void linear_forward(Exec ex, const T* x, const T* w, const T* b, T* y,
                    int64_t n, int64_t in, int64_t out) {
  if (ex == Exec::Parallel) {
    gemm_bt(n, out, in, x, w, y, false);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t o = 0; o < out; ++o) y[i * out + o] += b[o];
  } else {
    for (int64_t i = 0; i < n; ++i)
      for (int64_t o = 0; o < out; ++o) {
        T acc = b[o];
        for (int64_t j = 0; j < in; ++j) acc += x[i * in + j] * w[o * in + j];
        y[i * out + o] = acc;
      }
  }
}

template <class T>
void linear_backward(Exec ex, const T* dy, const T* x, const T* w, T* dx,
                     T* dw, T* db, int64_t n, int64_t in, int64_t out) {
  if (ex == Exec::Parallel) {
    if (dx) gemm(n, in, out, dy, w, dx, false);
    gemm_at(out, in, n, dy, x, dw, true);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t o = 0; o < out; ++o) db[o] += dy[i * out + o];
  } else {
    if (dx) {
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < in; ++j) {
          T acc = T(0);
          for (int64_t o = 0; o < out; ++o)
            acc += dy[i * out + o] * w[o * in + j];
          dx[i * in + j] = acc;
        }
    }
    for (int64_t i = 0; i < n; ++i)
      for (int64_t o = 0; o < out; ++o) {
        const T g = dy[i * out + o];
        db[o] += g;
        for (int64_t j = 0; j < in; ++j) dw[o * in + j] += g * x[i * in + j];
      }
  }
}

}  // namespace kernels
}  // namespace adverx
