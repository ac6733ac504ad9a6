#pragma once

// Layers hold parameters and gradients; activations needed by backward
// live in per-call cache structs. Forward without a cache is const and
// safe to run concurrently on a shared model.

#include <cmath>
#include <string>
#include <vector>

#include "adverx/kernels.hpp"
#include "adverx/rng.hpp"
#include "adverx/tensor.hpp"

namespace adverx {

template <class T>
struct ParamRef {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
};

template <class T>
struct Conv2dCache {
  Tensor<T> x;
  Conv2dDims dims;
};

template <class T>
struct Conv2d {
  int64_t in_ch = 0, out_ch = 0, ksize = 0, stride = 1, pad = 0;
  Tensor<T> w, b, gw, gb;

  void configure(int64_t cin, int64_t cout, int64_t k, int64_t s, int64_t p) {
    in_ch = cin;
    out_ch = cout;
    ksize = k;
    stride = s;
    pad = p;
    w = Tensor<T>({cout, cin, k, k});
    b = Tensor<T>({cout});
    gw = Tensor<T>({cout, cin, k, k});
    gb = Tensor<T>({cout});
  }

  // He-style init scaled for a leaky-ReLU follow-up; biases zero.
  void init(Rng& rng, T leaky_slope) {
    const T fan_in = T(in_ch * ksize * ksize);
    const T stddev = std::sqrt(T(2) / ((T(1) + leaky_slope * leaky_slope) * fan_in));
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = T(rng.normal()) * stddev;
    b.zero();
  }

  Conv2dDims dims_for(const Tensor<T>& x) const {
    if (x.ndim() != 4 || x.dim(1) != in_ch)
      throw Error(ErrorKind::ShapeError,
                  "conv2d input " + Tensor<T>::shape_string(x.shape()) +
                      " incompatible with in_ch=" + std::to_string(in_ch));
    Conv2dDims d;
    d.n = x.dim(0);
    d.cin = in_ch;
    d.h = x.dim(2);
    d.w = x.dim(3);
    d.cout = out_ch;
    d.k = ksize;
    d.stride = stride;
    d.pad = pad;
    return d;
  }

  Tensor<T> forward(const Tensor<T>& x, Exec ex) const {
    const Conv2dDims d = dims_for(x);
    Tensor<T> y({d.n, d.cout, d.ho(), d.wo()});
    kernels::conv2d_forward(ex, x.data(), w.data(), b.data(), y.data(), d);
    return y;
  }

  Tensor<T> forward(const Tensor<T>& x, Conv2dCache<T>& cache, Exec ex) const {
    cache.x = x;
    cache.dims = dims_for(x);
    return forward(x, ex);
  }

  Tensor<T> backward(const Tensor<T>& dy, const Conv2dCache<T>& cache, Exec ex,
                     bool need_dx = true, bool accum_params = true) {
    const Conv2dDims& d = cache.dims;
    if (accum_params)
      kernels::conv2d_backward_params(ex, dy.data(), cache.x.data(), gw.data(),
                                      gb.data(), d);
    Tensor<T> dx;
    if (need_dx) {
      dx = Tensor<T>({d.n, d.cin, d.h, d.w});
      kernels::conv2d_backward_input(ex, dy.data(), w.data(), dx.data(), d);
    }
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".weight", &w, &gw});
    out.push_back({prefix + ".bias", &b, &gb});
  }

  int64_t param_count() const { return w.numel() + b.numel(); }
};

template <class T>
struct BatchStatNormCache {
  Tensor<T> xhat;             // normalized pre-affine activations
  std::vector<T> mean, inv_std;
  int64_t n = 0, c = 0, hw = 0;
};

// Normalization that standardizes with the statistics of the batch being
// processed, in training and inference alike. There are no running
// averages anywhere. Variance is the biased (population) estimator.
template <class T>
struct BatchStatNorm {
  int64_t channels = 0;
  T eps = T(1e-5);
  Tensor<T> gamma, beta, ggamma, gbeta;

  void configure(int64_t c, T epsilon) {
    channels = c;
    eps = epsilon;
    gamma = Tensor<T>::full({c}, T(1));
    beta = Tensor<T>({c});
    ggamma = Tensor<T>({c});
    gbeta = Tensor<T>({c});
  }

  Tensor<T> forward(const Tensor<T>& x, Exec ex) const {
    BatchStatNormCache<T> scratch;
    return forward(x, scratch, ex);
  }

  Tensor<T> forward(const Tensor<T>& x, BatchStatNormCache<T>& cache,
                    Exec ex) const {
    if (x.ndim() != 4 || x.dim(1) != channels)
      throw Error(ErrorKind::ShapeError, "batchstat norm channel mismatch");
    if (x.dim(0) < 2)
      throw Error(ErrorKind::BatchTooSmall,
                  "batch statistics need at least 2 samples, got " +
                      std::to_string(x.dim(0)));
    cache.n = x.dim(0);
    cache.c = channels;
    cache.hw = x.dim(2) * x.dim(3);
    cache.xhat = Tensor<T>(x.shape());
    cache.mean.assign(size_t(channels), T(0));
    cache.inv_std.assign(size_t(channels), T(0));
    Tensor<T> y(x.shape());
    kernels::batchstat_forward(ex, x.data(), gamma.data(), beta.data(), eps,
                               cache.n, cache.c, cache.hw, y.data(),
                               cache.xhat.data(), cache.mean.data(),
                               cache.inv_std.data());
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const BatchStatNormCache<T>& cache,
                     Exec ex, bool accum_params = true) {
    Tensor<T> dx(dy.shape());
    Tensor<T> gg_sink, gb_sink;
    if (!accum_params) {
      gg_sink = Tensor<T>(ggamma.shape());
      gb_sink = Tensor<T>(gbeta.shape());
    }
    kernels::batchstat_backward(ex, dy.data(), cache.xhat.data(), gamma.data(),
                                cache.inv_std.data(), cache.n, cache.c,
                                cache.hw, dx.data(),
                                accum_params ? ggamma.data() : gg_sink.data(),
                                accum_params ? gbeta.data() : gb_sink.data());
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".gamma", &gamma, &ggamma});
    out.push_back({prefix + ".beta", &beta, &gbeta});
  }

  int64_t param_count() const { return gamma.numel() + beta.numel(); }
};

template <class T>
struct ActCache {
  Tensor<T> y;
};

template <class T>
struct LeakyRelu {
  T slope = T(0.2);

  Tensor<T> forward(const Tensor<T>& x, Exec ex) const {
    Tensor<T> y(x.shape());
    kernels::leaky_relu_forward(ex, x.data(), y.data(), x.numel(), slope);
    return y;
  }
  Tensor<T> forward(const Tensor<T>& x, ActCache<T>& cache, Exec ex) const {
    Tensor<T> y = forward(x, ex);
    cache.y = y;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy, const ActCache<T>& cache,
                     Exec ex) const {
    Tensor<T> dx(dy.shape());
    kernels::leaky_relu_backward(ex, dy.data(), cache.y.data(), dx.data(),
                                 dy.numel(), slope);
    return dx;
  }
};

template <class T>
struct Sigmoid {
  Tensor<T> forward(const Tensor<T>& x, Exec ex) const {
    Tensor<T> y(x.shape());
    kernels::sigmoid_forward(ex, x.data(), y.data(), x.numel());
    return y;
  }
  Tensor<T> forward(const Tensor<T>& x, ActCache<T>& cache, Exec ex) const {
    Tensor<T> y = forward(x, ex);
    cache.y = y;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy, const ActCache<T>& cache,
                     Exec ex) const {
    Tensor<T> dx(dy.shape());
    kernels::sigmoid_backward(ex, dy.data(), cache.y.data(), dx.data(),
                              dy.numel());
    return dx;
  }
};

template <class T>
struct LinearCache {
  Tensor<T> x;  // flattened input (n, in)
};

template <class T>
struct Linear {
  int64_t in_features = 0, out_features = 0;
  Tensor<T> w, b, gw, gb;

  void configure(int64_t in, int64_t out) {
    in_features = in;
    out_features = out;
    w = Tensor<T>({out, in});
    b = Tensor<T>({out});
    gw = Tensor<T>({out, in});
    gb = Tensor<T>({out});
  }

  void init(Rng& rng, T stddev) {
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = T(rng.normal()) * stddev;
    b.zero();
  }

  Tensor<T> forward(const Tensor<T>& x, Exec ex) const {
    if (x.ndim() != 2 || x.dim(1) != in_features)
      throw Error(ErrorKind::ShapeError, "linear input mismatch");
    Tensor<T> y({x.dim(0), out_features});
    kernels::linear_forward(ex, x.data(), w.data(), b.data(), y.data(),
                            x.dim(0), in_features, out_features);
    return y;
  }
  Tensor<T> forward(const Tensor<T>& x, LinearCache<T>& cache, Exec ex) const {
    cache.x = x;
    return forward(x, ex);
  }
  Tensor<T> backward(const Tensor<T>& dy, const LinearCache<T>& cache, Exec ex,
                     bool need_dx = true, bool accum_params = true) {
    Tensor<T> dx;
    if (need_dx) dx = Tensor<T>({cache.x.dim(0), in_features});
    Tensor<T> gw_sink, gb_sink;
    if (!accum_params) {
      gw_sink = Tensor<T>(gw.shape());
      gb_sink = Tensor<T>(gb.shape());
    }
    kernels::linear_backward(ex, dy.data(), cache.x.data(), w.data(),
                             need_dx ? dx.data() : nullptr,
                             accum_params ? gw.data() : gw_sink.data(),
                             accum_params ? gb.data() : gb_sink.data(),
                             cache.x.dim(0), in_features, out_features);
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".weight", &w, &gw});
    out.push_back({prefix + ".bias", &b, &gb});
  }

  int64_t param_count() const { return w.numel() + b.numel(); }
};

template <class T>
struct Upsample2Cache {
  int64_t nc = 0, h = 0, w = 0;
};

template <class T>
struct UpsampleNearest2 {
  Tensor<T> forward(const Tensor<T>& x, Exec ex) const {
    Upsample2Cache<T> scratch;
    return forward(x, scratch, ex);
  }
  Tensor<T> forward(const Tensor<T>& x, Upsample2Cache<T>& cache, Exec ex) const {
    cache.nc = x.dim(0) * x.dim(1);
    cache.h = x.dim(2);
    cache.w = x.dim(3);
    Tensor<T> y({x.dim(0), x.dim(1), 2 * x.dim(2), 2 * x.dim(3)});
    kernels::upsample2_forward(ex, x.data(), y.data(), cache.nc, cache.h,
                               cache.w);
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy, const Upsample2Cache<T>& cache,
                     Exec ex) const {
    Tensor<T> dx({dy.dim(0), dy.dim(1), cache.h, cache.w});
    kernels::upsample2_backward(ex, dy.data(), dx.data(), cache.nc, cache.h,
                                cache.w);
    return dx;
  }
};

// Adam with bias correction; state is per parameter tensor.
template <class T>
class Adam {
 public:
  Adam(std::vector<ParamRef<T>> params, T lr, T beta1, T beta2,
       T eps = T(1e-8))
      : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    for (auto& p : params_) {
      slots_.push_back({Tensor<T>(p.value->shape()), Tensor<T>(p.value->shape())});
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.grad->zero();
  }

  void step() {
    ++t_;
    const T bc1 = T(1) - std::pow(b1_, T(t_));
    const T bc2 = T(1) - std::pow(b2_, T(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      Tensor<T>& p = *params_[i].value;
      Tensor<T>& g = *params_[i].grad;
      Tensor<T>& m = slots_[i].m;
      Tensor<T>& v = slots_[i].v;
      const int64_t n = p.numel();
      for (int64_t j = 0; j < n; ++j) {
        m[j] = b1_ * m[j] + (T(1) - b1_) * g[j];
        v[j] = b2_ * v[j] + (T(1) - b2_) * g[j] * g[j];
        const T mhat = m[j] / bc1;
        const T vhat = v[j] / bc2;
        p[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  const std::vector<ParamRef<T>>& params() const { return params_; }

 private:
  struct Slot {
    Tensor<T> m, v;
  };
  std::vector<ParamRef<T>> params_;
  std::vector<Slot> slots_;
  T lr_, b1_, b2_, eps_;
  int64_t t_ = 0;
};

}  // namespace adverx
