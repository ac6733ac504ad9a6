#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "adverx/model.hpp"
#include "adverx/tensor.hpp"

namespace adverx {

// Probabilities entering a log are clamped into this window, so every loss
// is finite for inputs in [0,1].
inline constexpr double kProbEps = 1e-7;

struct LossWeights {
  double beta_kl = 1e-2;
  double lambda_adv_recon = 1.0;
  double lambda_adv_sample = 1.0;
};

inline void validate(const LossWeights& w) {
  if (!(w.beta_kl >= 0.0) || !(w.lambda_adv_recon >= 0.0) ||
      !(w.lambda_adv_sample >= 0.0) || !std::isfinite(w.beta_kl) ||
      !std::isfinite(w.lambda_adv_recon) || !std::isfinite(w.lambda_adv_sample))
    throw Error(ErrorKind::InvalidArgument,
                "loss weights must be finite and non-negative");
}

// Relative weight of the three discriminator supervision streams
// (real vs reconstructed vs sampled fakes).
struct DiscStreamWeights {
  double real = 0.5;
  double recon = 0.25;
  double sample = 0.25;
};

namespace detail {
template <class T>
T clamp_prob(T p) {
  if (p < T(kProbEps)) return T(kProbEps);
  if (p > T(1) - T(kProbEps)) return T(1) - T(kProbEps);
  return p;
}

template <class T>
void check_prob(T p, const char* what) {
  if (!(p >= T(0) && p <= T(1)))
    throw Error(ErrorKind::NumericalError,
                std::string(what) + ": probability outside [0,1]");
}
}  // namespace detail

// Closed-form KL between the diagonal-Gaussian posterior and N(0, I):
// mean over the batch of 1/2 sum_d (mu^2 + exp(logvar) - logvar - 1).
template <class T>
T kl_divergence(const Tensor<T>& mu, const Tensor<T>& logvar) {
  check_same_shape(mu, logvar, "kl_divergence");
  if (mu.ndim() != 2) throw Error(ErrorKind::ShapeError, "expect (n, latent)");
  const int64_t n = mu.dim(0);
  double total = 0.0;
  for (int64_t i = 0; i < mu.numel(); ++i) {
    const double m = double(mu[i]);
    const double lv = double(logvar[i]);
    if (!std::isfinite(m) || !std::isfinite(lv))
      throw Error(ErrorKind::NumericalError, "non-finite posterior moment");
    const double lv_c = std::min(kLogvarClampHi, std::max(kLogvarClampLo, lv));
    total += 0.5 * (m * m + std::exp(lv_c) - lv - 1.0);
  }
  return T(total / double(n));
}

// Accumulates scale * dKL into dmu/dlogvar.
template <class T>
void kl_divergence_backward(const Tensor<T>& mu, const Tensor<T>& logvar,
                            T scale, Tensor<T>& dmu, Tensor<T>& dlogvar) {
  const int64_t n = mu.dim(0);
  const T s = scale / T(n);
  for (int64_t i = 0; i < mu.numel(); ++i) {
    dmu[i] += s * mu[i];
    const T lv = logvar[i];
    const bool in_window = lv >= T(kLogvarClampLo) && lv <= T(kLogvarClampHi);
    dlogvar[i] += s * T(0.5) * ((in_window ? std::exp(lv) : T(0)) - T(1));
  }
}

// Mean squared error over batch and pixels.
template <class T>
T reconstruction_loss(const Tensor<T>& x, const Tensor<T>& x_hat) {
  check_same_shape(x, x_hat, "reconstruction_loss");
  double total = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double d = double(x[i]) - double(x_hat[i]);
    total += d * d;
  }
  return T(total / double(x.numel()));
}

template <class T>
void reconstruction_loss_backward(const Tensor<T>& x, const Tensor<T>& x_hat,
                                  T scale, Tensor<T>& dx_hat) {
  const T s = scale * T(2) / T(x.numel());
  for (int64_t i = 0; i < x.numel(); ++i) dx_hat[i] += s * (x_hat[i] - x[i]);
}

template <class T>
T elbo_loss(const Tensor<T>& x, const Tensor<T>& x_hat, const Tensor<T>& mu,
            const Tensor<T>& logvar, const LossWeights& w) {
  return reconstruction_loss(x, x_hat) + T(w.beta_kl) * kl_divergence(mu, logvar);
}

template <class T>
T bce_mean(const std::vector<T>& probs, bool target_real, const char* what) {
  if (probs.empty()) throw Error(ErrorKind::EmptyInput, what);
  double total = 0.0;
  for (T p : probs) {
    detail::check_prob(p, what);
    const T pc = detail::clamp_prob(p);
    total += target_real ? -std::log(double(pc)) : -std::log(1.0 - double(pc));
  }
  return T(total / double(probs.size()));
}

// Non-saturating generator loss over the two fake streams.
template <class T>
T generator_adversarial_loss(const std::vector<T>& d_prob_recon,
                             const std::vector<T>& d_prob_sample,
                             const LossWeights& w) {
  T loss = T(0);
  if (w.lambda_adv_recon > 0.0)
    loss += T(w.lambda_adv_recon) * bce_mean(d_prob_recon, true, "g_adv recon");
  if (w.lambda_adv_sample > 0.0)
    loss += T(w.lambda_adv_sample) * bce_mean(d_prob_sample, true, "g_adv sample");
  return loss;
}

// Targets: real -> 1, reconstructed -> 0, sampled -> 0.
template <class T>
T discriminator_loss(const std::vector<T>& d_prob_real,
                     const std::vector<T>& d_prob_recon,
                     const std::vector<T>& d_prob_sample,
                     const DiscStreamWeights& sw = {}) {
  return T(sw.real) * bce_mean(d_prob_real, true, "d real") +
         T(sw.recon) * bce_mean(d_prob_recon, false, "d recon") +
         T(sw.sample) * bce_mean(d_prob_sample, false, "d sample");
}

// d/dlogit of scale * mean_i BCE(sigmoid(logit_i), target), with the same
// clamping window as the forward pass (gradient is zero where the clamp
// is active). logits has shape (n).
template <class T>
Tensor<T> bce_backward_logits(const Tensor<T>& logits, bool target_real,
                              T scale) {
  const int64_t n = logits.numel();
  Tensor<T> dl({n});
  const T s = scale / T(n);
  for (int64_t i = 0; i < n; ++i) {
    const T p = T(1) / (T(1) + std::exp(-logits[i]));
    if (p < T(kProbEps) || p > T(1) - T(kProbEps)) {
      dl[i] = T(0);
      continue;
    }
    dl[i] = s * (target_real ? -(T(1) - p) : p);
  }
  return dl;
}

}  // namespace adverx
