// Central finite differences (h = 1e-4) against the analytic backward pass
// for every loss term, on the toy double-precision model. The acceptance
// suite re-runs this check with its runtime budget.

#include <doctest.h>

#include <cmath>
#include <functional>

#include "adverx/losses.hpp"
#include "adverx/model.hpp"
#include "testutil.hpp"

using namespace adverx;

namespace {

struct Fixture {
  AdverxModelT<double> model = init_model<double>(testutil::toy_arch(), 21);
  Tensor<double> x = testutil::random_patches<double>(4, 8, 77);
  Tensor<double> eps =
      draw_standard_normal<double>({4, 3}, derive_seed(5, RngStream::ReparamEps));
  Tensor<double> z_prior = sample_prior<double>(4, 3, 6);
  LossWeights weights{0.01, 1.0, 1.0};

  Fixture() { model.exec = Exec::SerialRef; }
};

// Checks every scalar of `params` with central differences of `value`
// against the gradients produced by `backward`. A parameter whose +-h step
// straddles a leaky-ReLU kink sees a blended slope at h = 1e-4; those few
// are re-measured at a smaller step, where a genuinely wrong analytic
// gradient would still mismatch while the kink artifact vanishes.
void check_params(std::vector<ParamRef<double>> params,
                  const std::function<double()>& value,
                  const std::function<void()>& backward, const char* what) {
  for (auto& p : params) p.grad->zero();
  backward();

  int failures = 0;
  for (auto& p : params) {
    for (int64_t i = 0; i < p.value->numel(); ++i) {
      const double analytic = (*p.grad)[i];
      const auto fd_at = [&](double h) {
        const double saved = (*p.value)[i];
        (*p.value)[i] = saved + h;
        const double up = value();
        (*p.value)[i] = saved - h;
        const double down = value();
        (*p.value)[i] = saved;
        return (up - down) / (2 * h);
      };
      const auto rel = [&](double fd) {
        return std::abs(fd - analytic) /
               std::max({std::abs(fd), std::abs(analytic), 1e-6});
      };
      if (rel(fd_at(1e-4)) <= 1e-4) continue;
      if (rel(fd_at(1e-6)) <= 1e-4) continue;  // kink crossing resolved
      ++failures;
      if (failures <= 3)
        MESSAGE(what << " " << p.name << "[" << i << "]: analytic " << analytic
                     << " vs fd " << fd_at(1e-4));
    }
  }
  CHECK(failures == 0);
}

}  // namespace

TEST_CASE("kl gradient through the encoder") {
  Fixture f;
  auto value = [&] {
    auto [mu, lv] = f.model.encoder.forward(f.x, f.model.exec);
    return double(kl_divergence(mu, lv));
  };
  auto backward = [&] {
    EncoderCache<double> cache;
    auto [mu, lv] = f.model.encoder.forward(f.x, cache, f.model.exec);
    Tensor<double> dmu(mu.shape()), dlv(lv.shape());
    kl_divergence_backward(mu, lv, 1.0, dmu, dlv);
    f.model.encoder.backward(dmu, dlv, cache, f.model.exec);
  };
  check_params(f.model.generator_params(), value, backward, "kl");
}

TEST_CASE("reconstruction gradient through encoder and decoder") {
  Fixture f;
  auto value = [&] {
    auto [mu, lv] = f.model.encoder.forward(f.x, f.model.exec);
    Tensor<double> z = reparameterize_with_eps(mu, lv, f.eps);
    Tensor<double> x_hat = f.model.decoder.forward(z, f.model.exec);
    return double(reconstruction_loss(f.x, x_hat));
  };
  auto backward = [&] {
    EncoderCache<double> ec;
    DecoderCache<double> dc;
    auto [mu, lv] = f.model.encoder.forward(f.x, ec, f.model.exec);
    Tensor<double> z = reparameterize_with_eps(mu, lv, f.eps);
    Tensor<double> x_hat = f.model.decoder.forward(z, dc, f.model.exec);
    Tensor<double> dx_hat(x_hat.shape());
    reconstruction_loss_backward(f.x, x_hat, 1.0, dx_hat);
    Tensor<double> dz = f.model.decoder.backward(dx_hat, dc, f.model.exec);
    Tensor<double> dmu(mu.shape()), dlv(lv.shape());
    for (int64_t i = 0; i < dz.numel(); ++i) {
      dmu[i] += dz[i];
      dlv[i] += dz[i] * f.eps[i] * 0.5 * std::exp(0.5 * lv[i]);
    }
    f.model.encoder.backward(dmu, dlv, ec, f.model.exec);
  };
  check_params(f.model.generator_params(), value, backward, "recon");
}

TEST_CASE("generator adversarial gradient with frozen discriminator") {
  Fixture f;
  auto probs = [&](const Tensor<double>& logits) {
    std::vector<double> p(size_t(logits.numel()));
    for (int64_t i = 0; i < logits.numel(); ++i)
      p[size_t(i)] = 1.0 / (1.0 + std::exp(-logits[i]));
    return p;
  };
  auto value = [&] {
    auto [mu, lv] = f.model.encoder.forward(f.x, f.model.exec);
    Tensor<double> z = reparameterize_with_eps(mu, lv, f.eps);
    Tensor<double> x_hat = f.model.decoder.forward(z, f.model.exec);
    Tensor<double> x_s = f.model.decoder.forward(f.z_prior, f.model.exec);
    auto p_recon = probs(f.model.discriminator.forward(x_hat, f.model.exec));
    auto p_sample = probs(f.model.discriminator.forward(x_s, f.model.exec));
    return double(generator_adversarial_loss(p_recon, p_sample, f.weights));
  };
  auto backward = [&] {
    EncoderCache<double> ec;
    DecoderCache<double> dc, dsc;
    auto [mu, lv] = f.model.encoder.forward(f.x, ec, f.model.exec);
    Tensor<double> z = reparameterize_with_eps(mu, lv, f.eps);
    Tensor<double> x_hat = f.model.decoder.forward(z, dc, f.model.exec);
    Tensor<double> x_s = f.model.decoder.forward(f.z_prior, dsc, f.model.exec);

    DiscriminatorCache<double> c1, c2;
    Tensor<double> l_recon = f.model.discriminator.forward(x_hat, c1, f.model.exec);
    Tensor<double> l_sample = f.model.discriminator.forward(x_s, c2, f.model.exec);
    Tensor<double> dx_hat = f.model.discriminator.backward(
        bce_backward_logits(l_recon, true, f.weights.lambda_adv_recon), c1,
        f.model.exec, true, /*accum_params=*/false);
    Tensor<double> dx_s = f.model.discriminator.backward(
        bce_backward_logits(l_sample, true, f.weights.lambda_adv_sample), c2,
        f.model.exec, true, /*accum_params=*/false);

    Tensor<double> dz = f.model.decoder.backward(dx_hat, dc, f.model.exec);
    f.model.decoder.backward(dx_s, dsc, f.model.exec);
    Tensor<double> dmu(mu.shape()), dlv(lv.shape());
    for (int64_t i = 0; i < dz.numel(); ++i) {
      dmu[i] += dz[i];
      dlv[i] += dz[i] * f.eps[i] * 0.5 * std::exp(0.5 * lv[i]);
    }
    f.model.encoder.backward(dmu, dlv, ec, f.model.exec);
  };
  check_params(f.model.generator_params(), value, backward, "g_adv");
}

TEST_CASE("discriminator loss gradient through batch-stat normalization") {
  Fixture f;
  const Tensor<double> fake_recon = testutil::random_patches<double>(4, 8, 101);
  const Tensor<double> fake_sample = testutil::random_patches<double>(4, 8, 102);
  const DiscStreamWeights sw;

  auto probs = [&](const Tensor<double>& logits) {
    std::vector<double> p(size_t(logits.numel()));
    for (int64_t i = 0; i < logits.numel(); ++i)
      p[size_t(i)] = 1.0 / (1.0 + std::exp(-logits[i]));
    return p;
  };
  auto value = [&] {
    auto p_real = probs(f.model.discriminator.forward(f.x, f.model.exec));
    auto p_recon = probs(f.model.discriminator.forward(fake_recon, f.model.exec));
    auto p_sample = probs(f.model.discriminator.forward(fake_sample, f.model.exec));
    return double(discriminator_loss(p_real, p_recon, p_sample, sw));
  };
  auto backward = [&] {
    DiscriminatorCache<double> c;
    Tensor<double> l = f.model.discriminator.forward(f.x, c, f.model.exec);
    f.model.discriminator.backward(bce_backward_logits(l, true, sw.real), c,
                                   f.model.exec, false);
    l = f.model.discriminator.forward(fake_recon, c, f.model.exec);
    f.model.discriminator.backward(bce_backward_logits(l, false, sw.recon), c,
                                   f.model.exec, false);
    l = f.model.discriminator.forward(fake_sample, c, f.model.exec);
    f.model.discriminator.backward(bce_backward_logits(l, false, sw.sample), c,
                                   f.model.exec, false);
  };
  check_params(f.model.discriminator_params(), value, backward, "d_loss");
}

TEST_CASE("elbo gradient equals recon + beta * kl") {
  Fixture f;
  auto value = [&] {
    auto [mu, lv] = f.model.encoder.forward(f.x, f.model.exec);
    Tensor<double> z = reparameterize_with_eps(mu, lv, f.eps);
    Tensor<double> x_hat = f.model.decoder.forward(z, f.model.exec);
    return double(elbo_loss(f.x, x_hat, mu, lv, f.weights));
  };
  auto backward = [&] {
    EncoderCache<double> ec;
    DecoderCache<double> dc;
    auto [mu, lv] = f.model.encoder.forward(f.x, ec, f.model.exec);
    Tensor<double> z = reparameterize_with_eps(mu, lv, f.eps);
    Tensor<double> x_hat = f.model.decoder.forward(z, dc, f.model.exec);
    Tensor<double> dx_hat(x_hat.shape());
    reconstruction_loss_backward(f.x, x_hat, 1.0, dx_hat);
    Tensor<double> dz = f.model.decoder.backward(dx_hat, dc, f.model.exec);
    Tensor<double> dmu(mu.shape()), dlv(lv.shape());
    kl_divergence_backward(mu, lv, f.weights.beta_kl, dmu, dlv);
    for (int64_t i = 0; i < dz.numel(); ++i) {
      dmu[i] += dz[i];
      dlv[i] += dz[i] * f.eps[i] * 0.5 * std::exp(0.5 * lv[i]);
    }
    f.model.encoder.backward(dmu, dlv, ec, f.model.exec);
  };
  check_params(f.model.generator_params(), value, backward, "elbo");
}
