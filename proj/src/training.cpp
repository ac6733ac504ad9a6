#include "adverx/training.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "adverx/error.hpp"
#include "adverx/patching.hpp"
#include "adverx/persistence.hpp"
#include "adverx/rng.hpp"

namespace adverx {

void validate(const TrainConfig& config) {
  if (config.epochs < 0 || config.batches_per_epoch < 0)
    throw Error(ErrorKind::InvalidArgument, "negative training budget");
  if (config.patches_per_batch < 2)
    throw Error(ErrorKind::InvalidArgument,
                "patches_per_batch must be >= 2 (batch statistics)");
  if (!(config.learning_rate_g > 0.0) || !(config.learning_rate_d > 0.0))
    throw Error(ErrorKind::InvalidArgument, "learning rates must be positive");
  validate(config.loss_weights);
}

void write_history_csv(const TrainHistory& history, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorKind::IoError, path + ": cannot open for writing");
  f << "step,elbo,kl,recon,g_adv,d_loss,d_real_acc,d_fake_acc\n";
  char buf[256];
  for (const auto& s : history.steps) {
    std::snprintf(buf, sizeof(buf), "%ld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                  long(s.step), s.elbo, s.kl, s.recon, s.g_adv, s.d_loss,
                  s.d_real_acc, s.d_fake_acc);
    f << buf;
  }
  if (!f) throw Error(ErrorKind::IoError, path + ": write failed");
}

Trainer::Trainer(const ArchitectureConfig& arch, const TrainConfig& config)
    : config_(config) {
  validate(config_);
  model_ = init_model<float>(arch, config_.rng_seed);
  opt_g_ = std::make_unique<Adam<float>>(
      model_.generator_params(), float(config_.learning_rate_g),
      float(config_.optimizer_betas.first),
      float(config_.optimizer_betas.second));
  opt_d_ = std::make_unique<Adam<float>>(
      model_.discriminator_params(), float(config_.learning_rate_d),
      float(config_.optimizer_betas.first),
      float(config_.optimizer_betas.second));
}

namespace {

// dz flows into (mu, logvar) through z = mu + exp(0.5*clamp(logvar)) * eps.
void reparam_backward(const Tensor<float>& logvar, const Tensor<float>& eps,
                      const Tensor<float>& dz, Tensor<float>& dmu,
                      Tensor<float>& dlogvar) {
  for (int64_t i = 0; i < dz.numel(); ++i) {
    dmu[i] += dz[i];
    const float lv = logvar[i];
    if (lv < float(kLogvarClampLo) || lv > float(kLogvarClampHi)) continue;
    dlogvar[i] += dz[i] * eps[i] * 0.5f * std::exp(0.5f * lv);
  }
}

std::vector<float> probabilities(const Tensor<float>& logits) {
  std::vector<float> p(size_t(logits.numel()));
  for (int64_t i = 0; i < logits.numel(); ++i)
    p[size_t(i)] = 1.0f / (1.0f + std::exp(-logits[i]));
  return p;
}

double frac_above(const std::vector<float>& p, float threshold) {
  size_t n = 0;
  for (float v : p) n += v > threshold;
  return double(n) / double(p.size());
}

void check_finite(double v, const char* what, int64_t step) {
  if (!std::isfinite(v))
    throw Error(ErrorKind::NumericalError,
                std::string(what) + " is non-finite at step " +
                    std::to_string(step));
}

}  // namespace

StepMetrics Trainer::train_step(const Tensor<float>& real_batch) {
  const Exec ex = model_.exec;
  const LossWeights& lw = config_.loss_weights;
  const DiscStreamWeights& sw = config_.stream_weights;
  const bool adv_recon = lw.lambda_adv_recon > 0.0;
  const bool adv_sample = lw.lambda_adv_sample > 0.0;
  const bool train_d = config_.train_discriminator;
  const bool need_samples = train_d || adv_sample;

  check_patch_input(model_, real_batch);
  const int64_t k = real_batch.dim(0);
  if (k < 2)
    throw Error(ErrorKind::BatchTooSmall, "training batch needs K >= 2");

  StepMetrics m;
  m.step = step_;

  // Generator forward; the graph stays alive across the discriminator
  // update because generator parameters do not change until phase 2.
  EncoderCache<float> enc_cache;
  auto [mu, logvar] = model_.encoder.forward(real_batch, enc_cache, ex);
  const Tensor<float> eps = draw_standard_normal<float>(
      mu.shape(), derive_seed(config_.rng_seed, RngStream::ReparamEps,
                              uint64_t(step_)));
  const Tensor<float> z = reparameterize_with_eps(mu, logvar, eps);
  DecoderCache<float> dec_cache;
  const Tensor<float> x_hat = model_.decoder.forward(z, dec_cache, ex);

  Tensor<float> x_sample;
  DecoderCache<float> sample_cache;
  if (need_samples) {
    const Tensor<float> z_prior = draw_standard_normal<float>(
        {k, model_.config.latent_dim},
        derive_seed(config_.rng_seed, RngStream::PriorSample, uint64_t(step_)));
    x_sample = model_.decoder.forward(z_prior, sample_cache, ex);
  }

  m.kl = double(kl_divergence(mu, logvar));
  m.recon = double(reconstruction_loss(real_batch, x_hat));
  m.elbo = m.recon + lw.beta_kl * m.kl;
  check_finite(m.elbo, "elbo", step_);

  // Phase 1: discriminator on the three streams, generator detached.
  if (train_d) {
    opt_d_->zero_grad();
    double d_loss = 0.0;

    DiscriminatorCache<float> c_real;
    const Tensor<float> logits_real =
        model_.discriminator.forward(real_batch, c_real, ex);
    const std::vector<float> p_real = probabilities(logits_real);
    d_loss += sw.real * double(bce_mean(p_real, true, "d real"));
    model_.discriminator.backward(
        bce_backward_logits(logits_real, true, float(sw.real)), c_real, ex,
        /*need_dx=*/false);

    DiscriminatorCache<float> c_recon;
    const Tensor<float> logits_recon =
        model_.discriminator.forward(x_hat, c_recon, ex);
    const std::vector<float> p_recon = probabilities(logits_recon);
    d_loss += sw.recon * double(bce_mean(p_recon, false, "d recon"));
    model_.discriminator.backward(
        bce_backward_logits(logits_recon, false, float(sw.recon)), c_recon, ex,
        /*need_dx=*/false);

    DiscriminatorCache<float> c_sample;
    const Tensor<float> logits_sample =
        model_.discriminator.forward(x_sample, c_sample, ex);
    const std::vector<float> p_sample = probabilities(logits_sample);
    d_loss += sw.sample * double(bce_mean(p_sample, false, "d sample"));
    model_.discriminator.backward(
        bce_backward_logits(logits_sample, false, float(sw.sample)), c_sample,
        ex, /*need_dx=*/false);

    if (!std::isfinite(d_loss))
      throw Error(ErrorKind::NumericalError,
                  "discriminator loss non-finite at step " +
                      std::to_string(step_) + " (real=" +
                      std::to_string(p_real.empty() ? -1.f : p_real[0]) +
                      " recon=" +
                      std::to_string(p_recon.empty() ? -1.f : p_recon[0]) +
                      " sample=" +
                      std::to_string(p_sample.empty() ? -1.f : p_sample[0]) +
                      ")");
    m.d_loss = d_loss;
    m.d_real_acc = frac_above(p_real, 0.5f);
    m.d_fake_acc = 1.0 - 0.5 * (frac_above(p_recon, 0.5f) +
                                frac_above(p_sample, 0.5f));
    opt_d_->step();
  }

  // Phase 2: generator on ELBO + adversarial terms, discriminator frozen.
  opt_g_->zero_grad();
  Tensor<float> dx_hat(x_hat.shape());
  reconstruction_loss_backward(real_batch, x_hat, 1.0f, dx_hat);
  Tensor<float> dmu(mu.shape()), dlogvar(logvar.shape());
  kl_divergence_backward(mu, logvar, float(lw.beta_kl), dmu, dlogvar);

  double g_adv = 0.0;
  if (adv_recon) {
    DiscriminatorCache<float> c;
    const Tensor<float> logits = model_.discriminator.forward(x_hat, c, ex);
    g_adv += lw.lambda_adv_recon *
             double(bce_mean(probabilities(logits), true, "g_adv recon"));
    const Tensor<float> d_in = model_.discriminator.backward(
        bce_backward_logits(logits, true, float(lw.lambda_adv_recon)), c, ex,
        /*need_dx=*/true, /*accum_params=*/false);
    for (int64_t i = 0; i < dx_hat.numel(); ++i) dx_hat[i] += d_in[i];
  }
  const Tensor<float> dz = model_.decoder.backward(dx_hat, dec_cache, ex);
  if (adv_sample) {
    DiscriminatorCache<float> c;
    const Tensor<float> logits = model_.discriminator.forward(x_sample, c, ex);
    g_adv += lw.lambda_adv_sample *
             double(bce_mean(probabilities(logits), true, "g_adv sample"));
    const Tensor<float> d_in = model_.discriminator.backward(
        bce_backward_logits(logits, true, float(lw.lambda_adv_sample)), c, ex,
        /*need_dx=*/true, /*accum_params=*/false);
    // The prior draw is constant; only decoder parameters receive gradient.
    model_.decoder.backward(d_in, sample_cache, ex);
  }
  check_finite(g_adv, "generator adversarial loss", step_);
  m.g_adv = g_adv;

  reparam_backward(logvar, eps, dz, dmu, dlogvar);
  model_.encoder.backward(dmu, dlogvar, enc_cache, ex);
  opt_g_->step();

  ++step_;
  return m;
}

namespace {

std::pair<AdverxModel, TrainHistory> train_impl(
    const std::vector<Scan>& all_scans, const std::vector<std::string>& ids,
    const ArchitectureConfig& arch, const TrainConfig& config) {
  validate(config);
  TrainHistory history;

  // Keep only scans whose ROI fits at least one patch.
  std::vector<const Scan*> scans;
  for (size_t i = 0; i < all_scans.size(); ++i) {
    const Scan& s = all_scans[i];
    try {
      const RegionOfInterest roi = compute_roi(s.height, s.width, config.margin);
      if (anchor_lattice_size(roi, arch.patch_size) < 1)
        throw Error(ErrorKind::RoiTooSmall, "ROI smaller than patch");
      scans.push_back(&s);
    } catch (const Error&) {
      history.skipped_scans.push_back(ids[i]);
    }
  }
  if (scans.empty())
    throw Error(ErrorKind::EmptyDataset,
                "no scan passes the ROI precondition (" +
                    std::to_string(history.skipped_scans.size()) + " skipped)");

  Trainer trainer(arch, config);
  const int64_t total_steps = config.epochs * config.batches_per_epoch;
  const int64_t k = config.patches_per_batch;
  const int64_t s = arch.patch_size;

  for (int64_t step = 0; step < total_steps; ++step) {
    Rng pick(derive_seed(config.rng_seed, RngStream::ScanPick, uint64_t(step)));
    const uint64_t anchor_seed =
        derive_seed(config.rng_seed, RngStream::PatchAnchors, uint64_t(step));
    Tensor<float> batch({k, 1, s, s});
    if (config.cross_scan_batching) {
      for (int64_t i = 0; i < k; ++i) {
        const Scan& scan = *scans[size_t(pick.uniform_int(scans.size()))];
        const PatchBatch pb =
            sample_patches(scan, 1, s, config.margin, anchor_seed + uint64_t(i));
        std::memcpy(batch.data() + i * s * s, pb.patches.data(),
                    size_t(s * s) * sizeof(float));
      }
    } else {
      // One scan per batch, matching the inference regime.
      const Scan& scan = *scans[size_t(pick.uniform_int(scans.size()))];
      const PatchBatch pb = sample_patches(scan, k, s, config.margin, anchor_seed);
      std::memcpy(batch.data(), pb.patches.data(),
                  size_t(k * s * s) * sizeof(float));
    }

    history.steps.push_back(trainer.train_step(batch));

    if (config.checkpoint_every > 0 && !config.checkpoint_dir.empty() &&
        (step + 1) % config.checkpoint_every == 0) {
      std::filesystem::create_directories(config.checkpoint_dir);
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_%06ld.axr", long(step + 1));
      save_model(trainer.model(), config.checkpoint_dir + "/" + name,
                 ArchiveSubset::Full);
    }
  }
  return {std::move(trainer.model()), std::move(history)};
}

}  // namespace

std::pair<AdverxModel, TrainHistory> train(const Manifest& manifest,
                                           const std::string& root,
                                           const ArchitectureConfig& arch,
                                           const TrainConfig& config) {
  if (manifest.entries.empty())
    throw Error(ErrorKind::EmptyDataset, "empty training manifest");
  std::vector<Scan> scans;
  std::vector<std::string> ids;
  TrainHistory preload_skips;
  for (const auto& entry : manifest.entries) {
    ids.push_back(entry.path);
    try {
      scans.push_back(load_entry(root, entry));
    } catch (const Error&) {
      scans.push_back(Scan{});  // zero-size; filtered by the ROI check
    }
  }
  return train_impl(scans, ids, arch, config);
}

std::pair<AdverxModel, TrainHistory> train_scans(const std::vector<Scan>& scans,
                                                 const ArchitectureConfig& arch,
                                                 const TrainConfig& config) {
  if (scans.empty()) throw Error(ErrorKind::EmptyDataset, "no training scans");
  std::vector<std::string> ids;
  for (const auto& s : scans) ids.push_back(s.source_path);
  return train_impl(scans, ids, arch, config);
}

}  // namespace adverx
