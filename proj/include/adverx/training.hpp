#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "adverx/ingest.hpp"
#include "adverx/losses.hpp"
#include "adverx/model.hpp"

namespace adverx {

struct TrainConfig {
  int64_t epochs = 1;
  int64_t batches_per_epoch = 0;
  int64_t patches_per_batch = 64;  // K; >= 2 for batch statistics
  double learning_rate_g = 2e-4;
  double learning_rate_d = 2e-4;
  std::pair<double, double> optimizer_betas{0.5, 0.999};
  uint64_t rng_seed = 0;
  LossWeights loss_weights;
  DiscStreamWeights stream_weights;
  bool train_discriminator = true;
  // Ablation only: draw every patch of a batch from an independently chosen
  // scan instead of one scan per batch.
  bool cross_scan_batching = false;
  double margin = 0.2;
  int64_t checkpoint_every = 0;  // steps; 0 disables
  std::string checkpoint_dir;
};

void validate(const TrainConfig& config);

struct StepMetrics {
  int64_t step = 0;
  double elbo = 0, kl = 0, recon = 0, g_adv = 0, d_loss = 0;
  double d_real_acc = 0, d_fake_acc = 0;
};

struct TrainHistory {
  std::vector<StepMetrics> steps;
  std::vector<std::string> skipped_scans;  // failed ROI/load precondition
};

// CSV: step,elbo,kl,recon,g_adv,d_loss,d_real_acc,d_fake_acc
void write_history_csv(const TrainHistory& history, const std::string& path);

// Owns the model and both optimizers; drives one adversarial step at a
// time so callers can interleave evaluation or checkpointing.
class Trainer {
 public:
  Trainer(const ArchitectureConfig& arch, const TrainConfig& config);

  // One optimization step on a batch of real patches shaped (K,1,S,S):
  // discriminator first (real / reconstructed / sampled streams, generator
  // outputs detached), then the generator on ELBO + adversarial terms with
  // the discriminator frozen.
  StepMetrics train_step(const Tensor<float>& real_batch);

  AdverxModel& model() { return model_; }
  const TrainConfig& config() const { return config_; }
  int64_t step_index() const { return step_; }

 private:
  TrainConfig config_;
  AdverxModel model_;
  std::unique_ptr<Adam<float>> opt_g_, opt_d_;
  int64_t step_ = 0;
};

std::pair<AdverxModel, TrainHistory> train(const Manifest& manifest,
                                           const std::string& root,
                                           const ArchitectureConfig& arch,
                                           const TrainConfig& config);

std::pair<AdverxModel, TrainHistory> train_scans(const std::vector<Scan>& scans,
                                                 const ArchitectureConfig& arch,
                                                 const TrainConfig& config);

}  // namespace adverx
