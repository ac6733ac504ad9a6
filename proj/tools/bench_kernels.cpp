// Times the serial reference kernels against the OpenMP/GEMM path on the
// layer shapes this project actually runs, plus a whole-discriminator
// forward/backward at both batch sizes of interest.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "adverx/kernels.hpp"
#include "adverx/model.hpp"
#include "adverx/rng.hpp"

using namespace adverx;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_per_call(const std::function<void()>& fn, int min_reps) {
  fn();  // warm-up
  const auto t0 = Clock::now();
  int reps = 0;
  do {
    fn();
    ++reps;
  } while (reps < min_reps ||
           std::chrono::duration<double>(Clock::now() - t0).count() < 0.3);
  return std::chrono::duration<double>(Clock::now() - t0).count() / reps;
}

Tensor<float> randn(std::vector<int64_t> shape, Rng& rng, float scale = 1.f) {
  Tensor<float> t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = float(rng.normal()) * scale;
  return t;
}

void bench_conv(const char* name, Conv2dDims d, int ref_reps) {
  Rng rng(1);
  auto x = randn({d.n, d.cin, d.h, d.w}, rng);
  auto w = randn({d.cout, d.cin, d.k, d.k}, rng, 0.05f);
  auto b = randn({d.cout}, rng);
  Tensor<float> y({d.n, d.cout, d.ho(), d.wo()});

  const double flops = 2.0 * d.n * d.cout * d.ho() * d.wo() * d.cin * d.k * d.k;
  const double t_ref = seconds_per_call(
      [&] {
        kernels::ref::conv2d_forward(x.data(), w.data(), b.data(), y.data(), d);
      },
      ref_reps);
  const double t_par = seconds_per_call(
      [&] {
        kernels::par::conv2d_forward(x.data(), w.data(), b.data(), y.data(), d);
      },
      3);
  std::printf("%-28s ref %8.2f ms (%6.2f GF/s)   omp %8.2f ms (%6.2f GF/s)   speedup %5.1fx\n",
              name, t_ref * 1e3, flops / t_ref / 1e9, t_par * 1e3,
              flops / t_par / 1e9, t_ref / t_par);
}

void bench_discriminator(int64_t k) {
  const ArchitectureConfig arch = default_architecture();
  AdverxModel model = init_model<float>(arch, 7);
  Rng rng(2);
  auto x = randn({k, 1, arch.patch_size, arch.patch_size}, rng, 0.2f);
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = 0.5f + x[i] * 0.2f;

  const double t_fwd = seconds_per_call(
      [&] { model.discriminator.forward(x, Exec::Parallel); }, 2);

  DiscriminatorCache<float> cache;
  Tensor<float> logits = model.discriminator.forward(x, cache, Exec::Parallel);
  Tensor<float> dl({k});
  for (int64_t i = 0; i < k; ++i) dl[i] = 1.f / float(k);
  const double t_bwd = seconds_per_call(
      [&] {
        model.discriminator.forward(x, cache, Exec::Parallel);
        model.discriminator.backward(dl, cache, Exec::Parallel, false);
      },
      2);
  std::printf("discriminator k=%-3ld          fwd %8.2f ms     fwd+bwd %8.2f ms\n",
              long(k), t_fwd * 1e3, t_bwd * 1e3);
}

}  // namespace

int main(int argc, char** argv) {
  int threads = 0;
  if (argc > 1) threads = std::atoi(argv[1]);
  if (threads > 0) omp_set_num_threads(threads);
  std::printf("threads: %d\n", omp_get_max_threads());

  // Discriminator stages at K=64 (4x4 kernels, stride 2).
  bench_conv("disc conv1 1->32 @128", {64, 1, 128, 128, 32, 4, 2, 1}, 2);
  bench_conv("disc conv2 32->64 @64", {64, 32, 64, 64, 64, 4, 2, 1}, 1);
  bench_conv("disc conv3 64->128 @32", {64, 64, 32, 32, 128, 4, 2, 1}, 1);
  // Encoder / decoder stages (3x3 kernels).
  bench_conv("enc conv2 32->64 @64", {64, 32, 64, 64, 64, 3, 2, 1}, 1);
  bench_conv("dec conv4 64->32 @64", {64, 64, 64, 64, 32, 3, 1, 1}, 1);

  bench_discriminator(16);
  bench_discriminator(64);
  return 0;
}
