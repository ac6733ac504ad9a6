#include "adverx/shiftgen.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "adverx/error.hpp"
#include "adverx/rng.hpp"

namespace adverx {

namespace {

inline float clamp01(double v) {
  return float(std::min(1.0, std::max(0.0, v)));
}

// Mirror index without repeating the edge sample's neighbor order:
// -1 -> 0, -2 -> 1, n -> n-1, n+1 -> n-2.
inline int64_t reflect(int64_t i, int64_t n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int64_t radius = int64_t(std::ceil(3.0 * sigma));
  std::vector<double> k(size_t(2 * radius + 1));
  double sum = 0.0;
  for (int64_t j = -radius; j <= radius; ++j) {
    const double w = std::exp(-double(j * j) / (2.0 * sigma * sigma));
    k[size_t(j + radius)] = w;
    sum += w;
  }
  for (double& w : k) w /= sum;
  return k;
}

void separable_blur(const float* src, float* dst, int64_t h, int64_t w,
                    double sigma) {
  const std::vector<double> kern = gaussian_kernel(sigma);
  const int64_t radius = (int64_t(kern.size()) - 1) / 2;
  std::vector<float> tmp(size_t(h) * size_t(w));
  // Horizontal pass.
#pragma omp parallel for schedule(static)
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int64_t j = -radius; j <= radius; ++j)
        acc += kern[size_t(j + radius)] * double(src[y * w + reflect(x + j, w)]);
      tmp[size_t(y * w + x)] = float(acc);
    }
  // Vertical pass.
#pragma omp parallel for schedule(static)
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int64_t j = -radius; j <= radius; ++j)
        acc += kern[size_t(j + radius)] * double(tmp[size_t(reflect(y + j, h) * w + x)]);
      dst[y * w + x] = float(acc);
    }
}

Scan copy_meta(const Scan& scan, const ShiftSpec& spec) {
  Scan out = scan;
  out.shift = spec;
  return out;
}

}  // namespace

Scan apply_gaussian_noise(const Scan& scan, double sigma, uint64_t seed) {
  if (!(sigma > 0.0))
    throw Error(ErrorKind::InvalidArgument, "noise sigma must be positive");
  Scan out = copy_meta(scan, {ShiftKind::GaussianNoise, sigma, seed});
  Rng rng(derive_seed(seed, RngStream::Shift));
  const int64_t n = scan.pixels.numel();
  for (int64_t i = 0; i < n; ++i)
    out.pixels[i] = clamp01(double(scan.pixels[i]) + sigma * rng.normal());
  return out;
}

Scan apply_gaussian_blur(const Scan& scan, double kernel_sigma) {
  if (!(kernel_sigma > 0.0))
    throw Error(ErrorKind::InvalidArgument, "blur sigma must be positive");
  Scan out = copy_meta(scan, {ShiftKind::GaussianBlur, kernel_sigma, 0});
  separable_blur(scan.pixels.data(), out.pixels.data(), scan.height,
                 scan.width, kernel_sigma);
  for (int64_t i = 0; i < out.pixels.numel(); ++i)
    out.pixels[i] = clamp01(double(out.pixels[i]));
  return out;
}

Scan apply_gamma(const Scan& scan, double gamma) {
  if (!(gamma > 0.0))
    throw Error(ErrorKind::InvalidArgument, "gamma must be positive");
  Scan out = copy_meta(scan, {ShiftKind::Gamma, gamma, 0});
  const int64_t n = scan.pixels.numel();
  for (int64_t i = 0; i < n; ++i)
    out.pixels[i] = float(std::pow(double(scan.pixels[i]), gamma));
  return out;
}

int64_t poisson_draw(Rng& rng, double mean) {
  if (mean <= 0.0) return 0;
  if (mean < 10.0) {
    // Knuth: multiply uniforms until the product drops under exp(-mean).
    const double limit = std::exp(-mean);
    double prod = rng.uniform();
    int64_t k = 0;
    while (prod > limit) {
      prod *= rng.uniform();
      ++k;
    }
    return k;
  }
  // Hoermann's PTRS transformed rejection.
  const double b = 0.931 + 2.53 * std::sqrt(mean);
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  const double log_mean = std::log(mean);
  while (true) {
    double u = rng.uniform() - 0.5;
    double v = rng.uniform();
    const double us = 0.5 - std::abs(u);
    const double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= v_r) return int64_t(kf);
    if (kf < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
        kf * log_mean - mean - std::lgamma(kf + 1.0))
      return int64_t(kf);
  }
}

Scan apply_dose_sim(const Scan& scan, double dose_factor, uint64_t seed) {
  if (!(dose_factor > 0.0 && dose_factor <= 1.0))
    throw Error(ErrorKind::InvalidArgument, "dose_factor must lie in (0,1]");
  Scan out = copy_meta(scan, {ShiftKind::DoseSim, dose_factor, seed});
  Rng rng(derive_seed(seed, RngStream::Shift));
  const double counts = kDoseSimCounts * dose_factor;
  const int64_t n = scan.pixels.numel();
  for (int64_t i = 0; i < n; ++i) {
    const int64_t k = poisson_draw(rng, double(scan.pixels[i]) * counts);
    out.pixels[i] = clamp01(double(k) / counts);
  }
  return out;
}

Scan apply_shift(const Scan& scan, const ShiftSpec& spec) {
  switch (spec.kind) {
    case ShiftKind::GaussianNoise:
      return apply_gaussian_noise(scan, spec.magnitude, spec.rng_seed);
    case ShiftKind::GaussianBlur:
      return apply_gaussian_blur(scan, spec.magnitude);
    case ShiftKind::Gamma:
      return apply_gamma(scan, spec.magnitude);
    case ShiftKind::DoseSim:
      return apply_dose_sim(scan, spec.magnitude, spec.rng_seed);
  }
  throw Error(ErrorKind::InvalidArgument, "unknown shift kind");
}

Scan make_textured_scan(int64_t index, int64_t size, uint64_t seed) {
  Rng rng(derive_seed(seed, RngStream::Synth, uint64_t(index)));
  const int64_t n = size * size;

  // Filtered-noise octaves with a fixed spectrum family.
  const double octave_sigma[] = {1.0, 2.0, 4.0, 8.0};
  const double octave_weight[] = {1.0, 0.75, 0.55, 0.4};
  std::vector<double> tex(size_t(n), 0.0);
  std::vector<float> noise(static_cast<size_t>(n)), blurred(static_cast<size_t>(n));
  for (size_t o = 0; o < 4; ++o) {
    for (int64_t i = 0; i < n; ++i) noise[size_t(i)] = float(rng.normal());
    separable_blur(noise.data(), blurred.data(), size, size, octave_sigma[o]);
    // Blurring shrinks variance; rescale each octave back to unit std.
    double osum = 0.0, osq = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      osum += double(blurred[size_t(i)]);
      osq += double(blurred[size_t(i)]) * double(blurred[size_t(i)]);
    }
    const double ostd =
        std::sqrt(std::max(1e-12, osq / double(n) - (osum / double(n)) * (osum / double(n))));
    const double gain = octave_weight[o] / ostd;
    for (int64_t i = 0; i < n; ++i)
      tex[size_t(i)] += gain * double(blurred[size_t(i)]);
  }

  double mean = 0.0;
  for (double v : tex) mean += v;
  mean /= double(n);
  double var = 0.0;
  for (double v : tex) var += (v - mean) * (v - mean);
  var /= double(n);
  const double inv_std = 1.0 / std::sqrt(var + 1e-12);

  const double contrast = 0.13 * (0.95 + 0.1 * rng.uniform());
  const double brightness = 0.5 + 0.08 * (rng.uniform() - 0.5);
  const double theta = 2.0 * 3.14159265358979323846 * rng.uniform();
  const double grad_amp = 0.05 + 0.03 * rng.uniform();
  const double cx = std::cos(theta), sx = std::sin(theta);

  Scan scan;
  scan.height = size;
  scan.width = size;
  scan.bit_depth = 16;
  scan.source_path = "synth_" + std::to_string(index);
  scan.group_key = "synthetic";
  scan.pixels = Tensor<float>({size, size});
  for (int64_t y = 0; y < size; ++y)
    for (int64_t x = 0; x < size; ++x) {
      const double axis =
          ((double(x) * cx + double(y) * sx) / double(size)) - 0.5 * (cx + sx);
      const double v = brightness + grad_amp * axis +
                       contrast * (tex[size_t(y * size + x)] - mean) * inv_std;
      scan.pixels[y * size + x] = float(std::min(0.98, std::max(0.02, v)));
    }
  return scan;
}

}  // namespace adverx
