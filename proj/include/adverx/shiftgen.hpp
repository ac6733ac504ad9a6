#pragma once

#include <cstdint>

#include "adverx/ingest.hpp"

namespace adverx {

// All shift operations preserve shape, bit_depth metadata and the [0,1]
// range, and tag the returned scan with their ShiftSpec.

Scan apply_gaussian_noise(const Scan& scan, double sigma, uint64_t seed);

// Separable convolution, kernel radius ceil(3*sigma), symmetric-reflect
// boundary, kernel normalized to unit sum.
Scan apply_gaussian_blur(const Scan& scan, double kernel_sigma);

Scan apply_gamma(const Scan& scan, double gamma);

// Signal-dependent noise: pixels' = Poisson(p * C * dose_factor)/(C * dose_factor)
// clamped to [0,1], with C counts at unit intensity.
inline constexpr double kDoseSimCounts = 1000.0;
Scan apply_dose_sim(const Scan& scan, double dose_factor, uint64_t seed);

Scan apply_shift(const Scan& scan, const ShiftSpec& spec);

// Deterministic Poisson sampler (Knuth for small means, transformed
// rejection for large ones). Exposed for tests.
int64_t poisson_draw(class Rng& rng, double mean);

// Procedural in-distribution corpus: multi-octave filtered-noise textures
// with a smooth illumination gradient and mild per-scan brightness/contrast
// jitter. One family of spectra, so synthetic covariate shifts stand out.
Scan make_textured_scan(int64_t index, int64_t size, uint64_t seed);

}  // namespace adverx
