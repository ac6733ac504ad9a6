#include <doctest.h>

#include <cmath>

#include "adverx/rng.hpp"
#include "adverx/shiftgen.hpp"
#include "testutil.hpp"

using namespace adverx;

namespace {

double mean_squared_deviation(const Scan& a, const Scan& b) {
  double acc = 0;
  for (int64_t i = 0; i < a.pixels.numel(); ++i) {
    const double d = double(a.pixels[i]) - double(b.pixels[i]);
    acc += d * d;
  }
  return acc / double(a.pixels.numel());
}

}  // namespace

TEST_CASE("gaussian noise") {
  const Scan scan = testutil::flat_scan(64, 64, 0.5f);

  SUBCASE("vanishing sigma is the identity") {
    const Scan out = apply_gaussian_noise(scan, 1e-9, 1);
    for (int64_t i = 0; i < out.pixels.numel(); ++i)
      CHECK(std::abs(out.pixels[i] - scan.pixels[i]) < 1e-8f);
  }

  SUBCASE("sample std matches sigma") {
    const Scan out = apply_gaussian_noise(scan, 0.05, 2);
    double sum = 0, sq = 0;
    for (int64_t i = 0; i < out.pixels.numel(); ++i) {
      sum += out.pixels[i];
      sq += double(out.pixels[i]) * double(out.pixels[i]);
    }
    const double n = double(out.pixels.numel());
    const double std = std::sqrt(sq / n - (sum / n) * (sum / n));
    CHECK(std == doctest::Approx(0.05).epsilon(0.05));
  }

  SUBCASE("seeded determinism and metadata tag") {
    const Scan a = apply_gaussian_noise(scan, 0.05, 3);
    const Scan b = apply_gaussian_noise(scan, 0.05, 3);
    for (int64_t i = 0; i < a.pixels.numel(); ++i)
      CHECK(a.pixels[i] == b.pixels[i]);
    REQUIRE(a.shift.has_value());
    CHECK(a.shift->kind == ShiftKind::GaussianNoise);
    CHECK(shift_label(*a.shift) == "noise_0.05");
  }
}

TEST_CASE("gaussian blur") {
  SUBCASE("constant image is unchanged") {
    const Scan scan = testutil::flat_scan(32, 32, 0.37f);
    const Scan out = apply_gaussian_blur(scan, 2.0);
    for (int64_t i = 0; i < out.pixels.numel(); ++i)
      CHECK(out.pixels[i] == doctest::Approx(0.37).epsilon(1e-6));
  }

  SUBCASE("impulse response is the kernel and sums to 1") {
    Scan scan = testutil::flat_scan(65, 65, 0.0f, "impulse");
    scan.pixels[32 * 65 + 32] = 1.0f;
    const Scan out = apply_gaussian_blur(scan, 1.5);
    double total = 0;
    for (int64_t i = 0; i < out.pixels.numel(); ++i) total += out.pixels[i];
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    // Peak at the center, symmetric.
    CHECK(out.pixels[32 * 65 + 32] > out.pixels[32 * 65 + 33]);
    CHECK(out.pixels[32 * 65 + 31] ==
          doctest::Approx(out.pixels[32 * 65 + 33]).epsilon(1e-6));
  }

  SUBCASE("vanishing sigma approaches the identity") {
    const Scan scan = testutil::noise_scan(48, 48, 4);
    const Scan out = apply_gaussian_blur(scan, 1e-4);
    for (int64_t i = 0; i < out.pixels.numel(); ++i)
      CHECK(std::abs(out.pixels[i] - scan.pixels[i]) < 1e-6f);
  }
}

TEST_CASE("gamma") {
  const Scan scan = testutil::noise_scan(32, 32, 5);
  const Scan ident = apply_gamma(scan, 1.0);
  for (int64_t i = 0; i < scan.pixels.numel(); ++i)
    CHECK(ident.pixels[i] == doctest::Approx(scan.pixels[i]).epsilon(1e-7));

  const Scan half = testutil::flat_scan(4, 4, 0.5f);
  CHECK(apply_gamma(half, 2.0).pixels[0] == doctest::Approx(0.25).epsilon(1e-7));

  // Monotonicity: pixel ordering is preserved for any gamma.
  for (double g : {0.5, 1.5, 2.2}) {
    const Scan out = apply_gamma(scan, g);
    for (int64_t i = 1; i < scan.pixels.numel(); ++i) {
      const auto cmp_in = scan.pixels[i] <=> scan.pixels[i - 1];
      const auto cmp_out = out.pixels[i] <=> out.pixels[i - 1];
      if (cmp_in > 0) CHECK(cmp_out >= 0);
      if (cmp_in < 0) CHECK(cmp_out <= 0);
    }
  }

  CHECK_THROWS_AS(apply_gamma(scan, 0.0), Error);
}

TEST_CASE("poisson sampler moments") {
  Rng rng(6);
  for (double lambda : {0.5, 5.0, 50.0, 500.0}) {
    double sum = 0, sq = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const double k = double(poisson_draw(rng, lambda));
      CHECK(k >= 0);
      sum += k;
      sq += k * k;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(mean == doctest::Approx(lambda).epsilon(0.03));
    CHECK(var == doctest::Approx(lambda).epsilon(0.06));
  }
}

TEST_CASE("dose simulation") {
  SUBCASE("all-zero image stays zero") {
    const Scan zero = testutil::flat_scan(16, 16, 0.0f);
    const Scan out = apply_dose_sim(zero, 0.5, 1);
    for (int64_t i = 0; i < out.pixels.numel(); ++i) CHECK(out.pixels[i] == 0.0f);
  }

  SUBCASE("variance follows 1/(C*dose) scaling") {
    const Scan half = testutil::flat_scan(512, 512, 0.5f);
    auto pixel_var = [](const Scan& s) {
      double sum = 0, sq = 0;
      for (int64_t i = 0; i < s.pixels.numel(); ++i) {
        sum += s.pixels[i];
        sq += double(s.pixels[i]) * double(s.pixels[i]);
      }
      const double n = double(s.pixels.numel());
      return sq / n - (sum / n) * (sum / n);
    };
    // At dose 1: var = 0.5 / 1000 = 5e-4.
    const double v1 = pixel_var(apply_dose_sim(half, 1.0, 2));
    CHECK(v1 == doctest::Approx(0.5 / kDoseSimCounts).epsilon(0.05));
    // At dose 0.25 the variance is ~4x larger.
    const double v4 = pixel_var(apply_dose_sim(half, 0.25, 3));
    CHECK(v4 / v1 == doctest::Approx(4.0).epsilon(0.1));
  }

  CHECK_THROWS_AS(apply_dose_sim(testutil::flat_scan(4, 4, 0.5f), 0.0, 1), Error);
  CHECK_THROWS_AS(apply_dose_sim(testutil::flat_scan(4, 4, 0.5f), 1.5, 1), Error);
}

TEST_CASE("shifts preserve shape, range and bit depth") {
  const Scan scan = testutil::noise_scan(40, 56, 7);
  const ShiftSpec specs[] = {{ShiftKind::GaussianNoise, 0.1, 1},
                             {ShiftKind::GaussianBlur, 2.0, 0},
                             {ShiftKind::Gamma, 1.5, 0},
                             {ShiftKind::DoseSim, 0.25, 2}};
  for (const auto& spec : specs) {
    const Scan out = apply_shift(scan, spec);
    CHECK(out.height == scan.height);
    CHECK(out.width == scan.width);
    CHECK(out.bit_depth == scan.bit_depth);
    for (int64_t i = 0; i < out.pixels.numel(); ++i) {
      CHECK(out.pixels[i] >= 0.0f);
      CHECK(out.pixels[i] <= 1.0f);
    }
  }
}

TEST_CASE("deviation from the original is monotone in magnitude") {
  const Scan scan = make_textured_scan(0, 128, 99);
  struct Case {
    ShiftKind kind;
    double magnitudes[3];
  };
  // dose_factor shrinks as severity grows.
  const Case cases[] = {{ShiftKind::GaussianNoise, {0.02, 0.05, 0.1}},
                        {ShiftKind::GaussianBlur, {1.0, 2.0, 4.0}},
                        {ShiftKind::Gamma, {1.25, 1.5, 2.0}},
                        {ShiftKind::DoseSim, {0.5, 0.25, 0.125}}};
  for (const auto& c : cases) {
    double prev = 0.0;
    for (double mag : c.magnitudes) {
      const double msd =
          mean_squared_deviation(scan, apply_shift(scan, {c.kind, mag, 5}));
      CHECK(msd > prev);
      prev = msd;
    }
  }
}

TEST_CASE("textured scans are deterministic with mild per-scan variation") {
  const Scan a = make_textured_scan(3, 128, 42);
  const Scan b = make_textured_scan(3, 128, 42);
  for (int64_t i = 0; i < a.pixels.numel(); ++i)
    CHECK(a.pixels[i] == b.pixels[i]);

  const Scan c = make_textured_scan(4, 128, 42);
  CHECK(mean_squared_deviation(a, c) > 1e-4);

  double lo = 1, hi = 0;
  for (int64_t i = 0; i < a.pixels.numel(); ++i) {
    lo = std::min(lo, double(a.pixels[i]));
    hi = std::max(hi, double(a.pixels[i]));
  }
  CHECK(lo >= 0.0199);  // clamp floor, allowing float rounding
  CHECK(hi <= 0.9801);
}
