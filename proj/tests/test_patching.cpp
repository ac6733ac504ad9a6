#include <doctest.h>

#include <set>

#include "adverx/patching.hpp"
#include "adverx/rng.hpp"
#include "testutil.hpp"

using namespace adverx;

TEST_CASE("compute_roi") {
  const RegionOfInterest roi = compute_roi(1000, 1000, 0.2);
  CHECK(roi.top == 200);
  CHECK(roi.bottom == 800);
  CHECK(roi.left == 200);
  CHECK(roi.right == 800);

  const RegionOfInterest full = compute_roi(100, 100, 0.0);
  CHECK(full.top == 0);
  CHECK(full.bottom == 100);
  CHECK(full.left == 0);
  CHECK(full.right == 100);

  // floor arithmetic: 130x500 at 0.2 -> rows [26,104), cols [100,400)
  const RegionOfInterest odd = compute_roi(130, 500, 0.2);
  CHECK(odd.top == 26);
  CHECK(odd.bottom == 104);
  CHECK(odd.left == 100);
  CHECK(odd.right == 400);
  CHECK(odd.height() == 78);  // < 128, so sampling must reject

  CHECK_THROWS_AS(compute_roi(100, 100, 0.5), Error);
  CHECK_THROWS_AS(compute_roi(0, 100, 0.2), Error);
}

TEST_CASE("compute_roi is monotone in margin") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t h = 1 + int64_t(rng.uniform_int(500));
    const int64_t w = 1 + int64_t(rng.uniform_int(500));
    const double m1 = 0.49 * rng.uniform();
    const double m2 = m1 + (0.49 - m1) * rng.uniform();
    const RegionOfInterest r1 = compute_roi(h, w, m1);
    const RegionOfInterest r2 = compute_roi(h, w, m2);
    CHECK(r2.height() <= r1.height());
    CHECK(r2.width() <= r1.width());
  }
}

TEST_CASE("anchor_lattice_size") {
  const RegionOfInterest roi{200, 800, 200, 800};
  CHECK(anchor_lattice_size(roi, 128) == 473 * 473);  // 223,729
  CHECK(anchor_lattice_size(roi, 128) == 223729);
  CHECK(anchor_lattice_size(RegionOfInterest{0, 128, 0, 128}, 128) == 1);
  CHECK(anchor_lattice_size(RegionOfInterest{0, 100, 0, 100}, 128) == 0);
}

TEST_CASE("sample_patches anchors stay inside the ROI") {
  const Scan scan = testutil::noise_scan(1000, 1000, 4);
  const PatchBatch batch = sample_patches(scan, 64, 128, 0.2, 7);
  CHECK(batch.k() == 64);
  CHECK(batch.patch_size == 128);
  CHECK(batch.source_scan_id == scan.source_path);
  for (const auto& [r, c] : batch.coordinates) {
    CHECK(r >= 200);
    CHECK(r <= 672);  // 800 - 128
    CHECK(c >= 200);
    CHECK(c <= 672);
  }
}

TEST_CASE("patches are exact copies of scan sub-arrays") {
  Scan scan = testutil::noise_scan(300, 280, 5);
  const PatchBatch batch = sample_patches(scan, 8, 64, 0.1, 3);
  for (int64_t i = 0; i < batch.k(); ++i) {
    const auto [r, c] = batch.coordinates[size_t(i)];
    for (int64_t y = 0; y < 64; ++y)
      for (int64_t x = 0; x < 64; ++x)
        CHECK(batch.patches[(i * 64 + y) * 64 + x] ==
              scan.pixels[(r + y) * scan.width + c + x]);
  }
  // Copies, not aliases.
  const float before = batch.patches[0];
  scan.pixels.fill(0.0f);
  CHECK(batch.patches[0] == before);
}

TEST_CASE("degenerate single-anchor lattice") {
  const Scan scan = testutil::noise_scan(128, 128, 6);
  const PatchBatch batch = sample_patches(scan, 5, 128, 0.0, 11);
  for (const auto& [r, c] : batch.coordinates) {
    CHECK(r == 0);
    CHECK(c == 0);
  }
  for (int64_t i = 1; i < 5; ++i)
    for (int64_t j = 0; j < 128 * 128; ++j)
      CHECK(batch.patches[i * 128 * 128 + j] == batch.patches[j]);
}

TEST_CASE("too-small ROI is rejected, no silent rescaling") {
  const Scan scan = testutil::noise_scan(100, 100, 7);
  try {
    sample_patches(scan, 4, 128, 0.0, 1);
    FAIL("expected RoiTooSmall");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::RoiTooSmall);
  }
}

TEST_CASE("sampling is seed-deterministic and seed-sensitive") {
  const Scan scan = testutil::noise_scan(400, 400, 8);
  const PatchBatch a = sample_patches(scan, 16, 128, 0.2, 42);
  const PatchBatch b = sample_patches(scan, 16, 128, 0.2, 42);
  CHECK(a.coordinates == b.coordinates);
  for (int64_t i = 0; i < a.patches.numel(); ++i)
    CHECK(a.patches[i] == b.patches[i]);

  const PatchBatch c = sample_patches(scan, 16, 128, 0.2, 43);
  CHECK(a.coordinates != c.coordinates);
}

TEST_CASE("batch_to_input adds the channel axis") {
  const Scan scan = testutil::noise_scan(300, 300, 9);
  const PatchBatch batch = sample_patches(scan, 3, 128, 0.2, 1);
  const Tensor<float> x = batch_to_input(batch);
  CHECK(x.shape() == std::vector<int64_t>{3, 1, 128, 128});
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(x[i] == batch.patches[i]);
}
