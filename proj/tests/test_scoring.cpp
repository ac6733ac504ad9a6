#include <doctest.h>

#include <cmath>

#include "adverx/scoring.hpp"
#include "testutil.hpp"

using namespace adverx;

TEST_CASE("score_image_with averages injected patch scores") {
  const Scan scan = testutil::noise_scan(300, 300, 1);
  const PatchScorer stub = [](const PatchBatch&) {
    return std::vector<double>{0.2, 0.4, 0.6};
  };
  const OODScore s = score_image_with(stub, scan, 3, 5);
  CHECK(s.value == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(s.scan_id == scan.source_path);
  CHECK(s.k_patches == 3);
}

TEST_CASE("score orientation: brighter patches with higher logits score lower") {
  // Stub with logit monotone-increasing in patch mean brightness.
  const PatchScorer stub = [](const PatchBatch& batch) {
    std::vector<double> out;
    const int64_t px = batch.patch_size * batch.patch_size;
    for (int64_t i = 0; i < batch.k(); ++i) {
      double mean = 0;
      for (int64_t j = 0; j < px; ++j) mean += batch.patches[i * px + j];
      mean /= double(px);
      const double logit = 10.0 * (mean - 0.5);
      out.push_back(1.0 / (1.0 + std::exp(logit)));  // 1 - sigmoid(logit)
    }
    return out;
  };
  double prev = 1.0;
  for (float brightness : {0.2f, 0.5f, 0.8f}) {
    const Scan scan = testutil::flat_scan(300, 300, brightness);
    const double s = score_image_with(stub, scan, 4, 9).value;
    CHECK(s < prev);
    prev = s;
  }
}

TEST_CASE("k=1 is rejected: batch statistics need at least two patches") {
  auto model = init_model<float>(testutil::small_arch(), 2);
  const Scan scan = testutil::noise_scan(80, 80, 2);
  try {
    score_image(scan, model, 1, 3);
    FAIL("expected BatchTooSmall");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::BatchTooSmall);
  }
}

TEST_CASE("k beyond the cap needs force_k") {
  auto model = init_model<float>(testutil::small_arch(), 3);
  const Scan scan = testutil::noise_scan(80, 80, 3);
  CHECK_THROWS_AS(score_image(scan, model, 1024, 3), Error);
  CHECK_NOTHROW(score_image(scan, model, 1024, 3, 0.2, /*force_k=*/true));
}

TEST_CASE("score_image is deterministic and averages exactly") {
  auto model = init_model<float>(testutil::small_arch(), 4);
  const Scan scan = testutil::noise_scan(100, 100, 4);

  const OODScore a = score_image(scan, model, 8, 11);
  const OODScore b = score_image(scan, model, 8, 11);
  CHECK(a.value == b.value);  // bit-for-bit
  CHECK(a.value >= 0.0);
  CHECK(a.value <= 1.0);

  const PatchBatch batch =
      sample_patches(scan, 8, model.config.patch_size, 0.2, 11);
  const std::vector<double> per_patch = patch_ood_scores(batch, model);
  double mean = 0;
  for (double v : per_patch) mean += v;
  mean /= double(per_patch.size());
  CHECK(std::abs(a.value - mean) < 1e-12);
}

TEST_CASE("identical patches give the replicated single-patch score") {
  auto model = init_model<float>(testutil::small_arch(), 5);
  const Scan scan = testutil::flat_scan(100, 100, 0.41f);
  const PatchBatch batch =
      sample_patches(scan, 6, model.config.patch_size, 0.2, 1);
  const std::vector<double> scores = patch_ood_scores(batch, model);
  for (double v : scores) CHECK(v == scores[0]);
  const OODScore s = score_image(scan, model, 6, 1);
  CHECK(s.value == doctest::Approx(scores[0]).epsilon(1e-12));
}

TEST_CASE("score_scans runs the cycle protocol") {
  auto model = init_model<float>(testutil::small_arch(), 6);
  std::vector<Scan> scans;
  for (int i = 0; i < 4; ++i)
    scans.push_back(
        testutil::noise_scan(90, 90, uint64_t(i), "s" + std::to_string(i)));

  const ManifestScores scores = score_scans(scans, model, 8, 5, 77);
  REQUIRE(scores.cycles.size() == 5);
  for (const auto& cycle : scores.cycles) CHECK(cycle.size() == 4);
  CHECK(scores.flat().size() == 20);

  // Reproducible cycle lists; different cycles use different anchors.
  const ManifestScores again = score_scans(scans, model, 8, 5, 77);
  for (size_t c = 0; c < 5; ++c)
    for (size_t i = 0; i < 4; ++i)
      CHECK(scores.cycles[c][i].score == again.cycles[c][i].score);
  bool cycles_differ = false;
  for (size_t i = 0; i < 4; ++i)
    cycles_differ |= scores.cycles[0][i].score != scores.cycles[1][i].score;
  CHECK(cycles_differ);

  // cycles=1 equals mapping score_image over the list with the same protocol.
  const ManifestScores one = score_scans(scans, model, 8, 1, 77);
  for (size_t i = 0; i < 4; ++i)
    CHECK(one.cycles[0][i].score == scores.cycles[0][i].score);
}

TEST_CASE("failing images are collected; an all-failing manifest throws") {
  auto model = init_model<float>(testutil::small_arch(), 7);
  std::vector<Scan> scans;
  scans.push_back(testutil::noise_scan(90, 90, 1, "good"));
  scans.push_back(testutil::noise_scan(10, 10, 2, "too_small"));
  const ManifestScores scores = score_scans(scans, model, 4, 1, 5);
  CHECK(scores.cycles[0].size() == 1);
  REQUIRE(scores.errors.size() == 1);
  CHECK(scores.errors[0].first == "too_small");

  std::vector<Scan> all_bad{testutil::noise_scan(10, 10, 3, "bad")};
  CHECK_THROWS_AS(score_scans(all_bad, model, 4, 1, 5), Error);
}

TEST_CASE("scores CSV round trip") {
  testutil::TempDir dir("scores");
  ManifestScores scores;
  scores.cycles.resize(2);
  scores.cycles[0].push_back({"a.png", "id", 0, 8, 0.125});
  scores.cycles[0].push_back({"b.png", "id", 0, 8, 0.75});
  scores.cycles[1].push_back({"a.png", "id", 1, 8, 0.5});
  scores.cycles[1].push_back({"b.png", "id", 1, 8, 0.25});
  write_scores_csv(scores, dir.file("s.csv"));

  const std::vector<ScoreRow> rows = read_scores_csv(dir.file("s.csv"));
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].scan_id == "a.png");
  CHECK(rows[0].group_key == "id");
  CHECK(rows[0].cycle == 0);
  CHECK(rows[0].k == 8);
  CHECK(rows[0].score == 0.125);
  CHECK(rows[3].score == 0.25);
}
