#pragma once

#include <functional>
#include <string>
#include <vector>

#include "adverx/ingest.hpp"
#include "adverx/model.hpp"
#include "adverx/patching.hpp"

namespace adverx {

// k values beyond this need an explicit force flag.
inline constexpr int64_t kMaxPatchesPerImage = 512;

struct OODScore {
  double value = 0.0;  // in [0,1], higher = more out-of-distribution
  std::string scan_id;
  int64_t k_patches = 0;
  uint64_t rng_seed = 0;
};

// Per-patch OOD score = 1 - sigmoid(logit). The batch is evaluated jointly
// so normalization statistics come from this scan alone.
std::vector<double> patch_ood_scores(const PatchBatch& batch,
                                     const AdverxModel& model);

using PatchScorer = std::function<std::vector<double>(const PatchBatch&)>;

// Scores one scan: samples k patches, evaluates them as a single batch and
// returns the arithmetic mean of the per-patch scores.
OODScore score_image(const Scan& scan, const AdverxModel& model, int64_t k,
                     uint64_t rng_seed, double margin = 0.2,
                     bool force_k = false);

// Same contract with a pluggable patch scorer (stub models in tests).
OODScore score_image_with(const PatchScorer& scorer, const Scan& scan,
                          int64_t k, uint64_t rng_seed, double margin = 0.2,
                          bool force_k = false);

struct ScoreRow {
  std::string scan_id;
  std::string group_key;
  int cycle = 0;
  int64_t k = 0;
  double score = 0.0;
};

struct ManifestScores {
  std::vector<std::vector<ScoreRow>> cycles;            // [cycle][image]
  std::vector<std::pair<std::string, std::string>> errors;  // path -> message

  std::vector<ScoreRow> flat() const;
};

// Cycle c draws its patch anchors from a seed derived from (rng_seed, c,
// scan_id), so every (cycle, image) pair has its own stream.
ManifestScores score_manifest(const Manifest& manifest, const std::string& root,
                              const AdverxModel& model, int64_t k, int cycles,
                              uint64_t rng_seed, double margin = 0.2,
                              bool force_k = false, int bit_depth_override = 0);

// Same protocol over scans already in memory.
ManifestScores score_scans(const std::vector<Scan>& scans,
                           const AdverxModel& model, int64_t k, int cycles,
                           uint64_t rng_seed, double margin = 0.2,
                           bool force_k = false);

// CSV: scan_id,group_key,cycle,k,score
void write_scores_csv(const ManifestScores& scores, const std::string& path);
std::vector<ScoreRow> read_scores_csv(const std::string& path);

}  // namespace adverx
