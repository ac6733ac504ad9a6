#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "adverx/ingest.hpp"
#include "adverx/tensor.hpp"

namespace adverx {

struct RegionOfInterest {
  int64_t top = 0;     // inclusive
  int64_t bottom = 0;  // exclusive
  int64_t left = 0;
  int64_t right = 0;

  int64_t height() const { return bottom - top; }
  int64_t width() const { return right - left; }
};

// All k patches come from one scan; construction through sample_patches is
// the only way to build one.
struct PatchBatch {
  Tensor<float> patches;  // (k, patch_size, patch_size)
  std::string source_scan_id;
  int64_t patch_size = 0;
  std::vector<std::pair<int64_t, int64_t>> coordinates;  // (row, col) anchors

  int64_t k() const { return patches.empty() ? 0 : patches.dim(0); }
};

// Margin is the excluded fraction on each of the four sides; all margin
// arithmetic uses floor rounding.
RegionOfInterest compute_roi(int64_t height, int64_t width, double margin);

// Number of valid top-left anchors for a given patch size (0 if none fit).
int64_t anchor_lattice_size(const RegionOfInterest& roi, int64_t patch_size);

// Draws k anchors uniformly with replacement from the valid lattice and
// copies the patches out of the scan. Deterministic under rng_seed.
PatchBatch sample_patches(const Scan& scan, int64_t k, int64_t patch_size,
                          double margin, uint64_t rng_seed);

// Debug aid: writes each patch as PNG8 named <scan_id>_<row>_<col>.png.
void dump_patches(const PatchBatch& batch, const std::string& dir);

// Model input adapter: (k,S,S) -> (k,1,S,S) copy.
Tensor<float> batch_to_input(const PatchBatch& batch);

}  // namespace adverx
