#include "adverx/patching.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>

#include "adverx/error.hpp"
#include "adverx/image_io.hpp"
#include "adverx/rng.hpp"

namespace adverx {

RegionOfInterest compute_roi(int64_t height, int64_t width, double margin) {
  if (height < 1 || width < 1)
    throw Error(ErrorKind::InvalidArgument, "compute_roi needs a non-empty image");
  if (!(margin >= 0.0 && margin < 0.5))
    throw Error(ErrorKind::InvalidArgument, "margin must lie in [0, 0.5)");
  const int64_t mr = int64_t(std::floor(margin * double(height)));
  const int64_t mc = int64_t(std::floor(margin * double(width)));
  RegionOfInterest roi{mr, height - mr, mc, width - mc};
  if (roi.height() < 1 || roi.width() < 1)
    throw Error(ErrorKind::DegenerateRoi,
                "margins leave an empty region of interest");
  return roi;
}

int64_t anchor_lattice_size(const RegionOfInterest& roi, int64_t patch_size) {
  const int64_t rows = std::max<int64_t>(0, roi.height() - patch_size + 1);
  const int64_t cols = std::max<int64_t>(0, roi.width() - patch_size + 1);
  return rows * cols;
}

PatchBatch sample_patches(const Scan& scan, int64_t k, int64_t patch_size,
                          double margin, uint64_t rng_seed) {
  if (k < 1) throw Error(ErrorKind::InvalidArgument, "k must be >= 1");
  if (patch_size < 1)
    throw Error(ErrorKind::InvalidArgument, "patch_size must be >= 1");
  const RegionOfInterest roi = compute_roi(scan.height, scan.width, margin);
  if (roi.height() < patch_size || roi.width() < patch_size)
    throw Error(ErrorKind::RoiTooSmall,
                scan.source_path + ": ROI " + std::to_string(roi.height()) +
                    "x" + std::to_string(roi.width()) +
                    " cannot fit a " + std::to_string(patch_size) + "-patch");

  const int64_t row_span = roi.height() - patch_size + 1;
  const int64_t col_span = roi.width() - patch_size + 1;

  PatchBatch batch;
  batch.patches = Tensor<float>({k, patch_size, patch_size});
  batch.source_scan_id = scan.source_path;
  batch.patch_size = patch_size;
  batch.coordinates.reserve(size_t(k));

  // One (row, col) pair per anchor, in anchor order.
  Rng rng(derive_seed(rng_seed, RngStream::PatchAnchors));
  for (int64_t i = 0; i < k; ++i) {
    const int64_t r = roi.top + int64_t(rng.uniform_int(uint64_t(row_span)));
    const int64_t c = roi.left + int64_t(rng.uniform_int(uint64_t(col_span)));
    batch.coordinates.emplace_back(r, c);
    float* dst = batch.patches.data() + i * patch_size * patch_size;
    for (int64_t y = 0; y < patch_size; ++y)
      std::memcpy(dst + y * patch_size,
                  scan.pixels.data() + (r + y) * scan.width + c,
                  size_t(patch_size) * sizeof(float));
  }
  return batch;
}

void dump_patches(const PatchBatch& batch, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::string id = batch.source_scan_id;
  for (auto& ch : id)
    if (ch == '/' || ch == '\\' || ch == ':') ch = '_';
  const int64_t s = batch.patch_size;
  std::vector<uint8_t> buf(size_t(s) * size_t(s));
  for (int64_t i = 0; i < batch.k(); ++i) {
    const float* src = batch.patches.data() + i * s * s;
    for (int64_t j = 0; j < s * s; ++j)
      buf[size_t(j)] = uint8_t(std::lround(src[j] * 255.0f));
    const auto [r, c] = batch.coordinates[size_t(i)];
    write_png8(dir + "/" + id + "_" + std::to_string(r) + "_" +
                   std::to_string(c) + ".png",
               s, s, buf.data());
  }
}

Tensor<float> batch_to_input(const PatchBatch& batch) {
  const int64_t k = batch.k(), s = batch.patch_size;
  Tensor<float> x({k, 1, s, s});
  std::memcpy(x.data(), batch.patches.data(), size_t(k * s * s) * sizeof(float));
  return x;
}

}  // namespace adverx
