#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "adverx/tensor.hpp"

namespace adverx {

enum class ShiftKind { GaussianNoise, GaussianBlur, Gamma, DoseSim };

struct ShiftSpec {
  ShiftKind kind = ShiftKind::GaussianNoise;
  double magnitude = 0.0;
  uint64_t rng_seed = 0;
};

std::string shift_label(const ShiftSpec& spec);

// One grayscale scan, intensities normalized to [0,1] by dividing the raw
// samples by (2^bit_depth - 1).
struct Scan {
  Tensor<float> pixels;  // (height, width)
  int64_t height = 0, width = 0;
  int bit_depth = 8;  // 8, 12 or 16
  std::string group_key;
  std::string source_path;
  bool channel_reduced = false;  // color source collapsed by channel average
  std::optional<ShiftSpec> shift;
};

enum class ScanFormat { Dicom, Png8, Png16 };

// Chooses the declared format from the file extension and, for PNG, the
// container bit depth in the header.
ScanFormat detect_format(const std::string& path);

// bit_depth_override declares data narrower than its container (e.g. 12-bit
// samples stored in PNG16); zero means "use the container depth".
Scan load_scan(const std::string& path, ScanFormat format,
               int bit_depth_override = 0);

struct ManifestEntry {
  std::string path;  // relative, '/'-separated
  std::string group_key;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  int64_t split_seed = 0;       // parameters of the split that produced
  double train_fraction = 0.0;  // this manifest; 0/0 when never split

  void append(const std::string& path, const std::string& group_key);
  bool contains(const std::string& path) const;
  size_t size() const { return entries.size(); }
};

enum class GroupBy { Directory, MetadataTag };

// Scans root_dir recursively for loadable images; entries are sorted by
// path so the result does not depend on filesystem enumeration order.
Manifest build_manifest(const std::string& root_dir, GroupBy group_by);

std::pair<Manifest, Manifest> split_manifest(const Manifest& manifest,
                                             double train_fraction,
                                             uint64_t seed);

// Line format: "#adverx-manifest v1 seed=<int> train_fraction=<real>" then
// one "<relative_path>\t<group_key>" per line.
void write_manifest(const Manifest& manifest, const std::string& path);
Manifest read_manifest(const std::string& path);

// Manifest paths are relative to the directory containing the manifest file.
std::string manifest_root(const std::string& manifest_path);

// Convenience: load the scan behind a manifest entry (format auto-detected).
Scan load_entry(const std::string& root, const ManifestEntry& entry,
                int bit_depth_override = 0);

}  // namespace adverx
