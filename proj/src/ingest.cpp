#include "adverx/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "adverx/error.hpp"
#include "adverx/image_io.hpp"
#include "adverx/rng.hpp"

namespace fs = std::filesystem;

namespace adverx {

namespace {

std::string lower_ext(const std::string& path) {
  std::string ext = fs::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return char(std::tolower(c)); });
  return ext;
}

bool is_scan_file(const std::string& path) {
  const std::string ext = lower_ext(path);
  return ext == ".png" || ext == ".dcm" || ext == ".dicom";
}

Scan from_raw(RawImage img, const std::string& path, int bit_depth_override) {
  Scan scan;
  scan.height = img.height;
  scan.width = img.width;
  scan.source_path = path;
  scan.channel_reduced = img.channels > 1;

  int depth = img.bit_depth;
  if (bit_depth_override != 0) {
    if (bit_depth_override != 8 && bit_depth_override != 12 &&
        bit_depth_override != 16)
      throw Error(ErrorKind::InvalidArgument,
                  "bit_depth_override must be one of 8/12/16");
    if (bit_depth_override > img.bit_depth)
      throw Error(ErrorKind::InvalidArgument,
                  "bit_depth_override exceeds container depth");
    depth = bit_depth_override;
  }
  scan.bit_depth = depth;

  const uint32_t maxval = (1u << depth) - 1;
  const int64_t count = img.height * img.width;
  scan.pixels = Tensor<float>({img.height, img.width});
  const float scale = 1.0f / float(maxval);
  for (int64_t i = 0; i < count; ++i) {
    uint32_t v;
    if (img.channels == 1) {
      v = img.pixels[size_t(i)];
    } else {
      // Luminance average across channels.
      uint32_t acc = 0;
      for (int ch = 0; ch < img.channels; ++ch)
        acc += img.pixels[size_t(i) * size_t(img.channels) + size_t(ch)];
      v = (acc + uint32_t(img.channels) / 2) / uint32_t(img.channels);
    }
    if (v > maxval)
      throw Error(ErrorKind::CorruptPixelData,
                  path + ": sample " + std::to_string(v) +
                      " exceeds declared " + std::to_string(depth) +
                      "-bit range");
    scan.pixels[i] = float(v) * scale;
  }
  return scan;
}

}  // namespace

std::string shift_label(const ShiftSpec& spec) {
  std::ostringstream out;
  switch (spec.kind) {
    case ShiftKind::GaussianNoise: out << "noise"; break;
    case ShiftKind::GaussianBlur: out << "blur"; break;
    case ShiftKind::Gamma: out << "gamma"; break;
    case ShiftKind::DoseSim: out << "dose"; break;
  }
  out << "_" << spec.magnitude;
  return out.str();
}

ScanFormat detect_format(const std::string& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".png") {
    RawImage img = read_png(path);
    return img.bit_depth == 16 ? ScanFormat::Png16 : ScanFormat::Png8;
  }
  return ScanFormat::Dicom;
}

Scan load_scan(const std::string& path, ScanFormat format,
               int bit_depth_override) {
  if (!fs::exists(path))
    throw Error(ErrorKind::IoError, path + ": no such file");

  if (format == ScanFormat::Dicom) {
    DicomImage dcm = read_dicom(path);
    if (dcm.bits_stored != 8 && dcm.bits_stored != 12 && dcm.bits_stored != 16)
      throw Error(ErrorKind::UnsupportedInput,
                  path + ": BitsStored=" + std::to_string(dcm.bits_stored));
    const uint32_t maxval = (1u << dcm.bits_stored) - 1;
    RawImage img;
    img.height = dcm.rows;
    img.width = dcm.cols;
    img.channels = 1;
    img.bit_depth = dcm.bits_stored;
    img.pixels = std::move(dcm.pixels);
    for (uint16_t v : img.pixels)
      if (v > maxval)
        throw Error(ErrorKind::CorruptPixelData,
                    path + ": sample exceeds declared BitsStored range");
    if (dcm.monochrome1) {
      // Invert so that a higher value is always brighter.
      for (auto& v : img.pixels) v = uint16_t(maxval - v);
    }
    Scan scan = from_raw(std::move(img), path, 0);
    scan.group_key = dcm.model_name;
    return scan;
  }

  RawImage img = read_png(path);
  const int wanted = format == ScanFormat::Png8 ? 8 : 16;
  if (img.bit_depth != wanted)
    throw Error(ErrorKind::UnsupportedInput,
                path + ": PNG container is " + std::to_string(img.bit_depth) +
                    "-bit, declared " + std::to_string(wanted));
  return from_raw(std::move(img), path, bit_depth_override);
}

void Manifest::append(const std::string& path, const std::string& group_key) {
  if (group_key.empty())
    throw Error(ErrorKind::InvalidArgument,
                "manifest entry needs a non-empty group_key: " + path);
  if (contains(path))
    throw Error(ErrorKind::DuplicateEntry, "duplicate manifest path " + path);
  entries.push_back({path, group_key});
}

bool Manifest::contains(const std::string& path) const {
  for (const auto& e : entries)
    if (e.path == path) return true;
  return false;
}

Manifest build_manifest(const std::string& root_dir, GroupBy group_by) {
  if (!fs::is_directory(root_dir))
    throw Error(ErrorKind::IoError, root_dir + ": not a directory");

  std::vector<std::string> files;
  for (const auto& de : fs::recursive_directory_iterator(root_dir)) {
    if (!de.is_regular_file()) continue;
    const std::string rel =
        fs::relative(de.path(), root_dir).generic_string();
    if (is_scan_file(rel)) files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw Error(ErrorKind::EmptyDataset,
                root_dir + ": no loadable scans found");

  Manifest m;
  std::unordered_set<std::string> seen;
  for (const std::string& rel : files) {
    if (!seen.insert(rel).second)
      throw Error(ErrorKind::DuplicateEntry, "duplicate path " + rel);
    std::string group;
    if (group_by == GroupBy::MetadataTag && lower_ext(rel) != ".png") {
      try {
        DicomImage dcm = read_dicom((fs::path(root_dir) / rel).string());
        group = dcm.model_name;
      } catch (const Error&) {
        group.clear();
      }
    }
    if (group.empty()) {
      const fs::path parent = fs::path(rel).parent_path();
      group = parent.empty() ? "." : parent.filename().generic_string();
    }
    m.entries.push_back({rel, group});
  }
  return m;
}

std::pair<Manifest, Manifest> split_manifest(const Manifest& manifest,
                                             double train_fraction,
                                             uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw Error(ErrorKind::InvalidArgument,
                "train_fraction must lie in (0,1)");
  const int64_t n = int64_t(manifest.entries.size());
  if (n < 2)
    throw Error(ErrorKind::InsufficientData,
                "need at least 2 entries to split, got " + std::to_string(n));

  std::vector<size_t> order(static_cast<size_t>(n));
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, RngStream::Split));
  for (size_t i = order.size(); i > 1; --i) {
    const size_t j = size_t(rng.uniform_int(i));
    std::swap(order[i - 1], order[j]);
  }

  const int64_t n_train = int64_t(std::floor(train_fraction * double(n)));
  Manifest train, test;
  train.split_seed = test.split_seed = int64_t(seed);
  train.train_fraction = test.train_fraction = train_fraction;
  for (int64_t i = 0; i < n; ++i) {
    const ManifestEntry& e = manifest.entries[order[size_t(i)]];
    (i < n_train ? train : test).entries.push_back(e);
  }
  auto by_path = [](const ManifestEntry& a, const ManifestEntry& b) {
    return a.path < b.path;
  };
  std::sort(train.entries.begin(), train.entries.end(), by_path);
  std::sort(test.entries.begin(), test.entries.end(), by_path);
  return {std::move(train), std::move(test)};
}

void write_manifest(const Manifest& manifest, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorKind::IoError, path + ": cannot open for writing");
  f << "#adverx-manifest v1 seed=" << manifest.split_seed
    << " train_fraction=" << manifest.train_fraction << "\n";
  for (const auto& e : manifest.entries) f << e.path << "\t" << e.group_key << "\n";
  if (!f) throw Error(ErrorKind::IoError, path + ": write failed");
}

Manifest read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::IoError, path + ": cannot open");
  std::string header;
  if (!std::getline(f, header))
    throw Error(ErrorKind::FormatError, path + ": empty manifest");

  Manifest m;
  int64_t seed = 0;
  double fraction = 0.0;
  if (std::sscanf(header.c_str(), "#adverx-manifest v1 seed=%ld train_fraction=%lf",
                  &seed, &fraction) != 2)
    throw Error(ErrorKind::FormatError, path + ": bad manifest header");
  m.split_seed = seed;
  m.train_fraction = fraction;

  std::string line;
  size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size())
      throw Error(ErrorKind::FormatError,
                  path + ":" + std::to_string(lineno) +
                      ": expected <path>\\t<group_key>");
    m.append(line.substr(0, tab), line.substr(tab + 1));
  }
  return m;
}

std::string manifest_root(const std::string& manifest_path) {
  const fs::path parent = fs::path(manifest_path).parent_path();
  return parent.empty() ? "." : parent.string();
}

Scan load_entry(const std::string& root, const ManifestEntry& entry,
                int bit_depth_override) {
  const std::string full = (fs::path(root) / entry.path).string();
  Scan scan = load_scan(full, detect_format(full), bit_depth_override);
  scan.source_path = entry.path;
  scan.group_key = entry.group_key;
  return scan;
}

}  // namespace adverx
