#include "adverx/scoring.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>

#include "adverx/error.hpp"
#include "adverx/rng.hpp"

namespace adverx {

std::vector<double> patch_ood_scores(const PatchBatch& batch,
                                     const AdverxModel& model) {
  if (batch.k() < 2)
    throw Error(ErrorKind::BatchTooSmall,
                "patch scoring needs k >= 2 for batch statistics");
  const Tensor<float> x = batch_to_input(batch);
  const DiscriminatorOutput out = discriminate(model, x);
  std::vector<double> scores(out.probabilities.size());
  for (size_t i = 0; i < scores.size(); ++i)
    scores[i] = 1.0 - double(out.probabilities[i]);
  return scores;
}

namespace {

OODScore aggregate(const std::vector<double>& scores, const Scan& scan,
                   int64_t k, uint64_t seed) {
  double sum = 0.0;
  for (double s : scores) sum += s;
  OODScore out;
  out.value = sum / double(scores.size());
  out.scan_id = scan.source_path;
  out.k_patches = k;
  out.rng_seed = seed;
  return out;
}

void check_k(int64_t k, bool force_k) {
  if (k < 2)
    throw Error(ErrorKind::BatchTooSmall,
                "image scoring needs k >= 2, got " + std::to_string(k));
  if (k > kMaxPatchesPerImage && !force_k)
    throw Error(ErrorKind::InvalidArgument,
                "k=" + std::to_string(k) + " exceeds the studied cap of " +
                    std::to_string(kMaxPatchesPerImage) +
                    "; pass force_k to override");
}

}  // namespace

OODScore score_image_with(const PatchScorer& scorer, const Scan& scan,
                          int64_t k, uint64_t rng_seed, double margin,
                          bool force_k) {
  check_k(k, force_k);
  const PatchBatch batch =
      sample_patches(scan, k, /*patch_size=*/128, margin, rng_seed);
  return aggregate(scorer(batch), scan, k, rng_seed);
}

OODScore score_image(const Scan& scan, const AdverxModel& model, int64_t k,
                     uint64_t rng_seed, double margin, bool force_k) {
  check_k(k, force_k);
  const PatchBatch batch =
      sample_patches(scan, k, model.config.patch_size, margin, rng_seed);
  return aggregate(patch_ood_scores(batch, model), scan, k, rng_seed);
}

std::vector<ScoreRow> ManifestScores::flat() const {
  std::vector<ScoreRow> out;
  for (const auto& c : cycles) out.insert(out.end(), c.begin(), c.end());
  return out;
}

namespace {

uint64_t image_seed(uint64_t run_seed, int cycle, const std::string& scan_id) {
  const uint64_t cycle_seed =
      derive_seed(run_seed, RngStream::ScoreCycle, uint64_t(cycle));
  return splitmix64(cycle_seed ^ hash_string64(scan_id));
}

template <class LoadFn>
ManifestScores score_generic(int64_t n_images, LoadFn&& load,
                             const AdverxModel& model, int64_t k, int cycles,
                             uint64_t rng_seed, double margin, bool force_k) {
  if (cycles < 1)
    throw Error(ErrorKind::InvalidArgument, "cycles must be >= 1");
  check_k(k, force_k);
  if (n_images == 0) throw Error(ErrorKind::EmptyDataset, "no images to score");

  ManifestScores out;
  out.cycles.resize(size_t(cycles));
  for (int64_t i = 0; i < n_images; ++i) {
    Scan scan;
    std::string id;
    try {
      scan = load(i);
      id = scan.source_path;
      for (int c = 0; c < cycles; ++c) {
        const OODScore s = score_image(scan, model, k,
                                       image_seed(rng_seed, c, id), margin,
                                       force_k);
        out.cycles[size_t(c)].push_back(
            {s.scan_id, scan.group_key, c, k, s.value});
      }
    } catch (const Error& e) {
      out.errors.emplace_back(id.empty() ? "image " + std::to_string(i) : id,
                              e.what());
    }
  }
  if (out.cycles[0].empty())
    throw Error(ErrorKind::EmptyDataset,
                "every image failed to score (" +
                    std::to_string(out.errors.size()) + " errors)");
  return out;
}

}  // namespace

ManifestScores score_manifest(const Manifest& manifest, const std::string& root,
                              const AdverxModel& model, int64_t k, int cycles,
                              uint64_t rng_seed, double margin, bool force_k,
                              int bit_depth_override) {
  return score_generic(
      int64_t(manifest.entries.size()),
      [&](int64_t i) {
        return load_entry(root, manifest.entries[size_t(i)], bit_depth_override);
      },
      model, k, cycles, rng_seed, margin, force_k);
}

ManifestScores score_scans(const std::vector<Scan>& scans,
                           const AdverxModel& model, int64_t k, int cycles,
                           uint64_t rng_seed, double margin, bool force_k) {
  return score_generic(
      int64_t(scans.size()), [&](int64_t i) { return scans[size_t(i)]; },
      model, k, cycles, rng_seed, margin, force_k);
}

void write_scores_csv(const ManifestScores& scores, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorKind::IoError, path + ": cannot open for writing");
  f << "scan_id,group_key,cycle,k,score\n";
  char buf[64];
  for (const auto& cycle : scores.cycles)
    for (const auto& row : cycle) {
      std::snprintf(buf, sizeof(buf), "%.17g", row.score);
      f << row.scan_id << "," << row.group_key << "," << row.cycle << ","
        << row.k << "," << buf << "\n";
    }
  if (!f) throw Error(ErrorKind::IoError, path + ": write failed");
}

std::vector<ScoreRow> read_scores_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::IoError, path + ": cannot open");
  std::string line;
  if (!std::getline(f, line) || line != "scan_id,group_key,cycle,k,score")
    throw Error(ErrorKind::FormatError, path + ": bad scores CSV header");
  std::vector<ScoreRow> rows;
  size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    ScoreRow row;
    size_t pos = 0;
    auto next = [&](bool last) {
      const size_t comma = last ? line.size() : line.find(',', pos);
      if (comma == std::string::npos)
        throw Error(ErrorKind::FormatError,
                    path + ":" + std::to_string(lineno) + ": expected 5 fields");
      std::string field = line.substr(pos, comma - pos);
      pos = comma + 1;
      return field;
    };
    row.scan_id = next(false);
    row.group_key = next(false);
    row.cycle = std::stoi(next(false));
    row.k = std::stoll(next(false));
    row.score = std::stod(next(true));
    rows.push_back(std::move(row));
  }
  if (rows.empty())
    throw Error(ErrorKind::EmptyInput, path + ": no score rows");
  return rows;
}

}  // namespace adverx
