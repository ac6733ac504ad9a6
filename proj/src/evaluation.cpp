#include "adverx/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "adverx/error.hpp"
#include "adverx/image_io.hpp"
#include "adverx/rng.hpp"

namespace adverx {

namespace {

void check_nonempty(const std::vector<double>& v, const char* what) {
  if (v.empty()) throw Error(ErrorKind::EmptyInput, std::string(what));
}

}  // namespace

double auroc(const std::vector<double>& id_scores,
             const std::vector<double>& ood_scores) {
  check_nonempty(id_scores, "auroc: empty ID scores");
  check_nonempty(ood_scores, "auroc: empty OOD scores");
  std::vector<double> id_sorted = id_scores;
  std::vector<double> ood_sorted = ood_scores;
  std::sort(id_sorted.begin(), id_sorted.end());
  std::sort(ood_sorted.begin(), ood_sorted.end());

  uint64_t wins = 0, ties = 0;
  size_t lt = 0, le = 0;  // id entries strictly below / not above current ood
  for (double v : ood_sorted) {
    while (lt < id_sorted.size() && id_sorted[lt] < v) ++lt;
    if (le < lt) le = lt;
    while (le < id_sorted.size() && id_sorted[le] <= v) ++le;
    wins += lt;
    ties += le - lt;
  }
  return (double(wins) + 0.5 * double(ties)) /
         (double(id_sorted.size()) * double(ood_sorted.size()));
}

double fpr_at_tpr(const std::vector<double>& id_scores,
                  const std::vector<double>& ood_scores, double target_tpr) {
  check_nonempty(id_scores, "fpr_at_tpr: empty ID scores");
  check_nonempty(ood_scores, "fpr_at_tpr: empty OOD scores");
  if (!(target_tpr > 0.0 && target_tpr <= 1.0))
    throw Error(ErrorKind::InvalidArgument, "target_tpr must lie in (0,1]");

  std::vector<double> ood_desc = ood_scores;
  std::sort(ood_desc.begin(), ood_desc.end(), std::greater<double>());
  const size_t m = ood_desc.size();
  size_t c = m;
  for (size_t i = 1; i <= m; ++i) {
    if (double(i) / double(m) >= target_tpr) {
      c = i;
      break;
    }
  }
  const double threshold = ood_desc[c - 1];

  size_t flagged = 0;
  for (double v : id_scores)
    if (v >= threshold) ++flagged;
  return double(flagged) / double(id_scores.size());
}

BalancedMetrics balanced_ood_eval(const std::vector<double>& id_scores,
                                  const std::vector<double>& ood_pool_scores,
                                  int64_t n_iter, uint64_t rng_seed) {
  check_nonempty(id_scores, "balanced_ood_eval: empty ID scores");
  if (ood_pool_scores.size() < id_scores.size())
    throw Error(ErrorKind::InsufficientData,
                "OOD pool (" + std::to_string(ood_pool_scores.size()) +
                    ") smaller than ID set (" +
                    std::to_string(id_scores.size()) + ")");
  if (n_iter < 1)
    throw Error(ErrorKind::InvalidArgument, "n_iter must be >= 1");

  const size_t take = id_scores.size();
  BalancedMetrics out;
  std::vector<double> pool = ood_pool_scores;
  std::vector<double> draw(take);
  for (int64_t it = 0; it < n_iter; ++it) {
    Rng rng(derive_seed(rng_seed, RngStream::BalancedEval, uint64_t(it)));
    // Partial Fisher-Yates: the first `take` slots become the sample.
    for (size_t i = 0; i < take; ++i) {
      const size_t j = i + size_t(rng.uniform_int(uint64_t(pool.size() - i)));
      std::swap(pool[i], pool[j]);
      draw[i] = pool[i];
    }
    out.auroc_mean += auroc(id_scores, draw);
    out.fpr95_mean += fpr_at_tpr(id_scores, draw, 0.95);
  }
  out.auroc_mean /= double(n_iter);
  out.fpr95_mean /= double(n_iter);
  return out;
}

EvalReport build_report(const std::vector<ScoreRow>& id_rows,
                        const std::vector<ScoreRow>& ood_rows,
                        const ProtocolConfig& config) {
  if (id_rows.empty()) throw Error(ErrorKind::EmptyInput, "no ID score rows");
  if (ood_rows.empty()) throw Error(ErrorKind::EmptyInput, "no OOD score rows");

  std::map<int, std::vector<double>> id_by_cycle;
  for (const auto& r : id_rows) id_by_cycle[r.cycle].push_back(r.score);

  std::map<std::string, std::map<int, std::vector<double>>> ood_by_group;
  for (const auto& r : ood_rows)
    ood_by_group[r.group_key][r.cycle].push_back(r.score);

  EvalReport report;
  for (const auto& [group, by_cycle] : ood_by_group) {
    GroupReport g;
    g.group = group;
    g.n_iterations = config.n_iterations;
    g.n_cycles = int64_t(id_by_cycle.size());
    const uint64_t group_seed =
        splitmix64(config.rng_seed ^ hash_string64(group));
    for (const auto& [cycle, id_scores] : id_by_cycle) {
      const auto it = by_cycle.find(cycle);
      if (it == by_cycle.end())
        throw Error(ErrorKind::ReportError,
                    "group '" + group + "' has no scores for cycle " +
                        std::to_string(cycle));
      const BalancedMetrics m =
          balanced_ood_eval(id_scores, it->second, config.n_iterations,
                            splitmix64(group_seed + uint64_t(cycle)));
      g.auroc_mean += m.auroc_mean;
      g.fpr95_mean += m.fpr95_mean;
      g.n_id = int64_t(id_scores.size());
      g.n_ood = int64_t(it->second.size());
    }
    g.auroc_mean /= double(g.n_cycles);
    g.fpr95_mean /= double(g.n_cycles);
    report.groups.push_back(std::move(g));
  }

  for (const auto& g : report.groups) {
    report.average_auroc += g.auroc_mean;
    report.average_fpr95 += g.fpr95_mean;
  }
  report.average_auroc /= double(report.groups.size());
  report.average_fpr95 /= double(report.groups.size());
  return report;
}

std::string report_text(const EvalReport& report) {
  char line[160];
  std::string out;
  std::snprintf(line, sizeof(line), "%-24s %8s %8s %6s %6s %6s %7s\n", "group",
                "AUROC^", "FPR95v", "n_id", "n_ood", "iters", "cycles");
  out += line;
  for (const auto& g : report.groups) {
    std::snprintf(line, sizeof(line),
                  "%-24s %8.4f %8.4f %6ld %6ld %6ld %7ld\n", g.group.c_str(),
                  g.auroc_mean, g.fpr95_mean, long(g.n_id), long(g.n_ood),
                  long(g.n_iterations), long(g.n_cycles));
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-24s %8.4f %8.4f\n", "average",
                report.average_auroc, report.average_fpr95);
  out += line;
  return out;
}

void write_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorKind::IoError, path + ": cannot open for writing");
  f << "group,auroc,fpr95,n_id,n_ood,n_iterations,n_cycles\n";
  char buf[96];
  for (const auto& g : report.groups) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f", g.auroc_mean, g.fpr95_mean);
    f << g.group << "," << buf << "," << g.n_id << "," << g.n_ood << ","
      << g.n_iterations << "," << g.n_cycles << "\n";
  }
  std::snprintf(buf, sizeof(buf), "average,%.6f,%.6f,,,,\n",
                report.average_auroc, report.average_fpr95);
  f << buf;
  if (!f) throw Error(ErrorKind::IoError, path + ": write failed");
}

void write_histogram_png(const std::vector<double>& id_scores,
                         const std::vector<double>& ood_scores,
                         const std::string& path) {
  constexpr int kBins = 64, kBarWidth = 4, kHalfHeight = 64;
  const int width = kBins * kBarWidth;
  const int height = 2 * kHalfHeight;
  std::vector<uint8_t> img(size_t(width) * size_t(height), 0);

  auto draw = [&](const std::vector<double>& scores, int top) {
    std::vector<int> counts(kBins, 0);
    for (double s : scores) {
      int b = int(s * kBins);
      b = std::clamp(b, 0, kBins - 1);
      ++counts[size_t(b)];
    }
    const int peak = std::max(1, *std::max_element(counts.begin(), counts.end()));
    for (int b = 0; b < kBins; ++b) {
      const int bar = counts[size_t(b)] * (kHalfHeight - 2) / peak;
      for (int y = 0; y < bar; ++y)
        for (int x = 0; x < kBarWidth - 1; ++x)
          img[size_t((top + kHalfHeight - 1 - y) * width + b * kBarWidth + x)] =
              255;
    }
  };
  draw(id_scores, 0);
  draw(ood_scores, kHalfHeight);
  write_png8(path, height, width, img.data());
}

}  // namespace adverx
