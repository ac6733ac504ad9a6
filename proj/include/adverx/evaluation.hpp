#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adverx/scoring.hpp"

namespace adverx {

// Mann-Whitney AUROC with half credit for ties. OOD is the positive class;
// higher score = more positive.
double auroc(const std::vector<double>& id_scores,
             const std::vector<double>& ood_scores);

// FPR at the largest threshold t* with fraction(ood >= t*) >= target_tpr
// (classification rule: score >= t means flagged OOD).
double fpr_at_tpr(const std::vector<double>& id_scores,
                  const std::vector<double>& ood_scores, double target_tpr);

struct BalancedMetrics {
  double auroc_mean = 0.0;
  double fpr95_mean = 0.0;
};

// Draws |id| OOD scores without replacement per iteration (seeded) and
// averages both metrics over the iterations.
BalancedMetrics balanced_ood_eval(const std::vector<double>& id_scores,
                                  const std::vector<double>& ood_pool_scores,
                                  int64_t n_iter, uint64_t rng_seed);

struct ProtocolConfig {
  int64_t n_iterations = 10;
  uint64_t rng_seed = 0;
};

struct GroupReport {
  std::string group;
  double auroc_mean = 0.0;
  double fpr95_mean = 0.0;
  int64_t n_id = 0, n_ood = 0, n_iterations = 0, n_cycles = 0;
};

struct EvalReport {
  std::vector<GroupReport> groups;
  double average_auroc = 0.0;
  double average_fpr95 = 0.0;
};

// Metrics are computed per (cycle x iteration) and averaged over both; every
// ID cycle must be present in every OOD group.
EvalReport build_report(const std::vector<ScoreRow>& id_rows,
                        const std::vector<ScoreRow>& ood_rows,
                        const ProtocolConfig& config);

std::string report_text(const EvalReport& report);
void write_report_csv(const EvalReport& report, const std::string& path);

// Optional plot emission: grayscale score histograms (ID top, OOD bottom).
void write_histogram_png(const std::vector<double>& id_scores,
                         const std::vector<double>& ood_scores,
                         const std::string& path);

}  // namespace adverx
