// Command-line front end: train / score / eval / shift / synth / replay.
// Every command writes a resolved_config.json capturing all effective
// parameters; `adverx replay <file>` re-runs a command from that file alone.

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "adverx/error.hpp"
#include "adverx/evaluation.hpp"
#include "adverx/image_io.hpp"
#include "adverx/ingest.hpp"
#include "adverx/persistence.hpp"
#include "adverx/scoring.hpp"
#include "adverx/shiftgen.hpp"
#include "adverx/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TrainArgs {
  std::string manifest, arch_file, output_dir;
  int64_t epochs = 1, batches_per_epoch = 100, k_patches = 64;
  double lr_g = 2e-4, lr_d = 2e-4, beta1 = 0.5, beta2 = 0.999;
  double beta_kl = 1e-2, lambda_recon = 1.0, lambda_sample = 1.0;
  double margin = 0.2;
  bool no_discriminator = false, cross_scan = false;
  int64_t checkpoint_every = 0;
  int bit_depth_override = 0;
  uint64_t seed = 0;
};

struct ScoreArgs {
  std::string archive, manifest, output_dir;
  int64_t k = 64;
  int cycles = 5;
  double margin = 0.2;
  bool force_k = false;
  int bit_depth_override = 0;
  uint64_t seed = 0;
};

struct EvalArgs {
  std::string id_scores, ood_scores, output_dir;
  int64_t iterations = 10;
  bool histograms = false;
  uint64_t seed = 0;
};

struct ShiftArgs {
  std::string manifest, kind, output_dir;
  double magnitude = 0.0;
  uint64_t seed = 0;
};

struct SynthArgs {
  std::string output_dir;
  int64_t count = 200, size = 512;
  uint64_t seed = 0;
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw adverx::Error(adverx::ErrorKind::IoError, path + ": cannot write");
  f << text;
}

void write_resolved_config(const std::string& output_dir, const json& j) {
  fs::create_directories(output_dir);
  write_text((fs::path(output_dir) / "resolved_config.json").string(),
             j.dump(2) + "\n");
}

adverx::ShiftKind parse_kind(const std::string& kind) {
  if (kind == "gaussian_noise") return adverx::ShiftKind::GaussianNoise;
  if (kind == "gaussian_blur") return adverx::ShiftKind::GaussianBlur;
  if (kind == "gamma") return adverx::ShiftKind::Gamma;
  if (kind == "dose_sim") return adverx::ShiftKind::DoseSim;
  throw adverx::Error(adverx::ErrorKind::InvalidArgument,
                      "unknown shift kind " + kind);
}

int run_train(const TrainArgs& a) {
  adverx::ArchitectureConfig arch;
  if (!a.arch_file.empty()) {
    std::ifstream f(a.arch_file);
    if (!f)
      throw adverx::Error(adverx::ErrorKind::IoError,
                          a.arch_file + ": cannot open");
    arch = json::parse(f).get<adverx::ArchitectureConfig>();
  }
  adverx::validate(arch);

  adverx::TrainConfig config;
  config.epochs = a.epochs;
  config.batches_per_epoch = a.batches_per_epoch;
  config.patches_per_batch = a.k_patches;
  config.learning_rate_g = a.lr_g;
  config.learning_rate_d = a.lr_d;
  config.optimizer_betas = {a.beta1, a.beta2};
  config.rng_seed = a.seed;
  config.loss_weights = {a.beta_kl, a.lambda_recon, a.lambda_sample};
  config.train_discriminator = !a.no_discriminator;
  config.cross_scan_batching = a.cross_scan;
  config.margin = a.margin;
  config.checkpoint_every = a.checkpoint_every;
  config.checkpoint_dir = (fs::path(a.output_dir) / "checkpoints").string();
  adverx::validate(config);

  json resolved = {
      {"command", "train"},
      {"manifest", a.manifest},
      {"output_dir", a.output_dir},
      {"architecture", arch},
      {"epochs", config.epochs},
      {"batches_per_epoch", config.batches_per_epoch},
      {"k_patches", config.patches_per_batch},
      {"lr_g", config.learning_rate_g},
      {"lr_d", config.learning_rate_d},
      {"beta1", config.optimizer_betas.first},
      {"beta2", config.optimizer_betas.second},
      {"beta_kl", config.loss_weights.beta_kl},
      {"lambda_recon", config.loss_weights.lambda_adv_recon},
      {"lambda_sample", config.loss_weights.lambda_adv_sample},
      {"train_discriminator", config.train_discriminator},
      {"cross_scan_batching", config.cross_scan_batching},
      {"margin", config.margin},
      {"checkpoint_every", config.checkpoint_every},
      {"bit_depth_override", a.bit_depth_override},
      {"seed", a.seed},
  };
  write_resolved_config(a.output_dir, resolved);

  const adverx::Manifest manifest = adverx::read_manifest(a.manifest);
  auto [model, history] =
      adverx::train(manifest, adverx::manifest_root(a.manifest), arch, config);

  for (const auto& skipped : history.skipped_scans)
    std::cerr << "warning: skipped " << skipped << " (load/ROI precondition)\n";

  const fs::path out(a.output_dir);
  adverx::save_model(model, (out / "model.axr").string(),
                     adverx::ArchiveSubset::Full);
  const adverx::ArchiveInfo disc = adverx::save_model(
      model, (out / "discriminator.axr").string(),
      adverx::ArchiveSubset::DiscriminatorOnly);
  adverx::write_history_csv(history, (out / "history.csv").string());

  const adverx::ParamCounts counts = adverx::parameter_count(model);
  std::cout << "trained " << history.steps.size() << " steps; parameters enc="
            << counts.encoder << " dec=" << counts.decoder
            << " disc=" << counts.discriminator << " (total " << counts.total
            << "); discriminator archive " << disc.file_bytes << " bytes\n";
  return 0;
}

int run_score(const ScoreArgs& a) {
  json resolved = {
      {"command", "score"},   {"archive", a.archive},
      {"manifest", a.manifest}, {"output_dir", a.output_dir},
      {"k", a.k},             {"cycles", a.cycles},
      {"margin", a.margin},   {"force_k", a.force_k},
      {"bit_depth_override", a.bit_depth_override},
      {"seed", a.seed},
  };
  write_resolved_config(a.output_dir, resolved);

  const adverx::AdverxModel model =
      adverx::load_model(a.archive, adverx::ArchiveSubset::DiscriminatorOnly);
  const adverx::Manifest manifest = adverx::read_manifest(a.manifest);
  const adverx::ManifestScores scores = adverx::score_manifest(
      manifest, adverx::manifest_root(a.manifest), model, a.k, a.cycles,
      a.seed, a.margin, a.force_k, a.bit_depth_override);

  for (const auto& [path, message] : scores.errors)
    std::cerr << "warning: " << path << ": " << message << "\n";
  adverx::write_scores_csv(scores,
                           (fs::path(a.output_dir) / "scores.csv").string());
  std::cout << "scored " << scores.cycles[0].size() << " images x "
            << scores.cycles.size() << " cycles\n";
  return 0;
}

int run_eval(const EvalArgs& a) {
  json resolved = {
      {"command", "eval"},         {"id_scores", a.id_scores},
      {"ood_scores", a.ood_scores}, {"output_dir", a.output_dir},
      {"iterations", a.iterations}, {"histograms", a.histograms},
      {"seed", a.seed},
  };
  write_resolved_config(a.output_dir, resolved);

  const std::vector<adverx::ScoreRow> id_rows =
      adverx::read_scores_csv(a.id_scores);
  const std::vector<adverx::ScoreRow> ood_rows =
      adverx::read_scores_csv(a.ood_scores);
  adverx::ProtocolConfig protocol;
  protocol.n_iterations = a.iterations;
  protocol.rng_seed = a.seed;
  const adverx::EvalReport report =
      adverx::build_report(id_rows, ood_rows, protocol);

  const fs::path out(a.output_dir);
  adverx::write_report_csv(report, (out / "report.csv").string());
  const std::string text = adverx::report_text(report);
  write_text((out / "report.txt").string(), text);
  std::cout << text;

  if (a.histograms) {
    std::vector<double> id_scores;
    for (const auto& r : id_rows) id_scores.push_back(r.score);
    for (const auto& g : report.groups) {
      std::vector<double> ood_scores;
      for (const auto& r : ood_rows)
        if (r.group_key == g.group) ood_scores.push_back(r.score);
      adverx::write_histogram_png(
          id_scores, ood_scores,
          (out / ("hist_" + g.group + ".png")).string());
    }
  }
  return 0;
}

int run_shift(const ShiftArgs& a) {
  json resolved = {
      {"command", "shift"},     {"manifest", a.manifest},
      {"output_dir", a.output_dir}, {"kind", a.kind},
      {"magnitude", a.magnitude},   {"seed", a.seed},
  };
  write_resolved_config(a.output_dir, resolved);

  const adverx::ShiftKind kind = parse_kind(a.kind);
  const adverx::Manifest manifest = adverx::read_manifest(a.manifest);
  const std::string root = adverx::manifest_root(a.manifest);
  const fs::path out(a.output_dir);
  fs::create_directories(out);

  adverx::Manifest shifted_manifest;
  for (size_t i = 0; i < manifest.entries.size(); ++i) {
    const adverx::Scan scan = adverx::load_entry(root, manifest.entries[i]);
    adverx::ShiftSpec spec{kind, a.magnitude,
                           adverx::derive_seed(a.seed, adverx::RngStream::Shift,
                                               uint64_t(i))};
    const adverx::Scan shifted = adverx::apply_shift(scan, spec);
    const std::string label = adverx::shift_label(spec);

    std::string name = fs::path(manifest.entries[i].path).stem().string() +
                       "_" + label + ".png";
    std::vector<uint16_t> raw(size_t(shifted.height) * size_t(shifted.width));
    for (int64_t p = 0; p < shifted.pixels.numel(); ++p)
      raw[size_t(p)] = uint16_t(std::lround(shifted.pixels[p] * 65535.0f));
    adverx::write_png16((out / name).string(), shifted.height, shifted.width,
                        raw.data());
    shifted_manifest.append(name, label);
  }
  adverx::write_manifest(shifted_manifest, (out / "manifest.tsv").string());
  std::cout << "wrote " << shifted_manifest.entries.size()
            << " shifted scans to " << a.output_dir << "\n";
  return 0;
}

int run_synth(const SynthArgs& a) {
  json resolved = {
      {"command", "synth"}, {"output_dir", a.output_dir},
      {"count", a.count},   {"size", a.size},
      {"seed", a.seed},
  };
  write_resolved_config(a.output_dir, resolved);

  const fs::path out(a.output_dir);
  fs::create_directories(out);
  adverx::Manifest manifest;
  std::vector<uint16_t> raw(size_t(a.size) * size_t(a.size));
  for (int64_t i = 0; i < a.count; ++i) {
    const adverx::Scan scan = adverx::make_textured_scan(i, a.size, a.seed);
    for (int64_t p = 0; p < scan.pixels.numel(); ++p)
      raw[size_t(p)] = uint16_t(std::lround(scan.pixels[p] * 65535.0f));
    char name[32];
    std::snprintf(name, sizeof(name), "synth_%05ld.png", long(i));
    adverx::write_png16((out / name).string(), a.size, a.size, raw.data());
    manifest.append(name, "synthetic");
  }
  adverx::write_manifest(manifest, (out / "manifest.tsv").string());
  std::cout << "wrote " << a.count << " textured scans to " << a.output_dir
            << "\n";
  return 0;
}

int run_replay(const std::string& config_path, const std::string& out_override);

int dispatch(const json& j, const std::string& out_override) {
  const std::string command = j.at("command").get<std::string>();
  auto out_dir = [&](const json& jj) {
    return out_override.empty() ? jj.at("output_dir").get<std::string>()
                                : out_override;
  };
  if (command == "train") {
    TrainArgs a;
    a.manifest = j.at("manifest");
    a.output_dir = out_dir(j);
    a.epochs = j.at("epochs");
    a.batches_per_epoch = j.at("batches_per_epoch");
    a.k_patches = j.at("k_patches");
    a.lr_g = j.at("lr_g");
    a.lr_d = j.at("lr_d");
    a.beta1 = j.at("beta1");
    a.beta2 = j.at("beta2");
    a.beta_kl = j.at("beta_kl");
    a.lambda_recon = j.at("lambda_recon");
    a.lambda_sample = j.at("lambda_sample");
    a.no_discriminator = !j.at("train_discriminator").get<bool>();
    a.cross_scan = j.at("cross_scan_batching");
    a.margin = j.at("margin");
    a.checkpoint_every = j.at("checkpoint_every");
    a.bit_depth_override = j.at("bit_depth_override");
    a.seed = j.at("seed");
    if (j.contains("architecture")) {
      // Round-trip through a temp file keeps one code path for arch loading.
      const fs::path tmp =
          fs::path(a.output_dir) / ".replay_architecture.json";
      fs::create_directories(a.output_dir);
      write_text(tmp.string(), j.at("architecture").dump());
      a.arch_file = tmp.string();
    }
    return run_train(a);
  }
  if (command == "score") {
    ScoreArgs a;
    a.archive = j.at("archive");
    a.manifest = j.at("manifest");
    a.output_dir = out_dir(j);
    a.k = j.at("k");
    a.cycles = j.at("cycles");
    a.margin = j.at("margin");
    a.force_k = j.at("force_k");
    a.bit_depth_override = j.at("bit_depth_override");
    a.seed = j.at("seed");
    return run_score(a);
  }
  if (command == "eval") {
    EvalArgs a;
    a.id_scores = j.at("id_scores");
    a.ood_scores = j.at("ood_scores");
    a.output_dir = out_dir(j);
    a.iterations = j.at("iterations");
    a.histograms = j.at("histograms");
    a.seed = j.at("seed");
    return run_eval(a);
  }
  if (command == "shift") {
    ShiftArgs a;
    a.manifest = j.at("manifest");
    a.output_dir = out_dir(j);
    a.kind = j.at("kind");
    a.magnitude = j.at("magnitude");
    a.seed = j.at("seed");
    return run_shift(a);
  }
  if (command == "synth") {
    SynthArgs a;
    a.output_dir = out_dir(j);
    a.count = j.at("count");
    a.size = j.at("size");
    a.seed = j.at("seed");
    return run_synth(a);
  }
  throw adverx::Error(adverx::ErrorKind::InvalidArgument,
                      "unknown command in resolved config: " + command);
}

int run_replay(const std::string& config_path, const std::string& out_override) {
  std::ifstream f(config_path);
  if (!f)
    throw adverx::Error(adverx::ErrorKind::IoError,
                        config_path + ": cannot open");
  return dispatch(json::parse(f), out_override);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AdverX: patch-based covariate-shift detection for X-ray scans"};
  app.require_subcommand(1);

  int workers = 0;
  app.add_option("--workers", workers, "OpenMP thread count (0 = default)");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train a model on a manifest");
  train->add_option("--manifest", train_args.manifest, "training manifest")
      ->required();
  train->add_option("--arch", train_args.arch_file,
                    "architecture JSON (default: built-in)");
  train->add_option("--output-dir", train_args.output_dir)->required();
  train->add_option("--epochs", train_args.epochs);
  train->add_option("--batches-per-epoch", train_args.batches_per_epoch);
  train->add_option("--k-patches", train_args.k_patches, "patches per batch")
      ->check(CLI::Range(int64_t(2), int64_t(1) << 20));
  train->add_option("--lr-g", train_args.lr_g);
  train->add_option("--lr-d", train_args.lr_d);
  train->add_option("--beta1", train_args.beta1);
  train->add_option("--beta2", train_args.beta2);
  train->add_option("--beta-kl", train_args.beta_kl);
  train->add_option("--lambda-recon", train_args.lambda_recon);
  train->add_option("--lambda-sample", train_args.lambda_sample);
  train->add_flag("--no-train-discriminator", train_args.no_discriminator);
  train->add_flag("--cross-scan-batching", train_args.cross_scan);
  train->add_option("--margin", train_args.margin);
  train->add_option("--checkpoint-every", train_args.checkpoint_every);
  train->add_option("--bit-depth-override", train_args.bit_depth_override);
  train->add_option("--seed", train_args.seed)->envname("ADVERX_SEED");

  ScoreArgs score_args;
  auto* score = app.add_subcommand("score", "score a manifest with a model");
  score->add_option("--archive", score_args.archive)->required();
  score->add_option("--manifest", score_args.manifest)->required();
  score->add_option("--output-dir", score_args.output_dir)->required();
  score->add_option("--k", score_args.k, "patches per image");
  score->add_option("--cycles", score_args.cycles, "execution cycles");
  score->add_option("--margin", score_args.margin);
  score->add_flag("--force-k", score_args.force_k,
                  "allow k beyond the studied cap of 512");
  score->add_option("--bit-depth-override", score_args.bit_depth_override);
  score->add_option("--seed", score_args.seed)->envname("ADVERX_SEED");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "AUROC/FPR95 report from score CSVs");
  eval->add_option("--id-scores", eval_args.id_scores)->required();
  eval->add_option("--ood-scores", eval_args.ood_scores)->required();
  eval->add_option("--output-dir", eval_args.output_dir)->required();
  eval->add_option("--iterations", eval_args.iterations,
                   "balanced resampling iterations");
  eval->add_flag("--histograms", eval_args.histograms);
  eval->add_option("--seed", eval_args.seed)->envname("ADVERX_SEED");

  ShiftArgs shift_args;
  auto* shift = app.add_subcommand("shift", "write a shifted copy of a corpus");
  shift->add_option("--manifest", shift_args.manifest)->required();
  shift->add_option("--kind", shift_args.kind)
      ->required()
      ->check(CLI::IsMember(
          {"gaussian_noise", "gaussian_blur", "gamma", "dose_sim"}));
  shift->add_option("--magnitude", shift_args.magnitude)
      ->required()
      ->check(CLI::PositiveNumber);
  shift->add_option("--output-dir", shift_args.output_dir)->required();
  shift->add_option("--seed", shift_args.seed)->envname("ADVERX_SEED");

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate a textured ID corpus");
  synth->add_option("--count", synth_args.count);
  synth->add_option("--size", synth_args.size);
  synth->add_option("--output-dir", synth_args.output_dir)->required();
  synth->add_option("--seed", synth_args.seed)->envname("ADVERX_SEED");

  std::string replay_config, replay_out;
  auto* replay = app.add_subcommand("replay",
                                    "re-run a command from a resolved config");
  replay->add_option("config", replay_config, "resolved_config.json path")
      ->required();
  replay->add_option("--output-dir", replay_out, "override output directory");

  CLI11_PARSE(app, argc, argv);

  if (workers > 0) omp_set_num_threads(workers);

  try {
    if (train->parsed()) return run_train(train_args);
    if (score->parsed()) return run_score(score_args);
    if (eval->parsed()) return run_eval(eval_args);
    if (shift->parsed()) return run_shift(shift_args);
    if (synth->parsed()) return run_synth(synth_args);
    if (replay->parsed()) return run_replay(replay_config, replay_out);
  } catch (const adverx::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
