#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "celldet/eval.hpp"
#include "celldet/postprocess.hpp"
#include "celldet/synth.hpp"
#include "celldet/train.hpp"

// The paper-shaped experiment harnesses: ground-truth format comparison,
// sigma ablation, and the cell-tissue (CTM/TLLM) comparison, all on
// synthetic scenes with a fixed stratified train/eval split.
namespace celldet::bench {

struct ExperimentConfig {
  TrainConfig cell_train;
  TrainConfig tissue_train;
  FeatureConfig cell_features;
  FeatureConfig tissue_features;
  post::PostprocParams postproc;
  eval::EvalConfig eval;
  double soft_sigma_px = 15.0;
  double eval_fraction = 0.34;
  bool oversample = false;

  ExperimentConfig() {
    tissue_train.loss_kind = LossKind::cross_entropy;
    tissue_train.epochs = 25;
  }
  void validate() const;
};

struct SeedStat {
  std::vector<double> per_seed;
  double mean = 0.0;
  double stdev = 0.0;  // sample standard deviation; 0 for a single seed
};

struct FormatRow {
  gt::Format format = gt::Format::circle;
  std::string name;
  SeedStat f1;
};
struct FormatTable {
  std::vector<FormatRow> rows;  // circle, hard_is, soft_is
  std::vector<std::uint64_t> seeds;
};

struct PooledCounts {
  long long tp = 0, fp = 0, fn = 0;
};
struct SigmaRow {
  double sigma_um = 0.0;
  SeedStat f1, precision, recall;
  std::vector<PooledCounts> counts_per_seed;  // pooled over classes+scenes
};
struct SigmaTable {
  std::vector<SigmaRow> rows;
  std::vector<std::uint64_t> seeds;
};

struct CtmRow {
  std::string variant;
  SeedStat f1;
  std::map<std::string, double> per_organ_f1;  // macro F1, mean over seeds
};
struct CtmTable {
  std::vector<CtmRow> rows;  // cell-only, SoftCTM, SoftCTM+TTA, TLLM, TLLM+TTA
  std::map<std::string, int> organ_counts;  // eval scenes per organ
  std::vector<std::uint64_t> seeds;
};

// Deterministic benchmark corpus: scene i is drawn from its own generator
// seeded by (seed, i) with organ tag "organ<i % n_organs>".
std::vector<SynthScene> make_scene_set(const SynthParams& base, int n_scenes,
                                       int n_organs, std::uint64_t seed);

// Within each organ group (sorted by tag) the trailing eval_fraction of
// scenes is held out; single-scene organs stay in training. Returns
// (train indices, eval indices).
std::pair<std::vector<int>, std::vector<int>> train_eval_split(
    const std::vector<SynthScene>& scenes, double eval_fraction);

// One model per format per seed, matching postprocessor (peak pipeline for
// circle and soft IS, watershed pipeline for hard IS), micro mean F1 on the
// held-out scenes.
FormatTable run_format_experiment(const std::vector<SynthScene>& scenes,
                                  const std::vector<std::uint64_t>& seeds,
                                  const ExperimentConfig& cfg = {});

// Soft-IS models trained per sigma (microns, converted via the scene cell
// resolution); F1 / precision / recall pooled over classes and eval scenes.
SigmaTable run_sigma_ablation(const std::vector<SynthScene>& scenes,
                              const std::vector<double>& sigmas_um,
                              const std::vector<std::uint64_t>& seeds,
                              const ExperimentConfig& cfg = {});

// Tissue model first, then soft-IS cell models without tissue input, with
// predicted tissue (SoftCTM), and with leaked labels (TLLM); each evaluated
// plain and with TTA.
CtmTable run_ctm_experiment(const std::vector<SynthScene>& scenes,
                            const std::vector<std::uint64_t>& seeds,
                            const ExperimentConfig& cfg = {});

}  // namespace celldet::bench
