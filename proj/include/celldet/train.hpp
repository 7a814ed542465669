#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "celldet/augment.hpp"
#include "celldet/groundtruth.hpp"
#include "celldet/model.hpp"
#include "celldet/synth.hpp"

// Mini-batch training of the pixel model with the Dice / weighted-MSE
// losses chained through the softmax, plus cross-entropy for the tissue
// surrogate. Deterministic given the config seed.
namespace celldet::bench {

enum class LossKind { dice, weighted_mse, cross_entropy };
enum class Optimizer { sgd, adam };

struct training_error : std::runtime_error {
  int epoch;
  training_error(int epoch_, const std::string& msg)
      : std::runtime_error(msg), epoch(epoch_) {}
};

struct TrainConfig {
  LossKind loss_kind = LossKind::dice;
  int epochs = 30;
  double learning_rate = 1e-2;
  int batch_size = 1;  // scenes per step; per-scene steps converge fastest
  Optimizer optimizer = Optimizer::adam;
  std::uint64_t seed = 0;
  int k_folds = 5;
  double weight_decay = 0.0;

  void validate() const {
    if (epochs < 1 || batch_size < 1 || k_folds < 1)
      throw param_error("TrainConfig: counts must be >= 1");
    if (learning_rate < 0.0 || weight_decay < 0.0)
      throw param_error("TrainConfig: rates must be >= 0");
  }
};

// One training sample: model input channels, target maps (format tag picks
// the augmentation resampling mode), points and organ tag for oversampling
// and stratified folds.
struct SceneSample {
  Raster input;
  gt::GroundTruthMaps target;
  PointAnnotations pts;
  std::string organ_tag;
};

struct TrainOptions {
  std::optional<aug::AugmentParams> augment;
  std::vector<double> sample_weights;  // empty = uniform; else one per sample
  const std::vector<SceneSample>* validation = nullptr;
};

struct TrainResult {
  PixelModel model;
  std::vector<double> train_loss;  // one entry per epoch
  std::vector<double> val_loss;    // empty without validation samples
};

struct ModelGrad {
  double loss = 0.0;
  std::vector<double> d_weights;
  std::vector<double> d_bias;
};

// Loss and its exact gradient w.r.t. the model parameters on one
// (features, target) pair; the loss-module gradients chained through the
// softmax.
ModelGrad model_gradient(const PixelModel& m, const Raster& feats,
                         const Raster& target, LossKind kind,
                         Exec ex = Exec::openmp);

// Mini-batch descent from `init` (parameters are used as given, so a zero
// learning rate returns them unchanged). Sample weights steer the per-epoch
// draw-with-replacement; without weights each epoch is a shuffled pass.
// Throws training_error when an epoch loss turns non-finite.
TrainResult train(const PixelModel& init,
                  const std::vector<SceneSample>& samples,
                  const TrainConfig& cfg, const TrainOptions& opt = {});

// Round-robin fold assignment inside each organ group: k disjoint index
// lists covering all samples.
std::vector<std::vector<int>> stratified_folds(
    const std::vector<std::string>& organ_tags, int k);

// One train() per fold with that fold held out for validation; fold models
// are intended for geom::average_predictions.
std::vector<TrainResult> train_kfold(const PixelModel& init,
                                     const std::vector<SceneSample>& samples,
                                     const TrainConfig& cfg,
                                     const TrainOptions& opt = {});

// Scene adapters. use_instances=false drops the instance support from the
// soft format (pure point Gaussians), which is what the sigma ablation
// varies; one-hot formats ignore it.
gt::GroundTruthMaps scene_gt(const SynthScene& s, gt::Format f,
                             double sigma_px = 15.0,
                             bool use_instances = true);
Raster tissue_target(const LabelMap& tissue_gt);  // unknown rows all-zero
Raster model_input(const SynthScene& s, const Raster* tissue_pred);
Raster predict_map(const PixelModel& m, const Raster& input, bool tta = false);
LossKind default_loss_for(gt::Format f);

}  // namespace celldet::bench
