#pragma once

#include <cstdint>
#include <vector>

#include "celldet/groundtruth.hpp"
#include "celldet/raster.hpp"
#include "celldet/rng.hpp"

// Training-time augmentation applied jointly to image, ground-truth maps,
// and point annotations, plus class-balancing sample weights.
namespace celldet::aug {

struct AugmentParams {
  double rescale_range = 0.10;            // scale drawn from 1 +- this
  int crop_hw = 896;                      // output side length
  double brightness_contrast_range = 0.20;
  double per_aug_probability = 0.70;
  std::uint64_t seed = 0;

  void validate() const {
    if (rescale_range < 0.0 || rescale_range >= 1.0)
      throw param_error("AugmentParams: rescale_range must be in [0, 1)");
    if (crop_hw < 1) throw param_error("AugmentParams: crop_hw must be >= 1");
    if (brightness_contrast_range < 0.0 || brightness_contrast_range > 1.0)
      throw param_error(
          "AugmentParams: brightness_contrast_range must be in [0, 1]");
    if (per_aug_probability < 0.0 || per_aug_probability > 1.0)
      throw param_error(
          "AugmentParams: per_aug_probability must be in [0, 1]");
  }
};

struct SampleWeighting {
  std::vector<double> weights;  // >= 0, sum > 0
};

struct AugmentedSample {
  Raster img;
  gt::GroundTruthMaps gts;
  PointAnnotations pts;
};

// One augmentation pass. Gates are drawn in a fixed order (rescale, crop
// position, flip, rotation, brightness, contrast), each active with
// per_aug_probability; parameters are drawn only for active gates. The crop
// itself always happens (centered when its gate is inactive). Geometric ops
// move image, maps, and points identically; one-hot maps are resampled
// nearest-neighbor, soft maps bilinearly; points falling outside the crop
// are dropped. Brightness (additive, per channel) and contrast (scale about
// the channel mean) touch only the image, which is clamped to [0, 1].
AugmentedSample random_augment(const Raster& img, const gt::GroundTruthMaps& gts,
                               const PointAnnotations& pts,
                               const AugmentParams& p, Rng& rng);

// Sampling weights balancing the expected number of drawn background-cell
// and tumor-cell instances: weight 1 everywhere, raised on samples rich in
// the globally under-represented class. Uniform when a class is absent from
// the whole corpus.
SampleWeighting oversample_weights_cells(
    const std::vector<PointAnnotations>& samples);

// Same balance over background vs cancer pixels; unknown pixels are
// ignored, and samples with no known pixels get weight 0.
SampleWeighting oversample_weights_tissue(const std::vector<LabelMap>& masks);

}  // namespace celldet::aug
