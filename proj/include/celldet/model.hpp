#pragma once

#include <cstdint>
#include <vector>

#include "celldet/parallel.hpp"
#include "celldet/raster.hpp"

// Desk-scale stand-in for the segmentation network: a per-pixel softmax
// linear classifier over handcrafted multi-scale features.
namespace celldet::bench {

struct FeatureConfig {
  std::vector<double> blur_sigmas = {1.0, 2.0, 4.0, 8.0};
  int color_channels = 3;
  bool include_tissue_channels = false;
  int tissue_channels = 2;

  // raw + (blur, local std) per scale, plus the optional tissue channels
  int feature_count() const {
    return color_channels * (1 + 2 * static_cast<int>(blur_sigmas.size())) +
           (include_tissue_channels ? tissue_channels : 0);
  }
  int input_channels() const {
    return color_channels + (include_tissue_channels ? tissue_channels : 0);
  }
  void validate() const {
    if (color_channels < 1 || tissue_channels < 0)
      throw param_error("FeatureConfig: bad channel counts");
    for (double s : blur_sigmas)
      if (!(s > 0.0))
        throw param_error("FeatureConfig: blur sigmas must be positive");
  }
};

// Per-pixel feature stack: the raw color channels, each color channel
// blurred at every scale, the local standard deviation
// sqrt(max(0, blur(x^2) - blur(x)^2)) at every scale, and finally any
// tissue channels copied through unchanged.
Raster extract_features(const Raster& input, const FeatureConfig& cfg,
                        Exec ex = Exec::openmp);

// cell channels followed by tissue channels as one raster
Raster concat_channels(const Raster& a, const Raster& b);

struct PixelModel {
  FeatureConfig features;
  int n_classes = 0;
  std::vector<double> weights;  // [feature * n_classes + class]
  std::vector<double> bias;     // [n_classes]

  // Zero bias, N(0, init_sd) weights from a dedicated stream.
  static PixelModel make(const FeatureConfig& fc, int n_classes,
                         std::uint64_t init_seed, double init_sd = 0.01);

  // Softmax class maps from a precomputed feature raster.
  Raster predict_features(const Raster& feats, Exec ex = Exec::openmp) const;

  // extract_features + predict_features.
  Raster predict(const Raster& input, Exec ex = Exec::openmp) const;

  void validate() const;
};

}  // namespace celldet::bench
