#pragma once

#include <vector>

#include "celldet/parallel.hpp"
#include "celldet/raster.hpp"

// Conversion of predicted class maps into cell detections: the blur/peak
// pipeline for circle and soft-IS predictions, and the Otsu/EDT/watershed
// pipeline for hard-IS predictions.
namespace celldet::post {

struct PostprocParams {
  double blur_sigma_px = 2.0;
  int min_distance_px = 7;
  double peak_threshold = 0.2;
  int min_area_px = 10;

  void validate() const {
    if (!(blur_sigma_px > 0.0) || min_distance_px < 1 ||
        !(peak_threshold > 0.0) || min_area_px < 1)
      throw param_error("PostprocParams: all parameters must be positive");
  }
};

// Sum of the background-cell and tumor-cell channels.
Raster foreground_map(const Raster& pred, Exec ex = Exec::openmp);

// Peaks of the blurred foreground; a candidate survives only if one of the
// cell channels beats the background channel at the peak pixel (unblurred
// values). Class is the larger cell channel, confidence the blurred
// foreground value.
std::vector<Detection> detect_cells_soft(const Raster& pred,
                                         const PostprocParams& p = {});

// Otsu-binarized foreground, small objects removed and holes filled, then
// EDT peaks as markers for a watershed on -EDT. One detection per watershed
// instance at its center of mass; class by majority of per-pixel argmax
// over the cell channels, confidence the mean foreground over the instance.
std::vector<Detection> detect_cells_hard(const Raster& pred,
                                         const PostprocParams& p = {});

}  // namespace celldet::post
