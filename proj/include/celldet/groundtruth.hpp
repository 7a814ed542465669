#pragma once

#include <map>
#include <optional>
#include <vector>

#include "celldet/parallel.hpp"
#include "celldet/raster.hpp"

// Translation of cell point annotations (plus optional precomputed instance
// masks) into trainable ground-truth maps with the canonical channel layout
// [background, background cell, tumor cell].
namespace celldet::gt {

enum class Format { circle, hard_is, soft_is };

// Precomputed nucleus instances. instance_class maps labels to cell classes;
// matched has one entry per annotation, nullopt when the annotation has no
// instance and must fall back to a circle.
struct InstanceGroundTruth {
  LabelMap instances;
  std::map<int, int> instance_class;
  std::vector<std::optional<int>> matched;
};

struct GroundTruthMaps {
  Raster maps;  // 3 channels
  Format format_tag = Format::circle;
};

// Radius of the fallback disc stamped for annotations without an instance,
// and default radius of the circle format (1.4 um at 0.2 mpp).
inline constexpr int kCircleRadiusPx = 7;

// One-hot map: each pixel within radius_px of a centroid takes the class of
// the nearest centroid (ties to the lower annotation index); all remaining
// pixels are background.
GroundTruthMaps circle_gt(const PointAnnotations& pts, int h, int w,
                          int radius_px = kCircleRadiusPx,
                          Exec ex = Exec::openmp);

// One-hot map painting each matched instance with its cell class; unmatched
// annotations are stamped as fallback circles. Instance pixels win over
// fallback circles.
GroundTruthMaps hard_is_gt(const InstanceGroundTruth& inst,
                           const PointAnnotations& pts, int h, int w,
                           int radius_px = kCircleRadiusPx,
                           Exec ex = Exec::openmp);

// Probability map: per class the pixel-wise max of unit-peak Gaussians
// centered on that class's centroids. When instances are given, pixels
// belonging to no instance are zeroed except within kCircleRadiusPx of an
// unmatched centroid. Cross-class overlap is rescaled proportionally so the
// two cell channels sum to at most 1; background = 1 - sum.
GroundTruthMaps soft_is_gt(const PointAnnotations& pts,
                           const InstanceGroundTruth* inst, int h, int w,
                           double sigma_px = 15.0, Exec ex = Exec::openmp);

// 1 - sum of the given cell channels, clamped to [0, 1].
Raster background_channel(const Raster& cell_channels, Exec ex = Exec::openmp);

}  // namespace celldet::gt
