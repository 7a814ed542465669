#pragma once

#include <array>
#include <functional>
#include <vector>

#include "celldet/raster.hpp"

// Cell-tissue input composition, tissue-label leaking, the 8-way geometric
// test-time augmentation group, and prediction averaging.
namespace celldet::geom {

// Spatial registration of a cell patch inside its tissue patch. Offsets and
// extents are in tissue pixels.
struct PatchRegistration {
  double tissue_mpp = 0.8;
  double cell_mpp = 0.2;
  int cell_offset_x = 0;
  int cell_offset_y = 0;
  int cell_extent_w = 0;
  int cell_extent_h = 0;
  double scale() const { return tissue_mpp / cell_mpp; }
};

// One element of the dihedral group D4: rotate by `rotation` quarter turns
// counter-clockwise, then mirror left-right if `flip`.
struct GeomTransform {
  int rotation = 0;  // 0..3
  bool flip = false;
  friend bool operator==(const GeomTransform&, const GeomTransform&) = default;
};

inline constexpr std::array<GeomTransform, 8> kAllTransforms = {
    GeomTransform{0, false}, GeomTransform{1, false}, GeomTransform{2, false},
    GeomTransform{3, false}, GeomTransform{0, true},  GeomTransform{1, true},
    GeomTransform{2, true},  GeomTransform{3, true}};

// Exact pixel permutation. Odd rotations require a square raster.
Raster apply_transform(const Raster& r, const GeomTransform& t);

// The group inverse; every flipped element is an involution.
GeomTransform inverse(const GeomTransform& t);

// apply_transform with the inverse element; round-trips bit-exactly.
Raster invert_transform(const Raster& r, const GeomTransform& t);

// Where the pixel (p.x, p.y) of an h x w raster lands under t.
PixelPoint transform_point(const PixelPoint& p, const GeomTransform& t, int h,
                           int w);
PixelPoint invert_point(const PixelPoint& p, const GeomTransform& t, int h,
                        int w);

// Crops the cell window out of the tissue prediction, bilinearly upsamples
// it to the cell patch extent, and appends it as extra channels after the
// cell image channels.
Raster compose_ctm_input(const Raster& cell_img, const Raster& tissue_pred,
                         const PatchRegistration& reg);

// Substitutes the one-hot ground truth for the prediction at pixels labeled
// background or cancer; unknown pixels keep the prediction. tissue_pred has
// the two channels [background, cancer].
Raster leak_tissue_labels(const Raster& tissue_pred, const LabelMap& tissue_gt);

// Mean over the 8 transforms of invert(model(apply(input, t)), t). The mean
// is a pairwise tree, so 8 bit-identical branches average to themselves.
Raster tta_predict(const std::function<Raster(const Raster&)>& model,
                   const Raster& input);

// Pixel-wise arithmetic mean via pairwise tree reduction.
Raster average_predictions(const std::vector<Raster>& preds);

}  // namespace celldet::geom
