#pragma once

#include <string>

#include "celldet/geometry.hpp"
#include "celldet/groundtruth.hpp"
#include "celldet/raster.hpp"
#include "celldet/rng.hpp"

// Synthetic microscopy scenes with fully known ground truth: the benchmark
// substrate for the training harness and the end-to-end tests.
namespace celldet::bench {

struct SynthParams {
  int cell_hw = 96;              // cell patch side, 0.2 mpp; divisible by 4
  int n_cells = 20;
  int min_separation_px = 14;
  double rho = 0.0;              // cell-tissue correlation in [0, 1]
  double cancer_fraction = 0.45; // tissue area labeled cancer
  double noise_sd = 0.04;
  double class_color_gap = 0.12; // tumor vs background nucleus tint
  double cell_region_tint = 0.0; // cancer-region tint leaking into cell_img
  double intensity_jitter = 0.0; // per-nucleus fade toward the background
  double nucleus_r_lo = 3.5;
  double nucleus_r_hi = 4.8;
  int unknown_border_px = 0;     // tissue-GT band labeled unknown
  std::string organ_tag = "organ0";

  void validate() const;
};

// One cell/tissue patch pair. The tissue patch has the same pixel count at
// 4x coarser resolution, so it covers 4x the field of view; the cell window
// sits inside it per `registration`.
struct SynthScene {
  Raster cell_img;    // RGB, 0.2 mpp
  Raster tissue_img;  // RGB, 0.8 mpp
  PointAnnotations annotations;
  gt::InstanceGroundTruth instances;
  LabelMap tissue_gt;  // background / cancer / unknown
  geom::PatchRegistration registration;
  std::string organ_tag;
};

// Deterministic generator: jittered-grid nucleus placement guarantees the
// exact requested count, in-bounds ellipses, and pairwise min separation;
// tumor probability is 0.5 + 0.5*rho inside cancer regions and
// 0.5 - 0.5*rho outside.
SynthScene synth_scene(Rng& rng, const SynthParams& p);

// Cancer mask resampled to the cell patch grid via the registration.
BinaryMask cancer_mask_at_cell_res(const SynthScene& s);

}  // namespace celldet::bench
