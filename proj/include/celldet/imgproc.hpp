#pragma once

#include <utility>
#include <vector>

#include "celldet/parallel.hpp"
#include "celldet/raster.hpp"

// Deterministic raster primitives. Everything here is pure: the same input
// yields bit-identical output regardless of execution mode or thread count.
namespace celldet::imgproc {

// Separable Gaussian convolution, kernel truncated at radius ceil(4*sigma),
// normalized to unit sum. Borders are handled by mirror reflection with the
// edge pixel repeated. Multi-channel rasters are blurred channel by channel.
Raster gaussian_blur(const Raster& r, double sigma_px, Exec ex = Exec::openmp);

enum class ResizeMode { nearest, bilinear };

// Corner-aligned resampling: output pixel i samples the source at
// i*(in-1)/(out-1); a single-pixel output samples the source center.
// Nearest rounds half up. Works on multi-channel rasters.
Raster resize(const Raster& r, int out_h, int out_w, ResizeMode mode,
              Exec ex = Exec::openmp);

// Exact sub-window copy. The window must lie fully inside the raster.
Raster crop(const Raster& r, int x0, int y0, int w, int h);

// Threshold maximizing between-class variance over a 256-bin histogram of
// [min, max]. Returns the upper edge of the chosen background bin; ties
// resolve to the lowest split. Throws degenerate_error on constant input.
double otsu_threshold(const Raster& r);

// 8-connectivity labeling. Labels 1..K are contiguous and assigned in
// row-major order of first discovery.
LabelMap connected_components(const BinaryMask& m);

// Deletes 8-connected foreground components with area < min_area, then
// fills holes (4-connected background components not reaching the border).
BinaryMask remove_small_objects_and_fill_holes(const BinaryMask& m,
                                               int min_area);

// Exact Euclidean distance to the nearest background pixel; background
// pixels get 0. A mask with no background at all yields the image diagonal
// length hypot(height, width) at every pixel.
Raster euclidean_distance_transform(const BinaryMask& m,
                                    Exec ex = Exec::openmp);

// Greedy peak selection: all pixels with value >= threshold_abs are ranked
// by (value desc, row-major asc) and accepted unless an already accepted
// peak lies closer than min_distance (Euclidean).
std::vector<PixelPoint> peak_local_max(const Raster& r, int min_distance,
                                       double threshold_abs);

// Marker-controlled watershed: priority-flood on ascending elevation, FIFO
// among equal elevations, 8-connected. Masked pixels take the label of the
// marker that floods them; unmasked pixels and unreachable ones stay 0.
// Markers must be nonzero only inside the mask.
LabelMap watershed(const Raster& elevation, const LabelMap& markers,
                   const BinaryMask& mask);

// Per positive label, the mean member coordinate rounded to the nearest
// pixel (half away from zero). Returned in ascending label order.
std::vector<std::pair<int, PixelPoint>> center_of_mass(const LabelMap& labels);

}  // namespace celldet::imgproc
