#include "celldet/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "celldet/imgproc.hpp"

namespace celldet::post {

namespace {

void require_class_maps(const Raster& pred) {
  if (pred.channels() != 3)
    throw param_error("postprocess: expected a 3-channel class map, got " +
                      std::to_string(pred.channels()) + " channels");
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

Raster foreground_map(const Raster& pred, Exec ex) {
  require_class_maps(pred);
  Raster out(pred.height(), pred.width());
  out.mpp = pred.mpp;
  const int n = pred.height() * pred.width();
  const double* bc = pred.channel(kChanBackgroundCell).data();
  const double* tc = pred.channel(kChanTumorCell).data();
  double* dst = out.channel(0).data();
  parallel_for(ex, n, [&](int i) { dst[i] = bc[i] + tc[i]; });
  return out;
}

std::vector<Detection> detect_cells_soft(const Raster& pred,
                                         const PostprocParams& p) {
  p.validate();
  require_class_maps(pred);

  const Raster fg = foreground_map(pred);
  const Raster blurred = imgproc::gaussian_blur(fg, p.blur_sigma_px);
  const std::vector<PixelPoint> peaks =
      imgproc::peak_local_max(blurred, p.min_distance_px, p.peak_threshold);

  std::vector<Detection> out;
  out.reserve(peaks.size());
  for (const PixelPoint& pt : peaks) {
    const double bg = pred.at(kChanBackground, pt.y, pt.x);
    const double bc = pred.at(kChanBackgroundCell, pt.y, pt.x);
    const double tc = pred.at(kChanTumorCell, pt.y, pt.x);
    if (std::max(bc, tc) <= bg) continue;
    const int cls = tc > bc ? kTumorCell : kBackgroundCell;
    out.push_back({pt.x, pt.y, cls, clamp01(blurred.at(pt.y, pt.x))});
  }
  return out;
}

std::vector<Detection> detect_cells_hard(const Raster& pred,
                                         const PostprocParams& p) {
  p.validate();
  require_class_maps(pred);

  const Raster fg = foreground_map(pred);
  const auto [lo, hi] = std::minmax_element(fg.data().begin(), fg.data().end());
  if (!(*hi > *lo)) return {};  // flat map: Otsu is degenerate

  const double thr = imgproc::otsu_threshold(fg);
  BinaryMask mask(fg.height(), fg.width());
  const int n_px = fg.height() * fg.width();
  for (int i = 0; i < n_px; ++i) mask.data()[i] = fg.data()[i] > thr ? 1 : 0;
  mask = imgproc::remove_small_objects_and_fill_holes(mask, p.min_area_px);
  if (mask.count() == 0) return {};

  const Raster edt = imgproc::euclidean_distance_transform(mask);
  const std::vector<PixelPoint> seeds =
      imgproc::peak_local_max(edt, p.min_distance_px, 0.5);
  if (seeds.empty()) return {};

  LabelMap markers(edt.height(), edt.width());
  for (size_t i = 0; i < seeds.size(); ++i)
    markers.at(seeds[i].y, seeds[i].x) = static_cast<int>(i) + 1;

  Raster elevation(edt.height(), edt.width());
  for (int i = 0; i < n_px; ++i) elevation.data()[i] = -edt.data()[i];
  const LabelMap regions = imgproc::watershed(elevation, markers, mask);

  const int n_labels = static_cast<int>(seeds.size());
  std::vector<long long> area(n_labels + 1, 0);
  std::vector<long long> bc_votes(n_labels + 1, 0);
  std::vector<double> fg_sum(n_labels + 1, 0.0);
  for (int y = 0; y < regions.height(); ++y)
    for (int x = 0; x < regions.width(); ++x) {
      const int lb = regions.at(y, x);
      if (lb == 0) continue;
      ++area[lb];
      fg_sum[lb] += fg.at(y, x);
      if (pred.at(kChanBackgroundCell, y, x) >= pred.at(kChanTumorCell, y, x))
        ++bc_votes[lb];
    }

  std::vector<Detection> out;
  out.reserve(seeds.size());
  for (const auto& [lb, com] : imgproc::center_of_mass(regions)) {
    const int cls = 2 * bc_votes[lb] >= area[lb] ? kBackgroundCell : kTumorCell;
    out.push_back({com.x, com.y, cls, clamp01(fg_sum[lb] / area[lb])});
  }
  return out;
}

}  // namespace celldet::post
