#include "celldet/geometry.hpp"

#include <cmath>

#include "celldet/imgproc.hpp"

namespace celldet::geom {

namespace {

Raster rot90_ccw(const Raster& r) {
  const int h = r.height(), w = r.width();
  Raster out(w, h, r.channels());
  out.mpp = r.mpp;
  for (int c = 0; c < r.channels(); ++c)
    for (int y = 0; y < w; ++y)
      for (int x = 0; x < h; ++x) out.at(c, y, x) = r.at(c, x, w - 1 - y);
  return out;
}

Raster hflip(const Raster& r) {
  const int h = r.height(), w = r.width();
  Raster out(h, w, r.channels());
  out.mpp = r.mpp;
  for (int c = 0; c < r.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, y, x) = r.at(c, y, w - 1 - x);
  return out;
}

}  // namespace

Raster apply_transform(const Raster& r, const GeomTransform& t) {
  if (t.rotation < 0 || t.rotation > 3)
    throw param_error("apply_transform: rotation must be in 0..3");
  if ((t.rotation % 2) == 1 && r.height() != r.width())
    throw param_error("apply_transform: odd rotation requires square raster");
  Raster out = r;
  for (int k = 0; k < t.rotation; ++k) out = rot90_ccw(out);
  if (t.flip) out = hflip(out);
  return out;
}

GeomTransform inverse(const GeomTransform& t) {
  if (t.flip) return t;  // reflections are involutions
  return {(4 - t.rotation) % 4, false};
}

Raster invert_transform(const Raster& r, const GeomTransform& t) {
  return apply_transform(r, inverse(t));
}

PixelPoint transform_point(const PixelPoint& p, const GeomTransform& t, int h,
                           int w) {
  PixelPoint q = p;
  int ch = h, cw = w;
  for (int k = 0; k < t.rotation; ++k) {
    q = {q.y, cw - 1 - q.x};
    std::swap(ch, cw);
  }
  if (t.flip) q.x = cw - 1 - q.x;
  return q;
}

PixelPoint invert_point(const PixelPoint& p, const GeomTransform& t, int h,
                        int w) {
  // h, w are the pre-transform raster dims; for the group elements used here
  // the transformed raster has swapped dims on odd rotations.
  const GeomTransform inv = inverse(t);
  const bool swapped = (t.rotation % 2) == 1;
  return transform_point(p, inv, swapped ? w : h, swapped ? h : w);
}

Raster compose_ctm_input(const Raster& cell_img, const Raster& tissue_pred,
                         const PatchRegistration& reg) {
  if (!(reg.scale() > 1.0))
    throw param_error("compose_ctm_input: tissue_mpp/cell_mpp must be > 1");
  if (reg.cell_offset_x < 0 || reg.cell_offset_y < 0 ||
      reg.cell_extent_w < 1 || reg.cell_extent_h < 1 ||
      reg.cell_offset_x + reg.cell_extent_w > tissue_pred.width() ||
      reg.cell_offset_y + reg.cell_extent_h > tissue_pred.height())
    throw param_error("compose_ctm_input: cell window outside tissue patch");

  const Raster window =
      imgproc::crop(tissue_pred, reg.cell_offset_x, reg.cell_offset_y,
                    reg.cell_extent_w, reg.cell_extent_h);
  const Raster up = imgproc::resize(window, cell_img.height(),
                                    cell_img.width(), imgproc::ResizeMode::bilinear);

  Raster out(cell_img.height(), cell_img.width(),
             cell_img.channels() + up.channels());
  out.mpp = cell_img.mpp;
  for (int c = 0; c < cell_img.channels(); ++c) {
    auto src = cell_img.channel(c);
    auto dst = out.channel(c);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  for (int c = 0; c < up.channels(); ++c) {
    auto src = up.channel(c);
    auto dst = out.channel(cell_img.channels() + c);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return out;
}

Raster leak_tissue_labels(const Raster& tissue_pred, const LabelMap& tissue_gt) {
  if (tissue_pred.channels() != 2)
    throw param_error("leak_tissue_labels: expected [background, cancer]");
  if (tissue_pred.height() != tissue_gt.height() ||
      tissue_pred.width() != tissue_gt.width())
    throw param_error("leak_tissue_labels: shape mismatch");

  Raster out = tissue_pred;
  for (int y = 0; y < tissue_gt.height(); ++y)
    for (int x = 0; x < tissue_gt.width(); ++x) {
      const int lbl = tissue_gt.at(y, x);
      if (lbl == kTissueBackground) {
        out.at(0, y, x) = 1.0;
        out.at(1, y, x) = 0.0;
      } else if (lbl == kTissueCancer) {
        out.at(0, y, x) = 0.0;
        out.at(1, y, x) = 1.0;
      }
      // anything else (unknown) keeps the prediction
    }
  return out;
}

namespace {

Raster pairwise_sum(std::vector<Raster>& maps) {
  // Tree reduction: sums of equal values stay exact at every level with a
  // power-of-two count.
  size_t n = maps.size();
  while (n > 1) {
    const size_t half = n / 2;
    for (size_t i = 0; i < half; ++i) {
      auto& a = maps[2 * i].data();
      const auto& b = maps[2 * i + 1].data();
      for (size_t j = 0; j < a.size(); ++j) a[j] += b[j];
      if (i != 0) maps[i] = std::move(maps[2 * i]);
    }
    if (n % 2 == 1) maps[half] = std::move(maps[n - 1]);
    n = half + n % 2;
  }
  return std::move(maps[0]);
}

}  // namespace

Raster tta_predict(const std::function<Raster(const Raster&)>& model,
                   const Raster& input) {
  std::vector<Raster> branches;
  branches.reserve(kAllTransforms.size());
  for (const GeomTransform& t : kAllTransforms) {
    Raster pred = model(apply_transform(input, t));
    branches.push_back(invert_transform(pred, t));
    if (!branches.back().same_shape(branches.front()))
      throw data_error("tta_predict: model output shapes differ across branches");
  }
  Raster sum = pairwise_sum(branches);
  for (double& v : sum.data()) v *= 0.125;
  return sum;
}

Raster average_predictions(const std::vector<Raster>& preds) {
  if (preds.empty()) throw param_error("average_predictions: empty list");
  for (const Raster& p : preds)
    require_same_shape(preds.front(), p, "average_predictions");
  std::vector<Raster> work = preds;
  const double inv_n = 1.0 / static_cast<double>(preds.size());
  Raster sum = pairwise_sum(work);
  for (double& v : sum.data()) v *= inv_n;
  return sum;
}

}  // namespace celldet::geom
