#include "celldet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "celldet/geometry.hpp"
#include "celldet/imgproc.hpp"

namespace celldet::aug {

namespace {

// Where source coordinate v lands in corner-aligned resampling to out_n.
int map_coord(int v, int in_n, int out_n) {
  if (in_n <= 1 || out_n <= 1) return 0;
  const double t = static_cast<double>(v) * (out_n - 1) / (in_n - 1);
  return std::clamp(static_cast<int>(std::floor(t + 0.5)), 0, out_n - 1);
}

void scale_mpp(std::optional<double>& mpp, int in_w, int out_w) {
  if (mpp) *mpp = *mpp * in_w / out_w;
}

// Shared balancing core: per sample a (minority-candidate, other) count
// pair. Base weight 1 on active samples, 0 otherwise; samples rich in the
// corpus-wide minority class get a common multiplier sized so the weighted
// class masses match exactly.
SampleWeighting balance_weights(
    const std::vector<std::pair<long long, long long>>& counts,
    const std::vector<char>& active) {
  SampleWeighting sw;
  sw.weights.resize(counts.size());
  for (size_t i = 0; i < counts.size(); ++i) sw.weights[i] = active[i] ? 1 : 0;
  if (counts.size() <= 1) return sw;

  long long total_a = 0, total_b = 0;
  for (size_t i = 0; i < counts.size(); ++i)
    if (active[i]) {
      total_a += counts[i].first;
      total_b += counts[i].second;
    }
  if (total_a == 0 || total_b == 0 || total_a == total_b) return sw;

  const bool a_minor = total_a < total_b;
  const long long deficit = a_minor ? total_b - total_a : total_a - total_b;
  auto surplus_of = [&](size_t i) {
    const auto [a, b] = counts[i];
    return a_minor ? a - b : b - a;
  };

  long long surplus = 0;
  for (size_t i = 0; i < counts.size(); ++i)
    if (active[i] && surplus_of(i) > 0) surplus += surplus_of(i);

  if (surplus == 0) {
    // no sample favors the minority; fall back to ratio weights
    for (size_t i = 0; i < counts.size(); ++i)
      if (active[i]) {
        const auto [a, b] = counts[i];
        const long long m = a_minor ? a : b, mj = a_minor ? b : a;
        sw.weights[i] = static_cast<double>(m + 1) / static_cast<double>(mj + 1);
      }
    return sw;
  }

  const double mu = 1.0 + static_cast<double>(deficit) / surplus;
  for (size_t i = 0; i < counts.size(); ++i)
    if (active[i] && surplus_of(i) > 0) sw.weights[i] = mu;
  return sw;
}

}  // namespace

AugmentedSample random_augment(const Raster& img, const gt::GroundTruthMaps& gts,
                               const PointAnnotations& pts,
                               const AugmentParams& p, Rng& rng) {
  p.validate();
  if (img.height() != gts.maps.height() || img.width() != gts.maps.width())
    throw param_error("random_augment: image and ground truth misaligned");

  AugmentedSample s{img, gts, pts};
  const bool soft = gts.format_tag == gt::Format::soft_is;
  const auto gt_mode =
      soft ? imgproc::ResizeMode::bilinear : imgproc::ResizeMode::nearest;

  // 1. rescale
  if (bernoulli(rng, p.per_aug_probability)) {
    const double scale =
        uniform(rng, 1.0 - p.rescale_range, 1.0 + p.rescale_range);
    const int in_h = s.img.height(), in_w = s.img.width();
    const int oh = std::max(1, static_cast<int>(std::llround(in_h * scale)));
    const int ow = std::max(1, static_cast<int>(std::llround(in_w * scale)));
    if (oh != in_h || ow != in_w) {
      s.img = imgproc::resize(s.img, oh, ow, imgproc::ResizeMode::bilinear);
      s.gts.maps = imgproc::resize(s.gts.maps, oh, ow, gt_mode);
      for (CellPoint& pt : s.pts.points) {
        pt.x = map_coord(pt.x, in_w, ow);
        pt.y = map_coord(pt.y, in_h, oh);
      }
      scale_mpp(s.img.mpp, in_w, ow);
      scale_mpp(s.gts.maps.mpp, in_w, ow);
      scale_mpp(s.pts.mpp, in_w, ow);
    }
  }

  // 2. crop (always; position is the random part)
  const int ch = s.img.height(), cw = s.img.width();
  if (p.crop_hw > ch || p.crop_hw > cw)
    throw param_error("random_augment: crop larger than (rescaled) image");
  int x0 = (cw - p.crop_hw) / 2, y0 = (ch - p.crop_hw) / 2;
  if (bernoulli(rng, p.per_aug_probability)) {
    x0 = static_cast<int>(uniform_int(rng, 0, cw - p.crop_hw));
    y0 = static_cast<int>(uniform_int(rng, 0, ch - p.crop_hw));
  }
  s.img = imgproc::crop(s.img, x0, y0, p.crop_hw, p.crop_hw);
  s.gts.maps = imgproc::crop(s.gts.maps, x0, y0, p.crop_hw, p.crop_hw);
  std::vector<CellPoint> kept;
  kept.reserve(s.pts.points.size());
  for (const CellPoint& pt : s.pts.points) {
    const int nx = pt.x - x0, ny = pt.y - y0;
    if (nx >= 0 && ny >= 0 && nx < p.crop_hw && ny < p.crop_hw)
      kept.push_back({nx, ny, pt.class_id});
  }
  s.pts.points = std::move(kept);

  // 3. flip gate, 4. rotation gate (applied as one group element)
  geom::GeomTransform t;
  t.flip = bernoulli(rng, p.per_aug_probability);
  if (bernoulli(rng, p.per_aug_probability))
    t.rotation = static_cast<int>(uniform_int(rng, 1, 3));
  if (t.flip || t.rotation != 0) {
    s.img = geom::apply_transform(s.img, t);
    s.gts.maps = geom::apply_transform(s.gts.maps, t);
    for (CellPoint& pt : s.pts.points) {
      const PixelPoint q =
          geom::transform_point({pt.x, pt.y}, t, p.crop_hw, p.crop_hw);
      pt.x = q.x;
      pt.y = q.y;
    }
  }

  // 5. brightness, 6. contrast (image only; channel draws in channel order)
  const int plane = p.crop_hw * p.crop_hw;
  if (bernoulli(rng, p.per_aug_probability))
    for (int c = 0; c < s.img.channels(); ++c) {
      const double b = uniform(rng, -p.brightness_contrast_range,
                               p.brightness_contrast_range);
      for (double& v : s.img.channel(c)) v += b;
    }
  if (bernoulli(rng, p.per_aug_probability))
    for (int c = 0; c < s.img.channels(); ++c) {
      const double f = uniform(rng, 1.0 - p.brightness_contrast_range,
                               1.0 + p.brightness_contrast_range);
      double mean = 0.0;
      for (double v : s.img.channel(c)) mean += v;
      mean /= plane;
      for (double& v : s.img.channel(c)) v = mean + f * (v - mean);
    }
  for (double& v : s.img.data()) v = std::clamp(v, 0.0, 1.0);
  return s;
}

SampleWeighting oversample_weights_cells(
    const std::vector<PointAnnotations>& samples) {
  std::vector<std::pair<long long, long long>> counts(samples.size(), {0, 0});
  std::vector<char> active(samples.size(), 1);
  for (size_t i = 0; i < samples.size(); ++i)
    for (const CellPoint& pt : samples[i].points) {
      if (pt.class_id == kBackgroundCell) ++counts[i].first;
      if (pt.class_id == kTumorCell) ++counts[i].second;
    }
  return balance_weights(counts, active);
}

SampleWeighting oversample_weights_tissue(const std::vector<LabelMap>& masks) {
  std::vector<std::pair<long long, long long>> counts(masks.size(), {0, 0});
  std::vector<char> active(masks.size(), 0);
  for (size_t i = 0; i < masks.size(); ++i) {
    for (int v : masks[i].data()) {
      if (v == kTissueBackground) ++counts[i].first;
      if (v == kTissueCancer) ++counts[i].second;
    }
    active[i] = counts[i].first + counts[i].second > 0 ? 1 : 0;
  }
  SampleWeighting sw = balance_weights(counts, active);
  double sum = 0.0;
  for (double w : sw.weights) sum += w;
  if (!masks.empty() && sum <= 0.0)
    throw degenerate_error(
        "oversample_weights_tissue: no sample has known pixels");
  return sw;
}

}  // namespace celldet::aug
