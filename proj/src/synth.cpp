#include "celldet/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace celldet::bench {

namespace {

constexpr std::array<double, 3> kBgColor = {0.84, 0.78, 0.86};
constexpr std::array<double, 3> kTissueBgColor = {0.88, 0.82, 0.90};
constexpr std::array<double, 3> kTissueCancerColor = {0.62, 0.52, 0.70};
constexpr std::array<double, 3> kNucleusColor = {0.36, 0.31, 0.52};

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

void SynthParams::validate() const {
  if (cell_hw < 32 || cell_hw % 4 != 0)
    throw param_error("SynthParams: cell_hw must be >= 32 and divisible by 4");
  if (n_cells < 1) throw param_error("SynthParams: n_cells must be >= 1");
  if (nucleus_r_lo <= 0.0 || nucleus_r_hi < nucleus_r_lo)
    throw param_error("SynthParams: need 0 < nucleus_r_lo <= nucleus_r_hi");
  if (min_separation_px < 2.0 * nucleus_r_hi + 1.0)
    throw param_error(
        "SynthParams: min_separation_px must exceed the nucleus diameter");
  if (rho < 0.0 || rho > 1.0)
    throw param_error("SynthParams: rho must be in [0, 1]");
  if (cancer_fraction < 0.0 || cancer_fraction > 1.0)
    throw param_error("SynthParams: cancer_fraction must be in [0, 1]");
  if (noise_sd < 0.0 || class_color_gap < 0.0 || cell_region_tint < 0.0)
    throw param_error("SynthParams: noise and tints must be >= 0");
  if (intensity_jitter < 0.0 || intensity_jitter > 1.0)
    throw param_error("SynthParams: intensity_jitter must be in [0, 1]");
  if (unknown_border_px < 0)
    throw param_error("SynthParams: unknown_border_px must be >= 0");
}

SynthScene synth_scene(Rng& rng, const SynthParams& p) {
  p.validate();
  const int hw = p.cell_hw;
  const int thw = hw;  // same pixel count, 4x coarser => 4x field of view

  SynthScene s;
  s.organ_tag = p.organ_tag;
  s.registration.tissue_mpp = 0.8;
  s.registration.cell_mpp = 0.2;
  s.registration.cell_extent_w = hw / 4;
  s.registration.cell_extent_h = hw / 4;
  s.registration.cell_offset_x =
      static_cast<int>(uniform_int(rng, 0, thw - hw / 4));
  s.registration.cell_offset_y =
      static_cast<int>(uniform_int(rng, 0, thw - hw / 4));

  // Cancer regions: threshold a low-frequency cosine field at the exact
  // area-fraction quantile.
  std::vector<double> field(static_cast<size_t>(thw) * thw, 0.0);
  for (int j = 0; j < 4; ++j) {
    const double fx = static_cast<double>(uniform_int(rng, 1, 2));
    const double fy = static_cast<double>(uniform_int(rng, 1, 2));
    const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double amp = uniform(rng, 0.5, 1.0);
    for (int y = 0; y < thw; ++y)
      for (int x = 0; x < thw; ++x)
        field[static_cast<size_t>(y) * thw + x] +=
            amp * std::cos(2.0 * std::numbers::pi * (fx * x + fy * y) / thw +
                           phase);
  }
  const long long want =
      std::llround(p.cancer_fraction * static_cast<double>(field.size()));
  std::vector<char> cancer(field.size(), 0);
  if (want >= static_cast<long long>(field.size())) {
    std::fill(cancer.begin(), cancer.end(), 1);
  } else if (want > 0) {
    std::vector<double> sorted(field);
    std::nth_element(sorted.begin(), sorted.begin() + (want - 1), sorted.end(),
                     std::greater<>());
    const double cutoff = sorted[want - 1];
    for (size_t i = 0; i < field.size(); ++i) cancer[i] = field[i] >= cutoff;
  }

  s.tissue_gt = LabelMap(thw, thw);
  for (int y = 0; y < thw; ++y)
    for (int x = 0; x < thw; ++x) {
      const bool border = y < p.unknown_border_px || x < p.unknown_border_px ||
                          y >= thw - p.unknown_border_px ||
                          x >= thw - p.unknown_border_px;
      s.tissue_gt.at(y, x) =
          border ? kTissueUnknown
                 : (cancer[static_cast<size_t>(y) * thw + x] ? kTissueCancer
                                                             : kTissueBackground);
    }

  auto cancer_at_cell = [&](int y, int x) {
    const int ty = s.registration.cell_offset_y + y / 4;
    const int tx = s.registration.cell_offset_x + x / 4;
    return cancer[static_cast<size_t>(ty) * thw + tx] != 0;
  };

  // Jittered-grid placement: exact count, in-bounds, min separation.
  const int margin = static_cast<int>(std::ceil(p.nucleus_r_hi)) + 2;
  const int usable = hw - 2 * margin;
  const int gx = static_cast<int>(std::ceil(std::sqrt(p.n_cells)));
  const int gy = (p.n_cells + gx - 1) / gx;
  const double sx = static_cast<double>(usable) / gx;
  const double sy = static_cast<double>(usable) / gy;
  if (sx < p.min_separation_px + 1.0 || sy < p.min_separation_px + 1.0)
    throw param_error("SynthParams: n_cells too dense for min_separation_px");
  const double jx = (sx - p.min_separation_px - 1.0) / 2.0;
  const double jy = (sy - p.min_separation_px - 1.0) / 2.0;

  std::vector<int> slots(static_cast<size_t>(gx) * gy);
  for (size_t i = 0; i < slots.size(); ++i) slots[i] = static_cast<int>(i);
  shuffle(rng, slots);

  std::vector<PixelPoint> placed;
  placed.reserve(p.n_cells);
  for (int i = 0; i < p.n_cells; ++i) {
    const int slot_x = slots[i] % gx, slot_y = slots[i] / gx;
    const double cx = margin + (slot_x + 0.5) * sx + uniform(rng, -jx, jx);
    const double cy = margin + (slot_y + 0.5) * sy + uniform(rng, -jy, jy);
    placed.push_back({static_cast<int>(std::llround(cx)),
                      static_cast<int>(std::llround(cy))});
  }
  std::sort(placed.begin(), placed.end(), [](const auto& a, const auto& b) {
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  });

  s.annotations.mpp = 0.2;
  for (const PixelPoint& pt : placed) {
    const double p_tumor =
        cancer_at_cell(pt.y, pt.x) ? 0.5 + 0.5 * p.rho : 0.5 - 0.5 * p.rho;
    const int cls = bernoulli(rng, p_tumor) ? kTumorCell : kBackgroundCell;
    s.annotations.points.push_back({pt.x, pt.y, cls});
  }

  // Elliptical nucleus instances; min separation keeps them disjoint.
  s.instances.instances = LabelMap(hw, hw);
  std::vector<double> fade(s.annotations.points.size() + 1, 0.0);
  for (size_t i = 0; i < s.annotations.points.size(); ++i) {
    const CellPoint& pt = s.annotations.points[i];
    const double rx = uniform(rng, p.nucleus_r_lo, p.nucleus_r_hi);
    const double ry = uniform(rng, p.nucleus_r_lo, p.nucleus_r_hi);
    const double th = uniform(rng, 0.0, std::numbers::pi);
    fade[i + 1] = uniform(rng) * p.intensity_jitter;
    const double ct = std::cos(th), st = std::sin(th);
    const int rad = static_cast<int>(std::ceil(std::max(rx, ry)));
    const int label = static_cast<int>(i) + 1;
    for (int y = pt.y - rad; y <= pt.y + rad; ++y)
      for (int x = pt.x - rad; x <= pt.x + rad; ++x) {
        const double dx = x - pt.x, dy = y - pt.y;
        const double u = (dx * ct + dy * st) / rx;
        const double v = (-dx * st + dy * ct) / ry;
        if (u * u + v * v <= 1.0) s.instances.instances.at(y, x) = label;
      }
    s.instances.instance_class[label] = pt.class_id;
    s.instances.matched.push_back(label);
  }

  // Cell image: noisy background with class-tinted nuclei.
  s.cell_img = Raster(hw, hw, 3);
  s.cell_img.mpp = 0.2;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < hw; ++y)
      for (int x = 0; x < hw; ++x) {
        const int label = s.instances.instances.at(y, x);
        double base;
        if (label == 0) {
          base = kBgColor[c];
          if (p.cell_region_tint > 0.0 && cancer_at_cell(y, x))
            base -= p.cell_region_tint;
        } else {
          base = kNucleusColor[c];
          const int cls = s.instances.instance_class.at(label);
          if (c == 0) base += cls == kTumorCell ? p.class_color_gap
                                                : -p.class_color_gap;
          if (c == 1) base += cls == kTumorCell ? -p.class_color_gap
                                                : p.class_color_gap;
          base += fade[label] * (kBgColor[c] - base);  // faint nuclei
        }
        s.cell_img.at(c, y, x) = clamp01(base + normal(rng) * p.noise_sd);
      }

  // Tissue image: strong region color cue.
  s.tissue_img = Raster(thw, thw, 3);
  s.tissue_img.mpp = 0.8;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < thw; ++y)
      for (int x = 0; x < thw; ++x) {
        const bool ca = cancer[static_cast<size_t>(y) * thw + x] != 0;
        const double base = ca ? kTissueCancerColor[c] : kTissueBgColor[c];
        s.tissue_img.at(c, y, x) = clamp01(base + normal(rng) * p.noise_sd);
      }

  return s;
}

BinaryMask cancer_mask_at_cell_res(const SynthScene& s) {
  const int hw = s.cell_img.height();
  const double sc = s.registration.scale();
  BinaryMask m(hw, s.cell_img.width());
  for (int y = 0; y < hw; ++y)
    for (int x = 0; x < s.cell_img.width(); ++x) {
      const int ty = s.registration.cell_offset_y +
                     static_cast<int>(std::floor(y / sc));
      const int tx = s.registration.cell_offset_x +
                     static_cast<int>(std::floor(x / sc));
      m.at(y, x) = s.tissue_gt.at(ty, tx) == kTissueCancer ? 1 : 0;
    }
  return m;
}

}  // namespace celldet::bench
