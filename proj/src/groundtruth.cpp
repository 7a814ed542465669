#include "celldet/groundtruth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

namespace celldet::gt {

namespace {

void check_extent(int h, int w, const char* where) {
  if (h < 1 || w < 1)
    throw param_error(std::string(where) + ": extent must be >= 1");
}

void check_class(const CellPoint& p, const char* where) {
  if (p.class_id != kBackgroundCell && p.class_id != kTumorCell)
    throw param_error(std::string(where) + ": class_id must be 1 or 2");
}

// Nearest-centroid disc stamping shared by the circle format and the hard-IS
// fallback. Writes the winning class into cls (0 = none) for the subset of
// annotations selected by `use`; never overwrites pixels where cls is
// already claimed by `claimed`.
void stamp_circles(const PointAnnotations& pts, const std::vector<char>& use,
                   int radius_px, int h, int w, const std::vector<char>& claimed,
                   std::vector<int>& cls, Exec ex) {
  const int64_t r_sq = static_cast<int64_t>(radius_px) * radius_px;
  parallel_for(ex, h, [&](int y) {
    std::vector<int64_t> best(w, std::numeric_limits<int64_t>::max());
    for (size_t i = 0; i < pts.points.size(); ++i) {
      if (!use[i]) continue;
      const CellPoint& p = pts.points[i];
      const int64_t dy = y - p.y;
      if (dy * dy > r_sq) continue;
      const int x0 = std::max(0, p.x - radius_px);
      const int x1 = std::min(w - 1, p.x + radius_px);
      for (int x = x0; x <= x1; ++x) {
        const int64_t dx = x - p.x;
        const int64_t d_sq = dx * dx + dy * dy;
        const size_t idx = static_cast<size_t>(y) * w + x;
        if (d_sq <= r_sq && !claimed[idx] && d_sq < best[x]) {
          best[x] = d_sq;
          cls[idx] = p.class_id;
        }
      }
    }
  });
}

GroundTruthMaps one_hot_from_classes(const std::vector<int>& cls, int h, int w,
                                     Format tag, Exec ex) {
  GroundTruthMaps out{Raster(h, w, 3), tag};
  parallel_for(ex, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const int c = cls[static_cast<size_t>(y) * w + x];
      out.maps.at(c == 0 ? kChanBackground
                         : (c == kBackgroundCell ? kChanBackgroundCell
                                                 : kChanTumorCell),
                  y, x) = 1.0;
    }
  });
  return out;
}

}  // namespace

GroundTruthMaps circle_gt(const PointAnnotations& pts, int h, int w,
                          int radius_px, Exec ex) {
  check_extent(h, w, "circle_gt");
  if (radius_px < 1) throw param_error("circle_gt: radius_px must be >= 1");
  for (const CellPoint& p : pts.points) check_class(p, "circle_gt");

  std::vector<int> cls(static_cast<size_t>(h) * w, 0);
  std::vector<char> use(pts.points.size(), 1);
  std::vector<char> claimed(static_cast<size_t>(h) * w, 0);
  stamp_circles(pts, use, radius_px, h, w, claimed, cls, ex);
  return one_hot_from_classes(cls, h, w, Format::circle, ex);
}

GroundTruthMaps hard_is_gt(const InstanceGroundTruth& inst,
                           const PointAnnotations& pts, int h, int w,
                           int radius_px, Exec ex) {
  check_extent(h, w, "hard_is_gt");
  if (radius_px < 1) throw param_error("hard_is_gt: radius_px must be >= 1");
  if (inst.instances.height() != h || inst.instances.width() != w)
    throw param_error("hard_is_gt: instance map extent mismatch");
  if (inst.matched.size() != pts.points.size())
    throw param_error("hard_is_gt: matched list size != annotation count");
  for (const CellPoint& p : pts.points) check_class(p, "hard_is_gt");

  // Classes of matched instance labels.
  std::map<int, int> label_class;
  std::vector<char> unmatched(pts.points.size(), 0);
  for (size_t i = 0; i < pts.points.size(); ++i) {
    if (inst.matched[i]) {
      const int lbl = *inst.matched[i];
      auto it = inst.instance_class.find(lbl);
      if (it == inst.instance_class.end())
        throw data_error("hard_is_gt: instance label " + std::to_string(lbl) +
                         " has no class mapping");
      label_class[lbl] = it->second;
    } else {
      unmatched[i] = 1;
    }
  }

  std::vector<int> cls(static_cast<size_t>(h) * w, 0);
  std::vector<char> claimed(static_cast<size_t>(h) * w, 0);
  parallel_for(ex, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const int lbl = inst.instances.at(y, x);
      if (lbl <= 0) continue;
      auto it = label_class.find(lbl);
      if (it == label_class.end()) continue;  // instance without annotation
      const size_t idx = static_cast<size_t>(y) * w + x;
      cls[idx] = it->second;
      claimed[idx] = 1;
    }
  });

  stamp_circles(pts, unmatched, radius_px, h, w, claimed, cls, ex);
  return one_hot_from_classes(cls, h, w, Format::hard_is, ex);
}

GroundTruthMaps soft_is_gt(const PointAnnotations& pts,
                           const InstanceGroundTruth* inst, int h, int w,
                           double sigma_px, Exec ex) {
  check_extent(h, w, "soft_is_gt");
  if (!(sigma_px > 0.0)) throw param_error("soft_is_gt: sigma_px must be > 0");
  for (const CellPoint& p : pts.points) check_class(p, "soft_is_gt");
  if (inst) {
    if (inst->instances.height() != h || inst->instances.width() != w)
      throw param_error("soft_is_gt: instance map extent mismatch");
    if (inst->matched.size() != pts.points.size())
      throw param_error("soft_is_gt: matched list size != annotation count");
  }

  std::vector<char> unmatched(pts.points.size(), 0);
  if (inst)
    for (size_t i = 0; i < pts.points.size(); ++i)
      if (!inst->matched[i]) unmatched[i] = 1;

  GroundTruthMaps out{Raster(h, w, 3), Format::soft_is};
  const double inv_two_sigma_sq = 1.0 / (2.0 * sigma_px * sigma_px);
  const int64_t support_sq =
      static_cast<int64_t>(kCircleRadiusPx) * kCircleRadiusPx;

  parallel_for(ex, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      double bc = 0.0, tc = 0.0;
      for (const CellPoint& p : pts.points) {
        const double dx = x - p.x, dy = y - p.y;
        const double g = std::exp(-(dx * dx + dy * dy) * inv_two_sigma_sq);
        if (p.class_id == kBackgroundCell)
          bc = std::max(bc, g);
        else
          tc = std::max(tc, g);
      }

      if (inst && inst->instances.at(y, x) == 0) {
        bool supported = false;
        for (size_t i = 0; i < pts.points.size() && !supported; ++i) {
          if (!unmatched[i]) continue;
          const int64_t dx = x - pts.points[i].x, dy = y - pts.points[i].y;
          supported = dx * dx + dy * dy <= support_sq;
        }
        if (!supported) bc = tc = 0.0;
      }

      const double sum = bc + tc;
      if (sum > 1.0) {
        bc /= sum;
        tc /= sum;
      }
      out.maps.at(kChanBackgroundCell, y, x) = bc;
      out.maps.at(kChanTumorCell, y, x) = tc;
      out.maps.at(kChanBackground, y, x) =
          std::clamp(1.0 - bc - tc, 0.0, 1.0);
    }
  });
  return out;
}

Raster background_channel(const Raster& cell_channels, Exec ex) {
  const int h = cell_channels.height(), w = cell_channels.width();
  Raster out(h, w);
  parallel_for(ex, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      double sum = 0.0;
      for (int c = 0; c < cell_channels.channels(); ++c)
        sum += cell_channels.at(c, y, x);
      out.at(y, x) = std::clamp(1.0 - sum, 0.0, 1.0);
    }
  });
  return out;
}

}  // namespace celldet::gt
