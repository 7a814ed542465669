#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <functional>
#include <vector>

#include "celldet/geometry.hpp"
#include "celldet/imgproc.hpp"
#include "celldet/postprocess.hpp"
#include "celldet/rng.hpp"
#include "doctest.h"

using namespace celldet;

namespace {

Raster random_raster(Rng& rng, int h, int w, int c = 1) {
  Raster r(h, w, c);
  for (double& v : r.data()) v = uniform(rng);
  return r;
}

// Plants a Gaussian cell bump of the given class; background = 1 - sum.
Raster planted_pred(const std::vector<CellPoint>& cells, int h, int w,
                    double sigma) {
  Raster pred(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double bc = 0.0, tc = 0.0;
      for (const auto& p : cells) {
        const double g =
            std::exp(-0.5 * (std::pow(x - p.x, 2) + std::pow(y - p.y, 2)) /
                     (sigma * sigma));
        double& chan = p.class_id == kBackgroundCell ? bc : tc;
        chan = std::max(chan, g);
      }
      const double sum = bc + tc;
      if (sum > 1.0) bc /= sum, tc /= sum;
      pred.at(kChanBackgroundCell, y, x) = bc;
      pred.at(kChanTumorCell, y, x) = tc;
      pred.at(kChanBackground, y, x) = std::clamp(1.0 - bc - tc, 0.0, 1.0);
    }
  return pred;
}

}  // namespace

TEST_CASE("all eight transforms round-trip bit-exactly") {
  Rng rng(31);
  const Raster sq = random_raster(rng, 12, 12, 3);
  const Raster rect = random_raster(rng, 9, 14, 2);
  for (const auto& t : geom::kAllTransforms) {
    CHECK(geom::invert_transform(geom::apply_transform(sq, t), t) == sq);
    if (t.rotation % 2 == 0)
      CHECK(geom::invert_transform(geom::apply_transform(rect, t), t) == rect);
  }
  CHECK_THROWS_AS(geom::apply_transform(rect, geom::GeomTransform{1, false}),
                  param_error);
}

TEST_CASE("transform_point follows the pixel permutation") {
  Rng rng(32);
  const int h = 11, w = 11;
  const Raster r = random_raster(rng, h, w);
  for (const auto& t : geom::kAllTransforms) {
    const Raster moved = geom::apply_transform(r, t);
    for (int i = 0; i < 20; ++i) {
      const PixelPoint p{static_cast<int>(uniform_int(rng, 0, w - 1)),
                         static_cast<int>(uniform_int(rng, 0, h - 1))};
      const PixelPoint q = geom::transform_point(p, t, h, w);
      CHECK(moved.at(q.y, q.x) == r.at(p.y, p.x));
      CHECK(geom::invert_point(q, t, h, w) == p);
    }
  }
}

TEST_CASE("rotation is counter-clockwise, then flip mirrors left-right") {
  Raster r(2, 2);
  r.at(0, 0) = 1.0;  // top-left marker
  const Raster rot = geom::apply_transform(r, {1, false});
  CHECK(rot.at(1, 0) == 1.0);  // ccw: top-left -> bottom-left
  const Raster fl = geom::apply_transform(r, {0, true});
  CHECK(fl.at(0, 1) == 1.0);
}

TEST_CASE("tta_predict of an equivariant model equals its plain prediction") {
  Rng rng(33);
  const Raster input = random_raster(rng, 16, 16, 3);
  // pixel-wise softmax-free map: depends only on the local value, hence
  // commutes with every transform
  const auto model = [](const Raster& in) {
    Raster out(in.height(), in.width(), 2);
    for (int y = 0; y < in.height(); ++y)
      for (int x = 0; x < in.width(); ++x) {
        out.at(0, y, x) = 0.25 + 0.5 * in.at(0, y, x);
        out.at(1, y, x) = 0.75 - 0.5 * in.at(0, y, x);
      }
    return out;
  };
  const Raster plain = model(input);
  const Raster tta = geom::tta_predict(model, input);
  CHECK(tta == plain);  // 8 identical branches average bit-exactly
}

TEST_CASE("tta_predict averages the inverse-transformed predictions") {
  Rng rng(34);
  const Raster input = random_raster(rng, 8, 8, 1);
  // orientation-sensitive model: prediction = input shifted by one column
  const auto model = [](const Raster& in) {
    Raster out(in.height(), in.width(), 1);
    for (int y = 0; y < in.height(); ++y)
      for (int x = 0; x < in.width(); ++x)
        out.at(y, x) = in.at(y, x > 0 ? x - 1 : 0);
    return out;
  };
  const Raster tta = geom::tta_predict(model, input);
  Raster expect(8, 8, 1);
  std::vector<Raster> branches;
  for (const auto& t : geom::kAllTransforms)
    branches.push_back(
        geom::invert_transform(model(geom::apply_transform(input, t)), t));
  const Raster mean = geom::average_predictions(branches);
  CHECK(tta == mean);
}

TEST_CASE("average_predictions is the exact mean and validates shapes") {
  Rng rng(35);
  const Raster a = random_raster(rng, 5, 7, 2);
  const Raster b = random_raster(rng, 5, 7, 2);
  const Raster m = geom::average_predictions({a, b});
  for (size_t i = 0; i < a.size(); ++i)
    CHECK(m.data()[i] == doctest::Approx(0.5 * (a.data()[i] + b.data()[i])).epsilon(1e-15));
  CHECK(geom::average_predictions({a, a, a, a}) == a);  // pairwise tree is exact here
  CHECK_THROWS_AS(geom::average_predictions({}), param_error);
  CHECK_THROWS_AS(geom::average_predictions({a, random_raster(rng, 5, 8, 2)}),
                  param_error);
}

TEST_CASE("compose_ctm_input matches the closed-form bilinear oracle") {
  Rng rng(36);
  const Raster cell = random_raster(rng, 24, 24, 3);
  const Raster tissue = random_raster(rng, 32, 32, 2);
  geom::PatchRegistration reg;
  reg.cell_offset_x = 5;
  reg.cell_offset_y = 9;
  reg.cell_extent_w = 6;
  reg.cell_extent_h = 6;
  const Raster out = geom::compose_ctm_input(cell, tissue, reg);
  REQUIRE(out.channels() == 5);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 24; ++y)
      for (int x = 0; x < 24; ++x) CHECK(out.at(c, y, x) == cell.at(c, y, x));
  // oracle: crop the window, then corner-aligned bilinear to 24x24
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 24; ++y)
      for (int x = 0; x < 24; ++x) {
        const double sy = reg.cell_offset_y + y * (reg.cell_extent_h - 1.0) / 23.0;
        const double sx = reg.cell_offset_x + x * (reg.cell_extent_w - 1.0) / 23.0;
        const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
        const int y1 = std::min(y0 + 1, 31), x1 = std::min(x0 + 1, 31);
        const double fy = sy - y0, fx = sx - x0;
        const double expect =
            (1 - fy) * ((1 - fx) * tissue.at(c, y0, x0) + fx * tissue.at(c, y0, x1)) +
            fy * ((1 - fx) * tissue.at(c, y1, x0) + fx * tissue.at(c, y1, x1));
        CHECK(out.at(3 + c, y, x) == doctest::Approx(expect).epsilon(1e-6));
      }
}

TEST_CASE("leak_tissue_labels equals the mask-select oracle") {
  Rng rng(37);
  const Raster pred = random_raster(rng, 10, 10, 2);
  LabelMap gt(10, 10);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) {
      const double u = uniform(rng);
      gt.at(y, x) = u < 0.4 ? kTissueBackground : u < 0.8 ? kTissueCancer
                                                          : kTissueUnknown;
    }
  const Raster leaked = geom::leak_tissue_labels(pred, gt);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) {
      if (gt.at(y, x) == kTissueUnknown) {
        CHECK(leaked.at(0, y, x) == pred.at(0, y, x));
        CHECK(leaked.at(1, y, x) == pred.at(1, y, x));
      } else {
        const bool cancer = gt.at(y, x) == kTissueCancer;
        CHECK(leaked.at(0, y, x) == (cancer ? 0.0 : 1.0));
        CHECK(leaked.at(1, y, x) == (cancer ? 1.0 : 0.0));
      }
    }
}

TEST_CASE("foreground_map is the sum of the two cell channels") {
  Rng rng(38);
  Raster pred = random_raster(rng, 6, 6, 3);
  const Raster fg = post::foreground_map(pred);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x)
      CHECK(fg.at(y, x) == pred.at(kChanBackgroundCell, y, x) +
                               pred.at(kChanTumorCell, y, x));
  CHECK_THROWS_AS(post::foreground_map(Raster(4, 4, 2)), param_error);
}

TEST_CASE("detect_cells_soft recovers planted well-separated cells") {
  Rng rng(39);
  int trials = 0, perfect = 0;
  for (int t = 0; t < 25; ++t) {
    const int h = 64, w = 64;
    std::vector<CellPoint> cells;
    while (cells.size() < 5) {
      CellPoint c{static_cast<int>(uniform_int(rng, 8, w - 9)),
                  static_cast<int>(uniform_int(rng, 8, h - 9)),
                  bernoulli(rng, 0.5) ? kTumorCell : kBackgroundCell};
      bool ok = true;
      for (const auto& o : cells)
        if (std::hypot(c.x - o.x, c.y - o.y) < 16) ok = false;
      if (ok) cells.push_back(c);
    }
    const Raster pred = planted_pred(cells, h, w, 3.0);
    const auto dets = post::detect_cells_soft(pred);
    ++trials;
    if (dets.size() != cells.size()) continue;
    bool all = true;
    for (const auto& c : cells) {
      double best = 1e9;
      int cls = 0;
      for (const auto& d : dets) {
        const double dd = std::hypot(d.x - c.x, d.y - c.y);
        if (dd < best) best = dd, cls = d.class_id;
      }
      if (best > 2.0 || cls != c.class_id) all = false;
    }
    perfect += all;
  }
  CHECK(perfect == trials);
}

TEST_CASE("detect_cells_soft gates peaks on the class-vs-background margin") {
  // a bump whose cell channels stay below the background is dropped
  Raster pred(32, 32, 3);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const double g = 0.40 * std::exp(-0.5 * (std::pow(x - 16, 2) + std::pow(y - 16, 2)) / 9.0);
      pred.at(kChanBackgroundCell, y, x) = g;
      pred.at(kChanBackground, y, x) = 1.0 - g;
    }
  CHECK(post::detect_cells_soft(pred).empty());
}

TEST_CASE("detect_cells_hard separates touching discs") {
  Rng rng(40);
  int ok = 0, trials = 0;
  for (int t = 0; t < 25; ++t) {
    const int h = 48, w = 48;
    // radius stays a pixel under min_distance_px so each lobe yields one EDT
    // marker even after discretization shifts the argmax, and the separation
    // stays a pixel above it so both markers survive suppression
    const double r = uniform(rng, 5.0, 5.9);
    const double dist = 1.3 * r + uniform(rng, 1.5, 3.0);
    const double angle = uniform(rng, 0.0, 6.283);
    const double cx0 = 24 - 0.5 * dist * std::cos(angle);
    const double cy0 = 24 - 0.5 * dist * std::sin(angle);
    const double cx1 = 24 + 0.5 * dist * std::cos(angle);
    const double cy1 = 24 + 0.5 * dist * std::sin(angle);
    Raster pred(h, w, 3);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const bool in0 = std::hypot(x - cx0, y - cy0) <= r;
        const bool in1 = std::hypot(x - cx1, y - cy1) <= r;
        pred.at(kChanBackgroundCell, y, x) = in0 || in1 ? 0.95 : 0.02;
        pred.at(kChanBackground, y, x) = in0 || in1 ? 0.05 : 0.98;
      }
    ++trials;
    ok += post::detect_cells_hard(pred).size() == 2;
  }
  CHECK(ok >= trials * 95 / 100);
}

TEST_CASE("detect_cells_hard puts one detection per center at 1.5 r spacing") {
  const double r = 5.5, cx0 = 19.75, cx1 = 28.0, cy = 24.0;  // dist = 1.5 r
  Raster pred(48, 48, 3);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 48; ++x) {
      const bool in = std::hypot(x - cx0, y - cy) <= r ||
                      std::hypot(x - cx1, y - cy) <= r;
      pred.at(kChanBackgroundCell, y, x) = in ? 0.9 : 0.05;
      pred.at(kChanBackground, y, x) = in ? 0.1 : 0.95;
    }
  auto dets = post::detect_cells_hard(pred);
  REQUIRE(dets.size() == 2);
  std::sort(dets.begin(), dets.end(),
            [](const Detection& a, const Detection& b) { return a.x < b.x; });
  CHECK(std::hypot(dets[0].x - cx0, dets[0].y - cy) <= 3.0);
  CHECK(std::hypot(dets[1].x - cx1, dets[1].y - cy) <= 3.0);
}

TEST_CASE("detect_cells_hard on a flat map returns nothing") {
  CHECK(post::detect_cells_hard(Raster(16, 16, 3, 0.2)).empty());
}

TEST_CASE("detect_cells_hard votes the majority class per instance") {
  Raster pred(32, 32, 3);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const bool in = std::hypot(x - 16, y - 16) <= 6;
      pred.at(kChanTumorCell, y, x) = in ? 0.9 : 0.01;
      pred.at(kChanBackgroundCell, y, x) = in ? 0.05 : 0.01;
      pred.at(kChanBackground, y, x) = in ? 0.05 : 0.98;
    }
  const auto dets = post::detect_cells_hard(pred);
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].class_id == kTumorCell);
  CHECK(dets[0].x == 16);
  CHECK(dets[0].y == 16);
  CHECK(dets[0].confidence > 0.5);
}

TEST_CASE("postprocess parameters are validated") {
  post::PostprocParams p;
  p.blur_sigma_px = 0.0;
  CHECK_THROWS_AS(post::detect_cells_soft(Raster(8, 8, 3), p), param_error);
}
