#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "celldet/augment.hpp"
#include "celldet/eval.hpp"
#include "celldet/geometry.hpp"
#include "celldet/groundtruth.hpp"
#include "celldet/imgproc.hpp"
#include "celldet/rng.hpp"
#include "doctest.h"

using namespace celldet;

namespace {

// Kuhn's augmenting-path maximum bipartite matching; the upper bound the
// greedy matcher is measured against.
int max_matching(const std::vector<std::vector<int>>& adj, int n_right) {
  std::vector<int> match_r(n_right, -1);
  std::vector<char> seen;
  std::function<bool(int)> kuhn = [&](int u) -> bool {
    for (int v : adj[u]) {
      if (seen[v]) continue;
      seen[v] = 1;
      if (match_r[v] < 0 || kuhn(match_r[v])) {
        match_r[v] = u;
        return true;
      }
    }
    return false;
  };
  int res = 0;
  for (size_t u = 0; u < adj.size(); ++u) {
    seen.assign(static_cast<size_t>(n_right), 0);
    res += kuhn(static_cast<int>(u));
  }
  return res;
}

Raster random_raster(Rng& rng, int h, int w, int c = 1) {
  Raster r(h, w, c);
  for (double& v : r.data()) v = uniform(rng);
  return r;
}

}  // namespace

TEST_CASE("greedy matcher against the exhaustive maximum matching") {
  Rng rng(61);
  int agree = 0, total = 0, unambiguous = 0;
  for (int t = 0; t < 300; ++t) {
    const int np = static_cast<int>(uniform_int(rng, 0, 10));
    const int ng = static_cast<int>(uniform_int(rng, 0, 10));
    std::vector<Detection> preds(np);
    PointAnnotations gts;
    for (auto& p : preds)
      p = {static_cast<int>(uniform_int(rng, 0, 60)),
           static_cast<int>(uniform_int(rng, 0, 60)),
           bernoulli(rng, 0.5) ? kTumorCell : kBackgroundCell, 1.0};
    for (int i = 0; i < ng; ++i)
      gts.points.push_back({static_cast<int>(uniform_int(rng, 0, 60)),
                            static_cast<int>(uniform_int(rng, 0, 60)),
                            bernoulli(rng, 0.5) ? kTumorCell : kBackgroundCell});
    eval::EvalConfig cfg;
    cfg.match_radius_px = static_cast<int>(uniform_int(rng, 3, 12));
    const auto m = eval::match_detections(preds, gts, cfg);
    const long long r2 =
        static_cast<long long>(cfg.match_radius_px) * cfg.match_radius_px;

    for (int cls : cfg.classes) {
      std::vector<int> pi, gi;
      for (int i = 0; i < np; ++i)
        if (preds[i].class_id == cls) pi.push_back(i);
      for (int i = 0; i < ng; ++i)
        if (gts.points[i].class_id == cls) gi.push_back(i);
      std::vector<std::vector<int>> adj(pi.size());
      std::vector<int> pdeg(pi.size(), 0), gdeg(gi.size(), 0);
      for (size_t a = 0; a < pi.size(); ++a)
        for (size_t b = 0; b < gi.size(); ++b) {
          const long long dx = preds[pi[a]].x - gts.points[gi[b]].x;
          const long long dy = preds[pi[a]].y - gts.points[gi[b]].y;
          if (dx * dx + dy * dy <= r2) {
            adj[a].push_back(static_cast<int>(b));
            ++pdeg[a];
            ++gdeg[b];
          }
        }
      const bool ambig =
          std::any_of(pdeg.begin(), pdeg.end(), [](int d) { return d > 1; }) ||
          std::any_of(gdeg.begin(), gdeg.end(), [](int d) { return d > 1; });

      const auto& cc = m.per_class.at(cls);
      const int best = max_matching(adj, static_cast<int>(gi.size()));
      CHECK(cc.tp <= best);
      CHECK(cc.fp == static_cast<long long>(pi.size()) - cc.tp);
      CHECK(cc.fn == static_cast<long long>(gi.size()) - cc.tp);
      for (const auto& pr : cc.pairs) {
        CHECK(preds[pr.pred_index].class_id == cls);
        CHECK(gts.points[pr.gt_index].class_id == cls);
        CHECK(pr.distance <= cfg.match_radius_px);
      }
      ++total;
      if (cc.tp == best) ++agree;
      if (!ambig) {
        CHECK(cc.tp == best);  // exact whenever no point has two candidates
        ++unambiguous;
      }
    }
  }
  CHECK(agree * 100 >= total * 99);
  CHECK(unambiguous > total / 2);  // the exactness clause is exercised
}

TEST_CASE("match radius is inclusive") {
  PointAnnotations gts;
  gts.points = {{10, 10, kTumorCell}};
  eval::EvalConfig cfg;
  cfg.match_radius_px = 5;
  const std::vector<Detection> on{{10, 15, kTumorCell, 1.0}};
  CHECK(eval::match_detections(on, gts, cfg).per_class.at(kTumorCell).tp == 1);
  const std::vector<Detection> off{{10, 16, kTumorCell, 1.0}};
  CHECK(eval::match_detections(off, gts, cfg).per_class.at(kTumorCell).tp == 0);
}

TEST_CASE("ties break by distance, then pred index, then gt index") {
  eval::EvalConfig cfg;
  cfg.match_radius_px = 5;
  cfg.classes = {kTumorCell};

  // two preds equidistant from one gt: the lower pred index wins
  std::vector<Detection> preds{{10, 13, kTumorCell, 1.0},
                               {10, 7, kTumorCell, 1.0}};
  PointAnnotations gts;
  gts.points = {{10, 10, kTumorCell}};
  auto cc = eval::match_detections(preds, gts, cfg).per_class.at(kTumorCell);
  REQUIRE(cc.pairs.size() == 1);
  CHECK(cc.pairs[0].pred_index == 0);
  CHECK(cc.fp == 1);

  // one pred equidistant between two gts: the lower gt index is matched
  preds = {{10, 10, kTumorCell, 1.0}};
  gts.points = {{13, 10, kTumorCell}, {7, 10, kTumorCell}};
  cc = eval::match_detections(preds, gts, cfg).per_class.at(kTumorCell);
  REQUIRE(cc.pairs.size() == 1);
  CHECK(cc.pairs[0].gt_index == 0);
  CHECK(cc.fn == 1);

  // chain of equal distances: greedy takes (p0,g0) then (p1,g1)
  preds = {{0, 0, kTumorCell, 1.0}, {0, 8, kTumorCell, 1.0}};
  gts.points = {{0, 4, kTumorCell}, {0, 12, kTumorCell}};
  cc = eval::match_detections(preds, gts, cfg).per_class.at(kTumorCell);
  REQUIRE(cc.pairs.size() == 2);
  CHECK(cc.pairs[0].pred_index == 0);
  CHECK(cc.pairs[0].gt_index == 0);
  CHECK(cc.pairs[1].pred_index == 1);
  CHECK(cc.pairs[1].gt_index == 1);
  CHECK(cc.pairs[0].distance == 4.0);
}

TEST_CASE("classes are matched independently") {
  const std::vector<Detection> preds{{10, 10, kBackgroundCell, 1.0}};
  PointAnnotations gts;
  gts.points = {{10, 10, kTumorCell}};
  const auto m = eval::match_detections(preds, gts);
  CHECK(m.per_class.at(kBackgroundCell).fp == 1);
  CHECK(m.per_class.at(kBackgroundCell).tp == 0);
  CHECK(m.per_class.at(kTumorCell).fn == 1);
  CHECK(m.per_class.at(kTumorCell).tp == 0);
}

TEST_CASE("F1 formula spot check and zero-denominator convention") {
  eval::MatchResult m;
  m.per_class[kBackgroundCell] = {8, 2, 4, {}};
  const auto rep = eval::f1_scores(m);
  CHECK(rep.per_class.at(kBackgroundCell) ==
        doctest::Approx(0.7273).epsilon(1e-4));
  CHECK(rep.mean == rep.per_class.at(kBackgroundCell));

  m.per_class[kTumorCell] = {0, 0, 0, {}};
  const auto rep2 = eval::f1_scores(m);
  CHECK(rep2.per_class.at(kTumorCell) == 0.0);
  CHECK(rep2.mean == doctest::Approx(0.5 * 16.0 / 22.0).epsilon(1e-12));
}

TEST_CASE("tissue_f1 scores cancer over known pixels only") {
  LabelMap pred(2, 4), gt(2, 4);
  // gt row 0: cancer cancer cancer bg | row 1: bg unknown unknown unknown
  const int C = kTissueCancer, B = kTissueBackground, U = kTissueUnknown;
  const int gv[8] = {C, C, C, B, B, U, U, U};
  const int pv[8] = {C, C, B, C, B, C, C, C};  // unknown cells contradict
  for (int i = 0; i < 8; ++i) {
    gt.data()[i] = gv[i];
    pred.data()[i] = pv[i];
  }
  // known pixels: tp=2 (i=0,1), fn=1 (i=2), fp=1 (i=3), tn=1 (i=4)
  CHECK(eval::tissue_f1(pred, gt) == doctest::Approx(4.0 / 6.0).epsilon(1e-12));

  LabelMap all_unknown(2, 4);
  for (int& v : all_unknown.data()) v = U;
  CHECK_THROWS_AS(eval::tissue_f1(pred, all_unknown), degenerate_error);
  CHECK_THROWS_AS(eval::tissue_f1(LabelMap(3, 3), gt), param_error);
}

TEST_CASE("group_report macro and micro rows") {
  // organ b sample: tp=1 fp=1 fn=0 per class -> per-class F1 2/3, mean 2/3
  // organ a sample: tp=3 fp=0 fn=1 / tp=1 fp=0 fn=1
  eval::MatchResult sa, sb;
  sa.per_class[kBackgroundCell] = {3, 0, 1, {}};
  sa.per_class[kTumorCell] = {1, 0, 1, {}};
  sb.per_class[kBackgroundCell] = {1, 1, 0, {}};
  sb.per_class[kTumorCell] = {1, 1, 0, {}};
  const auto rep = eval::group_report({sb, sa}, {"organ_b", "organ_a"});

  REQUIRE(rep.organs.size() == 2);
  CHECK(rep.organs[0].organ == "organ_a");  // sorted by name
  CHECK(rep.organs[1].organ == "organ_b");
  CHECK(rep.organs[0].n == 1);
  const double f1_a = 0.5 * (6.0 / 7.0 + 2.0 / 3.0);
  CHECK(rep.organs[0].macro_f1 == doctest::Approx(f1_a).epsilon(1e-12));
  CHECK(rep.organs[0].micro_f1 == doctest::Approx(f1_a).epsilon(1e-12));
  CHECK(rep.organs[1].macro_f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  // overall: macro = mean of sample means, micro from pooled counts
  const double mean_b = 2.0 / 3.0;
  CHECK(rep.overall.n == 2);
  CHECK(rep.overall.macro_f1 ==
        doctest::Approx(0.5 * (f1_a + mean_b)).epsilon(1e-12));
  const double micro_bc = 2.0 * 4 / (2 * 4 + 1 + 1);
  const double micro_tc = 2.0 * 2 / (2 * 2 + 1 + 1);
  CHECK(rep.overall.micro_f1 ==
        doctest::Approx(0.5 * (micro_bc + micro_tc)).epsilon(1e-12));
  CHECK_THROWS_AS(eval::group_report({sa}, {}), param_error);
}

TEST_CASE("random_augment is deterministic in the rng state") {
  Rng seed_rng(62);
  const Raster img = random_raster(seed_rng, 24, 24, 3);
  gt::GroundTruthMaps gts;
  gts.maps = random_raster(seed_rng, 24, 24, 3);
  gts.format_tag = gt::Format::soft_is;
  PointAnnotations pts;
  pts.points = {{3, 5, kBackgroundCell}, {20, 18, kTumorCell}};
  aug::AugmentParams p;
  p.crop_hw = 16;

  Rng r1(99), r2(99);
  const auto a = aug::random_augment(img, gts, pts, p, r1);
  const auto b = aug::random_augment(img, gts, pts, p, r2);
  CHECK(a.img == b.img);
  CHECK(a.gts.maps == b.gts.maps);
  CHECK(a.pts.points == b.pts.points);
}

TEST_CASE("random_augment equals a draw-order replay oracle") {
  // mirrors the documented gate order (rescale, crop, flip, rotation,
  // brightness, contrast) with a cloned rng; rescale_range 0 keeps the
  // geometry down to crop + D4, which the oracle reproduces bit-exactly
  Rng seed_rng(63);
  for (int trial = 0; trial < 12; ++trial) {
    const Raster img = random_raster(seed_rng, 24, 24, 3);
    gt::GroundTruthMaps gts;
    gts.maps = random_raster(seed_rng, 24, 24, 3);
    gts.format_tag = gt::Format::soft_is;
    PointAnnotations pts;
    for (int i = 0; i < 8; ++i)
      pts.points.push_back({static_cast<int>(uniform_int(seed_rng, 0, 23)),
                            static_cast<int>(uniform_int(seed_rng, 0, 23)),
                            bernoulli(seed_rng, 0.5) ? kTumorCell
                                                     : kBackgroundCell});
    aug::AugmentParams p;
    p.crop_hw = 16;
    p.rescale_range = 0.0;

    Rng lib_rng(500 + trial), replay(500 + trial);
    const auto got = aug::random_augment(img, gts, pts, p, lib_rng);

    if (bernoulli(replay, p.per_aug_probability))
      uniform(replay, 1.0, 1.0);  // scale draw; 1.0 means no resample
    int x0 = (24 - p.crop_hw) / 2, y0 = x0;
    if (bernoulli(replay, p.per_aug_probability)) {
      x0 = static_cast<int>(uniform_int(replay, 0, 24 - p.crop_hw));
      y0 = static_cast<int>(uniform_int(replay, 0, 24 - p.crop_hw));
    }
    Raster eimg = imgproc::crop(img, x0, y0, p.crop_hw, p.crop_hw);
    Raster emaps = imgproc::crop(gts.maps, x0, y0, p.crop_hw, p.crop_hw);
    std::vector<CellPoint> epts;
    for (const auto& pt : pts.points) {
      const int nx = pt.x - x0, ny = pt.y - y0;
      if (nx >= 0 && ny >= 0 && nx < p.crop_hw && ny < p.crop_hw)
        epts.push_back({nx, ny, pt.class_id});
    }
    geom::GeomTransform t;
    t.flip = bernoulli(replay, p.per_aug_probability);
    if (bernoulli(replay, p.per_aug_probability))
      t.rotation = static_cast<int>(uniform_int(replay, 1, 3));
    if (t.flip || t.rotation != 0) {
      eimg = geom::apply_transform(eimg, t);
      emaps = geom::apply_transform(emaps, t);
      for (auto& pt : epts) {
        const PixelPoint q =
            geom::transform_point({pt.x, pt.y}, t, p.crop_hw, p.crop_hw);
        pt.x = q.x;
        pt.y = q.y;
      }
    }
    if (bernoulli(replay, p.per_aug_probability))
      for (int c = 0; c < eimg.channels(); ++c) {
        const double b = uniform(replay, -p.brightness_contrast_range,
                                 p.brightness_contrast_range);
        for (double& v : eimg.channel(c)) v += b;
      }
    if (bernoulli(replay, p.per_aug_probability))
      for (int c = 0; c < eimg.channels(); ++c) {
        const double f = uniform(replay, 1.0 - p.brightness_contrast_range,
                                 1.0 + p.brightness_contrast_range);
        double mean = 0.0;
        for (double v : eimg.channel(c)) mean += v;
        mean /= p.crop_hw * p.crop_hw;
        for (double& v : eimg.channel(c)) v = mean + f * (v - mean);
      }
    for (double& v : eimg.data()) v = std::clamp(v, 0.0, 1.0);

    CHECK(got.img == eimg);
    CHECK(got.gts.maps == emaps);
    CHECK(got.pts.points == epts);
  }
}

TEST_CASE("inactive gates give the centered crop and drop outside points") {
  Rng seed_rng(64);
  const Raster img = random_raster(seed_rng, 24, 24, 3);
  gt::GroundTruthMaps gts;
  gts.maps = random_raster(seed_rng, 24, 24, 3);
  gts.format_tag = gt::Format::circle;
  PointAnnotations pts;
  pts.points = {{0, 0, kBackgroundCell},   // outside the centered crop
                {10, 10, kTumorCell},      // -> (4, 4)
                {6, 6, kBackgroundCell},   // -> (0, 0)
                {17, 17, kTumorCell},      // -> (11, 11)
                {18, 18, kTumorCell}};     // outside (crop is [6, 18))
  aug::AugmentParams p;
  p.crop_hw = 12;
  p.per_aug_probability = 0.0;
  Rng rng(1);
  const auto s = aug::random_augment(img, gts, pts, p, rng);
  CHECK(s.img == imgproc::crop(img, 6, 6, 12, 12));
  CHECK(s.gts.maps == imgproc::crop(gts.maps, 6, 6, 12, 12));
  REQUIRE(s.pts.points.size() == 3);
  CHECK(s.pts.points[0] == CellPoint{4, 4, kTumorCell});
  CHECK(s.pts.points[1] == CellPoint{0, 0, kBackgroundCell});
  CHECK(s.pts.points[2] == CellPoint{11, 11, kTumorCell});
}

TEST_CASE("one-hot maps stay one-hot through rescale; points stay aligned") {
  Rng seed_rng(65);
  const Raster img = random_raster(seed_rng, 30, 30, 3);
  Rng cell_rng(66);
  PointAnnotations pts;
  for (int i = 0; i < 6; ++i)
    pts.points.push_back({static_cast<int>(uniform_int(cell_rng, 2, 27)),
                          static_cast<int>(uniform_int(cell_rng, 2, 27)),
                          kBackgroundCell});
  const auto gts = gt::circle_gt(pts, 30, 30, 3);
  aug::AugmentParams p;
  p.crop_hw = 20;
  p.per_aug_probability = 1.0;  // rescale always active
  for (int trial = 0; trial < 10; ++trial) {
    Rng rng(700 + trial);
    const auto s = aug::random_augment(img, gts, pts, p, rng);
    CHECK(s.img.height() == 20);
    CHECK(s.gts.maps.channels() == 3);
    for (double v : s.gts.maps.data()) CHECK((v == 0.0 || v == 1.0));
    for (const auto& pt : s.pts.points) {
      CHECK(pt.x >= 0);
      CHECK(pt.x < 20);
      CHECK(pt.y >= 0);
      CHECK(pt.y < 20);
    }
  }
}

TEST_CASE("augment parameter validation") {
  Rng rng(1);
  const Raster img(24, 24, 3);
  gt::GroundTruthMaps gts;
  gts.maps = Raster(24, 24, 3);
  aug::AugmentParams p;
  p.rescale_range = 1.0;
  CHECK_THROWS_AS(aug::random_augment(img, gts, {}, p, rng), param_error);
  p = {};
  p.crop_hw = 32;
  CHECK_THROWS_AS(aug::random_augment(img, gts, {}, p, rng), param_error);
  p = {};
  p.crop_hw = 16;
  gt::GroundTruthMaps wrong;
  wrong.maps = Raster(20, 24, 3);
  CHECK_THROWS_AS(aug::random_augment(img, wrong, {}, p, rng), param_error);
}

TEST_CASE("oversample_weights_cells balances the class masses exactly") {
  auto anno = [](long long bc, long long tc) {
    PointAnnotations a;
    for (long long i = 0; i < bc; ++i) a.points.push_back({0, 0, kBackgroundCell});
    for (long long i = 0; i < tc; ++i) a.points.push_back({0, 0, kTumorCell});
    return a;
  };
  // totals 100 bc vs 40 tc; only the (10,30) sample favors the minority
  const auto sw =
      aug::oversample_weights_cells({anno(90, 10), anno(10, 30), anno(0, 0)});
  REQUIRE(sw.weights.size() == 3);
  CHECK(sw.weights[0] == 1.0);
  CHECK(sw.weights[1] == 4.0);
  CHECK(sw.weights[2] == 1.0);
  CHECK(90 * sw.weights[0] + 10 * sw.weights[1] ==
        10 * sw.weights[0] + 30 * sw.weights[1]);  // weighted masses equal

  // balanced corpus and absent class both give uniform weights
  for (const auto& sws :
       {aug::oversample_weights_cells({anno(50, 30), anno(30, 50)}),
        aug::oversample_weights_cells({anno(5, 0), anno(9, 0)})})
    for (double w : sws.weights) CHECK(w == 1.0);

  // no sample favors the minority: ratio fallback
  const auto fb = aug::oversample_weights_cells({anno(50, 10), anno(30, 20)});
  CHECK(fb.weights[0] == doctest::Approx(11.0 / 51.0).epsilon(1e-12));
  CHECK(fb.weights[1] == doctest::Approx(21.0 / 31.0).epsilon(1e-12));
}

TEST_CASE("oversample_weights_tissue ignores unknown and zeroes empty masks") {
  auto mask = [](int bg, int cancer) {
    LabelMap m(4, 4);
    int i = 0;
    for (; i < bg; ++i) m.data()[i] = kTissueBackground;
    for (; i < bg + cancer; ++i) m.data()[i] = kTissueCancer;
    for (; i < 16; ++i) m.data()[i] = kTissueUnknown;
    return m;
  };
  const auto sw = aug::oversample_weights_tissue(
      {mask(12, 4), mask(2, 14), mask(0, 0)});
  REQUIRE(sw.weights.size() == 3);
  CHECK(sw.weights[0] == 1.5);
  CHECK(sw.weights[1] == 1.0);
  CHECK(sw.weights[2] == 0.0);  // all-unknown sample is inactive
  CHECK(12 * sw.weights[0] + 2 * sw.weights[1] ==
        4 * sw.weights[0] + 14 * sw.weights[1]);

  CHECK_THROWS_AS(aug::oversample_weights_tissue({mask(0, 0), mask(0, 0)}),
                  degenerate_error);
}
