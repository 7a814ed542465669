#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "celldet/groundtruth.hpp"
#include "celldet/losses.hpp"
#include "celldet/rng.hpp"
#include "doctest.h"

using namespace celldet;

namespace {

Raster random_simplex(Rng& rng, int h, int w, int c) {
  Raster r(h, w, c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double sum = 0.0;
      for (int ch = 0; ch < c; ++ch) sum += r.at(ch, y, x) = uniform(rng) + 1e-3;
      for (int ch = 0; ch < c; ++ch) r.at(ch, y, x) /= sum;
    }
  return r;
}

// Central finite difference of the loss w.r.t. one prediction entry.
template <class LossFn>
double fd_grad(LossFn loss, const Raster& y, Raster y_hat, int c, int yy, int xx,
               double h = 1e-6) {
  y_hat.at(c, yy, xx) += h;
  const double up = loss(y, y_hat).value;
  y_hat.at(c, yy, xx) -= 2 * h;
  const double dn = loss(y, y_hat).value;
  return (up - dn) / (2 * h);
}

template <class LossFn>
void check_gradients(LossFn loss, int trials, double tol) {
  Rng rng(23);
  for (int t = 0; t < trials; ++t) {
    const Raster y = random_simplex(rng, 8, 8, 3);
    const Raster y_hat = random_simplex(rng, 8, 8, 3);
    const losses::LossResult res = loss(y, y_hat);
    for (int probe = 0; probe < 6; ++probe) {
      const int c = static_cast<int>(uniform_int(rng, 0, 2));
      const int yy = static_cast<int>(uniform_int(rng, 0, 7));
      const int xx = static_cast<int>(uniform_int(rng, 0, 7));
      const double analytic = res.gradient.at(c, yy, xx);
      const double numeric = fd_grad(loss, y, y_hat, c, yy, xx);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      CHECK(std::abs(analytic - numeric) / denom < tol);
    }
  }
}

PointAnnotations random_points(Rng& rng, int h, int w, int n) {
  PointAnnotations pts;
  for (int i = 0; i < n; ++i)
    pts.points.push_back({static_cast<int>(uniform_int(rng, 0, w - 1)),
                          static_cast<int>(uniform_int(rng, 0, h - 1)),
                          bernoulli(rng, 0.5) ? kTumorCell : kBackgroundCell});
  return pts;
}

}  // namespace

TEST_CASE("generalized dice gradient matches finite differences") {
  check_gradients([](const Raster& y, const Raster& yh) {
    return losses::generalized_dice_loss(y, yh);
  }, 30, 1e-4);
}

TEST_CASE("weighted MSE gradient matches finite differences") {
  check_gradients([](const Raster& y, const Raster& yh) {
    return losses::weighted_mse_loss(y, yh);
  }, 30, 1e-4);
}

TEST_CASE("losses vanish at a perfect prediction") {
  Rng rng(24);
  // dice needs a one-hot target for the y=yhat identity (sum y^2 = sum y)
  Raster onehot(8, 8, 3);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      onehot.at(static_cast<int>(uniform_int(rng, 0, 2)), y, x) = 1.0;
  CHECK(std::abs(losses::generalized_dice_loss(onehot, onehot).value) < 1e-5);
  const Raster y = random_simplex(rng, 8, 8, 3);
  const losses::LossResult mse = losses::weighted_mse_loss(y, y);
  CHECK(mse.value == 0.0);
  for (double g : mse.gradient.data()) CHECK(g == 0.0);
}

TEST_CASE("degenerate targets stay finite") {
  const Raster zero(6, 6, 3);  // all-zero mass in every class
  Rng rng(25);
  const Raster y_hat = random_simplex(rng, 6, 6, 3);
  CHECK(losses::generalized_dice_loss(zero, zero).value == 0.0);
  CHECK(std::isfinite(losses::weighted_mse_loss(zero, y_hat).value));
}

TEST_CASE("negative gradient is a descent direction") {
  Rng rng(26);
  for (int t = 0; t < 10; ++t) {
    const Raster y = random_simplex(rng, 8, 8, 3);
    Raster y_hat = random_simplex(rng, 8, 8, 3);
    for (auto loss : {losses::generalized_dice_loss, losses::weighted_mse_loss}) {
      const losses::LossResult res = loss(y, y_hat, losses::kEps, Exec::openmp);
      Raster stepped = y_hat;
      double gnorm2 = 0.0;
      for (double g : res.gradient.data()) gnorm2 += g * g;
      const double step = 1e-4 / std::sqrt(gnorm2 + 1e-30);
      for (size_t i = 0; i < stepped.size(); ++i)
        stepped.data()[i] -= step * res.gradient.data()[i];
      CHECK(loss(y, stepped, losses::kEps, Exec::openmp).value < res.value);
    }
  }
}

TEST_CASE("dice class weights are inverse masses") {
  Raster y(4, 4, 2);
  y.at(0, 1, 1) = 1.0;
  y.at(0, 2, 2) = 1.0;  // mass 2 in class 0, 0 in class 1
  const losses::ClassWeights w = losses::dice_class_weights(y);
  CHECK(w.w[0] == doctest::Approx(1.0 / (2.0 + losses::kEps)));
  CHECK(w.w[1] == doctest::Approx(1.0 / losses::kEps));
}

TEST_CASE("loss values are identical across execution modes") {
  Rng rng(27);
  const Raster y = random_simplex(rng, 16, 16, 3);
  const Raster y_hat = random_simplex(rng, 16, 16, 3);
  for (auto loss : {losses::generalized_dice_loss, losses::weighted_mse_loss}) {
    const auto a = loss(y, y_hat, losses::kEps, Exec::serial);
    const auto b = loss(y, y_hat, losses::kEps, Exec::openmp);
    CHECK(a.value == b.value);
    CHECK(a.gradient == b.gradient);
  }
}

TEST_CASE("circle_gt equals a brute-force nearest-centroid scan") {
  Rng rng(28);
  for (int t = 0; t < 200; ++t) {
    const int h = 24, w = 28;
    const PointAnnotations pts = random_points(rng, h, w, 1 + t % 8);
    const gt::GroundTruthMaps g = gt::circle_gt(pts, h, w);
    CHECK(g.format_tag == gt::Format::circle);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        // nearest centroid within the radius, ties to the lower index
        int cls = 0;
        double best = 1e18;
        for (const auto& p : pts.points) {
          const double d = std::hypot(x - p.x, y - p.y);
          if (d <= gt::kCircleRadiusPx && d < best) best = d, cls = p.class_id;
        }
        const double bg = g.maps.at(kChanBackground, y, x);
        const double bc = g.maps.at(kChanBackgroundCell, y, x);
        const double tc = g.maps.at(kChanTumorCell, y, x);
        CHECK(bg + bc + tc == 1.0);
        CHECK(((bg == 0.0 || bg == 1.0) && (bc == 0.0 || bc == 1.0) &&
               (tc == 0.0 || tc == 1.0)));
        const int got = bc == 1.0 ? kBackgroundCell : tc == 1.0 ? kTumorCell : 0;
        CHECK(got == cls);
      }
  }
}

TEST_CASE("hard_is_gt paints instances and falls back to circles") {
  const int h = 30, w = 30;
  PointAnnotations pts;
  pts.points.push_back({5, 5, kBackgroundCell});    // matched instance
  pts.points.push_back({20, 20, kTumorCell});       // unmatched -> circle
  gt::InstanceGroundTruth inst;
  inst.instances = LabelMap(h, w);
  for (int y = 4; y <= 7; ++y)
    for (int x = 3; x <= 8; ++x) inst.instances.at(y, x) = 4;
  inst.instance_class[4] = kBackgroundCell;
  inst.matched = {4, std::nullopt};
  const gt::GroundTruthMaps g = gt::hard_is_gt(inst, pts, h, w);
  CHECK(g.format_tag == gt::Format::hard_is);
  CHECK(g.maps.at(kChanBackgroundCell, 4, 3) == 1.0);  // instance corner, not disc
  CHECK(g.maps.at(kChanBackgroundCell, 5, 5) == 1.0);
  CHECK(g.maps.at(kChanTumorCell, 20, 20) == 1.0);     // fallback circle center
  CHECK(g.maps.at(kChanTumorCell, 20, 27) == 1.0);     // r=7 rim
  CHECK(g.maps.at(kChanTumorCell, 20, 28) == 0.0);
  for (size_t i = 0; i < g.maps.plane_size(); ++i) {
    const double s = g.maps.channel(0)[i] + g.maps.channel(1)[i] + g.maps.channel(2)[i];
    CHECK(s == 1.0);
  }
}

TEST_CASE("hard_is_gt lets instance pixels win over fallback circles") {
  const int h = 20, w = 20;
  PointAnnotations pts;
  pts.points.push_back({8, 8, kBackgroundCell});   // instance
  pts.points.push_back({11, 8, kTumorCell});       // unmatched, disc overlaps it
  gt::InstanceGroundTruth inst;
  inst.instances = LabelMap(h, w);
  inst.instances.at(8, 8) = 1;
  inst.instances.at(8, 9) = 1;
  inst.instance_class[1] = kBackgroundCell;
  inst.matched = {1, std::nullopt};
  const gt::GroundTruthMaps g = gt::hard_is_gt(inst, pts, h, w);
  CHECK(g.maps.at(kChanBackgroundCell, 8, 9) == 1.0);  // instance beats the disc
  CHECK(g.maps.at(kChanTumorCell, 8, 11) == 1.0);
}

TEST_CASE("soft_is_gt without instances: simplex, unit peaks, max-combine") {
  Rng rng(29);
  for (int t = 0; t < 50; ++t) {
    const int h = 32, w = 32;
    const PointAnnotations pts = random_points(rng, h, w, 1 + t % 6);
    const gt::GroundTruthMaps g = gt::soft_is_gt(pts, nullptr, h, w, 4.0);
    CHECK(g.format_tag == gt::Format::soft_is);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double bg = g.maps.at(kChanBackground, y, x);
        const double bc = g.maps.at(kChanBackgroundCell, y, x);
        const double tc = g.maps.at(kChanTumorCell, y, x);
        CHECK(bg + bc + tc == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(bc >= 0.0);
        CHECK(tc >= 0.0);
        CHECK(bg >= 0.0);
      }
  }
  // isolated centroid: exactly 1.0 at the peak
  PointAnnotations lone;
  lone.points.push_back({16, 16, kTumorCell});
  const gt::GroundTruthMaps g = gt::soft_is_gt(lone, nullptr, 32, 32, 3.0);
  CHECK(g.maps.at(kChanTumorCell, 16, 16) == 1.0);
  CHECK(g.maps.at(kChanBackground, 16, 16) == 0.0);
  // same-class overlap is max-combined, never summed above 1
  PointAnnotations pair;
  pair.points.push_back({14, 16, kTumorCell});
  pair.points.push_back({18, 16, kTumorCell});
  const gt::GroundTruthMaps g2 = gt::soft_is_gt(pair, nullptr, 32, 32, 3.0);
  const double mid = g2.maps.at(kChanTumorCell, 16, 16);
  CHECK(mid == doctest::Approx(std::exp(-0.5 * 4.0 / 9.0)));  // max of two equal Gaussians
  CHECK(g2.maps.at(kChanTumorCell, 16, 14) == 1.0);
}

TEST_CASE("soft_is_gt rescales cross-class overlap proportionally") {
  PointAnnotations pts;
  pts.points.push_back({15, 16, kTumorCell});
  pts.points.push_back({17, 16, kBackgroundCell});
  const gt::GroundTruthMaps g = gt::soft_is_gt(pts, nullptr, 32, 32, 5.0);
  // near both peaks the raw sum exceeds 1; channels must be rescaled to sum 1
  const double bc = g.maps.at(kChanBackgroundCell, 16, 16);
  const double tc = g.maps.at(kChanTumorCell, 16, 16);
  CHECK(bc + tc == doctest::Approx(1.0).epsilon(1e-9));
  const double raw_tc = std::exp(-0.5 * 1.0 / 25.0);
  const double raw_bc = std::exp(-0.5 * 1.0 / 25.0);
  CHECK(tc / bc == doctest::Approx(raw_tc / raw_bc).epsilon(1e-9));  // proportional
  CHECK(g.maps.at(kChanBackground, 16, 16) == doctest::Approx(0.0));
}

TEST_CASE("soft_is_gt zeroes non-instance pixels when instances are given") {
  const int h = 40, w = 40;
  PointAnnotations pts;
  pts.points.push_back({10, 10, kBackgroundCell});  // matched
  pts.points.push_back({30, 30, kTumorCell});       // unmatched
  gt::InstanceGroundTruth inst;
  inst.instances = LabelMap(h, w);
  for (int y = 9; y <= 11; ++y)
    for (int x = 9; x <= 11; ++x) inst.instances.at(y, x) = 1;
  inst.instance_class[1] = kBackgroundCell;
  inst.matched = {1, std::nullopt};
  const gt::GroundTruthMaps g = gt::soft_is_gt(pts, &inst, h, w, 6.0);
  // the far cross-class tail, though tiny, still triggers the rescale, so
  // peaks are 1.0 only up to that tail
  CHECK(g.maps.at(kChanBackgroundCell, 10, 10) ==
        doctest::Approx(1.0).epsilon(1e-4));                  // peak on instance
  CHECK(g.maps.at(kChanBackgroundCell, 10, 11) > 0.9);        // instance pixel keeps value
  CHECK(g.maps.at(kChanBackgroundCell, 10, 14) == 0.0);       // off-instance zeroed
  CHECK(g.maps.at(kChanBackground, 10, 14) == 1.0);
  CHECK(g.maps.at(kChanTumorCell, 30, 30) ==
        doctest::Approx(1.0).epsilon(1e-4));                  // unmatched keeps 7px halo
  CHECK(g.maps.at(kChanTumorCell, 30, 36) > 0.0);
  CHECK(g.maps.at(kChanTumorCell, 30, 38) == 0.0);            // beyond the halo
}

TEST_CASE("background_channel clamps the inversion") {
  Raster cells(2, 2, 2);
  cells.at(0, 0, 0) = 0.3;
  cells.at(1, 0, 0) = 0.4;
  cells.at(0, 1, 1) = 0.9;
  cells.at(1, 1, 1) = 0.9;  // sums above 1 clamp to 0
  const Raster bg = gt::background_channel(cells);
  CHECK(bg.at(0, 0) == doctest::Approx(0.3));
  CHECK(bg.at(1, 1) == 0.0);
}

TEST_CASE("ground-truth generators are identical across execution modes") {
  Rng rng(30);
  const PointAnnotations pts = random_points(rng, 40, 40, 12);
  CHECK(gt::circle_gt(pts, 40, 40, 7, Exec::serial).maps ==
        gt::circle_gt(pts, 40, 40, 7, Exec::openmp).maps);
  CHECK(gt::soft_is_gt(pts, nullptr, 40, 40, 5.0, Exec::serial).maps ==
        gt::soft_is_gt(pts, nullptr, 40, 40, 5.0, Exec::openmp).maps);
}
