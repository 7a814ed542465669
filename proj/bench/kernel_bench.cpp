// Times the OpenMP kernels against their serial reference twins and checks
// that both produce bit-identical output.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "celldet/groundtruth.hpp"
#include "celldet/imgproc.hpp"
#include "celldet/losses.hpp"
#include "celldet/model.hpp"
#include "celldet/parallel.hpp"
#include "celldet/raster.hpp"
#include "celldet/rng.hpp"

using namespace celldet;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void row(const std::string& name, int reps,
         const std::function<Raster(Exec)>& fn) {
  Raster serial_out(1, 1), omp_out(1, 1);
  const double ts = time_ms([&] { serial_out = fn(Exec::serial); }, reps);
  const double tp = time_ms([&] { omp_out = fn(Exec::openmp); }, reps);
  std::printf("%-28s %10.2f %10.2f %8.2fx   %s\n", name.c_str(), ts, tp,
              ts / tp, serial_out == omp_out ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
  Rng rng(7);

  Raster img(512, 512);
  for (double& v : img.data()) v = uniform(rng);

  BinaryMask mask(512, 512);
  for (auto& v : mask.data()) v = bernoulli(rng, 0.6) ? 1 : 0;

  Raster y(192, 192, 3), y_hat(192, 192, 3);
  for (size_t i = 0; i < y.plane_size(); ++i) {
    double a = uniform(rng), b = uniform(rng), c = uniform(rng);
    const double s = a + b + c;
    y.data()[i] = a / s;
    y.data()[i + y.plane_size()] = b / s;
    y.data()[i + 2 * y.plane_size()] = c / s;
  }
  for (size_t i = 0; i < y_hat.data().size(); ++i)
    y_hat.data()[i] = uniform(rng);

  PointAnnotations pts;
  for (int i = 0; i < 80; ++i)
    pts.points.push_back({static_cast<int>(uniform_int(rng, 8, 247)),
                          static_cast<int>(uniform_int(rng, 8, 247)),
                          bernoulli(rng, 0.5) ? kTumorCell : kBackgroundCell});

  Raster feat_img(256, 256, 3);
  for (double& v : feat_img.data()) v = uniform(rng);
  bench::FeatureConfig fc;
  const bench::PixelModel model = bench::PixelModel::make(fc, 3, 11);
  const Raster feats = bench::extract_features(feat_img, fc);

  std::printf("threads available: %d\n\n", max_threads());
  std::printf("%-28s %10s %10s %9s\n", "kernel", "serial ms", "openmp ms",
              "speedup");
  row("gaussian_blur 512x512 s=2", 5,
      [&](Exec ex) { return imgproc::gaussian_blur(img, 2.0, ex); });
  row("edt 512x512", 3, [&](Exec ex) {
    const auto d = imgproc::euclidean_distance_transform(mask, ex);
    return d;
  });
  row("dice loss 192x192x3", 5, [&](Exec ex) {
    return losses::generalized_dice_loss(y, y_hat, losses::kEps, ex).gradient;
  });
  row("wmse loss 192x192x3", 5, [&](Exec ex) {
    return losses::weighted_mse_loss(y, y_hat, losses::kEps, ex).gradient;
  });
  row("soft_is_gt 256x256 80pts", 3, [&](Exec ex) {
    return gt::soft_is_gt(pts, nullptr, 256, 256, 15.0, ex).maps;
  });
  row("extract_features 256x256", 2,
      [&](Exec ex) { return bench::extract_features(feat_img, fc, ex); });
  row("predict_features 256x256", 3,
      [&](Exec ex) { return model.predict_features(feats, ex); });
  return 0;
}
