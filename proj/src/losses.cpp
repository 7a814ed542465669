#include "celldet/losses.hpp"

namespace celldet::losses {

namespace {

// One partial per row, combined in row order: the result does not depend on
// the execution mode or thread count.
template <class RowSum>
double reduce_rows(Exec ex, int rows, RowSum&& row_sum) {
  std::vector<double> partial(rows);
  parallel_for(ex, rows, [&](int i) { partial[i] = row_sum(i); });
  double acc = 0.0;
  for (double v : partial) acc += v;
  return acc;
}

std::vector<double> channel_masses(const Raster& y, Exec ex) {
  std::vector<double> mass(y.channels());
  for (int c = 0; c < y.channels(); ++c) {
    mass[c] = reduce_rows(ex, y.height(), [&](int row) {
      double s = 0.0;
      for (int x = 0; x < y.width(); ++x) s += y.at(c, row, x);
      return s;
    });
  }
  return mass;
}

}  // namespace

ClassWeights dice_class_weights(const Raster& y, double eps, Exec ex) {
  const std::vector<double> mass = channel_masses(y, ex);
  ClassWeights cw;
  cw.w.resize(mass.size());
  for (size_t c = 0; c < mass.size(); ++c) cw.w[c] = 1.0 / (mass[c] + eps);
  return cw;
}

LossResult generalized_dice_loss(const Raster& y, const Raster& y_hat,
                                 double eps, Exec ex) {
  require_same_shape(y, y_hat, "generalized_dice_loss");
  const int h = y.height(), w = y.width(), nc = y.channels();

  const ClassWeights cw = dice_class_weights(y, eps, ex);

  double intersection = 0.0, both = 0.0;
  for (int c = 0; c < nc; ++c) {
    const double inter_c = reduce_rows(ex, h, [&](int row) {
      double s = 0.0;
      for (int x = 0; x < w; ++x) s += y.at(c, row, x) * y_hat.at(c, row, x);
      return s;
    });
    const double both_c = reduce_rows(ex, h, [&](int row) {
      double s = 0.0;
      for (int x = 0; x < w; ++x) s += y.at(c, row, x) + y_hat.at(c, row, x);
      return s;
    });
    intersection += cw.w[c] * inter_c;
    both += cw.w[c] * both_c;
  }

  LossResult res;
  res.gradient = Raster(h, w, nc);
  if (both == 0.0) {
    // Both maps identically zero: perfect agreement by convention.
    res.value = 0.0;
    return res;
  }
  res.value = 1.0 - 2.0 * intersection / both;

  const double inv_both_sq = 1.0 / (both * both);
  parallel_for(ex, nc * h, [&](int i) {
    const int c = i / h, row = i % h;
    const double wc = cw.w[c];
    for (int x = 0; x < w; ++x) {
      res.gradient.at(c, row, x) =
          -2.0 * wc * (y.at(c, row, x) * both - intersection) * inv_both_sq;
    }
  });
  return res;
}

LossResult weighted_mse_loss(const Raster& y, const Raster& y_hat, double eps,
                             Exec ex) {
  require_same_shape(y, y_hat, "weighted_mse_loss");
  const int h = y.height(), w = y.width(), nc = y.channels();
  const double n = static_cast<double>(y.plane_size());

  const std::vector<double> mass = channel_masses(y, ex);
  double total_mass = 0.0;
  for (double m : mass) total_mass += m;

  std::vector<double> wc(nc);
  for (int c = 0; c < nc; ++c) wc[c] = total_mass / (mass[c] + eps);

  LossResult res;
  res.gradient = Raster(h, w, nc);
  for (int c = 0; c < nc; ++c) {
    const double sse_c = reduce_rows(ex, h, [&](int row) {
      double s = 0.0;
      for (int x = 0; x < w; ++x) {
        const double d = y.at(c, row, x) - y_hat.at(c, row, x);
        s += d * d;
      }
      return s;
    });
    res.value += wc[c] * sse_c / n;
  }

  parallel_for(ex, nc * h, [&](int i) {
    const int c = i / h, row = i % h;
    for (int x = 0; x < w; ++x) {
      res.gradient.at(c, row, x) =
          -2.0 * wc[c] * (y.at(c, row, x) - y_hat.at(c, row, x)) / n;
    }
  });
  return res;
}

}  // namespace celldet::losses
