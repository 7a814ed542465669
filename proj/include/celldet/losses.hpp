#pragma once

#include <vector>

#include "celldet/parallel.hpp"
#include "celldet/raster.hpp"

// Training objectives over channel-planar class maps, with exact analytic
// gradients w.r.t. the prediction. Reductions run through fixed-order row
// partials, so values are deterministic in either execution mode.
namespace celldet::losses {

inline constexpr double kEps = 1e-6;

struct ClassWeights {
  std::vector<double> w;
};

struct LossResult {
  double value = 0.0;
  Raster gradient;  // d(loss)/d(prediction), same shape as the prediction
};

// w_c = 1 / (sum_i y_{i,c} + eps).
ClassWeights dice_class_weights(const Raster& y, double eps = kEps,
                                Exec ex = Exec::openmp);

// 1 - 2 * (sum_c w_c sum_i y*yhat) / (sum_c w_c sum_i (y + yhat)),
// with the dice class weights above. Identically-zero maps give loss 0.
LossResult generalized_dice_loss(const Raster& y, const Raster& y_hat,
                                 double eps = kEps, Exec ex = Exec::openmp);

// sum_c w_c * (1/N) * sum_i (y - yhat)^2 with
// w_c = (total mass over all classes) / (sum_i y_{i,c} + eps).
LossResult weighted_mse_loss(const Raster& y, const Raster& y_hat,
                             double eps = kEps, Exec ex = Exec::openmp);

}  // namespace celldet::losses
