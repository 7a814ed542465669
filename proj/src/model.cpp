#include "celldet/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "celldet/imgproc.hpp"
#include "celldet/rng.hpp"

namespace celldet::bench {

Raster concat_channels(const Raster& a, const Raster& b) {
  if (a.height() != b.height() || a.width() != b.width())
    throw param_error("concat_channels: shape mismatch");
  Raster out(a.height(), a.width(), a.channels() + b.channels());
  out.mpp = a.mpp;
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(),
            out.data().begin() + static_cast<long>(a.size()));
  return out;
}

Raster extract_features(const Raster& input, const FeatureConfig& cfg,
                        Exec ex) {
  cfg.validate();
  if (input.channels() != cfg.input_channels())
    throw param_error("extract_features: expected " +
                      std::to_string(cfg.input_channels()) +
                      " input channels, got " +
                      std::to_string(input.channels()));

  const int h = input.height(), w = input.width();
  const int nc = cfg.color_channels;
  Raster out(h, w, cfg.feature_count());
  out.mpp = input.mpp;

  // color channels split out once; squared copy feeds the std features
  Raster color(h, w, nc);
  Raster color_sq(h, w, nc);
  for (int c = 0; c < nc; ++c) {
    auto src = input.channel(c);
    std::copy(src.begin(), src.end(), color.channel(c).begin());
    auto sq = color_sq.channel(c);
    for (size_t i = 0; i < src.size(); ++i) sq[i] = src[i] * src[i];
  }

  int f = 0;
  auto emit = [&](std::span<const double> plane) {
    std::copy(plane.begin(), plane.end(), out.channel(f).begin());
    ++f;
  };
  for (int c = 0; c < nc; ++c) emit(color.channel(c));
  for (double sigma : cfg.blur_sigmas) {
    const Raster mean = imgproc::gaussian_blur(color, sigma, ex);
    const Raster mean_sq = imgproc::gaussian_blur(color_sq, sigma, ex);
    for (int c = 0; c < nc; ++c) emit(mean.channel(c));
    for (int c = 0; c < nc; ++c) {
      auto m = mean.channel(c);
      auto m2 = mean_sq.channel(c);
      auto dst = out.channel(f);
      ++f;
      for (size_t i = 0; i < m.size(); ++i)
        dst[i] = std::sqrt(std::max(0.0, m2[i] - m[i] * m[i]));
    }
  }
  if (cfg.include_tissue_channels)
    for (int c = 0; c < cfg.tissue_channels; ++c) emit(input.channel(nc + c));
  return out;
}

PixelModel PixelModel::make(const FeatureConfig& fc, int n_classes,
                            std::uint64_t init_seed, double init_sd) {
  fc.validate();
  if (n_classes < 2) throw param_error("PixelModel: n_classes must be >= 2");
  PixelModel m;
  m.features = fc;
  m.n_classes = n_classes;
  m.weights.resize(static_cast<size_t>(fc.feature_count()) * n_classes);
  m.bias.assign(n_classes, 0.0);
  Rng rng(init_seed);
  for (double& v : m.weights) v = normal(rng) * init_sd;
  return m;
}

void PixelModel::validate() const {
  features.validate();
  if (n_classes < 2 ||
      weights.size() !=
          static_cast<size_t>(features.feature_count()) * n_classes ||
      bias.size() != static_cast<size_t>(n_classes))
    throw param_error("PixelModel: inconsistent parameter sizes");
  for (double v : weights)
    if (!std::isfinite(v)) throw data_error("PixelModel: non-finite weight");
  for (double v : bias)
    if (!std::isfinite(v)) throw data_error("PixelModel: non-finite bias");
}

Raster PixelModel::predict_features(const Raster& feats, Exec ex) const {
  validate();
  const int nf = features.feature_count();
  if (feats.channels() != nf)
    throw param_error("predict_features: feature channel mismatch");
  const int h = feats.height(), w = feats.width();
  Raster out(h, w, n_classes);
  out.mpp = feats.mpp;

  const double* fx = feats.data().data();
  double* ox = out.data().data();
  const size_t plane = feats.plane_size();
  const int k = n_classes;
  parallel_for(ex, h, [&](int y) {
    std::vector<double> logit(k);
    for (int x = 0; x < w; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      for (int c = 0; c < k; ++c) logit[c] = bias[c];
      for (int ff = 0; ff < nf; ++ff) {
        const double v = fx[ff * plane + i];
        for (int c = 0; c < k; ++c) logit[c] += weights[ff * k + c] * v;
      }
      double mx = logit[0];
      for (int c = 1; c < k; ++c) mx = std::max(mx, logit[c]);
      double sum = 0.0;
      for (int c = 0; c < k; ++c) {
        logit[c] = std::exp(logit[c] - mx);
        sum += logit[c];
      }
      for (int c = 0; c < k; ++c) ox[c * plane + i] = logit[c] / sum;
    }
  });
  return out;
}

Raster PixelModel::predict(const Raster& input, Exec ex) const {
  return predict_features(extract_features(input, features, ex), ex);
}

}  // namespace celldet::bench
