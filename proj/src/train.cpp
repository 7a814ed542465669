#include "celldet/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "celldet/geometry.hpp"
#include "celldet/losses.hpp"

namespace celldet::bench {

namespace {

constexpr double kLogFloor = 1e-12;

// Loss value plus d(loss)/d(logit); the dice/mse gradients from the losses
// module are pushed through the softmax Jacobian.
double loss_and_dlogit(const Raster& y, const Raster& y_hat, LossKind kind,
                       Raster* g_logit) {
  const int k = y.channels();
  const size_t plane = y.plane_size();
  if (g_logit) *g_logit = Raster(y.height(), y.width(), k);

  if (kind == LossKind::cross_entropy) {
    long long n_known = 0;
    std::vector<double> mass(plane, 0.0);
    for (int c = 0; c < k; ++c) {
      auto yc = y.channel(c);
      for (size_t i = 0; i < plane; ++i) mass[i] += yc[i];
    }
    for (size_t i = 0; i < plane; ++i)
      if (mass[i] > 0.5) ++n_known;
    if (n_known == 0) return 0.0;

    double loss = 0.0;
    for (int c = 0; c < k; ++c) {
      auto yc = y.channel(c);
      auto pc = y_hat.channel(c);
      auto gc = g_logit ? g_logit->channel(c) : std::span<double>{};
      for (size_t i = 0; i < plane; ++i) {
        if (mass[i] <= 0.5) continue;
        loss -= yc[i] * std::log(std::max(pc[i], kLogFloor));
        if (g_logit) gc[i] = (pc[i] * mass[i] - yc[i]) / n_known;
      }
    }
    return loss / n_known;
  }

  const losses::LossResult lr = kind == LossKind::dice
                                    ? losses::generalized_dice_loss(y, y_hat)
                                    : losses::weighted_mse_loss(y, y_hat);
  if (g_logit) {
    std::vector<double> dot(plane, 0.0);
    for (int c = 0; c < k; ++c) {
      auto gc = lr.gradient.channel(c);
      auto pc = y_hat.channel(c);
      for (size_t i = 0; i < plane; ++i) dot[i] += gc[i] * pc[i];
    }
    for (int c = 0; c < k; ++c) {
      auto gc = lr.gradient.channel(c);
      auto pc = y_hat.channel(c);
      auto oc = g_logit->channel(c);
      for (size_t i = 0; i < plane; ++i) oc[i] = pc[i] * (gc[i] - dot[i]);
    }
  }
  return lr.value;
}

struct OptimizerState {
  std::vector<double> mw, vw, mb, vb;
  long long t = 0;

  explicit OptimizerState(const PixelModel& m)
      : mw(m.weights.size(), 0.0),
        vw(m.weights.size(), 0.0),
        mb(m.bias.size(), 0.0),
        vb(m.bias.size(), 0.0) {}

  void step(PixelModel& m, const ModelGrad& g, const TrainConfig& cfg) {
    ++t;
    auto update = [&](std::vector<double>& p, const std::vector<double>& grad,
                      std::vector<double>& m1, std::vector<double>& m2) {
      if (cfg.optimizer == Optimizer::sgd) {
        for (size_t i = 0; i < p.size(); ++i)
          p[i] -= cfg.learning_rate * grad[i];
        return;
      }
      constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
      const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
      const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
      for (size_t i = 0; i < p.size(); ++i) {
        m1[i] = b1 * m1[i] + (1.0 - b1) * grad[i];
        m2[i] = b2 * m2[i] + (1.0 - b2) * grad[i] * grad[i];
        p[i] -= cfg.learning_rate * (m1[i] / bc1) /
                (std::sqrt(m2[i] / bc2) + eps);
      }
    };
    update(m.weights, g.d_weights, mw, vw);
    update(m.bias, g.d_bias, mb, vb);
    if (cfg.weight_decay > 0.0)
      for (double& wv : m.weights)
        wv -= cfg.learning_rate * cfg.weight_decay * wv;
  }
};

std::vector<int> epoch_order(Rng& rng, int n, const std::vector<double>& w) {
  std::vector<int> order(n);
  if (w.empty()) {
    std::iota(order.begin(), order.end(), 0);
    shuffle(rng, order);
    return order;
  }
  std::vector<double> cum(w.size());
  std::partial_sum(w.begin(), w.end(), cum.begin());
  const double total = cum.back();
  for (int i = 0; i < n; ++i) {
    const double u = uniform(rng) * total;
    order[i] = static_cast<int>(
        std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
    order[i] = std::min(order[i], n - 1);
  }
  return order;
}

void accumulate(ModelGrad& acc, const ModelGrad& g) {
  if (acc.d_weights.empty()) {
    acc = g;
    return;
  }
  acc.loss += g.loss;
  for (size_t i = 0; i < acc.d_weights.size(); ++i)
    acc.d_weights[i] += g.d_weights[i];
  for (size_t i = 0; i < acc.d_bias.size(); ++i)
    acc.d_bias[i] += g.d_bias[i];
}

void scale(ModelGrad& g, double s) {
  g.loss *= s;
  for (double& v : g.d_weights) v *= s;
  for (double& v : g.d_bias) v *= s;
}

}  // namespace

ModelGrad model_gradient(const PixelModel& m, const Raster& feats,
                         const Raster& target, LossKind kind, Exec ex) {
  if (target.channels() != m.n_classes)
    throw param_error("model_gradient: target channel mismatch");
  const Raster y_hat = m.predict_features(feats, ex);
  Raster g_logit;
  ModelGrad out;
  out.loss = loss_and_dlogit(target, y_hat, kind, &g_logit);

  const int nf = m.features.feature_count();
  const int k = m.n_classes;
  const size_t plane = feats.plane_size();
  out.d_weights.assign(static_cast<size_t>(nf) * k, 0.0);
  out.d_bias.assign(k, 0.0);

  const double* fx = feats.data().data();
  const double* gx = g_logit.data().data();
  parallel_for(ex, nf, [&](int f) {
    for (int c = 0; c < k; ++c) {
      double s = 0.0;
      for (size_t i = 0; i < plane; ++i) s += fx[f * plane + i] * gx[c * plane + i];
      out.d_weights[static_cast<size_t>(f) * k + c] = s;
    }
  });
  for (int c = 0; c < k; ++c) {
    double s = 0.0;
    for (size_t i = 0; i < plane; ++i) s += gx[c * plane + i];
    out.d_bias[c] = s;
  }
  return out;
}

TrainResult train(const PixelModel& init,
                  const std::vector<SceneSample>& samples,
                  const TrainConfig& cfg, const TrainOptions& opt) {
  cfg.validate();
  init.validate();
  if (samples.empty()) throw param_error("train: no samples");
  if (!opt.sample_weights.empty()) {
    if (opt.sample_weights.size() != samples.size())
      throw param_error("train: one sample weight per sample required");
    double sum = 0.0;
    for (double wv : opt.sample_weights) {
      if (wv < 0.0) throw param_error("train: negative sample weight");
      sum += wv;
    }
    if (sum <= 0.0) throw param_error("train: sample weights sum to 0");
  }

  TrainResult res;
  res.model = init;
  Rng rng(cfg.seed);
  OptimizerState state(res.model);
  const int n = static_cast<int>(samples.size());

  // without augmentation, features and targets are fixed per sample
  std::vector<Raster> feats, targets;
  if (!opt.augment) {
    feats.reserve(samples.size());
    for (const SceneSample& s : samples) {
      feats.push_back(extract_features(s.input, res.model.features));
      targets.push_back(s.target.maps);
    }
  }
  std::vector<Raster> val_feats, val_targets;
  if (opt.validation)
    for (const SceneSample& s : *opt.validation) {
      val_feats.push_back(extract_features(s.input, res.model.features));
      val_targets.push_back(s.target.maps);
    }

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<int> order = epoch_order(rng, n, opt.sample_weights);
    double aug_loss_sum = 0.0;
    int aug_batches = 0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int stop = std::min(n, start + cfg.batch_size);
      ModelGrad batch;
      for (int j = start; j < stop; ++j) {
        const int i = order[j];
        ModelGrad g;
        if (opt.augment) {
          const aug::AugmentedSample a =
              aug::random_augment(samples[i].input, samples[i].target,
                                  samples[i].pts, *opt.augment, rng);
          g = model_gradient(res.model,
                             extract_features(a.img, res.model.features),
                             a.gts.maps, cfg.loss_kind);
        } else {
          g = model_gradient(res.model, feats[i], targets[i], cfg.loss_kind);
        }
        accumulate(batch, g);
      }
      scale(batch, 1.0 / (stop - start));
      aug_loss_sum += batch.loss;
      ++aug_batches;
      state.step(res.model, batch, cfg);
    }

    double epoch_loss;
    if (opt.augment) {
      epoch_loss = aug_loss_sum / aug_batches;
    } else {
      epoch_loss = 0.0;
      for (int i = 0; i < n; ++i)
        epoch_loss += loss_and_dlogit(
            targets[i], res.model.predict_features(feats[i]), cfg.loss_kind,
            nullptr);
      epoch_loss /= n;
    }
    res.train_loss.push_back(epoch_loss);
    if (!std::isfinite(epoch_loss))
      throw training_error(epoch, "train: non-finite loss at epoch " +
                                      std::to_string(epoch));

    if (!val_feats.empty()) {
      double vl = 0.0;
      for (size_t i = 0; i < val_feats.size(); ++i)
        vl += loss_and_dlogit(val_targets[i],
                              res.model.predict_features(val_feats[i]),
                              cfg.loss_kind, nullptr);
      res.val_loss.push_back(vl / static_cast<double>(val_feats.size()));
    }
  }
  return res;
}

std::vector<std::vector<int>> stratified_folds(
    const std::vector<std::string>& organ_tags, int k) {
  if (k < 1) throw param_error("stratified_folds: k must be >= 1");
  std::map<std::string, std::vector<int>> groups;
  for (size_t i = 0; i < organ_tags.size(); ++i)
    groups[organ_tags[i]].push_back(static_cast<int>(i));
  std::vector<std::vector<int>> folds(k);
  int next = 0;
  for (const auto& [organ, members] : groups)
    for (int idx : members) folds[next++ % k].push_back(idx);
  return folds;
}

std::vector<TrainResult> train_kfold(const PixelModel& init,
                                     const std::vector<SceneSample>& samples,
                                     const TrainConfig& cfg,
                                     const TrainOptions& opt) {
  cfg.validate();
  if (cfg.k_folds == 1) return {train(init, samples, cfg, opt)};
  if (static_cast<size_t>(cfg.k_folds) > samples.size())
    throw param_error("train_kfold: more folds than samples");

  std::vector<std::string> tags;
  tags.reserve(samples.size());
  for (const SceneSample& s : samples) tags.push_back(s.organ_tag);
  const auto folds = stratified_folds(tags, cfg.k_folds);

  std::vector<TrainResult> out;
  for (int f = 0; f < cfg.k_folds; ++f) {
    std::vector<char> held(samples.size(), 0);
    for (int idx : folds[f]) held[idx] = 1;
    std::vector<SceneSample> tr, va;
    std::vector<double> tr_w;
    for (size_t i = 0; i < samples.size(); ++i) {
      if (held[i]) {
        va.push_back(samples[i]);
      } else {
        tr.push_back(samples[i]);
        if (!opt.sample_weights.empty()) tr_w.push_back(opt.sample_weights[i]);
      }
    }
    TrainOptions fold_opt;
    fold_opt.augment = opt.augment;
    fold_opt.sample_weights = std::move(tr_w);
    fold_opt.validation = &va;
    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = cfg.seed + static_cast<std::uint64_t>(f) + 1;
    out.push_back(train(init, tr, fold_cfg, fold_opt));
  }
  return out;
}

gt::GroundTruthMaps scene_gt(const SynthScene& s, gt::Format f,
                             double sigma_px, bool use_instances) {
  const int h = s.cell_img.height(), w = s.cell_img.width();
  switch (f) {
    case gt::Format::circle:
      return gt::circle_gt(s.annotations, h, w);
    case gt::Format::hard_is:
      return gt::hard_is_gt(s.instances, s.annotations, h, w);
    case gt::Format::soft_is:
      return gt::soft_is_gt(s.annotations,
                            use_instances ? &s.instances : nullptr, h, w,
                            sigma_px);
  }
  throw param_error("scene_gt: unknown format");
}

Raster tissue_target(const LabelMap& tissue_gt) {
  Raster out(tissue_gt.height(), tissue_gt.width(), 2);
  for (int y = 0; y < tissue_gt.height(); ++y)
    for (int x = 0; x < tissue_gt.width(); ++x) {
      const int v = tissue_gt.at(y, x);
      if (v == kTissueBackground)
        out.at(0, y, x) = 1.0;
      else if (v == kTissueCancer)
        out.at(1, y, x) = 1.0;
      else if (v != kTissueUnknown)
        throw data_error("tissue_target: unexpected tissue label " +
                         std::to_string(v));
    }
  return out;
}

Raster model_input(const SynthScene& s, const Raster* tissue_pred) {
  if (!tissue_pred) return s.cell_img;
  return geom::compose_ctm_input(s.cell_img, *tissue_pred, s.registration);
}

Raster predict_map(const PixelModel& m, const Raster& input, bool tta) {
  if (!tta) return m.predict(input);
  return geom::tta_predict(
      [&](const Raster& in) { return m.predict(in); }, input);
}

LossKind default_loss_for(gt::Format f) {
  return f == gt::Format::soft_is ? LossKind::weighted_mse : LossKind::dice;
}

}  // namespace celldet::bench
