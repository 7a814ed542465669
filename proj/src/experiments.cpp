#include "celldet/experiments.hpp"

#include <algorithm>
#include <cmath>

#include "celldet/geometry.hpp"

namespace celldet::bench {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + tag * 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

SeedStat make_stat(std::vector<double> xs) {
  SeedStat s;
  s.per_seed = std::move(xs);
  if (s.per_seed.empty()) return s;
  for (double v : s.per_seed) s.mean += v;
  s.mean /= static_cast<double>(s.per_seed.size());
  if (s.per_seed.size() > 1) {
    double acc = 0.0;
    for (double v : s.per_seed) acc += (v - s.mean) * (v - s.mean);
    s.stdev = std::sqrt(acc / static_cast<double>(s.per_seed.size() - 1));
  }
  return s;
}

PooledCounts pool_counts(const std::vector<eval::MatchResult>& rs) {
  PooledCounts p;
  for (const auto& r : rs)
    for (const auto& [cls, cc] : r.per_class) {
      p.tp += cc.tp;
      p.fp += cc.fp;
      p.fn += cc.fn;
    }
  return p;
}

struct VariantOutcome {
  double f1 = 0.0;  // micro mean F1 over eval scenes
  std::map<std::string, double> organ_f1;
  std::vector<eval::MatchResult> per_scene;
};

VariantOutcome eval_variant(const PixelModel& m,
                            const std::vector<SynthScene>& scenes,
                            const std::vector<int>& ev_idx,
                            const std::vector<Raster>* tissue, bool tta,
                            bool hard_pipeline, const ExperimentConfig& cfg) {
  VariantOutcome o;
  std::vector<std::string> tags;
  for (int i : ev_idx) {
    const Raster* tp = tissue ? &(*tissue)[i] : nullptr;
    const Raster pred = predict_map(m, model_input(scenes[i], tp), tta);
    const std::vector<Detection> dets =
        hard_pipeline ? post::detect_cells_hard(pred, cfg.postproc)
                      : post::detect_cells_soft(pred, cfg.postproc);
    o.per_scene.push_back(
        eval::match_detections(dets, scenes[i].annotations, cfg.eval));
    tags.push_back(scenes[i].organ_tag);
  }
  const eval::GroupReport rep = eval::group_report(o.per_scene, tags);
  o.f1 = rep.overall.micro_f1;
  for (const eval::GroupRow& row : rep.organs)
    o.organ_f1[row.organ] = row.macro_f1;
  return o;
}

PixelModel train_cell_model(const std::vector<SynthScene>& scenes,
                            const std::vector<int>& tr_idx, gt::Format fmt,
                            double sigma_px, const std::vector<Raster>* tissue,
                            std::uint64_t init_seed, std::uint64_t train_seed,
                            const ExperimentConfig& cfg,
                            bool use_instances = true) {
  FeatureConfig fc = cfg.cell_features;
  fc.include_tissue_channels = tissue != nullptr;

  std::vector<SceneSample> samples;
  samples.reserve(tr_idx.size());
  for (int i : tr_idx) {
    const Raster* tp = tissue ? &(*tissue)[i] : nullptr;
    samples.push_back({model_input(scenes[i], tp),
                       scene_gt(scenes[i], fmt, sigma_px, use_instances),
                       scenes[i].annotations, scenes[i].organ_tag});
  }

  TrainConfig tc = cfg.cell_train;
  tc.loss_kind = default_loss_for(fmt);
  tc.seed = train_seed;
  TrainOptions opt;
  if (cfg.oversample) {
    std::vector<PointAnnotations> pts;
    for (const SceneSample& s : samples) pts.push_back(s.pts);
    opt.sample_weights = aug::oversample_weights_cells(pts).weights;
  }
  return train(PixelModel::make(fc, 3, init_seed), samples, tc, opt).model;
}

}  // namespace

void ExperimentConfig::validate() const {
  cell_train.validate();
  tissue_train.validate();
  cell_features.validate();
  tissue_features.validate();
  postproc.validate();
  eval.validate();
  if (!(soft_sigma_px > 0.0))
    throw param_error("ExperimentConfig: soft_sigma_px must be positive");
  if (eval_fraction <= 0.0 || eval_fraction >= 1.0)
    throw param_error("ExperimentConfig: eval_fraction must be in (0, 1)");
}

std::vector<SynthScene> make_scene_set(const SynthParams& base, int n_scenes,
                                       int n_organs, std::uint64_t seed) {
  if (n_scenes < 1) throw param_error("make_scene_set: n_scenes must be >= 1");
  if (n_organs < 1) throw param_error("make_scene_set: n_organs must be >= 1");
  std::vector<SynthScene> scenes;
  scenes.reserve(static_cast<size_t>(n_scenes));
  for (int i = 0; i < n_scenes; ++i) {
    SynthParams p = base;
    p.organ_tag = "organ" + std::to_string(i % n_organs);
    Rng rng(mix_seed(seed, 1000 + static_cast<std::uint64_t>(i)));
    scenes.push_back(synth_scene(rng, p));
  }
  return scenes;
}

std::pair<std::vector<int>, std::vector<int>> train_eval_split(
    const std::vector<SynthScene>& scenes, double eval_fraction) {
  std::map<std::string, std::vector<int>> groups;
  for (size_t i = 0; i < scenes.size(); ++i)
    groups[scenes[i].organ_tag].push_back(static_cast<int>(i));

  std::vector<int> tr, ev;
  for (const auto& [organ, members] : groups) {
    const int n = static_cast<int>(members.size());
    int n_ev = n < 2 ? 0
                     : std::clamp(static_cast<int>(std::llround(
                                      n * eval_fraction)),
                                  1, n - 1);
    for (int j = 0; j < n; ++j)
      (j < n - n_ev ? tr : ev).push_back(members[j]);
  }
  std::sort(tr.begin(), tr.end());
  std::sort(ev.begin(), ev.end());
  if (tr.empty() || ev.empty())
    throw param_error(
        "train_eval_split: need at least one multi-scene organ group");
  return {tr, ev};
}

FormatTable run_format_experiment(const std::vector<SynthScene>& scenes,
                                  const std::vector<std::uint64_t>& seeds,
                                  const ExperimentConfig& cfg) {
  cfg.validate();
  if (seeds.empty()) throw param_error("run_format_experiment: no seeds");
  const auto [tr_idx, ev_idx] = train_eval_split(scenes, cfg.eval_fraction);

  const std::vector<std::pair<gt::Format, std::string>> formats = {
      {gt::Format::circle, "circle"},
      {gt::Format::hard_is, "hard_is"},
      {gt::Format::soft_is, "soft_is"}};

  FormatTable table;
  table.seeds = seeds;
  for (size_t fi = 0; fi < formats.size(); ++fi) {
    const auto& [fmt, name] = formats[fi];
    std::vector<double> per_seed;
    for (std::uint64_t seed : seeds) {
      const PixelModel m = train_cell_model(
          scenes, tr_idx, fmt, cfg.soft_sigma_px, nullptr,
          mix_seed(seed, 100 + fi), mix_seed(seed, 200 + fi), cfg);
      per_seed.push_back(eval_variant(m, scenes, ev_idx, nullptr, false,
                                      fmt == gt::Format::hard_is, cfg)
                             .f1);
    }
    table.rows.push_back({fmt, name, make_stat(std::move(per_seed))});
  }
  return table;
}

SigmaTable run_sigma_ablation(const std::vector<SynthScene>& scenes,
                              const std::vector<double>& sigmas_um,
                              const std::vector<std::uint64_t>& seeds,
                              const ExperimentConfig& cfg) {
  cfg.validate();
  if (seeds.empty()) throw param_error("run_sigma_ablation: no seeds");
  if (sigmas_um.empty()) throw param_error("run_sigma_ablation: no sigmas");
  for (double s : sigmas_um)
    if (!(s > 0.0)) throw param_error("run_sigma_ablation: sigmas must be > 0");
  const auto [tr_idx, ev_idx] = train_eval_split(scenes, cfg.eval_fraction);
  const double cell_mpp = scenes.front().registration.cell_mpp;

  SigmaTable table;
  table.seeds = seeds;
  for (size_t si = 0; si < sigmas_um.size(); ++si) {
    SigmaRow row;
    row.sigma_um = sigmas_um[si];
    const double sigma_px = sigmas_um[si] / cell_mpp;
    std::vector<double> f1s, precs, recs;
    for (std::uint64_t seed : seeds) {
      // point Gaussians without instance support: sigma is the variable
      const PixelModel m = train_cell_model(
          scenes, tr_idx, gt::Format::soft_is, sigma_px, nullptr,
          mix_seed(seed, 300 + si), mix_seed(seed, 400 + si), cfg, false);
      const VariantOutcome out =
          eval_variant(m, scenes, ev_idx, nullptr, false, false, cfg);
      const PooledCounts c = pool_counts(out.per_scene);
      row.counts_per_seed.push_back(c);
      f1s.push_back(c.tp + c.fp + c.fn == 0
                        ? 0.0
                        : 2.0 * c.tp / static_cast<double>(2 * c.tp + c.fp +
                                                           c.fn));
      precs.push_back(c.tp + c.fp == 0
                          ? 0.0
                          : static_cast<double>(c.tp) / (c.tp + c.fp));
      recs.push_back(c.tp + c.fn == 0
                         ? 0.0
                         : static_cast<double>(c.tp) / (c.tp + c.fn));
    }
    row.f1 = make_stat(std::move(f1s));
    row.precision = make_stat(std::move(precs));
    row.recall = make_stat(std::move(recs));
    table.rows.push_back(std::move(row));
  }
  return table;
}

CtmTable run_ctm_experiment(const std::vector<SynthScene>& scenes,
                            const std::vector<std::uint64_t>& seeds,
                            const ExperimentConfig& cfg) {
  cfg.validate();
  if (seeds.empty()) throw param_error("run_ctm_experiment: no seeds");
  const auto [tr_idx, ev_idx] = train_eval_split(scenes, cfg.eval_fraction);

  CtmTable table;
  table.seeds = seeds;
  for (int i : ev_idx) ++table.organ_counts[scenes[i].organ_tag];

  const std::vector<std::string> variants = {"cell-only", "SoftCTM",
                                             "SoftCTM+TTA", "TLLM",
                                             "TLLM+TTA"};
  std::map<std::string, std::vector<double>> f1s;
  std::map<std::string, std::map<std::string, double>> organ_sums;

  for (std::uint64_t seed : seeds) {
    // tissue surrogate, trained with cross-entropy on the tissue patches
    std::vector<SceneSample> tsamples;
    for (int i : tr_idx)
      tsamples.push_back({scenes[i].tissue_img,
                          {tissue_target(scenes[i].tissue_gt),
                           gt::Format::hard_is},
                          {},
                          scenes[i].organ_tag});
    TrainConfig tcfg = cfg.tissue_train;
    tcfg.seed = mix_seed(seed, 8);
    const PixelModel tissue_model =
        train(PixelModel::make(cfg.tissue_features, 2, mix_seed(seed, 7)),
              tsamples, tcfg)
            .model;

    std::vector<Raster> predicted, leaked;
    predicted.reserve(scenes.size());
    leaked.reserve(scenes.size());
    for (const SynthScene& s : scenes) {
      predicted.push_back(tissue_model.predict(s.tissue_img));
      leaked.push_back(geom::leak_tissue_labels(predicted.back(), s.tissue_gt));
    }

    const PixelModel cell_only = train_cell_model(
        scenes, tr_idx, gt::Format::soft_is, cfg.soft_sigma_px, nullptr,
        mix_seed(seed, 10), mix_seed(seed, 11), cfg);
    const PixelModel soft_ctm = train_cell_model(
        scenes, tr_idx, gt::Format::soft_is, cfg.soft_sigma_px, &predicted,
        mix_seed(seed, 20), mix_seed(seed, 21), cfg);
    const PixelModel tllm = train_cell_model(
        scenes, tr_idx, gt::Format::soft_is, cfg.soft_sigma_px, &leaked,
        mix_seed(seed, 30), mix_seed(seed, 31), cfg);

    const std::vector<VariantOutcome> outs = {
        eval_variant(cell_only, scenes, ev_idx, nullptr, false, false, cfg),
        eval_variant(soft_ctm, scenes, ev_idx, &predicted, false, false, cfg),
        eval_variant(soft_ctm, scenes, ev_idx, &predicted, true, false, cfg),
        eval_variant(tllm, scenes, ev_idx, &leaked, false, false, cfg),
        eval_variant(tllm, scenes, ev_idx, &leaked, true, false, cfg)};
    for (size_t v = 0; v < variants.size(); ++v) {
      f1s[variants[v]].push_back(outs[v].f1);
      for (const auto& [organ, f1] : outs[v].organ_f1)
        organ_sums[variants[v]][organ] += f1;
    }
  }

  for (const std::string& v : variants) {
    CtmRow row;
    row.variant = v;
    row.f1 = make_stat(std::move(f1s[v]));
    for (const auto& [organ, sum] : organ_sums[v])
      row.per_organ_f1[organ] = sum / static_cast<double>(seeds.size());
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace celldet::bench
