#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "celldet/augment.hpp"
#include "celldet/eval.hpp"
#include "celldet/experiments.hpp"
#include "celldet/geometry.hpp"
#include "celldet/postprocess.hpp"
#include "celldet/raster.hpp"
#include "celldet/synth.hpp"
#include "celldet/train.hpp"

// File formats and run configuration: headerless point/detection CSV, PNG
// rasters (8-bit RGB images, 16-bit single-channel maps and label images),
// planar probability-map bundles, metrics tables, and the manifest that
// makes every run reproducible.
namespace celldet::io {

// --- CSV -----------------------------------------------------------------
// annotation rows: x,y,class_id          detection rows: x,y,class_id,conf
PointAnnotations read_annotations_csv(const std::string& path);
void write_annotations_csv(const std::string& path,
                           const PointAnnotations& pts);
std::vector<Detection> read_detections_csv(const std::string& path);
void write_detections_csv(const std::string& path,
                          const std::vector<Detection>& dets);

// --- PNG -----------------------------------------------------------------
void write_rgb_png(const std::string& path, const Raster& img);  // 3 channels
Raster read_rgb_png(const std::string& path);

// single channel quantized as round(p * 65535)
void write_map_png(const std::string& path, const Raster& map);
Raster read_map_png(const std::string& path);

// integer labels 0..65535
void write_label_png(const std::string& path, const LabelMap& labels);
LabelMap read_label_png(const std::string& path);

// multi-channel probability maps: one 16-bit PNG per channel plus
// <stem>.channels.json naming them
void write_prob_maps(const std::string& dir, const std::string& stem,
                     const Raster& maps,
                     const std::vector<std::string>& channel_names = {});
Raster read_prob_maps(const std::string& dir, const std::string& stem);

// --- scenes ----------------------------------------------------------------
// cell.png, tissue.png, annotations.csv, instances.png, instances.json,
// tissue_gt.png, metadata.json under one directory
void write_scene(const std::string& dir, const bench::SynthScene& s);
bench::SynthScene read_scene(const std::string& dir);

// --- run configuration -----------------------------------------------------
struct RunConfig {
  std::uint64_t seed = 0;
  int n_scenes = 12;
  int n_organs = 2;
  bench::SynthParams synth;
  post::PostprocParams postproc;
  aug::AugmentParams augment;
  bench::TrainConfig train;         // cell model
  bench::TrainConfig tissue_train;  // tissue surrogate (cross-entropy)
  bench::FeatureConfig cell_features;
  bench::FeatureConfig tissue_features;
  eval::EvalConfig eval;
  geom::PatchRegistration registration;
  double soft_sigma_px = 15.0;
  double eval_fraction = 0.34;
  std::vector<double> sigmas_um = {1.0, 2.0, 3.0, 4.0};
  std::vector<std::uint64_t> experiment_seeds = {1, 2, 3, 4, 5};
  bool oversample = false;

  RunConfig() {
    tissue_train.loss_kind = bench::LossKind::cross_entropy;
    tissue_train.epochs = 25;
  }

  bench::ExperimentConfig experiment() const;
};

// JSON round trip; load applies the file's fields over the defaults and
// rejects unknown keys.
std::string config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const std::string& json_text);
RunConfig load_config(const std::string& path);

// Trained models (single or fold ensemble) as JSON; doubles round-trip
// exactly, so a reloaded model predicts bit-identically.
std::string models_to_json(const std::vector<bench::PixelModel>& models);
std::vector<bench::PixelModel> models_from_json(const std::string& json_text);

// Environment variable consulted for a default config path.
inline constexpr const char* kConfigEnvVar = "CELLDET_CONFIG";

// --- metrics and tables ------------------------------------------------------
std::string f1_report_json(const eval::MatchResult& m);
std::string group_report_json(const eval::GroupReport& rep);

std::string format_table_json(const bench::FormatTable& t);
std::string format_table_csv(const bench::FormatTable& t);
std::string sigma_table_json(const bench::SigmaTable& t);
std::string sigma_table_csv(const bench::SigmaTable& t);
std::string ctm_table_json(const bench::CtmTable& t);
std::string ctm_table_csv(const bench::CtmTable& t);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

// --- manifest ----------------------------------------------------------------
// config + seed + input digests; no timestamps, so reruns are bit-identical
void write_manifest(const std::string& path, const RunConfig& cfg,
                    const std::string& command,
                    const std::vector<std::string>& input_paths);

// --- rendering -----------------------------------------------------------------
// detection/annotation overlay: class-colored crosses on the image
Raster render_overlay(const Raster& img, const std::vector<Detection>& dets,
                      const PointAnnotations* gt = nullptr);

}  // namespace celldet::io
