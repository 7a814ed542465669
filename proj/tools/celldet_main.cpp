#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "celldet/experiments.hpp"
#include "celldet/geometry.hpp"
#include "celldet/groundtruth.hpp"
#include "celldet/io.hpp"
#include "celldet/postprocess.hpp"
#include "celldet/train.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace celldet;

namespace {

struct Options {
  std::string config_path;  // --config, else $CELLDET_CONFIG, else defaults
  std::optional<std::uint64_t> seed;

  std::string scene_dir;
  std::string scenes_dir;
  std::string out;
  std::string format = "soft_is";
  double sigma_um = -1.0;  // <0: use config soft_sigma_px (pixels)
  int radius = gt::kCircleRadiusPx;
  std::string target = "cell";
  std::string loss = "auto";
  std::string tissue = "none";
  std::string tissue_model_path;
  std::string model_path;
  int folds = 0;  // train: 0 = config value; predict: 0 = all in file
  bool tta = false;
  bool augment = false;
  bool oversample = false;
  std::string mode = "soft";
  std::string dets_path;
  std::string gt_path;
  bool no_gt = false;
  std::string which = "formats";

  io::RunConfig cfg;
  std::string command_line;
  std::vector<std::string> inputs;  // files read, digested into the manifest
};

gt::Format parse_format(const std::string& s) {
  if (s == "circle") return gt::Format::circle;
  if (s == "hard_is") return gt::Format::hard_is;
  if (s == "soft_is") return gt::Format::soft_is;
  throw param_error("unknown format '" + s + "'");
}

const std::vector<std::string> kGtChannelNames = {"background",
                                                  "background_cell",
                                                  "tumor_cell"};

std::vector<std::string> scene_files(const std::string& dir) {
  return {dir + "/cell.png",      dir + "/tissue.png",
          dir + "/annotations.csv", dir + "/instances.png",
          dir + "/instances.json",  dir + "/tissue_gt.png",
          dir + "/metadata.json"};
}

std::vector<std::string> prob_map_files(const std::string& dir,
                                        const std::string& stem) {
  std::vector<std::string> files = {dir + "/" + stem + ".channels.json"};
  const auto index = nlohmann::json::parse(io::read_text_file(files[0]));
  for (const auto& ch : index.at("channels"))
    files.push_back(dir + "/" + ch.at("file").get<std::string>());
  return files;
}

std::vector<std::string> list_scene_dirs(const std::string& root) {
  std::vector<std::string> dirs;
  if (!fs::is_directory(root)) throw io_error("not a directory: " + root);
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && fs::exists(e.path() / "metadata.json"))
      dirs.push_back(e.path().string());
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw data_error("no scene directories under " + root);
  return dirs;
}

void append(std::vector<std::string>& into, std::vector<std::string> more) {
  for (auto& p : more) into.push_back(std::move(p));
}

double soft_sigma_px_for(const Options& o, const geom::PatchRegistration& reg) {
  return o.sigma_um >= 0.0 ? o.sigma_um / reg.cell_mpp : o.cfg.soft_sigma_px;
}

Raster scene_gt_maps(const bench::SynthScene& s, gt::Format fmt, int radius,
                     double sigma_px) {
  const int h = s.cell_img.height(), w = s.cell_img.width();
  switch (fmt) {
    case gt::Format::circle:
      return gt::circle_gt(s.annotations, h, w, radius).maps;
    case gt::Format::hard_is:
      return gt::hard_is_gt(s.instances, s.annotations, h, w, radius).maps;
    case gt::Format::soft_is:
      return gt::soft_is_gt(s.annotations, &s.instances, h, w, sigma_px).maps;
  }
  throw param_error("bad format");
}

// Tissue side of CTM composition for one scene, honoring --tissue.
std::optional<Raster> tissue_input(const Options& o,
                                   const bench::SynthScene& s,
                                   const std::vector<bench::PixelModel>& tms) {
  if (o.tissue == "none") return std::nullopt;
  Raster pred = tms.front().predict(s.tissue_img);
  if (o.tissue == "leaked") pred = geom::leak_tissue_labels(pred, s.tissue_gt);
  return pred;
}

std::vector<bench::PixelModel> load_tissue_models(Options& o) {
  if (o.tissue == "none") return {};
  if (o.tissue_model_path.empty())
    throw param_error("--tissue " + o.tissue + " requires --tissue-model");
  o.inputs.push_back(o.tissue_model_path);
  return io::models_from_json(io::read_text_file(o.tissue_model_path));
}

// ------------------------------------------------------------- subcommands

void cmd_synth(Options& o) {
  const auto scenes = bench::make_scene_set(o.cfg.synth, o.cfg.n_scenes,
                                            o.cfg.n_organs, o.cfg.seed);
  fs::create_directories(o.out);
  for (size_t i = 0; i < scenes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%03zu", i);
    io::write_scene(o.out + "/" + name, scenes[i]);
  }
  io::write_manifest(o.out + "/manifest.json", o.cfg, o.command_line,
                     o.inputs);
  std::cout << "wrote " << scenes.size() << " scenes to " << o.out << "\n";
}

void cmd_gt(Options& o) {
  const auto s = io::read_scene(o.scene_dir);
  append(o.inputs, scene_files(o.scene_dir));
  const gt::Format fmt = parse_format(o.format);
  const Raster maps = scene_gt_maps(s, fmt, o.radius,
                                    soft_sigma_px_for(o, s.registration));
  io::write_prob_maps(o.out, "gt", maps, kGtChannelNames);
  io::write_manifest(o.out + "/manifest.json", o.cfg, o.command_line,
                     o.inputs);
  std::cout << "wrote " << o.format << " ground truth to " << o.out << "\n";
}

void cmd_train(Options& o) {
  const auto dirs = list_scene_dirs(o.scenes_dir);
  std::vector<bench::SynthScene> scenes;
  for (const auto& d : dirs) {
    scenes.push_back(io::read_scene(d));
    append(o.inputs, scene_files(d));
  }
  const auto tissue_models = load_tissue_models(o);

  std::vector<bench::SceneSample> samples;
  bench::TrainConfig tc;
  bench::FeatureConfig fc;
  int n_classes = 0;
  if (o.target == "tissue") {
    tc = o.cfg.tissue_train;
    fc = o.cfg.tissue_features;
    n_classes = 2;
    for (const auto& s : scenes)
      samples.push_back({s.tissue_img,
                         {bench::tissue_target(s.tissue_gt),
                          gt::Format::hard_is},
                         {},
                         s.organ_tag});
  } else if (o.target == "cell") {
    tc = o.cfg.train;
    fc = o.cfg.cell_features;
    fc.include_tissue_channels = o.tissue != "none";
    n_classes = 3;
    const gt::Format fmt = parse_format(o.format);
    tc.loss_kind = bench::default_loss_for(fmt);
    for (const auto& s : scenes) {
      const double sigma_px = soft_sigma_px_for(o, s.registration);
      const auto t = tissue_input(o, s, tissue_models);
      samples.push_back(
          {bench::model_input(s, t ? &*t : nullptr),
           bench::scene_gt(s, fmt, sigma_px), s.annotations, s.organ_tag});
    }
  } else {
    throw param_error("--target must be cell or tissue");
  }
  if (o.loss != "auto") {
    if (o.loss == "dice") tc.loss_kind = bench::LossKind::dice;
    else if (o.loss == "weighted_mse")
      tc.loss_kind = bench::LossKind::weighted_mse;
    else if (o.loss == "cross_entropy")
      tc.loss_kind = bench::LossKind::cross_entropy;
    else
      throw param_error("unknown loss '" + o.loss + "'");
  }
  if (o.folds > 0) tc.k_folds = o.folds;
  tc.seed = o.cfg.seed;

  bench::TrainOptions topt;
  if (o.augment) topt.augment = o.cfg.augment;
  if (o.oversample || o.cfg.oversample) {
    if (o.target == "tissue") {
      std::vector<LabelMap> gts;
      for (const auto& s : scenes) gts.push_back(s.tissue_gt);
      topt.sample_weights = aug::oversample_weights_tissue(gts).weights;
    } else {
      std::vector<PointAnnotations> pts;
      for (const auto& s : scenes) pts.push_back(s.annotations);
      topt.sample_weights = aug::oversample_weights_cells(pts).weights;
    }
  }

  const bench::PixelModel init =
      bench::PixelModel::make(fc, n_classes, o.cfg.seed);
  std::vector<bench::PixelModel> models;
  double train_loss = 0.0;
  if (tc.k_folds <= 1) {
    const auto r = bench::train(init, samples, tc, topt);
    train_loss = r.train_loss.empty() ? 0.0 : r.train_loss.back();
    models.push_back(r.model);
  } else {
    const auto rs = bench::train_kfold(init, samples, tc, topt);
    for (const auto& r : rs) {
      train_loss += r.train_loss.empty() ? 0.0 : r.train_loss.back();
      models.push_back(r.model);
    }
    train_loss /= static_cast<double>(rs.size());
  }
  io::write_text_file(o.out, io::models_to_json(models));
  io::write_manifest(o.out + ".manifest.json", o.cfg, o.command_line,
                     o.inputs);
  std::cout << "trained " << models.size() << " model(s), final loss "
            << train_loss << ", wrote " << o.out << "\n";
}

void cmd_predict(Options& o) {
  const auto s = io::read_scene(o.scene_dir);
  append(o.inputs, scene_files(o.scene_dir));
  o.inputs.push_back(o.model_path);
  auto models = io::models_from_json(io::read_text_file(o.model_path));
  if (o.folds > 0) {
    if (static_cast<size_t>(o.folds) > models.size())
      throw param_error("--folds " + std::to_string(o.folds) +
                        " but model file holds " +
                        std::to_string(models.size()));
    models.resize(o.folds);
  }
  const auto tissue_models = load_tissue_models(o);
  const auto t = tissue_input(o, s, tissue_models);
  const Raster input = bench::model_input(s, t ? &*t : nullptr);

  std::vector<Raster> preds;
  preds.reserve(models.size());
  for (const auto& m : models)
    preds.push_back(bench::predict_map(m, input, o.tta));
  const Raster pred = geom::average_predictions(preds);
  io::write_prob_maps(o.out, "pred", pred, kGtChannelNames);
  io::write_manifest(o.out + "/manifest.json", o.cfg, o.command_line,
                     o.inputs);
  std::cout << "wrote prediction (" << models.size() << " fold(s), tta="
            << (o.tta ? "on" : "off") << ") to " << o.out << "\n";
}

void cmd_postprocess(Options& o) {
  append(o.inputs, prob_map_files(o.scene_dir, "pred"));
  const Raster pred = io::read_prob_maps(o.scene_dir, "pred");
  std::vector<Detection> dets;
  if (o.mode == "soft")
    dets = post::detect_cells_soft(pred, o.cfg.postproc);
  else if (o.mode == "hard")
    dets = post::detect_cells_hard(pred, o.cfg.postproc);
  else
    throw param_error("--mode must be soft or hard");
  io::write_detections_csv(o.out, dets);
  io::write_manifest(o.out + ".manifest.json", o.cfg, o.command_line,
                     o.inputs);
  std::cout << "wrote " << dets.size() << " detections to " << o.out << "\n";
}

void cmd_eval(Options& o) {
  o.inputs.push_back(o.dets_path);
  o.inputs.push_back(o.gt_path);
  const auto dets = io::read_detections_csv(o.dets_path);
  const auto gts = io::read_annotations_csv(o.gt_path);
  const auto match = eval::match_detections(dets, gts, o.cfg.eval);
  const std::string report = io::f1_report_json(match);
  std::cout << report;
  if (!o.out.empty()) {
    io::write_text_file(o.out, report);
    io::write_manifest(o.out + ".manifest.json", o.cfg, o.command_line,
                       o.inputs);
  }
}

void cmd_experiment(Options& o) {
  const auto scenes = bench::make_scene_set(o.cfg.synth, o.cfg.n_scenes,
                                            o.cfg.n_organs, o.cfg.seed);
  const auto ecfg = o.cfg.experiment();
  fs::create_directories(o.out);
  if (o.which == "formats") {
    const auto t =
        bench::run_format_experiment(scenes, o.cfg.experiment_seeds, ecfg);
    io::write_text_file(o.out + "/formats.json", io::format_table_json(t));
    io::write_text_file(o.out + "/formats.csv", io::format_table_csv(t));
  } else if (o.which == "sigma") {
    const auto t = bench::run_sigma_ablation(scenes, o.cfg.sigmas_um,
                                             o.cfg.experiment_seeds, ecfg);
    io::write_text_file(o.out + "/sigma.json", io::sigma_table_json(t));
    io::write_text_file(o.out + "/sigma.csv", io::sigma_table_csv(t));
  } else if (o.which == "ctm") {
    const auto t =
        bench::run_ctm_experiment(scenes, o.cfg.experiment_seeds, ecfg);
    io::write_text_file(o.out + "/ctm.json", io::ctm_table_json(t));
    io::write_text_file(o.out + "/ctm.csv", io::ctm_table_csv(t));
  } else {
    throw param_error("--which must be formats, sigma, or ctm");
  }
  io::write_manifest(o.out + "/manifest.json", o.cfg, o.command_line,
                     o.inputs);
  std::cout << "wrote " << o.which << " tables to " << o.out << "\n";
}

void cmd_render(Options& o) {
  const auto s = io::read_scene(o.scene_dir);
  append(o.inputs, scene_files(o.scene_dir));
  o.inputs.push_back(o.dets_path);
  const auto dets = io::read_detections_csv(o.dets_path);
  const Raster overlay =
      io::render_overlay(s.cell_img, dets, o.no_gt ? nullptr : &s.annotations);
  io::write_rgb_png(o.out, overlay);
  io::write_manifest(o.out + ".manifest.json", o.cfg, o.command_line,
                     o.inputs);
  std::cout << "wrote overlay to " << o.out << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  for (int i = 0; i < argc; ++i)
    o.command_line += (i ? " " : "") + std::string(argv[i]);

  CLI::App app{"celldet: synthetic cell-detection pipeline"};
  app.require_subcommand(1);
  app.add_option("--config", o.config_path,
                 "run configuration JSON (default: $CELLDET_CONFIG)");
  std::uint64_t seed_opt = 0;
  auto* seed_flag =
      app.add_option("--seed", seed_opt, "override the config seed");

  auto sub = [&](const char* name, const char* help) {
    CLI::App* s = app.add_subcommand(name, help);
    s->fallthrough();  // lets --config / --seed follow the subcommand
    return s;
  };

  auto* synth = sub("synth", "generate a synthetic scene set");
  synth->add_option("--out", o.out, "output directory")->required();

  auto* gtc = sub("gt", "ground-truth maps for one scene");
  gtc->add_option("--scene", o.scene_dir, "scene directory")->required();
  gtc->add_option("--format", o.format, "circle | hard_is | soft_is");
  gtc->add_option("--sigma-um", o.sigma_um, "soft-IS sigma in microns");
  gtc->add_option("--radius", o.radius, "circle radius in pixels");
  gtc->add_option("--out", o.out, "output directory")->required();

  auto* train = sub("train", "train a pixel model");
  train->add_option("--scenes", o.scenes_dir, "scene-set directory")
      ->required();
  train->add_option("--target", o.target, "cell | tissue");
  train->add_option("--format", o.format, "cell GT format");
  train->add_option("--sigma-um", o.sigma_um, "soft-IS sigma in microns");
  train->add_option("--loss", o.loss,
                    "dice | weighted_mse | cross_entropy (default: by format)");
  train->add_option("--tissue", o.tissue, "none | predicted | leaked");
  train->add_option("--tissue-model", o.tissue_model_path,
                    "tissue model JSON for --tissue");
  train->add_option("--folds", o.folds, "k-fold models (0: config value)");
  train->add_flag("--augment", o.augment, "random augmentation");
  train->add_flag("--oversample", o.oversample, "minority oversampling");
  train->add_option("--out", o.out, "model JSON path")->required();

  auto* predict = sub("predict", "predict maps for one scene");
  predict->add_option("--scene", o.scene_dir, "scene directory")->required();
  predict->add_option("--model", o.model_path, "model JSON")->required();
  predict->add_flag("--tta", o.tta, "test-time augmentation (D4 average)");
  predict->add_option("--tissue", o.tissue, "none | predicted | leaked");
  predict->add_option("--tissue-model", o.tissue_model_path,
                      "tissue model JSON for --tissue");
  predict->add_option("--folds", o.folds, "use first k fold models (0: all)");
  predict->add_option("--out", o.out, "output directory")->required();

  auto* postc = sub("postprocess", "detections from maps");
  postc->add_option("--pred", o.scene_dir, "prediction directory")->required();
  postc->add_option("--mode", o.mode, "soft | hard");
  postc->add_option("--out", o.out, "detections CSV path")->required();

  auto* evalc = sub("eval", "score detections against points");
  evalc->add_option("--dets", o.dets_path, "detections CSV")->required();
  evalc->add_option("--gt", o.gt_path, "annotation CSV")->required();
  evalc->add_option("--out", o.out, "also write the JSON report here");

  auto* expc = sub("experiment", "paper-shaped experiments");
  expc->add_option("--which", o.which, "formats | sigma | ctm");
  expc->add_option("--out", o.out, "output directory")->required();

  auto* render = sub("render", "overlay detections on a scene");
  render->add_option("--scene", o.scene_dir, "scene directory")->required();
  render->add_option("--dets", o.dets_path, "detections CSV")->required();
  render->add_flag("--no-gt", o.no_gt, "omit ground-truth crosses");
  render->add_option("--out", o.out, "overlay PNG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << nlohmann::json{{"error", {{"type", "usage"},
                                           {"message", e.what()}}}}
                     .dump()
              << "\n";
    return e.get_exit_code();
  }

  try {
    if (o.config_path.empty())
      if (const char* env = std::getenv(io::kConfigEnvVar)) o.config_path = env;
    if (!o.config_path.empty()) {
      o.cfg = io::load_config(o.config_path);
      o.inputs.push_back(o.config_path);
    }
    if (seed_flag->count() > 0) o.cfg.seed = seed_opt;

    if (synth->parsed()) cmd_synth(o);
    else if (gtc->parsed()) cmd_gt(o);
    else if (train->parsed()) cmd_train(o);
    else if (predict->parsed()) cmd_predict(o);
    else if (postc->parsed()) cmd_postprocess(o);
    else if (evalc->parsed()) cmd_eval(o);
    else if (expc->parsed()) cmd_experiment(o);
    else if (render->parsed()) cmd_render(o);
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error",
                                 {{"type", "runtime"},
                                  {"message", e.what()}}}}
                     .dump()
              << "\n";
    return 1;
  }
  return 0;
}
