#include "celldet/io.hpp"

#include <png.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "celldet/sha256.hpp"
#include "json.hpp"

namespace celldet::io {

namespace fs = std::filesystem;
using njson = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------- helpers

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_fixed(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

int parse_int(const std::string& s, const std::string& where) {
  int v = 0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && *b == ' ') ++b;
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e)
    throw data_error(where + ": not an integer: '" + s + "'");
  return v;
}

double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && *b == ' ') ++b;
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e || !std::isfinite(v))
    throw data_error(where + ": not a finite number: '" + s + "'");
  return v;
}

void check_cell_class(int cls, const std::string& where) {
  if (cls != kBackgroundCell && cls != kTumorCell)
    throw data_error(where + ": class_id " + std::to_string(cls) +
                     " not in {1, 2}");
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

// ---------------------------------------------------------------- png core

struct PngCloser {
  FILE* fp = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  bool writing = false;
  ~PngCloser() {
    if (png) {
      if (writing)
        png_destroy_write_struct(&png, info ? &info : nullptr);
      else
        png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    }
    if (fp) std::fclose(fp);
  }
};

void write_png_bytes(const std::string& path, int h, int w, int bit_depth,
                     int color_type, const std::vector<std::uint8_t>& bytes,
                     size_t stride) {
  PngCloser c;
  c.writing = true;
  c.fp = std::fopen(path.c_str(), "wb");
  if (!c.fp) throw io_error("cannot open for write: " + path);
  c.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                  nullptr);
  if (!c.png) throw io_error("png_create_write_struct failed");
  c.info = png_create_info_struct(c.png);
  if (!c.info) throw io_error("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(c.png))) throw io_error("png write failed: " + path);

  png_init_io(c.png, c.fp);
  png_set_IHDR(c.png, c.info, static_cast<png_uint_32>(w),
               static_cast<png_uint_32>(h), bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(c.png, c.info);
  for (int y = 0; y < h; ++y)
    png_write_row(c.png, const_cast<png_bytep>(bytes.data() + y * stride));
  png_write_end(c.png, nullptr);
}

// Reads a PNG whole; returns rows packed at `stride` bytes. Checks the
// exact bit depth / color type we write.
std::vector<std::uint8_t> read_png_bytes(const std::string& path,
                                         int expect_depth, int expect_color,
                                         int channels, int* out_h,
                                         int* out_w) {
  PngCloser c;
  c.fp = std::fopen(path.c_str(), "rb");
  if (!c.fp) throw io_error("cannot open " + path);
  c.png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!c.png) throw io_error("png_create_read_struct failed");
  c.info = png_create_info_struct(c.png);
  if (!c.info) throw io_error("png_create_info_struct failed");
  if (setjmp(png_jmpbuf(c.png))) throw io_error("png read failed: " + path);

  png_init_io(c.png, c.fp);
  png_read_info(c.png, c.info);
  const int w = static_cast<int>(png_get_image_width(c.png, c.info));
  const int h = static_cast<int>(png_get_image_height(c.png, c.info));
  const int depth = png_get_bit_depth(c.png, c.info);
  const int color = png_get_color_type(c.png, c.info);
  if (depth != expect_depth || color != expect_color)
    throw data_error(path + ": expected " + std::to_string(expect_depth) +
                     "-bit color type " + std::to_string(expect_color) +
                     ", got " + std::to_string(depth) + "-bit type " +
                     std::to_string(color));

  const size_t stride =
      static_cast<size_t>(w) * channels * (expect_depth / 8);
  std::vector<std::uint8_t> bytes(stride * h);
  for (int y = 0; y < h; ++y)
    png_read_row(c.png, bytes.data() + y * stride, nullptr);
  *out_h = h;
  *out_w = w;
  return bytes;
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
}
void put_u16(std::uint8_t* p, std::uint16_t v) {
  p[0] = static_cast<std::uint8_t>(v >> 8);
  p[1] = static_cast<std::uint8_t>(v & 0xff);
}

std::vector<std::uint16_t> raster_to_u16(const Raster& map) {
  require_single_channel(map, "write_map_png");
  std::vector<std::uint16_t> q(map.plane_size());
  for (size_t i = 0; i < q.size(); ++i) {
    const double v = std::clamp(map.data()[i], 0.0, 1.0);
    q[i] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
  }
  return q;
}

// ------------------------------------------------------------ json config

void check_keys(const njson& j, const std::string& ctx,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw data_error("config: '" + ctx + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw data_error("config: unknown key '" + ctx + key + "'");
  }
}

bench::LossKind loss_from_string(const std::string& s) {
  if (s == "dice") return bench::LossKind::dice;
  if (s == "weighted_mse") return bench::LossKind::weighted_mse;
  if (s == "cross_entropy") return bench::LossKind::cross_entropy;
  throw data_error("config: unknown loss_kind '" + s + "'");
}
std::string loss_to_string(bench::LossKind k) {
  switch (k) {
    case bench::LossKind::dice: return "dice";
    case bench::LossKind::weighted_mse: return "weighted_mse";
    case bench::LossKind::cross_entropy: return "cross_entropy";
  }
  return "dice";
}
bench::Optimizer opt_from_string(const std::string& s) {
  if (s == "sgd") return bench::Optimizer::sgd;
  if (s == "adam") return bench::Optimizer::adam;
  throw data_error("config: unknown optimizer '" + s + "'");
}
std::string opt_to_string(bench::Optimizer o) {
  return o == bench::Optimizer::sgd ? "sgd" : "adam";
}

njson synth_to_json(const bench::SynthParams& p) {
  return njson{{"cell_hw", p.cell_hw},
               {"n_cells", p.n_cells},
               {"min_separation_px", p.min_separation_px},
               {"rho", p.rho},
               {"cancer_fraction", p.cancer_fraction},
               {"noise_sd", p.noise_sd},
               {"class_color_gap", p.class_color_gap},
               {"cell_region_tint", p.cell_region_tint},
               {"intensity_jitter", p.intensity_jitter},
               {"nucleus_r_lo", p.nucleus_r_lo},
               {"nucleus_r_hi", p.nucleus_r_hi},
               {"unknown_border_px", p.unknown_border_px},
               {"organ_tag", p.organ_tag}};
}
void synth_from_json(const njson& j, bench::SynthParams& p) {
  check_keys(j, "synth.",
             {"cell_hw", "n_cells", "min_separation_px", "rho",
              "cancer_fraction", "noise_sd", "class_color_gap",
              "cell_region_tint", "intensity_jitter", "nucleus_r_lo",
              "nucleus_r_hi", "unknown_border_px", "organ_tag"});
  p.cell_hw = j.value("cell_hw", p.cell_hw);
  p.n_cells = j.value("n_cells", p.n_cells);
  p.min_separation_px = j.value("min_separation_px", p.min_separation_px);
  p.rho = j.value("rho", p.rho);
  p.cancer_fraction = j.value("cancer_fraction", p.cancer_fraction);
  p.noise_sd = j.value("noise_sd", p.noise_sd);
  p.class_color_gap = j.value("class_color_gap", p.class_color_gap);
  p.cell_region_tint = j.value("cell_region_tint", p.cell_region_tint);
  p.intensity_jitter = j.value("intensity_jitter", p.intensity_jitter);
  p.nucleus_r_lo = j.value("nucleus_r_lo", p.nucleus_r_lo);
  p.nucleus_r_hi = j.value("nucleus_r_hi", p.nucleus_r_hi);
  p.unknown_border_px = j.value("unknown_border_px", p.unknown_border_px);
  p.organ_tag = j.value("organ_tag", p.organ_tag);
}

njson postproc_to_json(const post::PostprocParams& p) {
  return njson{{"blur_sigma_px", p.blur_sigma_px},
               {"min_distance_px", p.min_distance_px},
               {"peak_threshold", p.peak_threshold},
               {"min_area_px", p.min_area_px}};
}
void postproc_from_json(const njson& j, post::PostprocParams& p) {
  check_keys(j, "postproc.",
             {"blur_sigma_px", "min_distance_px", "peak_threshold",
              "min_area_px"});
  p.blur_sigma_px = j.value("blur_sigma_px", p.blur_sigma_px);
  p.min_distance_px = j.value("min_distance_px", p.min_distance_px);
  p.peak_threshold = j.value("peak_threshold", p.peak_threshold);
  p.min_area_px = j.value("min_area_px", p.min_area_px);
}

njson augment_to_json(const aug::AugmentParams& p) {
  return njson{{"rescale_range", p.rescale_range},
               {"crop_hw", p.crop_hw},
               {"brightness_contrast_range", p.brightness_contrast_range},
               {"per_aug_probability", p.per_aug_probability},
               {"seed", p.seed}};
}
void augment_from_json(const njson& j, aug::AugmentParams& p) {
  check_keys(j, "augment.",
             {"rescale_range", "crop_hw", "brightness_contrast_range",
              "per_aug_probability", "seed"});
  p.rescale_range = j.value("rescale_range", p.rescale_range);
  p.crop_hw = j.value("crop_hw", p.crop_hw);
  p.brightness_contrast_range =
      j.value("brightness_contrast_range", p.brightness_contrast_range);
  p.per_aug_probability =
      j.value("per_aug_probability", p.per_aug_probability);
  p.seed = j.value("seed", p.seed);
}

njson train_to_json(const bench::TrainConfig& t) {
  return njson{{"loss_kind", loss_to_string(t.loss_kind)},
               {"epochs", t.epochs},
               {"learning_rate", t.learning_rate},
               {"batch_size", t.batch_size},
               {"optimizer", opt_to_string(t.optimizer)},
               {"seed", t.seed},
               {"k_folds", t.k_folds},
               {"weight_decay", t.weight_decay}};
}
void train_from_json(const njson& j, const std::string& ctx,
                     bench::TrainConfig& t) {
  check_keys(j, ctx,
             {"loss_kind", "epochs", "learning_rate", "batch_size",
              "optimizer", "seed", "k_folds", "weight_decay"});
  if (j.contains("loss_kind"))
    t.loss_kind = loss_from_string(j["loss_kind"].get<std::string>());
  t.epochs = j.value("epochs", t.epochs);
  t.learning_rate = j.value("learning_rate", t.learning_rate);
  t.batch_size = j.value("batch_size", t.batch_size);
  if (j.contains("optimizer"))
    t.optimizer = opt_from_string(j["optimizer"].get<std::string>());
  t.seed = j.value("seed", t.seed);
  t.k_folds = j.value("k_folds", t.k_folds);
  t.weight_decay = j.value("weight_decay", t.weight_decay);
}

njson features_to_json(const bench::FeatureConfig& f) {
  return njson{{"blur_sigmas", f.blur_sigmas},
               {"color_channels", f.color_channels},
               {"include_tissue_channels", f.include_tissue_channels},
               {"tissue_channels", f.tissue_channels}};
}
void features_from_json(const njson& j, const std::string& ctx,
                        bench::FeatureConfig& f) {
  check_keys(j, ctx,
             {"blur_sigmas", "color_channels", "include_tissue_channels",
              "tissue_channels"});
  if (j.contains("blur_sigmas"))
    f.blur_sigmas = j["blur_sigmas"].get<std::vector<double>>();
  f.color_channels = j.value("color_channels", f.color_channels);
  f.include_tissue_channels =
      j.value("include_tissue_channels", f.include_tissue_channels);
  f.tissue_channels = j.value("tissue_channels", f.tissue_channels);
}

njson eval_to_json(const eval::EvalConfig& e) {
  return njson{{"match_radius_px", e.match_radius_px}, {"classes", e.classes}};
}
void eval_from_json(const njson& j, eval::EvalConfig& e) {
  check_keys(j, "eval.", {"match_radius_px", "classes"});
  e.match_radius_px = j.value("match_radius_px", e.match_radius_px);
  if (j.contains("classes"))
    e.classes = j["classes"].get<std::vector<int>>();
}

njson registration_to_json(const geom::PatchRegistration& r) {
  return njson{{"tissue_mpp", r.tissue_mpp},
               {"cell_mpp", r.cell_mpp},
               {"cell_offset_x", r.cell_offset_x},
               {"cell_offset_y", r.cell_offset_y},
               {"cell_extent_w", r.cell_extent_w},
               {"cell_extent_h", r.cell_extent_h}};
}
void registration_from_json(const njson& j, geom::PatchRegistration& r) {
  check_keys(j, "registration.",
             {"tissue_mpp", "cell_mpp", "cell_offset_x", "cell_offset_y",
              "cell_extent_w", "cell_extent_h"});
  r.tissue_mpp = j.value("tissue_mpp", r.tissue_mpp);
  r.cell_mpp = j.value("cell_mpp", r.cell_mpp);
  r.cell_offset_x = j.value("cell_offset_x", r.cell_offset_x);
  r.cell_offset_y = j.value("cell_offset_y", r.cell_offset_y);
  r.cell_extent_w = j.value("cell_extent_w", r.cell_extent_w);
  r.cell_extent_h = j.value("cell_extent_h", r.cell_extent_h);
}

njson config_to_njson(const RunConfig& c) {
  njson j;
  j["seed"] = c.seed;
  j["n_scenes"] = c.n_scenes;
  j["n_organs"] = c.n_organs;
  j["synth"] = synth_to_json(c.synth);
  j["postproc"] = postproc_to_json(c.postproc);
  j["augment"] = augment_to_json(c.augment);
  j["train"] = train_to_json(c.train);
  j["tissue_train"] = train_to_json(c.tissue_train);
  j["cell_features"] = features_to_json(c.cell_features);
  j["tissue_features"] = features_to_json(c.tissue_features);
  j["eval"] = eval_to_json(c.eval);
  j["registration"] = registration_to_json(c.registration);
  j["soft_sigma_px"] = c.soft_sigma_px;
  j["eval_fraction"] = c.eval_fraction;
  j["sigmas_um"] = c.sigmas_um;
  j["experiment_seeds"] = c.experiment_seeds;
  j["oversample"] = c.oversample;
  return j;
}

RunConfig config_from_njson(const njson& j) {
  RunConfig c;
  check_keys(j, "",
             {"seed", "n_scenes", "n_organs", "synth", "postproc", "augment",
              "train", "tissue_train", "cell_features", "tissue_features",
              "eval", "registration", "soft_sigma_px", "eval_fraction",
              "sigmas_um", "experiment_seeds", "oversample"});
  c.seed = j.value("seed", c.seed);
  c.n_scenes = j.value("n_scenes", c.n_scenes);
  c.n_organs = j.value("n_organs", c.n_organs);
  if (j.contains("synth")) synth_from_json(j["synth"], c.synth);
  if (j.contains("postproc")) postproc_from_json(j["postproc"], c.postproc);
  if (j.contains("augment")) augment_from_json(j["augment"], c.augment);
  if (j.contains("train")) train_from_json(j["train"], "train.", c.train);
  if (j.contains("tissue_train"))
    train_from_json(j["tissue_train"], "tissue_train.", c.tissue_train);
  if (j.contains("cell_features"))
    features_from_json(j["cell_features"], "cell_features.", c.cell_features);
  if (j.contains("tissue_features"))
    features_from_json(j["tissue_features"], "tissue_features.",
                       c.tissue_features);
  if (j.contains("eval")) eval_from_json(j["eval"], c.eval);
  if (j.contains("registration"))
    registration_from_json(j["registration"], c.registration);
  c.soft_sigma_px = j.value("soft_sigma_px", c.soft_sigma_px);
  c.eval_fraction = j.value("eval_fraction", c.eval_fraction);
  if (j.contains("sigmas_um"))
    c.sigmas_um = j["sigmas_um"].get<std::vector<double>>();
  if (j.contains("experiment_seeds"))
    c.experiment_seeds =
        j["experiment_seeds"].get<std::vector<std::uint64_t>>();
  c.oversample = j.value("oversample", c.oversample);
  return c;
}

njson stat_to_json(const bench::SeedStat& s) {
  return njson{{"mean", s.mean}, {"std", s.stdev}, {"per_seed", s.per_seed}};
}

}  // namespace

// ------------------------------------------------------------------- CSV

PointAnnotations read_annotations_csv(const std::string& path) {
  PointAnnotations out;
  const auto lines = read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = path + ":" + std::to_string(i + 1);
    const auto f = split_csv_line(lines[i]);
    if (f.size() != 3)
      throw data_error(where + ": expected 3 fields x,y,class_id, got " +
                       std::to_string(f.size()));
    CellPoint p{parse_int(f[0], where), parse_int(f[1], where),
                parse_int(f[2], where)};
    check_cell_class(p.class_id, where);
    out.points.push_back(p);
  }
  return out;
}

void write_annotations_csv(const std::string& path,
                           const PointAnnotations& pts) {
  std::ofstream outf(path, std::ios::binary);
  if (!outf) throw io_error("cannot open for write: " + path);
  for (const CellPoint& p : pts.points)
    outf << p.x << ',' << p.y << ',' << p.class_id << '\n';
}

std::vector<Detection> read_detections_csv(const std::string& path) {
  std::vector<Detection> out;
  const auto lines = read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = path + ":" + std::to_string(i + 1);
    const auto f = split_csv_line(lines[i]);
    if (f.size() != 4)
      throw data_error(where +
                       ": expected 4 fields x,y,class_id,confidence, got " +
                       std::to_string(f.size()));
    Detection d{parse_int(f[0], where), parse_int(f[1], where),
                parse_int(f[2], where), parse_double(f[3], where)};
    check_cell_class(d.class_id, where);
    out.push_back(d);
  }
  return out;
}

void write_detections_csv(const std::string& path,
                          const std::vector<Detection>& dets) {
  std::ofstream outf(path, std::ios::binary);
  if (!outf) throw io_error("cannot open for write: " + path);
  for (const Detection& d : dets)
    outf << d.x << ',' << d.y << ',' << d.class_id << ','
         << fmt_double(d.confidence) << '\n';
}

// ------------------------------------------------------------------- PNG

void write_rgb_png(const std::string& path, const Raster& img) {
  if (img.channels() != 3)
    throw param_error("write_rgb_png: expected 3 channels");
  const int h = img.height(), w = img.width();
  std::vector<std::uint8_t> bytes(static_cast<size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
        bytes[(static_cast<size_t>(y) * w + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  write_png_bytes(path, h, w, 8, PNG_COLOR_TYPE_RGB, bytes,
                  static_cast<size_t>(w) * 3);
}

Raster read_rgb_png(const std::string& path) {
  int h = 0, w = 0;
  const auto bytes = read_png_bytes(path, 8, PNG_COLOR_TYPE_RGB, 3, &h, &w);
  Raster img(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(c, y, x) =
            bytes[(static_cast<size_t>(y) * w + x) * 3 + c] / 255.0;
  return img;
}

void write_map_png(const std::string& path, const Raster& map) {
  const auto q = raster_to_u16(map);
  const int h = map.height(), w = map.width();
  std::vector<std::uint8_t> bytes(static_cast<size_t>(h) * w * 2);
  for (size_t i = 0; i < q.size(); ++i) put_u16(&bytes[2 * i], q[i]);
  write_png_bytes(path, h, w, 16, PNG_COLOR_TYPE_GRAY, bytes,
                  static_cast<size_t>(w) * 2);
}

Raster read_map_png(const std::string& path) {
  int h = 0, w = 0;
  const auto bytes = read_png_bytes(path, 16, PNG_COLOR_TYPE_GRAY, 1, &h, &w);
  Raster map(h, w);
  for (size_t i = 0; i < map.plane_size(); ++i)
    map.data()[i] = get_u16(&bytes[2 * i]) / 65535.0;
  return map;
}

void write_label_png(const std::string& path, const LabelMap& labels) {
  const int h = labels.height(), w = labels.width();
  std::vector<std::uint8_t> bytes(static_cast<size_t>(h) * w * 2);
  for (size_t i = 0; i < labels.size(); ++i) {
    const int v = labels.data()[i];
    if (v < 0 || v > 65535)
      throw data_error("write_label_png: label " + std::to_string(v) +
                       " out of 16-bit range");
    put_u16(&bytes[2 * i], static_cast<std::uint16_t>(v));
  }
  write_png_bytes(path, h, w, 16, PNG_COLOR_TYPE_GRAY, bytes,
                  static_cast<size_t>(w) * 2);
}

LabelMap read_label_png(const std::string& path) {
  int h = 0, w = 0;
  const auto bytes = read_png_bytes(path, 16, PNG_COLOR_TYPE_GRAY, 1, &h, &w);
  LabelMap labels(h, w);
  for (size_t i = 0; i < labels.size(); ++i)
    labels.data()[i] = get_u16(&bytes[2 * i]);
  return labels;
}

void write_prob_maps(const std::string& dir, const std::string& stem,
                     const Raster& maps,
                     const std::vector<std::string>& channel_names) {
  if (!channel_names.empty() &&
      channel_names.size() != static_cast<size_t>(maps.channels()))
    throw param_error("write_prob_maps: one name per channel required");
  fs::create_directories(dir);
  njson index;
  index["height"] = maps.height();
  index["width"] = maps.width();
  if (maps.mpp) index["mpp"] = *maps.mpp;
  index["channels"] = njson::array();
  for (int c = 0; c < maps.channels(); ++c) {
    const std::string name =
        channel_names.empty() ? "c" + std::to_string(c) : channel_names[c];
    const std::string file = stem + "_" + name + ".png";
    Raster one(maps.height(), maps.width());
    std::copy(maps.channel(c).begin(), maps.channel(c).end(),
              one.data().begin());
    write_map_png(dir + "/" + file, one);
    index["channels"].push_back(
        njson{{"index", c}, {"name", name}, {"file", file}});
  }
  write_text_file(dir + "/" + stem + ".channels.json", index.dump(2) + "\n");
}

Raster read_prob_maps(const std::string& dir, const std::string& stem) {
  const njson index =
      njson::parse(read_text_file(dir + "/" + stem + ".channels.json"));
  const int h = index.at("height").get<int>();
  const int w = index.at("width").get<int>();
  const auto& chans = index.at("channels");
  if (chans.empty()) throw data_error(stem + ": no channels listed");
  Raster maps(h, w, static_cast<int>(chans.size()));
  if (index.contains("mpp")) maps.mpp = index["mpp"].get<double>();
  for (const auto& ch : chans) {
    const int c = ch.at("index").get<int>();
    if (c < 0 || c >= maps.channels())
      throw data_error(stem + ": channel index out of range");
    const Raster one = read_map_png(dir + "/" + ch.at("file").get<std::string>());
    if (one.height() != h || one.width() != w)
      throw data_error(stem + ": channel shape mismatch");
    std::copy(one.data().begin(), one.data().end(),
              maps.channel(c).begin());
  }
  return maps;
}

// ----------------------------------------------------------------- scenes

void write_scene(const std::string& dir, const bench::SynthScene& s) {
  fs::create_directories(dir);
  write_rgb_png(dir + "/cell.png", s.cell_img);
  write_rgb_png(dir + "/tissue.png", s.tissue_img);
  write_annotations_csv(dir + "/annotations.csv", s.annotations);
  write_label_png(dir + "/instances.png", s.instances.instances);
  write_label_png(dir + "/tissue_gt.png", s.tissue_gt);

  njson inst;
  inst["instance_class"] = njson::object();
  for (const auto& [label, cls] : s.instances.instance_class)
    inst["instance_class"][std::to_string(label)] = cls;
  inst["matched"] = njson::array();
  for (const auto& m : s.instances.matched)
    inst["matched"].push_back(m ? njson(*m) : njson(nullptr));
  write_text_file(dir + "/instances.json", inst.dump(2) + "\n");

  njson meta;
  meta["organ_tag"] = s.organ_tag;
  if (s.cell_img.mpp) meta["cell_mpp"] = *s.cell_img.mpp;
  if (s.tissue_img.mpp) meta["tissue_mpp"] = *s.tissue_img.mpp;
  meta["registration"] = registration_to_json(s.registration);
  write_text_file(dir + "/metadata.json", meta.dump(2) + "\n");
}

bench::SynthScene read_scene(const std::string& dir) {
  bench::SynthScene s;
  s.cell_img = read_rgb_png(dir + "/cell.png");
  s.tissue_img = read_rgb_png(dir + "/tissue.png");
  s.annotations = read_annotations_csv(dir + "/annotations.csv");
  s.instances.instances = read_label_png(dir + "/instances.png");
  s.tissue_gt = read_label_png(dir + "/tissue_gt.png");

  const njson inst = njson::parse(read_text_file(dir + "/instances.json"));
  for (const auto& [key, value] : inst.at("instance_class").items())
    s.instances.instance_class[parse_int(key, dir + "/instances.json")] =
        value.get<int>();
  for (const auto& m : inst.at("matched"))
    s.instances.matched.push_back(
        m.is_null() ? std::optional<int>{} : std::optional<int>{m.get<int>()});

  const njson meta = njson::parse(read_text_file(dir + "/metadata.json"));
  s.organ_tag = meta.value("organ_tag", std::string("unknown"));
  if (meta.contains("cell_mpp")) {
    s.cell_img.mpp = meta["cell_mpp"].get<double>();
    s.annotations.mpp = s.cell_img.mpp;
  }
  if (meta.contains("tissue_mpp"))
    s.tissue_img.mpp = meta["tissue_mpp"].get<double>();
  if (meta.contains("registration"))
    registration_from_json(meta["registration"], s.registration);
  return s;
}

// ------------------------------------------------------------------ config

bench::ExperimentConfig RunConfig::experiment() const {
  bench::ExperimentConfig e;
  e.cell_train = train;
  e.tissue_train = tissue_train;
  e.cell_features = cell_features;
  e.tissue_features = tissue_features;
  e.postproc = postproc;
  e.eval = eval;
  e.soft_sigma_px = soft_sigma_px;
  e.eval_fraction = eval_fraction;
  e.oversample = oversample;
  return e;
}

std::string models_to_json(const std::vector<bench::PixelModel>& models) {
  if (models.empty()) throw param_error("models_to_json: no models");
  njson arr = njson::array();
  for (const bench::PixelModel& m : models) {
    m.validate();
    arr.push_back(njson{{"features", features_to_json(m.features)},
                        {"n_classes", m.n_classes},
                        {"weights", m.weights},
                        {"bias", m.bias}});
  }
  njson j{{"kind", "pixel_model_ensemble"}, {"models", arr}};
  return j.dump(2) + "\n";
}

std::vector<bench::PixelModel> models_from_json(const std::string& json_text) {
  njson j;
  try {
    j = njson::parse(json_text);
  } catch (const njson::parse_error& e) {
    throw data_error(std::string("model: ") + e.what());
  }
  if (j.value("kind", std::string()) != "pixel_model_ensemble")
    throw data_error("model: expected kind 'pixel_model_ensemble'");
  std::vector<bench::PixelModel> models;
  for (const njson& mj : j.at("models")) {
    check_keys(mj, "model.", {"features", "n_classes", "weights", "bias"});
    bench::PixelModel m;
    features_from_json(mj.at("features"), "model.features.", m.features);
    m.n_classes = mj.at("n_classes").get<int>();
    m.weights = mj.at("weights").get<std::vector<double>>();
    m.bias = mj.at("bias").get<std::vector<double>>();
    m.validate();
    models.push_back(std::move(m));
  }
  if (models.empty()) throw data_error("model: empty ensemble");
  return models;
}

std::string config_to_json(const RunConfig& cfg) {
  return config_to_njson(cfg).dump(2) + "\n";
}

RunConfig config_from_json(const std::string& json_text) {
  njson j;
  try {
    j = njson::parse(json_text);
  } catch (const njson::parse_error& e) {
    throw data_error(std::string("config: ") + e.what());
  }
  return config_from_njson(j);
}

RunConfig load_config(const std::string& path) {
  return config_from_json(read_text_file(path));
}

// ------------------------------------------------------------------ tables

std::string f1_report_json(const eval::MatchResult& m) {
  const eval::F1Report rep = eval::f1_scores(m);
  njson j;
  j["per_class"] = njson::object();
  for (const auto& [cls, cc] : m.per_class)
    j["per_class"][std::to_string(cls)] =
        njson{{"tp", cc.tp},
              {"fp", cc.fp},
              {"fn", cc.fn},
              {"f1", rep.per_class.at(cls)}};
  j["mean_f1"] = rep.mean;
  return j.dump(2) + "\n";
}

std::string group_report_json(const eval::GroupReport& rep) {
  auto row = [](const eval::GroupRow& r) {
    return njson{{"organ", r.organ},
                 {"n", r.n},
                 {"macro_f1", r.macro_f1},
                 {"micro_f1", r.micro_f1}};
  };
  njson j;
  j["organs"] = njson::array();
  for (const auto& r : rep.organs) j["organs"].push_back(row(r));
  j["overall"] = row(rep.overall);
  return j.dump(2) + "\n";
}

std::string format_table_json(const bench::FormatTable& t) {
  njson j;
  j["kind"] = "format_experiment";
  j["seeds"] = t.seeds;
  j["rows"] = njson::array();
  for (const auto& r : t.rows)
    j["rows"].push_back(njson{{"format", r.name},
                              {"mean_f1", r.f1.mean},
                              {"std_f1", r.f1.stdev},
                              {"per_seed", r.f1.per_seed}});
  return j.dump(2) + "\n";
}

std::string format_table_csv(const bench::FormatTable& t) {
  std::string s = "format,mean_f1,std_f1\n";
  for (const auto& r : t.rows)
    s += r.name + "," + fmt_fixed(r.f1.mean) + "," + fmt_fixed(r.f1.stdev) +
         "\n";
  return s;
}

std::string sigma_table_json(const bench::SigmaTable& t) {
  njson j;
  j["kind"] = "sigma_ablation";
  j["seeds"] = t.seeds;
  j["rows"] = njson::array();
  for (const auto& r : t.rows) {
    njson counts = njson::array();
    for (const auto& c : r.counts_per_seed)
      counts.push_back(njson{{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}});
    j["rows"].push_back(njson{{"sigma_um", r.sigma_um},
                              {"f1", stat_to_json(r.f1)},
                              {"precision", stat_to_json(r.precision)},
                              {"recall", stat_to_json(r.recall)},
                              {"counts_per_seed", counts}});
  }
  return j.dump(2) + "\n";
}

std::string sigma_table_csv(const bench::SigmaTable& t) {
  std::string s = "sigma_um,f1,precision,recall\n";
  for (const auto& r : t.rows)
    s += fmt_fixed(r.sigma_um) + "," + fmt_fixed(r.f1.mean) + "," +
         fmt_fixed(r.precision.mean) + "," + fmt_fixed(r.recall.mean) + "\n";
  return s;
}

std::string ctm_table_json(const bench::CtmTable& t) {
  njson j;
  j["kind"] = "ctm_experiment";
  j["seeds"] = t.seeds;
  j["organ_counts"] = njson::object();
  for (const auto& [organ, n] : t.organ_counts) j["organ_counts"][organ] = n;
  j["rows"] = njson::array();
  for (const auto& r : t.rows) {
    njson organs = njson::object();
    for (const auto& [organ, f1] : r.per_organ_f1) organs[organ] = f1;
    j["rows"].push_back(njson{{"variant", r.variant},
                              {"mean_f1", r.f1.mean},
                              {"std_f1", r.f1.stdev},
                              {"per_seed", r.f1.per_seed},
                              {"per_organ_f1", organs}});
  }
  return j.dump(2) + "\n";
}

std::string ctm_table_csv(const bench::CtmTable& t) {
  std::string s = "variant,mean_f1,std_f1";
  for (const auto& [organ, n] : t.organ_counts)
    s += "," + organ + "(n=" + std::to_string(n) + ")";
  s += "\n";
  for (const auto& r : t.rows) {
    s += r.variant + "," + fmt_fixed(r.f1.mean) + "," + fmt_fixed(r.f1.stdev);
    for (const auto& [organ, n] : t.organ_counts) {
      const auto it = r.per_organ_f1.find(organ);
      s += "," + (it == r.per_organ_f1.end() ? std::string("nan")
                                             : fmt_fixed(it->second));
    }
    s += "\n";
  }
  return s;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream outf(path, std::ios::binary);
  if (!outf) throw io_error("cannot open for write: " + path);
  outf.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!outf) throw io_error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------- manifest

void write_manifest(const std::string& path, const RunConfig& cfg,
                    const std::string& command,
                    const std::vector<std::string>& input_paths) {
  njson j;
  j["command"] = command;
  j["seed"] = cfg.seed;
  j["config"] = config_to_njson(cfg);
  njson inputs = njson::object();
  std::vector<std::string> sorted(input_paths);
  std::sort(sorted.begin(), sorted.end());
  for (const std::string& p : sorted) inputs[p] = sha256_hex_file(p);
  j["inputs"] = inputs;
  write_text_file(path, j.dump(2) + "\n");
}

// --------------------------------------------------------------- rendering

Raster render_overlay(const Raster& img, const std::vector<Detection>& dets,
                      const PointAnnotations* gt) {
  if (img.channels() != 3)
    throw param_error("render_overlay: expected RGB image");
  Raster out = img;
  const int h = out.height(), w = out.width();
  auto put = [&](int x, int y, double r, double g, double b) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    out.at(0, y, x) = r;
    out.at(1, y, x) = g;
    out.at(2, y, x) = b;
  };
  constexpr int kArm = 3;
  for (const Detection& d : dets) {
    const bool tumor = d.class_id == kTumorCell;
    const double r = tumor ? 0.95 : 0.10, g = tumor ? 0.15 : 0.90, b = 0.10;
    for (int t = -kArm; t <= kArm; ++t) {
      put(d.x + t, d.y, r, g, b);  // plus-shaped: prediction
      put(d.x, d.y + t, r, g, b);
    }
  }
  if (gt)
    for (const CellPoint& p : gt->points) {
      const bool tumor = p.class_id == kTumorCell;
      const double r = tumor ? 0.95 : 0.10, g = tumor ? 0.80 : 0.40,
                   b = tumor ? 0.10 : 0.95;
      for (int t = -kArm; t <= kArm; ++t) {
        put(p.x + t, p.y + t, r, g, b);  // x-shaped: ground truth
        put(p.x + t, p.y - t, r, g, b);
      }
    }
  return out;
}

}  // namespace celldet::io
