#pragma once

#include <map>
#include <string>
#include <vector>

#include "celldet/raster.hpp"

// Point-detection scoring: radius-limited greedy matching, per-class and
// mean F1, tissue segmentation F1, and per-organ report tables.
namespace celldet::eval {

struct EvalConfig {
  int match_radius_px = 15;  // 3 um at 0.2 mpp
  std::vector<int> classes = {kBackgroundCell, kTumorCell};

  void validate() const {
    if (match_radius_px < 1)
      throw param_error("EvalConfig: match_radius_px must be >= 1");
    if (classes.empty()) throw param_error("EvalConfig: empty class set");
  }
};

struct MatchedPair {
  int pred_index = 0;  // index into the original detection list
  int gt_index = 0;    // index into the original annotation list
  double distance = 0.0;
};

struct ClassCounts {
  long long tp = 0;
  long long fp = 0;
  long long fn = 0;
  std::vector<MatchedPair> pairs;
};

struct MatchResult {
  std::map<int, ClassCounts> per_class;  // keyed by class id
};

struct F1Report {
  std::map<int, double> per_class;
  double mean = 0.0;
};

// Per class independently: all (pred, gt) pairs within the radius, sorted
// by (distance, pred index, gt index), greedily accepted while both sides
// are unmatched. Unmatched preds are FP, unmatched gts FN.
MatchResult match_detections(const std::vector<Detection>& preds,
                             const PointAnnotations& gts,
                             const EvalConfig& cfg = {});

// F1_c = 2TP / (2TP + FP + FN), 0 when the denominator is 0; mean over the
// classes in the match result.
F1Report f1_scores(const MatchResult& m);

// F1 of the cancer class over the pixels whose ground truth is known.
// Throws degenerate_error when every pixel is unknown.
double tissue_f1(const LabelMap& pred, const LabelMap& gt);

struct GroupRow {
  std::string organ;
  int n = 0;
  double macro_f1 = 0.0;  // mean of per-sample mean F1
  double micro_f1 = 0.0;  // counts pooled over samples, then F1 per class
};

struct GroupReport {
  std::vector<GroupRow> organs;  // sorted by organ name
  GroupRow overall;
};

// Groups per-sample match results by organ tag; reports macro and micro F1
// per organ plus an overall row over all samples.
GroupReport group_report(const std::vector<MatchResult>& per_sample,
                         const std::vector<std::string>& organ_tags);

}  // namespace celldet::eval
