#include "celldet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace celldet::eval {

namespace {

double f1_from_counts(long long tp, long long fp, long long fn) {
  const long long denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
}

double mean_over_classes(const std::map<int, double>& per_class) {
  double sum = 0.0;
  for (const auto& [cls, f1] : per_class) sum += f1;
  return per_class.empty() ? 0.0 : sum / static_cast<double>(per_class.size());
}

}  // namespace

MatchResult match_detections(const std::vector<Detection>& preds,
                             const PointAnnotations& gts,
                             const EvalConfig& cfg) {
  cfg.validate();
  const long long r_sq =
      static_cast<long long>(cfg.match_radius_px) * cfg.match_radius_px;

  MatchResult res;
  for (int cls : cfg.classes) {
    std::vector<int> p_idx, g_idx;
    for (size_t i = 0; i < preds.size(); ++i)
      if (preds[i].class_id == cls) p_idx.push_back(static_cast<int>(i));
    for (size_t i = 0; i < gts.points.size(); ++i)
      if (gts.points[i].class_id == cls) g_idx.push_back(static_cast<int>(i));

    // (squared distance, pred index, gt index); integer keys make the
    // ascending sort and its tie-breaks exact.
    std::vector<std::tuple<long long, int, int>> cand;
    for (int p : p_idx)
      for (int g : g_idx) {
        const long long dx = preds[p].x - gts.points[g].x;
        const long long dy = preds[p].y - gts.points[g].y;
        const long long d_sq = dx * dx + dy * dy;
        if (d_sq <= r_sq) cand.emplace_back(d_sq, p, g);
      }
    std::sort(cand.begin(), cand.end());

    std::vector<char> p_used(preds.size(), 0), g_used(gts.points.size(), 0);
    ClassCounts& cc = res.per_class[cls];
    for (const auto& [d_sq, p, g] : cand) {
      if (p_used[p] || g_used[g]) continue;
      p_used[p] = g_used[g] = 1;
      cc.pairs.push_back({p, g, std::sqrt(static_cast<double>(d_sq))});
    }
    cc.tp = static_cast<long long>(cc.pairs.size());
    cc.fp = static_cast<long long>(p_idx.size()) - cc.tp;
    cc.fn = static_cast<long long>(g_idx.size()) - cc.tp;
  }
  return res;
}

F1Report f1_scores(const MatchResult& m) {
  F1Report rep;
  for (const auto& [cls, cc] : m.per_class)
    rep.per_class[cls] = f1_from_counts(cc.tp, cc.fp, cc.fn);
  rep.mean = mean_over_classes(rep.per_class);
  return rep;
}

double tissue_f1(const LabelMap& pred, const LabelMap& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width())
    throw param_error("tissue_f1: shape mismatch");
  long long tp = 0, fp = 0, fn = 0, known = 0;
  for (size_t i = 0; i < gt.size(); ++i) {
    const int g = gt.data()[i];
    if (g == kTissueUnknown) continue;
    ++known;
    const bool pc = pred.data()[i] == kTissueCancer;
    const bool gc = g == kTissueCancer;
    if (pc && gc)
      ++tp;
    else if (pc)
      ++fp;
    else if (gc)
      ++fn;
  }
  if (known == 0)
    throw degenerate_error("tissue_f1: every ground-truth pixel is unknown");
  return f1_from_counts(tp, fp, fn);
}

GroupReport group_report(const std::vector<MatchResult>& per_sample,
                         const std::vector<std::string>& organ_tags) {
  if (per_sample.size() != organ_tags.size())
    throw param_error("group_report: one organ tag per sample required");

  // organ -> sample indices, sorted by organ name via std::map
  std::map<std::string, std::vector<size_t>> groups;
  for (size_t i = 0; i < per_sample.size(); ++i)
    groups[organ_tags[i]].push_back(i);

  auto make_row = [&](const std::string& name,
                      const std::vector<size_t>& members) {
    GroupRow row;
    row.organ = name;
    row.n = static_cast<int>(members.size());
    std::map<int, ClassCounts> pooled;
    double macro_sum = 0.0;
    for (size_t i : members) {
      macro_sum += f1_scores(per_sample[i]).mean;
      for (const auto& [cls, cc] : per_sample[i].per_class) {
        ClassCounts& agg = pooled[cls];
        agg.tp += cc.tp;
        agg.fp += cc.fp;
        agg.fn += cc.fn;
      }
    }
    row.macro_f1 = members.empty() ? 0.0 : macro_sum / members.size();
    std::map<int, double> micro_per_class;
    for (const auto& [cls, cc] : pooled)
      micro_per_class[cls] = f1_from_counts(cc.tp, cc.fp, cc.fn);
    row.micro_f1 = mean_over_classes(micro_per_class);
    return row;
  };

  GroupReport rep;
  std::vector<size_t> all;
  for (const auto& [organ, members] : groups) {
    rep.organs.push_back(make_row(organ, members));
    all.insert(all.end(), members.begin(), members.end());
  }
  std::sort(all.begin(), all.end());
  rep.overall = make_row("overall", all);
  return rep;
}

}  // namespace celldet::eval
