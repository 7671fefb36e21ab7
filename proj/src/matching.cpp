#include "shrubmap/matching.hpp"

#include "shrubmap/errors.hpp"

#include "parallel.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

namespace shrubmap
{
namespace
{

std::string lower(std::string_view text)
{
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

double clamp_unit(double v) { return std::clamp(v, 0.0, 1.0); }

// Union area via inclusion-exclusion, never smaller than either operand.
double iou_from_areas(double inter, double area_p, double area_l)
{
  if (inter < kEmptyArea) {
    return 0.0;
  }
  const double denom = std::max({area_p, area_l, area_p + area_l - inter});
  return clamp_unit(inter / denom);
}

bool passes(double value, double threshold) { return value >= threshold - kThresholdTolerance; }

// Highest value, then larger intersection, then lower index.
struct BestMatch
{
  std::optional<std::size_t> index;
  double value = 0.0;
  double overlap = 0.0;

  void offer(std::size_t idx, double v, double ov)
  {
    if (!index || v > value || (v == value && ov > overlap) ||
        (v == value && ov == overlap && idx < *index)) {
      index = idx;
      value = v;
      overlap = ov;
    }
  }
};

}  // namespace

std::string_view to_string(Metric m) { return m == Metric::IoU ? "IoU" : "S-IoU"; }

std::string_view to_string(Source s) { return s == Source::PI ? "PI" : "FW"; }

Metric parse_metric(std::string_view text)
{
  const std::string t = lower(text);
  if (t == "iou") {
    return Metric::IoU;
  }
  if (t == "siou" || t == "s-iou") {
    return Metric::SIoU;
  }
  throw ConfigError("unknown metric '" + std::string(text) + "' (expected iou or siou)");
}

Source parse_source(std::string_view text)
{
  const std::string t = lower(text);
  if (t == "pi") {
    return Source::PI;
  }
  if (t == "fw") {
    return Source::FW;
  }
  throw SchemaError("unknown source '" + std::string(text) + "' (expected PI or FW)");
}

void MatchConfig::validate() const
{
  if (!(overlap_threshold > 0.0 && overlap_threshold <= 1.0)) {
    throw ConfigError("overlap threshold must be in (0, 1]");
  }
  if (!(score_threshold >= 0.0 && score_threshold <= 1.0)) {
    throw ConfigError("score threshold must be in [0, 1]");
  }
  if (!(min_intersection_fraction >= 0.0 && min_intersection_fraction <= 1.0)) {
    throw ConfigError("minimum intersection fraction must be in [0, 1]");
  }
}

double iou(const Region & p, const Region & l)
{
  if (p.empty() || l.empty()) {
    return 0.0;
  }
  return iou_from_areas(intersection_area(p, l), p.area(), l.area());
}

double s_iou_prediction(const Region & p, std::span<const Region> matched_labels)
{
  if (matched_labels.empty()) {
    throw EmptyMatchSet();
  }
  if (matched_labels.size() == 1) {
    const Region & l = matched_labels.front();
    if (l.empty()) {
      return 0.0;
    }
    return clamp_unit(intersection_area(p, l) / l.area());
  }
  const Region labels = union_of(matched_labels);
  if (labels.empty()) {
    return 0.0;
  }
  return clamp_unit(intersection_area(p, labels) / labels.area());
}

double s_iou_label(const Region & l, std::span<const Region> matched_preds)
{
  if (matched_preds.empty()) {
    throw EmptyMatchSet();
  }
  if (l.empty()) {
    return 0.0;
  }
  const double inter = matched_preds.size() == 1
                         ? intersection_area(l, matched_preds.front())
                         : intersection_area(l, union_of(matched_preds));
  return clamp_unit(inter / l.area());
}

SceneEvaluation evaluate_scene(
  std::span<const Detection> dets, std::span<const GroundTruth> gts, const MatchConfig & cfg)
{
  cfg.validate();
  SceneEvaluation out;

  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (dets[i].score < cfg.score_threshold) {
      continue;
    }
    if (dets[i].region.empty()) {
      out.diagnostics.push_back("detection " + std::to_string(i) + " dropped: empty region");
      continue;
    }
    kept.push_back(i);
  }
  std::vector<std::size_t> labels;
  for (std::size_t j = 0; j < gts.size(); ++j) {
    if (gts[j].region.empty()) {
      out.diagnostics.push_back("label " + std::to_string(j) + " ignored: empty region");
      continue;
    }
    labels.push_back(j);
  }

  out.overlap.assign(kept.size(), std::vector<double>(gts.size(), 0.0));
  std::vector<std::vector<bool>> member(kept.size(), std::vector<bool>(gts.size(), false));
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const Region & p = dets[kept[k]].region;
    for (std::size_t j : labels) {
      const Region & l = gts[j].region;
      if (!p.bbox().intersects(l.bbox())) {
        continue;
      }
      const double inter = intersection_area(p, l);
      out.overlap[k][j] = inter;
      member[k][j] = inter > kMatchEpsilon && inter / l.area() >= cfg.min_intersection_fraction;
    }
  }

  // Pass 1: predictions.
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const Region & p = dets[kept[k]].region;
    PredictionRecord rec;
    rec.detection = kept[k];
    BestMatch best;
    BestMatch largest;
    std::vector<Region> matched;
    for (std::size_t j : labels) {
      if (!member[k][j]) {
        continue;
      }
      rec.match_set.push_back(j);
      const Region & l = gts[j].region;
      matched.push_back(l);
      largest.offer(j, out.overlap[k][j], out.overlap[k][j]);
      if (cfg.metric == Metric::IoU) {
        best.offer(j, iou_from_areas(out.overlap[k][j], p.area(), l.area()), out.overlap[k][j]);
      }
    }
    if (!rec.match_set.empty()) {
      if (cfg.metric == Metric::IoU) {
        rec.value = best.value;
        rec.best_label = best.index;
      } else {
        rec.value = matched.size() == 1
                      ? clamp_unit(out.overlap[k][rec.match_set.front()] / matched.front().area())
                      : s_iou_prediction(p, matched);
        rec.best_label = largest.index;
      }
    }
    rec.true_positive = !rec.match_set.empty() && passes(rec.value, cfg.overlap_threshold);
    if (rec.true_positive) {
      ++out.counts.tp;
    } else {
      ++out.counts.fp;
    }
    out.predictions.push_back(std::move(rec));
  }

  std::vector<bool> claimed(gts.size(), false);
  if (cfg.claimed_labels_never_fn && cfg.metric == Metric::IoU) {
    for (const auto & rec : out.predictions) {
      if (rec.true_positive && rec.best_label) {
        claimed[*rec.best_label] = true;
      }
    }
  }

  // Pass 2: labels.
  for (std::size_t j : labels) {
    const Region & l = gts[j].region;
    LabelRecord rec;
    rec.label = j;
    BestMatch best;
    BestMatch largest;
    std::vector<Region> matched;
    for (std::size_t k = 0; k < kept.size(); ++k) {
      if (!member[k][j]) {
        continue;
      }
      rec.match_set.push_back(kept[k]);
      const Region & p = dets[kept[k]].region;
      matched.push_back(p);
      largest.offer(kept[k], out.overlap[k][j], out.overlap[k][j]);
      if (cfg.metric == Metric::IoU) {
        best.offer(kept[k], iou_from_areas(out.overlap[k][j], p.area(), l.area()), out.overlap[k][j]);
      }
    }
    if (!rec.match_set.empty()) {
      if (cfg.metric == Metric::IoU) {
        rec.value = best.value;
        rec.best_prediction = best.index;
      } else {
        rec.value = s_iou_label(l, matched);
        rec.best_prediction = largest.index;
      }
    }
    rec.false_negative =
      !claimed[j] && (rec.match_set.empty() || !passes(rec.value, cfg.overlap_threshold));
    if (rec.false_negative) {
      ++out.counts.fn;
    }
    out.labels.push_back(std::move(rec));
  }
  return out;
}

ConfusionCounts evaluate_scenes(std::span<const Scene> scenes, const MatchConfig & cfg, unsigned workers)
{
  cfg.validate();
  workers = detail::resolve_workers(workers, scenes.size());
  std::vector<ConfusionCounts> partial(workers);
  detail::parallel_for(scenes.size(), workers, [&](unsigned w, std::size_t i) {
    partial[w] += evaluate_scene(scenes[i].detections, scenes[i].labels, cfg).counts;
  });
  ConfusionCounts total;
  for (const auto & c : partial) {
    total += c;
  }
  return total;
}

}  // namespace shrubmap
