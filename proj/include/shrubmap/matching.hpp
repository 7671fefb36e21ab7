#pragma once

#include "shrubmap/geometry.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace shrubmap
{

enum class Metric { IoU, SIoU };
enum class Source { PI, FW };

std::string_view to_string(Metric m);
std::string_view to_string(Source s);
/// Accepts "iou", "siou", "s-iou" (case-insensitive).
Metric parse_metric(std::string_view text);
Source parse_source(std::string_view text);

struct Detection
{
  Region region;
  double score = 0.0;
  std::optional<std::string> tile_id;
};

struct GroundTruth
{
  Region region;
  std::string id;
  Source source = Source::PI;
};

/// Metric values within this distance below a threshold still pass it.
inline constexpr double kThresholdTolerance = 1e-12;
/// Minimum intersection area for membership in a match set (m²).
inline constexpr double kMatchEpsilon = 1e-9;

struct MatchConfig
{
  Metric metric = Metric::SIoU;
  /// Metric value required for a TP (and to avoid an FN), in (0, 1].
  double overlap_threshold = 0.5;
  /// Detections scoring below this are discarded before matching.
  double score_threshold = 0.5;
  /// Extra match-set requirement: intersection / label area must reach this.
  double min_intersection_fraction = 0.0;
  /// IoU only: a label that was the best match of a TP prediction is never an
  /// FN. Off by default; labels are then evaluated independently.
  bool claimed_labels_never_fn = false;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

struct ConfusionCounts
{
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  ConfusionCounts & operator+=(const ConfusionCounts & o)
  {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts & b) { return a += b; }
  friend bool operator==(const ConfusionCounts &, const ConfusionCounts &) = default;
};

/// IoU of two regions. Symmetric bit-for-bit.
double iou(const Region & p, const Region & l);
/// area(p ∩ ⋃labels) / area(⋃labels). Throws EmptyMatchSet for no labels.
double s_iou_prediction(const Region & p, std::span<const Region> matched_labels);
/// area(l ∩ ⋃preds) / area(l). Throws EmptyMatchSet for no predictions.
double s_iou_label(const Region & l, std::span<const Region> matched_preds);

/// Outcome of Pass 1 for one surviving detection. Indices refer to the input
/// spans of evaluate_scene.
struct PredictionRecord
{
  std::size_t detection = 0;
  double value = 0.0;
  std::vector<std::size_t> match_set;
  std::optional<std::size_t> best_label;
  bool true_positive = false;
};

/// Outcome of Pass 2 for one ground truth.
struct LabelRecord
{
  std::size_t label = 0;
  double value = 0.0;
  std::vector<std::size_t> match_set;
  std::optional<std::size_t> best_prediction;
  bool false_negative = false;
};

struct SceneEvaluation
{
  ConfusionCounts counts;
  std::vector<PredictionRecord> predictions;
  std::vector<LabelRecord> labels;
  /// Per-instance intersection areas, [prediction record][label].
  std::vector<std::vector<double>> overlap;
  std::vector<std::string> diagnostics;
};

/// Two-pass evaluation: predictions yield TP/FP, labels yield FN. Labels may
/// back several predictions (no one-to-one assignment), so tp + fn need not
/// equal the number of labels.
SceneEvaluation evaluate_scene(
  std::span<const Detection> dets, std::span<const GroundTruth> gts, const MatchConfig & cfg);

struct Scene
{
  std::vector<Detection> detections;
  std::vector<GroundTruth> labels;
};

/// Evaluates scenes on up to `workers` threads (0 = hardware concurrency) and
/// sums their counts.
ConfusionCounts evaluate_scenes(
  std::span<const Scene> scenes, const MatchConfig & cfg, unsigned workers = 0);

}  // namespace shrubmap
