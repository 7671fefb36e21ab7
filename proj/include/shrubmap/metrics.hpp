#pragma once

#include "shrubmap/matching.hpp"

#include <array>
#include <iosfwd>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace shrubmap
{

/// Shrub size classes by crown area (m²), cut at quantiles of the annotated crowns.
enum class SizeClass { XS, S, M, L, XL, XXL };

inline constexpr std::array<SizeClass, 6> kSizeClasses = {
  SizeClass::XS, SizeClass::S, SizeClass::M, SizeClass::L, SizeClass::XL, SizeClass::XXL};

/// Half-open [lo, hi).
struct SizeRange
{
  double lo;
  double hi;
};

/// Smallest crown area observed in the annotated data.
inline constexpr double kMinObservedArea = 0.13;

SizeRange size_range(SizeClass c);
std::string_view to_string(SizeClass c);
SizeClass parse_size_class(std::string_view text);

/// Class whose range holds `area_m2`. Areas below the XS lower bound still map
/// to XS; a note is appended to `notes` when given. Throws NonPositiveArea.
SizeClass classify_size(double area_m2, std::vector<std::string> * notes = nullptr);

/// Percentages in [0, 100], full precision.
struct ScoreTriple
{
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

ScoreTriple precision_recall_f1(const ConfusionCounts & c);

struct SizeBreakdown
{
  /// Only classes holding at least one label or detection.
  std::map<SizeClass, ConfusionCounts> by_class;
  ConfusionCounts all;
  std::vector<std::string> diagnostics;
};

/// Labels are binned by their own area. A surviving detection takes the class
/// of its match set's label with the largest summed intersection area (ties go
/// to the smaller class); unmatched detections are binned by their own area.
SizeBreakdown evaluate_by_size(
  std::span<const Detection> dets, std::span<const GroundTruth> gts, const MatchConfig & cfg);

/// One row of a per-dataset score report.
struct ScoreRow
{
  std::string data;
  Metric metric = Metric::SIoU;
  double threshold = 0.5;
  std::string size = "All";
  ConfusionCounts counts;
  /// Optional leading column for score sweeps.
  std::optional<double> theta;
};

/// CSV with columns data,metric,threshold,size,TP,FP,FN,P,R,F1 (a leading
/// theta column when any row carries one). Percentages with two decimals.
void write_score_csv(std::ostream & os, std::span<const ScoreRow> rows);

}  // namespace shrubmap
