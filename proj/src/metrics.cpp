#include "shrubmap/metrics.hpp"

#include "shrubmap/errors.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <ostream>

namespace shrubmap
{
namespace
{

constexpr std::array<double, 7> kBounds = {
  0.13, 1.72, 3.62, 9.08, 20.82, 41.06, std::numeric_limits<double>::infinity()};

double percent(std::size_t num, std::size_t den)
{
  return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

SizeRange size_range(SizeClass c)
{
  const auto i = static_cast<std::size_t>(c);
  return {kBounds[i], kBounds[i + 1]};
}

std::string_view to_string(SizeClass c)
{
  switch (c) {
    case SizeClass::XS: return "XS";
    case SizeClass::S: return "S";
    case SizeClass::M: return "M";
    case SizeClass::L: return "L";
    case SizeClass::XL: return "XL";
    case SizeClass::XXL: return "XXL";
  }
  return "?";
}

SizeClass parse_size_class(std::string_view text)
{
  std::string t(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char ch) {
    return static_cast<char>(std::toupper(ch));
  });
  for (auto c : kSizeClasses) {
    if (to_string(c) == t) {
      return c;
    }
  }
  throw ConfigError("unknown size class '" + std::string(text) + "'");
}

SizeClass classify_size(double area_m2, std::vector<std::string> * notes)
{
  if (!(area_m2 > 0.0)) {
    throw NonPositiveArea(area_m2);
  }
  if (area_m2 < kMinObservedArea && notes) {
    notes->push_back(fmt::format(
      "area {:g} m2 is below the smallest annotated crown ({:g} m2); classed XS", area_m2,
      kMinObservedArea));
  }
  for (std::size_t i = kSizeClasses.size(); i-- > 1;) {
    if (area_m2 >= kBounds[i]) {
      return kSizeClasses[i];
    }
  }
  return SizeClass::XS;
}

ScoreTriple precision_recall_f1(const ConfusionCounts & c)
{
  ScoreTriple s;
  s.precision = percent(c.tp, c.tp + c.fp);
  s.recall = percent(c.tp, c.tp + c.fn);
  const double sum = s.precision + s.recall;
  s.f1 = sum > 0.0 ? 2.0 * s.precision * s.recall / sum : 0.0;
  return s;
}

SizeBreakdown evaluate_by_size(
  std::span<const Detection> dets, std::span<const GroundTruth> gts, const MatchConfig & cfg)
{
  const SceneEvaluation eval = evaluate_scene(dets, gts, cfg);
  SizeBreakdown out;
  out.diagnostics = eval.diagnostics;
  out.all = eval.counts;

  std::vector<SizeClass> label_class(gts.size(), SizeClass::XS);
  for (const auto & rec : eval.labels) {
    label_class[rec.label] = classify_size(gts[rec.label].region.area(), &out.diagnostics);
  }

  for (std::size_t k = 0; k < eval.predictions.size(); ++k) {
    const auto & rec = eval.predictions[k];
    SizeClass cls;
    if (rec.match_set.empty()) {
      cls = classify_size(dets[rec.detection].region.area(), &out.diagnostics);
    } else {
      std::array<double, kSizeClasses.size()> weight{};
      for (std::size_t j : rec.match_set) {
        weight[static_cast<std::size_t>(label_class[j])] += eval.overlap[k][j];
      }
      const auto it = std::max_element(weight.begin(), weight.end());
      cls = kSizeClasses[static_cast<std::size_t>(it - weight.begin())];
    }
    auto & counts = out.by_class[cls];
    if (rec.true_positive) {
      ++counts.tp;
    } else {
      ++counts.fp;
    }
  }
  for (const auto & rec : eval.labels) {
    auto & counts = out.by_class[label_class[rec.label]];
    if (rec.false_negative) {
      ++counts.fn;
    }
  }
  return out;
}

void write_score_csv(std::ostream & os, std::span<const ScoreRow> rows)
{
  const bool with_theta =
    std::any_of(rows.begin(), rows.end(), [](const ScoreRow & r) { return r.theta.has_value(); });
  if (with_theta) {
    os << "theta,";
  }
  os << "data,metric,threshold,size,TP,FP,FN,P,R,F1\n";
  for (const auto & r : rows) {
    const ScoreTriple s = precision_recall_f1(r.counts);
    if (with_theta) {
      fmt::print(os, "{:.2f},", r.theta.value_or(0.0));
    }
    fmt::print(
      os, "{},{},{:g},{},{},{},{},{:.2f},{:.2f},{:.2f}\n", r.data, to_string(r.metric),
      std::round(r.threshold * 1e6) / 1e4, r.size, r.counts.tp, r.counts.fp, r.counts.fn,
      s.precision, s.recall, s.f1);
  }
}

}  // namespace shrubmap
