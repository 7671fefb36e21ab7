// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include "shrubmap/errors.hpp"
#include "shrubmap/matching.hpp"
#include "shrubmap/metrics.hpp"
#include "shrubmap/pipeline.hpp"
#include "shrubmap/validation.hpp"

#include "support/oracles.hpp"
#include "support/scenes.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <string>

using namespace shrubmap;

namespace
{

struct Outcome
{
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Region random_polygon(std::mt19937_64 & rng, double cx, double cy, double r_min, double r_max, int n = 9)
{
  std::uniform_real_distribution<double> rad(r_min, r_max);
  std::uniform_real_distribution<double> wobble(-0.25, 0.25);
  Ring ring;
  for (int k = 0; k < n; ++k) {
    const double a = (k + 0.5 + wobble(rng)) * 2 * M_PI / n;
    const double r = rad(rng);
    ring.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
  }
  return Region::from_rings(ring);
}

Outcome metric_fixture()
{
  struct Row
  {
    ConfusionCounts c;
    double p, r, f1;
  };
  const Row rows[] = {
    {{568, 78, 125}, 87.93, 81.96, 84.84},    {{494, 152, 196}, 76.47, 71.59, 73.95},
    {{572, 74, 84}, 88.55, 87.20, 87.87},     {{551, 95, 103}, 85.29, 84.25, 84.77},
    {{1268, 438, 529}, 74.32, 70.56, 72.39},  {{833, 873, 938}, 48.82, 47.03, 47.91},
    {{1307, 399, 388}, 76.61, 77.11, 76.86},  {{1141, 565, 493}, 66.88, 69.83, 68.32},
  };
  const auto t0 = Clock::now();
  int ok = 0;
  std::string bad;
  for (const auto & row : rows) {
    const ScoreTriple s = precision_recall_f1(row.c);
    const bool hit = std::abs(s.precision - row.p) <= 0.01 && std::abs(s.recall - row.r) <= 0.01 &&
                     std::abs(s.f1 - row.f1) <= 0.01;
    ok += hit;
    if (!hit) {
      bad += fmt::format(" {}/{}/{}->{:.3f}/{:.3f}/{:.3f}", row.c.tp, row.c.fp, row.c.fn, s.precision, s.recall, s.f1);
    }
  }
  const double secs = seconds_since(t0);
  return {ok == 8 && secs < 1.0, fmt::format("{}/8 rows within 0.01 in {:.4f} s{}", ok, secs, bad)};
}

Outcome oracle_equivalence()
{
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240601);
  const int scenes = 1500;
  int mismatches = 0;
  std::size_t evaluations = 0;
  std::string first;
  for (int n = 0; n < scenes; ++n) {
    const auto s = fixtures::random_scene(rng, 8, 8);
    const auto dets = fixtures::to_detections(s.dets);
    const auto gts = fixtures::to_labels(s.labels);
    for (bool use_iou : {true, false}) {
      for (double thr : {0.5, 0.75}) {
        MatchConfig cfg;
        cfg.metric = use_iou ? Metric::IoU : Metric::SIoU;
        cfg.overlap_threshold = thr;
        const ConfusionCounts got = evaluate_scene(dets, gts, cfg).counts;
        const oracle::Counts want = oracle::evaluate(s.dets, s.labels, use_iou, thr, cfg.score_threshold).counts;
        ++evaluations;
        if (got.tp != want.tp || got.fp != want.fp || got.fn != want.fn) {
          if (mismatches++ == 0) {
            first = fmt::format(" first mismatch: scene {} {}@{}", n, use_iou ? "IoU" : "S-IoU", thr);
          }
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  return {
    mismatches == 0 && secs < 30.0,
    fmt::format("{} scenes, {} evaluations, {} mismatches in {:.2f} s{}", scenes, evaluations, mismatches, secs, first)};
}

Outcome dominance()
{
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> c(0, 10);
  std::uniform_real_distribution<double> side(0.2, 6);
  int pairs = 0, violations = 0;
  while (pairs < 10000) {
    Region p, l;
    if (pairs % 2 == 0) {
      const double x = c(rng), y = c(rng), x2 = c(rng), y2 = c(rng);
      p = Region::rectangle(x, y, x + side(rng), y + side(rng));
      l = Region::rectangle(x2, y2, x2 + side(rng), y2 + side(rng));
    } else {
      p = random_polygon(rng, c(rng), c(rng), 0.5, 3);
      l = random_polygon(rng, c(rng), c(rng), 0.5, 3);
    }
    if (intersection_area(p, l) <= 0.0) {
      continue;
    }
    ++pairs;
    const std::vector<Region> labels = {l};
    if (!(s_iou_prediction(p, labels) >= iou(p, l))) {
      ++violations;
    }
  }
  return {violations == 0, fmt::format("{} overlapping pairs, {} violations", pairs, violations)};
}

Outcome split_merge()
{
  const auto s = fixtures::split_merge_scene();
  const auto dets = fixtures::to_detections(s.dets);
  const auto gts = fixtures::to_labels(s.labels);
  MatchConfig cfg;
  cfg.metric = Metric::SIoU;
  const ConfusionCounts siou = evaluate_scene(dets, gts, cfg).counts;
  cfg.metric = Metric::IoU;
  const ConfusionCounts plain = evaluate_scene(dets, gts, cfg).counts;
  const bool ok = siou == ConfusionCounts{2, 0, 0} && plain == ConfusionCounts{0, 2, 1};
  return {
    ok, fmt::format(
          "S-IoU@50 ({},{},{}) expected (2,0,0); IoU@50 ({},{},{}) expected (0,2,1)", siou.tp, siou.fp, siou.fn,
          plain.tp, plain.fp, plain.fn)};
}

Outcome sweep_monotonicity()
{
  std::mt19937_64 rng(5);
  std::vector<fixtures::RectScene> scenes = {fixtures::split_merge_scene()};
  for (int i = 0; i < 200; ++i) {
    scenes.push_back(fixtures::random_scene(rng));
  }
  int breaks = 0;
  for (const auto & s : scenes) {
    const auto dets = fixtures::to_detections(s.dets);
    const auto gts = fixtures::to_labels(s.labels);
    for (Metric m : {Metric::IoU, Metric::SIoU}) {
      std::size_t prev_pred = SIZE_MAX, prev_fn = 0;
      for (int step = 0; step <= 20; ++step) {
        MatchConfig cfg;
        cfg.metric = m;
        cfg.score_threshold = step / 20.0;
        const ConfusionCounts c = evaluate_scene(dets, gts, cfg).counts;
        breaks += c.tp + c.fp > prev_pred || c.fn < prev_fn;
        prev_pred = c.tp + c.fp;
        prev_fn = c.fn;
      }
    }
  }
  return {breaks == 0, fmt::format("{} scenes x 2 metrics x 21 score thresholds, {} breaks", scenes.size(), breaks)};
}

Outcome geometry_identities()
{
  std::mt19937_64 rng(31337);
  std::uniform_real_distribution<double> c(0, 20), side(0.01, 8);
  int ie_fail = 0;
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double x1 = c(rng), y1 = c(rng), x2 = c(rng), y2 = c(rng);
    const Region a = Region::rectangle(x1, y1, x1 + side(rng), y1 + side(rng));
    const Region b = Region::rectangle(x2, y2, x2 + side(rng), y2 + side(rng));
    const double lhs = a.area() + b.area() - intersection_area(a, b) - union_of(a, b).area();
    const double rel = std::abs(lhs) / std::max(1.0, a.area() + b.area());
    worst = std::max(worst, rel);
    ie_fail += rel > 1e-9;
  }

  // Tiles of 40 px at 0.25 m (10 m) over a 30 m field; shrubs are irregular
  // polygons kept at least 0.1 m apart so each one is its own component.
  int idem_fail = 0, tile_fail = 0;
  double worst_area = 0.0;
  const TileGrid grid = build_tile_grid({0, 0, 30, 30}, 40, 0.25);
  const std::vector<Tile> tiles = grid.tiles();
  for (int scene = 0; scene < 100; ++scene) {
    std::vector<std::pair<Region, double>> shrubs;
    std::vector<std::array<double, 3>> placed;
    std::uniform_real_distribution<double> pos(2, 28), rad(0.4, 2.0), score(0, 1);
    for (int tries = 0; tries < 200 && shrubs.size() < 12; ++tries) {
      const double x = pos(rng), y = pos(rng), r = rad(rng);
      bool clear = true;
      for (const auto & q : placed) {
        clear = clear && std::hypot(x - q[0], y - q[1]) > r + q[2] + 0.1;
      }
      if (!clear) {
        continue;
      }
      placed.push_back({x, y, r});
      shrubs.push_back({random_polygon(rng, x, y, 0.6 * r, r), score(rng)});
    }

    std::vector<Detection> whole;
    for (const auto & [region, s] : shrubs) {
      whole.push_back({region, s, std::nullopt});
    }
    const DetectorRun split = run_detector(tiles, fixtures::ClippingDetector(shrubs), 2);
    const DissolveResult from_whole = dissolve(whole);
    const DissolveResult from_split = dissolve(split.detections);
    const DissolveResult again =
      dissolve(std::span<const DissolvedDetection>(from_split.detections));

    if (again.detections.size() != from_split.detections.size()) {
      ++idem_fail;
    } else {
      for (std::size_t i = 0; i < again.detections.size(); ++i) {
        if (std::abs(again.detections[i].region.area() - from_split.detections[i].region.area()) > 1e-9) {
          ++idem_fail;
          break;
        }
      }
    }

    // The split run is ordered by tile, the whole run by shrub; pair each
    // whole shrub with the split component nearest its centroid.
    if (from_whole.detections.size() != shrubs.size() || from_split.detections.size() != shrubs.size()) {
      ++tile_fail;
      continue;
    }
    for (std::size_t i = 0; i < shrubs.size(); ++i) {
      const Point c = from_whole.detections[i].region.centroid();
      const DissolvedDetection * best = nullptr;
      double best_d = INFINITY;
      for (const auto & s : from_split.detections) {
        const Point q = s.region.centroid();
        const double d = std::hypot(q.x() - c.x(), q.y() - c.y());
        if (d < best_d) {
          best_d = d;
          best = &s;
        }
      }
      const double d = std::abs(from_whole.detections[i].region.area() - best->region.area());
      worst_area = std::max(worst_area, d);
      if (d > 1e-6 || best->score_max != from_whole.detections[i].score_max || best->region.part_count() != 1) {
        ++tile_fail;
        break;
      }
    }
  }
  return {
    ie_fail == 0 && idem_fail == 0 && tile_fail == 0,
    fmt::format(
      "inclusion-exclusion: 10000 pairs, {} over 1e-9 (worst {:.2e}); dissolve idempotence: {} of 100 scenes fail; "
      "tile-boundary invariance: {} of 100 scenes fail (worst area gap {:.2e} m2)",
      ie_fail, worst, idem_fail, tile_fail, worst_area)};
}

Outcome end_to_end()
{
  const auto t0 = Clock::now();
  const auto tiles = fixtures::e2e_tiles();
  const fixtures::ClippingDetector det(fixtures::e2e_shrubs());
  PostprocessConfig cfg;
  cfg.min_altitude = 1900;
  cfg.min_area = 1.04;
  cfg.theta = 0.5;
  const PostprocessResult r = postprocess(tiles, fixtures::e2e_dem(), det, cfg);
  const double secs = seconds_since(t0);
  return {
    r.map.size() == fixtures::kE2eExpected && secs < 5.0,
    fmt::format(
      "20 shrubs, {} tiles ({} kept), {} raw, {} dissolved, -{} area, -{} score -> {} final (expected {}) in {:.3f} s",
      tiles.size(), r.altitude.kept.size(), r.raw_detections, r.dissolved, r.removed_by_area, r.removed_by_score,
      r.map.size(), fixtures::kE2eExpected, secs)};
}

Outcome validation_properties()
{
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-100, 300);
  std::uniform_int_distribution<int> len(1, 60);
  int order_fail = 0;
  for (int k = 0; k < 1000; ++k) {
    PairedSeries s;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) {
      s.observed.push_back(u(rng));
      s.predicted.push_back(k % 3 == 0 ? s.observed.back() + 5.0 : u(rng));
    }
    const ErrorStats e = error_stats(s);
    // One ulp of slack covers equal values computed along different paths.
    order_fail += !(e.rmse * (1 + 1e-12) >= e.mae && e.mae * (1 + 1e-12) >= std::abs(e.mbe));
  }

  PairedSeries offset;
  for (int i = 0; i < 10; ++i) {
    offset.observed.push_back(3.0 * i + 1);
    offset.predicted.push_back(3.0 * i + 3);
  }
  const ErrorStats e2 = error_stats(offset);
  const bool offset_ok = std::abs(e2.rmse - 2) < 1e-12 && std::abs(e2.mae - 2) < 1e-12 && std::abs(e2.mbe - 2) < 1e-12;

  int affine_fail = 0;
  double worst = 0.0;
  std::uniform_real_distribution<double> scale(0.01, 100), shift(-1000, 1000);
  for (int k = 0; k < 1000; ++k) {
    PairedSeries s;
    for (int i = 0; i < 25; ++i) {
      s.observed.push_back(u(rng));
      s.predicted.push_back(0.5 * s.observed.back() + u(rng) / 3);
    }
    const double r = pearson_r(s);
    PairedSeries t = s;
    const double a = scale(rng), b = shift(rng), c = scale(rng), d = shift(rng);
    for (double & v : t.observed) {
      v = a * v + b;
    }
    for (double & v : t.predicted) {
      v = c * v + d;
    }
    const double gap = std::abs(pearson_r(t) - r);
    worst = std::max(worst, gap);
    affine_fail += gap > 1e-9;
  }
  return {
    order_fail == 0 && offset_ok && affine_fail == 0,
    fmt::format(
      "rmse>=mae>=|mbe| on 1000 series: {} fail; obs+2 -> ({:g},{:g},{:g}); affine invariance: {} of 1000 over 1e-9 "
      "(worst {:.1e})",
      order_fail, e2.rmse, e2.mae, e2.mbe, affine_fail, worst)};
}

Outcome size_schema()
{
  const std::pair<double, SizeClass> edges[] = {
    {1.72, SizeClass::S}, {3.62, SizeClass::M}, {9.08, SizeClass::L}, {20.82, SizeClass::XL}, {41.06, SizeClass::XXL}};
  int edge_fail = 0;
  SizeClass below = SizeClass::XS;
  for (const auto & [edge, cls] : edges) {
    edge_fail += classify_size(edge) != cls;
    edge_fail += classify_size(std::nextafter(edge, 0.0)) != below;
    below = cls;
  }
  int total_fail = 0;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> expo(-300, 300);
  std::vector<double> probes = {
    std::numeric_limits<double>::denorm_min(), std::numeric_limits<double>::min(), 0.13, 0.1299999,
    std::numeric_limits<double>::max()};
  for (int i = 0; i < 10000; ++i) {
    probes.push_back(std::pow(10.0, expo(rng)));
  }
  for (double a : probes) {
    try {
      total_fail += static_cast<int>(classify_size(a)) != oracle::size_class(a);
    } catch (const Error &) {
      ++total_fail;
    }
  }
  return {
    edge_fail == 0 && total_fail == 0,
    fmt::format("5 boundaries, {} misclassified; {} positive probes, {} fail", edge_fail, probes.size(), total_fail)};
}

}  // namespace

int main()
{
  const std::pair<const char *, std::function<Outcome()>> criteria[] = {
    {"metric fixture reproduction", metric_fixture},
    {"matching oracle equivalence", oracle_equivalence},
    {"S-IoU dominance", dominance},
    {"split/merge semantics", split_merge},
    {"score threshold monotonicity", sweep_monotonicity},
    {"geometry identities", geometry_identities},
    {"end-to-end pipeline", end_to_end},
    {"validation statistics", validation_properties},
    {"size schema", size_schema},
  };
  int failed = 0;
  int index = 0;
  for (const auto & [name, fn] : criteria) {
    ++index;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception & e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    fmt::print("{} {}. {}: {}\n", o.pass ? "PASS" : "FAIL", index, name, o.detail);
  }
  fmt::print("{}/{} criteria passed\n", index - failed, index);
  return failed == 0 ? 0 : 1;
}
