#include "shrubmap/errors.hpp"
#include "shrubmap/pipeline.hpp"

#include "support/oracles.hpp"
#include "support/scenes.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace shrubmap;

namespace
{

DissolvedDetection dd(const Region & r, double score)
{
  DissolvedDetection d;
  d.region = r;
  d.score_avg = d.score_median = d.score_max = score;
  d.member_count = 1;
  d.member_scores = {score};
  return d;
}

// Fails on one named tile, otherwise returns a 10x10 pixel square.
class FlakyDetector : public DetectorPort
{
public:
  explicit FlakyDetector(std::string bad) : bad_(std::move(bad)) {}
  std::vector<TileDetection> detect(const Tile & tile) const override
  {
    if (tile.id == bad_) {
      throw DetectorFailure("model crashed");
    }
    return {{Region::rectangle(0, 0, 10, 10), 0.9}};
  }

private:
  std::string bad_;
};

class EmptyDetector : public DetectorPort
{
public:
  std::vector<TileDetection> detect(const Tile &) const override { return {}; }
};

class OfflineDetector : public DetectorPort
{
public:
  bool available() const override { return false; }
  std::vector<TileDetection> detect(const Tile &) const override { return {}; }
};

}  // namespace

TEST(TileGrid, HundredMeterBbox)
{
  const TileGrid g = build_tile_grid({0, 0, 100, 100});
  EXPECT_EQ(g.rows(), 2);
  EXPECT_EQ(g.cols(), 2);
  EXPECT_NEAR(g.tile_edge(), 58.24, 1e-12);
}

TEST(TileGrid, FootprintAreaNearNominal)
{
  const TileGrid g = build_tile_grid({0, 0, 100, 100});
  EXPECT_LT(std::abs(g.tile_area() - 3582.33) / 3582.33, 0.06);
}

TEST(TileGrid, BboxEqualToOneTile)
{
  const TileGrid g = build_tile_grid({5, 7, 5 + 58.24, 7 + 58.24});
  EXPECT_EQ(g.rows(), 1);
  EXPECT_EQ(g.cols(), 1);
}

TEST(TileGrid, ZeroAreaBboxThrows)
{
  EXPECT_THROW(build_tile_grid({0, 0, 0, 10}), DegenerateBBox);
  EXPECT_THROW(build_tile_grid({0, 0, 10, 10}, 448, 0.0), DegenerateBBox);
}

TEST(TileGrid, TilesPartitionTheBbox)
{
  const BBox bb{3, 4, 203, 154};
  const TileGrid g = build_tile_grid(bb);
  const auto tiles = g.tiles();
  ASSERT_EQ(tiles.size(), static_cast<std::size_t>(g.rows() * g.cols()));
  EXPECT_EQ(tiles.front().id, "r0_c0");
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ux(bb.min_x, bb.max_x), uy(bb.min_y, bb.max_y);
  for (int i = 0; i < 2000; ++i) {
    const double x = ux(rng), y = uy(rng);
    int holders = 0;
    for (const auto & t : tiles) {
      const BBox f = t.footprint();
      holders += x >= f.min_x && x < f.max_x && y >= f.min_y && y < f.max_y;
    }
    EXPECT_EQ(holders, 1);
    const auto rc = g.locate(x, y, bb);
    ASSERT_TRUE(rc.has_value());
    EXPECT_EQ(g.tile(rc->first, rc->second).id, TileGrid::tile_id(rc->first, rc->second));
  }
  EXPECT_TRUE(g.locate(bb.max_x, bb.max_y, bb).has_value());
  EXPECT_FALSE(g.locate(bb.max_x + 1, bb.max_y, bb).has_value());
}

TEST(TileGrid, PixelWorldRoundTrip)
{
  const Tile t{"t", 100, 200, 448, 448, 0.13, ""};
  const Point w = t.to_world({0, 0});
  EXPECT_NEAR(w.x(), 100, 1e-9);
  EXPECT_NEAR(w.y(), 200 + 58.24, 1e-9);
  const Point px = t.to_pixel({110, 210});
  const Point back = t.to_world(px);
  EXPECT_NEAR(back.x(), 110, 1e-9);
  EXPECT_NEAR(back.y(), 210, 1e-9);
}

TEST(Dem, SampleAndExtent)
{
  // 2x3 grid, row 0 north.
  const DemGrid dem(0, 0, 2, 3, 2, {1, 2, 3, 4, 5, -9999});
  EXPECT_EQ(dem.sample(1, 3).value(), 1.0);
  EXPECT_EQ(dem.sample(1, 1).value(), 4.0);
  EXPECT_FALSE(dem.sample(5, 1).has_value());
  EXPECT_FALSE(dem.sample(7, 1).has_value());
  EXPECT_EQ(dem.extent().max_x, 6.0);
  EXPECT_THROW(DemGrid(0, 0, 2, 3, 2, {1, 2}), DataError);
}

TEST(AltitudeFilter, KeepsAndDrops)
{
  const std::vector<Tile> tiles = {{"hi", 0, 0, 10, 10, 1.0, ""}, {"lo", 10, 0, 10, 10, 1.0, ""}};
  std::vector<double> v(20 * 10, 1800.0);
  v[5] = 1950.0;   // row 0 col 5, inside "hi"
  v[15] = 1899.0;  // row 0 col 15, inside "lo"
  const DemGrid dem(0, 0, 1, 20, 10, v);
  const AltitudeFilterResult r = altitude_filter(tiles, dem, 1900);
  EXPECT_EQ(r.kept, std::vector<std::string>{"hi"});
  EXPECT_EQ(r.dropped, std::vector<std::string>{"lo"});
}

TEST(AltitudeFilter, TouchingCellsDoNotCount)
{
  // The high cell touches the tile only along its edge.
  const std::vector<Tile> tiles = {{"t", 0, 0, 4, 4, 1.0, ""}};
  std::vector<double> v(5 * 4, 1000.0);
  for (int row = 0; row < 4; ++row) {
    v[row * 5 + 4] = 3000.0;
  }
  const DemGrid dem(0, 0, 1, 5, 4, v);
  EXPECT_EQ(footprint_altitude(tiles[0].footprint(), dem), 1000.0);
}

TEST(AltitudeFilter, NodataOnlyTileReported)
{
  const std::vector<Tile> tiles = {{"a", 0, 0, 2, 2, 1.0, ""}, {"b", 2, 0, 2, 2, 1.0, ""}};
  const DemGrid dem(0, 0, 1, 4, 2, {2000, 2000, -9999, -9999, 2000, 2000, -9999, -9999});
  const AltitudeFilterResult r = altitude_filter(tiles, dem);
  EXPECT_EQ(r.kept, std::vector<std::string>{"a"});
  EXPECT_EQ(r.no_coverage, std::vector<std::string>{"b"});
  EXPECT_FALSE(r.diagnostics.empty());
  EXPECT_THROW(footprint_altitude(tiles[1].footprint(), dem), NoDemCoverage);
}

TEST(AltitudeFilter, MeanRule)
{
  const DemGrid dem(0, 0, 1, 2, 1, {1800, 2100});
  const BBox fp{0, 0, 2, 1};
  EXPECT_EQ(footprint_altitude(fp, dem, AltitudeRule::Max), 2100.0);
  EXPECT_EQ(footprint_altitude(fp, dem, AltitudeRule::Mean), 1950.0);
}

TEST(AltitudeFilter, RampMatchesCellScan)
{
  const oracle::Raster raster = fixtures::e2e_raster();
  const DemGrid dem = fixtures::e2e_dem();
  for (double phase : {0.0, 0.7, 3.1}) {
    const TileGrid grid = build_tile_grid({phase, phase, 116.0, 116.0}, 100, 0.23);
    const AltitudeFilterResult r = altitude_filter(grid, dem, 1900);
    std::vector<std::string> want;
    for (const auto & t : grid.tiles()) {
      const BBox f = t.footprint();
      const auto v = oracle::footprint_value(raster, {f.min_x, f.min_y, f.max_x, f.max_y});
      if (v && *v >= 1900) {
        want.push_back(t.id);
      }
    }
    EXPECT_EQ(r.kept, want);
    EXPECT_FALSE(r.kept.empty());
    EXPECT_FALSE(r.dropped.empty());
  }
}

TEST(RunDetector, ShiftsToWorldCoordinates)
{
  const std::vector<Tile> tiles = {{"t", 1000, 2000, 100, 100, 0.5, ""}};
  const DetectorRun run = run_detector(tiles, FlakyDetector("none"));
  ASSERT_EQ(run.detections.size(), 1u);
  const BBox b = run.detections[0].region.bbox();
  EXPECT_NEAR(b.min_x, 1000, 1e-9);
  EXPECT_NEAR(b.max_x, 1005, 1e-9);
  EXPECT_NEAR(b.min_y, 2045, 1e-9);
  EXPECT_NEAR(b.max_y, 2050, 1e-9);
  EXPECT_EQ(run.detections[0].tile_id.value(), "t");
}

TEST(RunDetector, FailedTileIsSkipped)
{
  std::vector<Tile> tiles;
  for (int i = 0; i < 4; ++i) {
    tiles.push_back({"t" + std::to_string(i), i * 100.0, 0, 100, 100, 1.0, ""});
  }
  const DetectorRun run = run_detector(tiles, FlakyDetector("t2"), 3);
  EXPECT_EQ(run.detections.size(), 3u);
  EXPECT_EQ(run.failed_tiles, 1u);
  ASSERT_EQ(run.warnings.size(), 1u);
  EXPECT_NE(run.warnings[0].find("t2"), std::string::npos);
  EXPECT_EQ(run.detections[2].tile_id.value(), "t3");
}

TEST(RunDetector, EmptyTileAndUnavailable)
{
  const std::vector<Tile> tiles = {{"t", 0, 0, 10, 10, 1.0, ""}};
  EXPECT_TRUE(run_detector(tiles, EmptyDetector()).detections.empty());
  EXPECT_THROW(run_detector(tiles, OfflineDetector()), DetectorUnavailable);
}

TEST(ProcessDetector, CommandTemplate)
{
  const ProcessDetector p("model --in {image} --out {out} --id {tile_id} {x0} {y0} {gsd} {cols}x{rows}");
  const Tile t{"r1_c2", 10.5, 20, 448, 448, 0.13, "/img/a.tif"};
  EXPECT_EQ(
    p.command_for(t, "/tmp/o.geojson"),
    "model --in /img/a.tif --out /tmp/o.geojson --id r1_c2 10.5 20 0.13 448x448");
}

TEST(ProcessDetector, NonzeroExitFailsTile)
{
  const std::vector<Tile> tiles = {{"t", 0, 0, 10, 10, 1.0, ""}};
  const DetectorRun run = run_detector(tiles, ProcessDetector("exit 3"));
  EXPECT_EQ(run.failed_tiles, 1u);
  EXPECT_TRUE(run.detections.empty());
}

TEST(Dissolve, SplitShrubAcrossBoundary)
{
  const std::vector<Detection> dets = {
    {Region::rectangle(0, 0, 1, 2), 0.6, std::string("a")}, {Region::rectangle(1, 0, 2, 2), 0.8, std::string("b")}};
  const DissolveResult r = dissolve(dets);
  ASSERT_EQ(r.detections.size(), 1u);
  const DissolvedDetection & d = r.detections[0];
  EXPECT_NEAR(d.region.area(), 4.0, 1e-12);
  EXPECT_EQ(d.region.part_count(), 1u);
  EXPECT_DOUBLE_EQ(d.score_avg, 0.7);
  EXPECT_DOUBLE_EQ(d.score_median, 0.7);
  EXPECT_DOUBLE_EQ(d.score_max, 0.8);
  EXPECT_EQ(d.member_count, 2u);
  EXPECT_EQ(d.source_tiles, (std::set<std::string>{"a", "b"}));
}

TEST(Dissolve, DistantDetectionsUnchanged)
{
  const std::vector<Detection> dets = {
    {Region::rectangle(0, 0, 1, 1), 0.6, {}}, {Region::rectangle(5, 5, 7, 6), 0.8, {}}};
  const DissolveResult r = dissolve(dets);
  ASSERT_EQ(r.detections.size(), 2u);
  EXPECT_NEAR(r.detections[0].region.area(), 1.0, 1e-12);
  EXPECT_EQ(r.detections[1].score_max, 0.8);
}

TEST(Dissolve, SnapToleranceBridgesSmallGaps)
{
  const std::vector<Detection> near = {
    {Region::rectangle(0, 0, 1, 1), 0.6, {}}, {Region::rectangle(1.005, 0, 2, 1), 0.6, {}}};
  EXPECT_EQ(dissolve(near).detections.size(), 1u);
  const std::vector<Detection> far = {
    {Region::rectangle(0, 0, 1, 1), 0.6, {}}, {Region::rectangle(1.02, 0, 2, 1), 0.6, {}}};
  EXPECT_EQ(dissolve(far).detections.size(), 2u);
}

TEST(Dissolve, MedianOfThree)
{
  const std::vector<Detection> dets = {
    {Region::rectangle(0, 0, 1, 1), 0.2, {}}, {Region::rectangle(0.5, 0, 1.5, 1), 0.9, {}},
    {Region::rectangle(1, 0, 2, 1), 0.4, {}}};
  const DissolveResult r = dissolve(dets);
  ASSERT_EQ(r.detections.size(), 1u);
  EXPECT_DOUBLE_EQ(r.detections[0].score_median, 0.4);
  EXPECT_DOUBLE_EQ(r.detections[0].score_avg, 0.5);
  EXPECT_LE(r.detections[0].score_avg, r.detections[0].score_max);
}

TEST(Dissolve, ComponentsMatchUnionFind)
{
  std::mt19937_64 rng(12);
  for (int n = 0; n < 100; ++n) {
    std::vector<oracle::Rect> rects;
    std::vector<Region> regions;
    std::uniform_int_distribution<int> count(1, 25);
    const int k = count(rng);
    for (int i = 0; i < k; ++i) {
      rects.push_back(fixtures::random_rect(rng, 40, 4));
      regions.push_back(fixtures::to_region(rects.back()));
    }
    EXPECT_EQ(adjacency_components(regions, 0.01, 2), oracle::components(rects, 0.01)) << "scene " << n;

    std::vector<Detection> dets;
    for (const auto & r : regions) {
      dets.push_back({r, 0.5, {}});
    }
    const DissolveResult d = dissolve(dets);
    const auto comps = oracle::components(rects, 0.01);
    ASSERT_EQ(d.detections.size(), comps.size());
    for (std::size_t c = 0; c < comps.size(); ++c) {
      std::vector<oracle::Rect> members;
      for (std::size_t i : comps[c]) {
        members.push_back(rects[i]);
      }
      EXPECT_NEAR(d.detections[c].region.area(), oracle::covered_area(members), 1e-9);
    }
  }
}

TEST(Dissolve, Idempotent)
{
  std::mt19937_64 rng(21);
  for (int n = 0; n < 50; ++n) {
    std::vector<Detection> dets;
    for (int i = 0; i < 15; ++i) {
      dets.push_back({fixtures::to_region(fixtures::random_rect(rng, 30, 5)), 0.1 * (i % 10), {}});
    }
    const DissolveResult once = dissolve(dets);
    const DissolveResult twice = dissolve(std::span<const DissolvedDetection>(once.detections));
    ASSERT_EQ(once.detections.size(), twice.detections.size());
    for (std::size_t i = 0; i < once.detections.size(); ++i) {
      EXPECT_NEAR(once.detections[i].region.area(), twice.detections[i].region.area(), 1e-9);
      EXPECT_EQ(once.detections[i].member_scores, twice.detections[i].member_scores);
    }
  }
}

TEST(AreaFilter, InclusiveBoundary)
{
  std::vector<DissolvedDetection> dets = {
    dd(Region::rectangle(0, 0, 1.3, 0.8), 0.9), dd(Region::rectangle(5, 0, 6.03, 1), 0.9),
    dd(Region::rectangle(9, 0, 12, 1), 0.9)};
  const AreaFilterResult r = area_filter(dets, 1.04);
  EXPECT_EQ(r.kept.size(), 2u);
  EXPECT_EQ(r.removed, 1u);
  EXPECT_TRUE(area_filter({}, 1.04).kept.empty());
}

TEST(MergeMap, ThresholdInclusiveAndOrdered)
{
  std::vector<DissolvedDetection> dets = {
    dd(Region::rectangle(0, 10, 1, 11), 0.95), dd(Region::rectangle(5, 0, 6, 1), 0.50),
    dd(Region::rectangle(0, 0, 1, 1), 0.49)};
  const auto kept = merge_map(dets, ScoreField::Max, 0.5);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].score_max, 0.50);
  EXPECT_EQ(kept[1].score_max, 0.95);
  EXPECT_EQ(merge_map(dets, ScoreField::Max, 0.0).size(), 3u);
}

TEST(MergeMap, ScoreFieldSelectsAggregate)
{
  DissolvedDetection d = dd(Region::rectangle(0, 0, 1, 1), 0.9);
  d.score_avg = 0.4;
  d.score_median = 0.3;
  EXPECT_EQ(merge_map({d}, ScoreField::Max, 0.5).size(), 1u);
  EXPECT_EQ(merge_map({d}, ScoreField::Avg, 0.5).size(), 0u);
  EXPECT_EQ(merge_map({d}, ScoreField::Median, 0.3).size(), 1u);
  EXPECT_EQ(parse_score_field("median"), ScoreField::Median);
  EXPECT_THROW(parse_score_field("min"), ConfigError);
}

TEST(Filters, AreaAndScoreCommute)
{
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> side(0.5, 2.0), score(0, 1);
  std::vector<DissolvedDetection> dets;
  for (int i = 0; i < 200; ++i) {
    dets.push_back(dd(Region::rectangle(3.0 * i, 0, 3.0 * i + side(rng), side(rng)), score(rng)));
  }
  const auto a = merge_map(area_filter(dets, 1.04).kept, ScoreField::Max, 0.5);
  const auto b = area_filter(merge_map(dets, ScoreField::Max, 0.5), 1.04).kept;
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].region.bbox().min_x, b[i].region.bbox().min_x);
  }
}

TEST(Postprocess, EndToEndScene)
{
  const auto tiles = fixtures::e2e_tiles();
  ASSERT_EQ(tiles.size(), 4u);
  const fixtures::ClippingDetector det(fixtures::e2e_shrubs());
  const PostprocessResult r = postprocess(tiles, fixtures::e2e_dem(), det, {});
  EXPECT_EQ(r.altitude.kept.size(), 2u);
  EXPECT_EQ(r.altitude.dropped.size(), 2u);
  EXPECT_EQ(r.raw_detections, 18u);  // 16 shrubs, two of them in halves
  EXPECT_EQ(r.dissolved, 16u);
  EXPECT_EQ(r.removed_by_area, 1u);
  EXPECT_EQ(r.removed_by_score, 1u);
  EXPECT_EQ(r.map.size(), fixtures::kE2eExpected);
  double total = 0.0;
  for (const auto & d : r.map) {
    EXPECT_EQ(d.region.part_count(), 1u);
    total += d.region.area();
  }
  // 9+4+12+4+6+1.04 + 12+7.5 + 9+4+4+6+4+6
  EXPECT_NEAR(total, 88.54, 1e-6);
}

TEST(Postprocess, ConservesArea)
{
  const auto tiles = fixtures::e2e_tiles();
  const fixtures::ClippingDetector det(fixtures::e2e_shrubs());
  const PostprocessResult r = postprocess(tiles, fixtures::e2e_dem(), det, {});
  std::vector<Tile> kept;
  for (const auto & t : tiles) {
    if (std::find(r.altitude.kept.begin(), r.altitude.kept.end(), t.id) != r.altitude.kept.end()) {
      kept.push_back(t);
    }
  }
  const DetectorRun raw = run_detector(kept, det);
  double raw_area = 0.0;
  for (const auto & d : raw.detections) {
    raw_area += d.region.area();
  }
  double final_area = 0.0;
  for (const auto & d : r.map) {
    final_area += d.region.area();
  }
  EXPECT_LE(final_area, raw_area + 1e-9);
}
