#include "shrubmap/pipeline.hpp"

#include "shrubmap/errors.hpp"

#include "parallel.hpp"

#include <boost/geometry/index/rtree.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

namespace shrubmap
{
namespace
{

// Ceil of a cell ratio, ignoring rounding noise just above an integer.
int cells_needed(double length, double edge)
{
  return std::max(1, static_cast<int>(std::ceil(length / edge - 1e-9)));
}

std::size_t find_root(std::vector<std::size_t> & parent, std::size_t i)
{
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

double median_of_sorted(const std::vector<double> & v)
{
  const std::size_t n = v.size();
  if (n == 0) {
    return 0.0;
  }
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

DissolvedDetection aggregate(Region region, std::vector<double> scores, std::set<std::string> tiles)
{
  std::sort(scores.begin(), scores.end());
  DissolvedDetection d;
  d.region = std::move(region);
  d.member_count = scores.size();
  if (!scores.empty()) {
    d.score_avg = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
    d.score_median = median_of_sorted(scores);
    d.score_max = scores.back();
    // Rounding in the mean may push it just past the max for equal scores.
    d.score_avg = std::min(d.score_avg, d.score_max);
  }
  d.member_scores = std::move(scores);
  d.source_tiles = std::move(tiles);
  return d;
}

template <class Item, class Collect>
DissolveResult dissolve_impl(std::span<const Item> items, double snap, unsigned workers, Collect collect)
{
  std::vector<Region> regions;
  regions.reserve(items.size());
  for (const auto & it : items) {
    regions.push_back(it.region);
  }
  DissolveResult out;
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    if (regions[i].empty()) {
      out.diagnostics.push_back(fmt::format("detection {} skipped: empty region", i));
    } else {
      usable.push_back(i);
    }
  }
  std::vector<Region> live;
  for (std::size_t i : usable) {
    live.push_back(regions[i]);
  }
  const auto components = adjacency_components(live, snap, workers);

  std::vector<std::optional<DissolvedDetection>> merged(components.size());
  std::vector<std::string> failures(components.size());
  detail::parallel_for(components.size(), workers, [&](unsigned, std::size_t c) {
    std::vector<Region> parts;
    std::vector<double> scores;
    std::set<std::string> tiles;
    for (std::size_t m : components[c]) {
      const std::size_t src = usable[m];
      parts.push_back(regions[src]);
      collect(items[src], scores, tiles);
    }
    try {
      merged[c] = aggregate(union_of(parts), std::move(scores), std::move(tiles));
    } catch (const std::exception & e) {
      failures[c] = fmt::format("component {} skipped: {}", c, e.what());
    }
  });
  for (std::size_t c = 0; c < components.size(); ++c) {
    if (merged[c]) {
      out.detections.push_back(std::move(*merged[c]));
    } else {
      out.diagnostics.push_back(failures[c]);
    }
  }
  return out;
}

}  // namespace

TileGrid::TileGrid(double origin_x, double origin_y, int tile_size_px, double gsd, int rows, int cols)
: origin_x_(origin_x),
  origin_y_(origin_y),
  tile_size_px_(tile_size_px),
  gsd_(gsd),
  rows_(rows),
  cols_(cols)
{
  if (tile_size_px <= 0 || !(gsd > 0.0) || rows <= 0 || cols <= 0) {
    throw DegenerateBBox("tile grid needs positive tile size, gsd, rows and cols");
  }
}

std::string TileGrid::tile_id(int row, int col) { return fmt::format("r{}_c{}", row, col); }

Tile TileGrid::tile(int row, int col) const
{
  Tile t;
  t.id = tile_id(row, col);
  t.x0 = origin_x_ + col * tile_edge();
  t.y0 = origin_y_ + row * tile_edge();
  t.cols = tile_size_px_;
  t.rows = tile_size_px_;
  t.gsd = gsd_;
  return t;
}

std::vector<Tile> TileGrid::tiles() const
{
  std::vector<Tile> out;
  out.reserve(static_cast<std::size_t>(rows_) * cols_);
  for (int r = 0; r < rows_; ++r) {
    for (int c = 0; c < cols_; ++c) {
      out.push_back(tile(r, c));
    }
  }
  return out;
}

std::optional<std::pair<int, int>> TileGrid::locate(double x, double y, const BBox & bbox) const
{
  if (x < bbox.min_x || x > bbox.max_x || y < bbox.min_y || y > bbox.max_y) {
    return std::nullopt;
  }
  const int col = std::min(cols_ - 1, static_cast<int>(std::floor((x - origin_x_) / tile_edge())));
  const int row = std::min(rows_ - 1, static_cast<int>(std::floor((y - origin_y_) / tile_edge())));
  return std::make_pair(std::max(0, row), std::max(0, col));
}

TileGrid build_tile_grid(const BBox & bbox, int tile_size_px, double gsd)
{
  const bool finite = std::isfinite(bbox.min_x) && std::isfinite(bbox.min_y) &&
                      std::isfinite(bbox.max_x) && std::isfinite(bbox.max_y);
  if (!finite || !(bbox.width() > 0.0) || !(bbox.height() > 0.0)) {
    throw DegenerateBBox("bounding box has zero area");
  }
  if (tile_size_px <= 0 || !(gsd > 0.0)) {
    throw DegenerateBBox("tile size and ground sample distance must be positive");
  }
  const double edge = tile_size_px * gsd;
  return TileGrid(
    bbox.min_x, bbox.min_y, tile_size_px, gsd, cells_needed(bbox.height(), edge),
    cells_needed(bbox.width(), edge));
}

DemGrid::DemGrid(
  double x_ll, double y_ll, double cell_size, int ncols, int nrows, std::vector<double> values,
  double nodata)
: x_ll_(x_ll),
  y_ll_(y_ll),
  cell_size_(cell_size),
  ncols_(ncols),
  nrows_(nrows),
  values_(std::move(values)),
  nodata_(nodata)
{
  if (ncols <= 0 || nrows <= 0 || !(cell_size > 0.0)) {
    throw DataError("DEM needs positive ncols, nrows and cellsize");
  }
  if (values_.size() != static_cast<std::size_t>(ncols) * static_cast<std::size_t>(nrows)) {
    throw DataError(fmt::format(
      "DEM has {} values, expected {} x {} = {}", values_.size(), nrows, ncols,
      static_cast<std::size_t>(ncols) * static_cast<std::size_t>(nrows)));
  }
}

bool DemGrid::is_nodata(int row, int col) const
{
  const double v = at(row, col);
  return v == nodata_ || !std::isfinite(v);
}

BBox DemGrid::cell_extent(int row, int col) const
{
  const double top = y_ll_ + (nrows_ - row) * cell_size_;
  return {x_ll_ + col * cell_size_, top - cell_size_, x_ll_ + (col + 1) * cell_size_, top};
}

BBox DemGrid::extent() const
{
  return {x_ll_, y_ll_, x_ll_ + ncols_ * cell_size_, y_ll_ + nrows_ * cell_size_};
}

std::optional<double> DemGrid::sample(double x, double y) const
{
  const double fc = std::floor((x - x_ll_) / cell_size_);
  const double fr = std::floor((y - y_ll_) / cell_size_);
  if (fc < 0 || fr < 0 || fc >= ncols_ || fr >= nrows_) {
    return std::nullopt;
  }
  const int col = static_cast<int>(fc);
  const int row = nrows_ - 1 - static_cast<int>(fr);
  if (is_nodata(row, col)) {
    return std::nullopt;
  }
  return at(row, col);
}

double footprint_altitude(const BBox & fp, const DemGrid & dem, AltitudeRule rule)
{
  const double cs = dem.cell_size();
  // Candidate window padded by one cell; the exact overlap test decides.
  const int c_lo = std::max(0, static_cast<int>(std::floor((fp.min_x - dem.x_ll()) / cs)) - 1);
  const int c_hi = std::min(dem.ncols() - 1, static_cast<int>(std::floor((fp.max_x - dem.x_ll()) / cs)) + 1);
  const double top = dem.y_ll() + dem.nrows() * cs;
  const int r_lo = std::max(0, static_cast<int>(std::floor((top - fp.max_y) / cs)) - 1);
  const int r_hi = std::min(dem.nrows() - 1, static_cast<int>(std::floor((top - fp.min_y) / cs)) + 1);

  double best = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  std::size_t count = 0;
  for (int r = r_lo; r <= r_hi; ++r) {
    for (int c = c_lo; c <= c_hi; ++c) {
      const BBox cell = dem.cell_extent(r, c);
      const bool overlaps = cell.min_x < fp.max_x && cell.max_x > fp.min_x &&
                            cell.min_y < fp.max_y && cell.max_y > fp.min_y;
      if (!overlaps || dem.is_nodata(r, c)) {
        continue;
      }
      best = std::max(best, dem.at(r, c));
      sum += dem.at(r, c);
      ++count;
    }
  }
  if (count == 0) {
    throw NoDemCoverage("footprint has no DEM cells with data");
  }
  return rule == AltitudeRule::Max ? best : sum / static_cast<double>(count);
}

AltitudeFilterResult altitude_filter(
  std::span<const Tile> tiles, const DemGrid & dem, double min_altitude_m, AltitudeRule rule)
{
  AltitudeFilterResult out;
  for (const auto & t : tiles) {
    try {
      const double alt = footprint_altitude(t.footprint(), dem, rule);
      (alt >= min_altitude_m ? out.kept : out.dropped).push_back(t.id);
    } catch (const NoDemCoverage &) {
      out.no_coverage.push_back(t.id);
      out.diagnostics.push_back(fmt::format("tile {} dropped: no DEM coverage", t.id));
    }
  }
  return out;
}

AltitudeFilterResult altitude_filter(
  const TileGrid & grid, const DemGrid & dem, double min_altitude_m, AltitudeRule rule)
{
  const auto tiles = grid.tiles();
  return altitude_filter(std::span<const Tile>(tiles), dem, min_altitude_m, rule);
}

std::string_view to_string(ScoreField f)
{
  switch (f) {
    case ScoreField::Avg: return "avg";
    case ScoreField::Median: return "median";
    case ScoreField::Max: return "max";
  }
  return "?";
}

ScoreField parse_score_field(std::string_view text)
{
  std::string t(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  if (t == "avg" || t == "average" || t == "mean") {
    return ScoreField::Avg;
  }
  if (t == "median") {
    return ScoreField::Median;
  }
  if (t == "max" || t == "maximum") {
    return ScoreField::Max;
  }
  throw ConfigError("unknown score field '" + std::string(text) + "' (expected avg, median or max)");
}

double DissolvedDetection::score(ScoreField f) const
{
  switch (f) {
    case ScoreField::Avg: return score_avg;
    case ScoreField::Median: return score_median;
    case ScoreField::Max: return score_max;
  }
  return score_max;
}

std::vector<std::vector<std::size_t>> adjacency_components(
  std::span<const Region> regions, double snap, unsigned workers)
{
  using Box = bg::model::box<Point>;
  using Entry = std::pair<Box, std::size_t>;

  std::vector<Entry> entries;
  entries.reserve(regions.size());
  for (std::size_t i = 0; i < regions.size(); ++i) {
    const BBox b = regions[i].bbox();
    entries.emplace_back(Box(Point(b.min_x, b.min_y), Point(b.max_x, b.max_y)), i);
  }
  const bgi::rtree<Entry, bgi::quadratic<16>> index(entries.begin(), entries.end());

  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> edges(
    detail::resolve_workers(workers, regions.size()));
  detail::parallel_for(regions.size(), static_cast<unsigned>(edges.size()), [&](unsigned w, std::size_t i) {
    const BBox b = regions[i].bbox().expanded(snap);
    const Box query(Point(b.min_x, b.min_y), Point(b.max_x, b.max_y));
    std::vector<Entry> hits;
    index.query(bgi::intersects(query), std::back_inserter(hits));
    for (const auto & [box, j] : hits) {
      if (j > i && distance(regions[i], regions[j]) <= snap) {
        edges[w].emplace_back(i, j);
      }
    }
  });

  std::vector<std::size_t> parent(regions.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  for (const auto & list : edges) {
    for (const auto & [a, b] : list) {
      const std::size_t ra = find_root(parent, a);
      const std::size_t rb = find_root(parent, b);
      if (ra != rb) {
        parent[std::max(ra, rb)] = std::min(ra, rb);
      }
    }
  }
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    groups[find_root(parent, i)].push_back(i);
  }
  // Roots are the smallest member of each group, so map order is by smallest member.
  std::vector<std::vector<std::size_t>> out;
  out.reserve(groups.size());
  for (auto & [root, members] : groups) {
    out.push_back(std::move(members));
  }
  return out;
}

DissolveResult dissolve(std::span<const Detection> dets, double snap, unsigned workers)
{
  return dissolve_impl(dets, snap, workers, [](const Detection & d, auto & scores, auto & tiles) {
    scores.push_back(d.score);
    if (d.tile_id) {
      tiles.insert(*d.tile_id);
    }
  });
}

DissolveResult dissolve(std::span<const DissolvedDetection> dets, double snap, unsigned workers)
{
  return dissolve_impl(dets, snap, workers, [](const DissolvedDetection & d, auto & scores, auto & tiles) {
    if (d.member_scores.empty()) {
      scores.push_back(d.score_max);
    } else {
      scores.insert(scores.end(), d.member_scores.begin(), d.member_scores.end());
    }
    tiles.insert(d.source_tiles.begin(), d.source_tiles.end());
  });
}

AreaFilterResult area_filter(std::vector<DissolvedDetection> dets, double min_area_m2)
{
  // Shoelace rounding must not flip the inclusive boundary.
  const double cutoff = min_area_m2 * (1.0 - 1e-12);
  AreaFilterResult out;
  for (auto & d : dets) {
    if (d.region.area() >= cutoff) {
      out.kept.push_back(std::move(d));
    } else {
      ++out.removed;
    }
  }
  return out;
}

std::vector<DissolvedDetection> merge_map(std::vector<DissolvedDetection> dets, ScoreField field, double theta)
{
  std::erase_if(dets, [&](const DissolvedDetection & d) { return d.score(field) < theta; });
  std::vector<std::pair<Point, std::size_t>> keys;
  keys.reserve(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    keys.emplace_back(dets[i].region.centroid(), i);
  }
  std::stable_sort(keys.begin(), keys.end(), [](const auto & a, const auto & b) {
    if (a.first.y() != b.first.y()) {
      return a.first.y() < b.first.y();
    }
    return a.first.x() < b.first.x();
  });
  std::vector<DissolvedDetection> out;
  out.reserve(dets.size());
  for (const auto & [c, i] : keys) {
    out.push_back(std::move(dets[i]));
  }
  return out;
}

PostprocessResult postprocess(
  std::span<const Tile> tiles, const DemGrid & dem, const DetectorPort & detector,
  const PostprocessConfig & cfg)
{
  PostprocessResult out;
  out.altitude = altitude_filter(tiles, dem, cfg.min_altitude, cfg.altitude_rule);
  out.warnings = out.altitude.diagnostics;

  const std::set<std::string> keep(out.altitude.kept.begin(), out.altitude.kept.end());
  std::vector<Tile> selected;
  for (const auto & t : tiles) {
    if (keep.count(t.id)) {
      selected.push_back(t);
    }
  }

  DetectorRun run = run_detector(selected, detector, cfg.workers);
  out.raw_detections = run.detections.size();
  out.warnings.insert(out.warnings.end(), run.warnings.begin(), run.warnings.end());

  DissolveResult merged = dissolve(std::span<const Detection>(run.detections), cfg.snap, cfg.workers);
  out.dissolved = merged.detections.size();
  out.warnings.insert(out.warnings.end(), merged.diagnostics.begin(), merged.diagnostics.end());

  AreaFilterResult sized = area_filter(std::move(merged.detections), cfg.min_area);
  out.removed_by_area = sized.removed;

  const std::size_t before = sized.kept.size();
  out.map = merge_map(std::move(sized.kept), cfg.score_field, cfg.theta);
  out.removed_by_score = before - out.map.size();
  return out;
}

}  // namespace shrubmap
