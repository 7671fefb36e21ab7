#pragma once

// Deployment post-processing: tile the territory, drop low tiles by altitude,
// run a detector per tile, dissolve detections split across tiles, drop small
// crowns and threshold the aggregated score.

#include "shrubmap/geometry.hpp"
#include "shrubmap/matching.hpp"

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace shrubmap
{

inline constexpr int kDefaultTileSizePx = 448;
inline constexpr double kDefaultGsd = 0.13;
inline constexpr double kDefaultMinAltitude = 1900.0;
inline constexpr double kDefaultMinArea = 1.04;
inline constexpr double kDefaultDissolveSnap = 0.01;

/// One image tile. (x0, y0) is the lower-left corner of its footprint in world
/// meters; the image is cols x rows pixels of size gsd.
struct Tile
{
  std::string id;
  double x0 = 0.0;
  double y0 = 0.0;
  int cols = kDefaultTileSizePx;
  int rows = kDefaultTileSizePx;
  double gsd = kDefaultGsd;
  std::string image_path;

  BBox footprint() const { return {x0, y0, x0 + cols * gsd, y0 + rows * gsd}; }
  /// Pixel coordinates (origin upper-left, y down) to world meters.
  Point to_world(const Point & px) const { return {x0 + px.x() * gsd, y0 + (rows - px.y()) * gsd}; }
  Point to_pixel(const Point & world) const
  {
    return {(world.x() - x0) / gsd, rows - (world.y() - y0) / gsd};
  }
};

/// Regular grid of square tiles anchored at the bbox lower-left corner.
class TileGrid
{
public:
  TileGrid(double origin_x, double origin_y, int tile_size_px, double gsd, int rows, int cols);

  double origin_x() const { return origin_x_; }
  double origin_y() const { return origin_y_; }
  int tile_size_px() const { return tile_size_px_; }
  double gsd() const { return gsd_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double tile_edge() const { return tile_size_px_ * gsd_; }
  double tile_area() const { return tile_edge() * tile_edge(); }

  /// Row 0 is the southernmost row.
  Tile tile(int row, int col) const;
  /// Row-major from the south-west tile.
  std::vector<Tile> tiles() const;
  static std::string tile_id(int row, int col);
  /// Tile (row, col) holding a point of the bbox; tiles are half-open except
  /// along the bbox's max edges. nullopt outside the bbox.
  std::optional<std::pair<int, int>> locate(double x, double y, const BBox & bbox) const;

private:
  double origin_x_;
  double origin_y_;
  int tile_size_px_;
  double gsd_;
  int rows_;
  int cols_;
};

/// Throws DegenerateBBox for a zero-area bbox or a non-positive gsd/tile size.
TileGrid build_tile_grid(const BBox & bbox, int tile_size_px = kDefaultTileSizePx, double gsd = kDefaultGsd);

/// Elevation raster in meters. Row 0 is the northernmost row, as in ESRI ASCII grids.
class DemGrid
{
public:
  DemGrid(
    double x_ll, double y_ll, double cell_size, int ncols, int nrows, std::vector<double> values,
    double nodata = -9999.0);

  double x_ll() const { return x_ll_; }
  double y_ll() const { return y_ll_; }
  double cell_size() const { return cell_size_; }
  int ncols() const { return ncols_; }
  int nrows() const { return nrows_; }
  double nodata() const { return nodata_; }
  const std::vector<double> & values() const { return values_; }

  double at(int row, int col) const { return values_[static_cast<std::size_t>(row) * ncols_ + col]; }
  bool is_nodata(int row, int col) const;
  BBox cell_extent(int row, int col) const;
  BBox extent() const;
  /// Elevation of the cell holding (x, y); nullopt outside the grid or on nodata.
  std::optional<double> sample(double x, double y) const;

private:
  double x_ll_;
  double y_ll_;
  double cell_size_;
  int ncols_;
  int nrows_;
  std::vector<double> values_;
  double nodata_;
};

/// Altitude assigned to a tile: maximum (default) or mean of covered cells.
enum class AltitudeRule { Max, Mean };

/// Altitude of the footprint over DEM cells overlapping it with positive area.
/// Throws NoDemCoverage when all such cells are nodata or none exist.
double footprint_altitude(const BBox & footprint, const DemGrid & dem, AltitudeRule rule = AltitudeRule::Max);

struct AltitudeFilterResult
{
  std::vector<std::string> kept;
  std::vector<std::string> dropped;
  std::vector<std::string> no_coverage;
  std::vector<std::string> diagnostics;
};

AltitudeFilterResult altitude_filter(
  std::span<const Tile> tiles, const DemGrid & dem, double min_altitude_m = kDefaultMinAltitude,
  AltitudeRule rule = AltitudeRule::Max);
AltitudeFilterResult altitude_filter(
  const TileGrid & grid, const DemGrid & dem, double min_altitude_m = kDefaultMinAltitude,
  AltitudeRule rule = AltitudeRule::Max);

/// Detection in tile pixel coordinates, as produced by a model.
struct TileDetection
{
  Region region;
  double score = 0.0;
};

/// Per-tile detector. detect() throws DetectorFailure for a failed tile.
/// Implementations must tolerate concurrent detect() calls.
class DetectorPort
{
public:
  virtual ~DetectorPort() = default;
  virtual bool available() const { return true; }
  virtual std::vector<TileDetection> detect(const Tile & tile) const = 0;
};

/// Reads `<directory>/<tile_id>.geojson` (detections in pixel coordinates).
/// A tile without a file yields no detections.
class FileDetector : public DetectorPort
{
public:
  explicit FileDetector(std::string directory);
  bool available() const override;
  std::vector<TileDetection> detect(const Tile & tile) const override;

private:
  std::string directory_;
};

/// Runs an external command per tile. Placeholders {image}, {out}, {tile_id},
/// {x0}, {y0}, {gsd}, {cols}, {rows} are substituted; the command must write a
/// feature file to {out}. A nonzero exit status fails the tile.
class ProcessDetector : public DetectorPort
{
public:
  explicit ProcessDetector(std::string command_template, std::string work_dir = {});
  bool available() const override;
  std::vector<TileDetection> detect(const Tile & tile) const override;
  std::string command_for(const Tile & tile, const std::string & out_path) const;

private:
  std::string template_;
  std::string work_dir_;
};

struct DetectorRun
{
  std::vector<Detection> detections;
  std::vector<std::string> warnings;
  std::size_t failed_tiles = 0;
};

/// Runs the detector over tiles on a bounded pool (0 = hardware concurrency).
/// Detections are tagged with their tile id, moved to world coordinates and
/// returned in tile order. Throws DetectorUnavailable.
DetectorRun run_detector(std::span<const Tile> tiles, const DetectorPort & detector, unsigned workers = 0);

enum class ScoreField { Avg, Median, Max };
std::string_view to_string(ScoreField f);
ScoreField parse_score_field(std::string_view text);

struct DissolvedDetection
{
  Region region;
  double score_avg = 0.0;
  double score_median = 0.0;
  double score_max = 0.0;
  std::size_t member_count = 0;
  std::set<std::string> source_tiles;
  /// Scores of the raw detections merged into this one, ascending.
  std::vector<double> member_scores;

  double score(ScoreField f) const;
};

struct DissolveResult
{
  std::vector<DissolvedDetection> detections;
  std::vector<std::string> diagnostics;
};

/// Connected components of the "overlap or within `snap` meters" graph, each
/// sorted, ordered by smallest member.
std::vector<std::vector<std::size_t>> adjacency_components(
  std::span<const Region> regions, double snap = kDefaultDissolveSnap, unsigned workers = 0);

/// Unions each adjacency component into one detection with avg/median/max of
/// member scores. A component whose union fails is skipped and reported.
DissolveResult dissolve(
  std::span<const Detection> dets, double snap = kDefaultDissolveSnap, unsigned workers = 0);
/// Re-dissolve; member scores and source tiles are pooled.
DissolveResult dissolve(
  std::span<const DissolvedDetection> dets, double snap = kDefaultDissolveSnap, unsigned workers = 0);

struct AreaFilterResult
{
  std::vector<DissolvedDetection> kept;
  std::size_t removed = 0;
};

/// Keeps detections with area >= min_area_m2.
AreaFilterResult area_filter(std::vector<DissolvedDetection> dets, double min_area_m2 = kDefaultMinArea);

/// Drops detections whose chosen score is below theta and orders the rest by
/// centroid (y, then x).
std::vector<DissolvedDetection> merge_map(
  std::vector<DissolvedDetection> dets, ScoreField field, double theta);

struct PostprocessConfig
{
  double min_altitude = kDefaultMinAltitude;
  AltitudeRule altitude_rule = AltitudeRule::Max;
  double min_area = kDefaultMinArea;
  ScoreField score_field = ScoreField::Max;
  double theta = 0.5;
  double snap = kDefaultDissolveSnap;
  unsigned workers = 0;
};

struct PostprocessResult
{
  std::vector<DissolvedDetection> map;
  AltitudeFilterResult altitude;
  std::size_t raw_detections = 0;
  std::size_t dissolved = 0;
  std::size_t removed_by_area = 0;
  std::size_t removed_by_score = 0;
  std::vector<std::string> warnings;
};

/// Altitude filter, detection, dissolve, area filter and score threshold.
PostprocessResult postprocess(
  std::span<const Tile> tiles, const DemGrid & dem, const DetectorPort & detector,
  const PostprocessConfig & cfg);

}  // namespace shrubmap
