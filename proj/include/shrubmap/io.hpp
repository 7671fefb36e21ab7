#pragma once

// File formats: GeoJSON feature files, ESRI ASCII DEMs, tile manifests and the
// flat key=value run configuration.

#include "shrubmap/matching.hpp"
#include "shrubmap/pipeline.hpp"
#include "shrubmap/validation.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace shrubmap::io
{

/// Detections and ground truths of one feature file. Every feature is a
/// Polygon or MultiPolygon with a "role" property ("detection" needs "score",
/// "groundtruth" takes "id" and "source").
struct FeatureSet
{
  std::vector<Detection> detections;
  std::vector<GroundTruth> groundtruths;
  std::optional<std::string> crs;
  std::vector<std::string> diagnostics;
};

/// Throws ParseError for malformed JSON; SchemaError or GeometryError listing
/// every offending feature index otherwise.
FeatureSet parse_features(std::string_view text, std::string_view source_name = "<memory>");
FeatureSet read_features(const std::filesystem::path & path);

std::string features_to_geojson(
  std::span<const Detection> dets, std::span<const GroundTruth> gts,
  const std::optional<std::string> & crs = std::nullopt);
void write_features(
  const std::filesystem::path & path, std::span<const Detection> dets,
  std::span<const GroundTruth> gts, const std::optional<std::string> & crs = std::nullopt);

/// Final map as detections whose "score" is the chosen aggregate; the three
/// aggregates, member count, source tiles and area ride along as properties.
std::string map_to_geojson(
  std::span<const DissolvedDetection> map, ScoreField field,
  const std::optional<std::string> & crs = std::nullopt);
void write_map(
  const std::filesystem::path & path, std::span<const DissolvedDetection> map, ScoreField field,
  const std::optional<std::string> & crs = std::nullopt);

using Site = SiteFootprint;

/// Polygon features with an "id" property.
std::vector<Site> parse_sites(std::string_view text, std::string_view source_name = "<memory>");
std::vector<Site> read_sites(const std::filesystem::path & path);

/// Header keys ncols, nrows, xllcorner|xllcenter, yllcorner|yllcenter,
/// cellsize, NODATA_value (optional), then row-major values, north first.
DemGrid parse_dem_ascii(std::string_view text, std::string_view source_name = "<memory>");
DemGrid read_dem_ascii(const std::filesystem::path & path);
std::string dem_to_ascii(const DemGrid & dem);

/// CSV with header tile_id,x0,y0,cols,rows,gsd,image_path.
std::vector<Tile> parse_tile_manifest(std::string_view text, std::string_view source_name = "<memory>");
std::vector<Tile> read_tile_manifest(const std::filesystem::path & path);
std::string tile_manifest_csv(std::span<const Tile> tiles);

struct RunConfig
{
  Metric metric = Metric::SIoU;
  double overlap_threshold = 0.5;
  double score_threshold = 0.5;
  double min_altitude = kDefaultMinAltitude;
  AltitudeRule altitude_rule = AltitudeRule::Max;
  double min_area = kDefaultMinArea;
  ScoreField score_field = ScoreField::Max;
  double min_intersection_fraction = 0.0;
  bool claimed_labels_never_fn = false;

  MatchConfig match_config() const;
  void validate() const;
};

/// key = value lines; '#' starts a comment. Unknown keys are a ConfigError.
RunConfig parse_run_config(std::string_view text, std::string_view source_name = "<memory>");
RunConfig read_run_config(const std::filesystem::path & path);
std::string to_config_text(const RunConfig & cfg);

/// Throws CrsMismatch when both are set and differ.
void check_crs(const std::optional<std::string> & a, const std::optional<std::string> & b);

std::string read_text_file(const std::filesystem::path & path);
void write_text_file(const std::filesystem::path & path, std::string_view text);

}  // namespace shrubmap::io
