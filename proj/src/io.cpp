#include "shrubmap/io.hpp"

#include "shrubmap/errors.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

using nlohmann::json;

namespace shrubmap::io
{
namespace
{

std::string trim(std::string_view s)
{
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string_view s)
{
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return out;
}

std::optional<double> to_double(std::string_view text)
{
  const std::string t = trim(text);
  double v = 0.0;
  const char * first = t.data();
  const char * last = t.data() + t.size();
  if (!t.empty() && *first == '+') {
    ++first;
  }
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (t.empty() || ec != std::errc() || ptr != last) {
    return std::nullopt;
  }
  return v;
}

std::string join(const std::vector<std::string> & items, std::string_view sep)
{
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) {
      out += sep;
    }
    out += items[i];
  }
  return out;
}

// GeoJSON positions -> open ring.
Ring parse_ring(const json & coords)
{
  if (!coords.is_array()) {
    throw SchemaError("ring is not an array of positions");
  }
  Ring ring;
  ring.reserve(coords.size());
  for (const auto & pos : coords) {
    if (!pos.is_array() || pos.size() < 2 || !pos[0].is_number() || !pos[1].is_number()) {
      throw SchemaError("position is not a [x, y] number pair");
    }
    ring.emplace_back(pos[0].get<double>(), pos[1].get<double>());
  }
  return ring;
}

std::vector<Ring> parse_polygon_rings(const json & coords)
{
  if (!coords.is_array() || coords.empty()) {
    throw SchemaError("polygon coordinates must be a non-empty array of rings");
  }
  std::vector<Ring> rings;
  for (const auto & r : coords) {
    rings.push_back(parse_ring(r));
  }
  return rings;
}

Region parse_geometry(const json & geom)
{
  if (!geom.is_object() || !geom.contains("type") || !geom.contains("coordinates")) {
    throw SchemaError("feature has no geometry");
  }
  const std::string type = geom["type"].is_string() ? geom["type"].get<std::string>() : "";
  std::vector<std::vector<Ring>> polygons;
  if (type == "Polygon") {
    polygons.push_back(parse_polygon_rings(geom["coordinates"]));
  } else if (type == "MultiPolygon") {
    if (!geom["coordinates"].is_array()) {
      throw SchemaError("multipolygon coordinates must be an array");
    }
    for (const auto & p : geom["coordinates"]) {
      polygons.push_back(parse_polygon_rings(p));
    }
  } else {
    throw SchemaError("geometry type '" + type + "' is not Polygon or MultiPolygon");
  }
  try {
    return Region::from_polygons(polygons);
  } catch (const InvalidGeometry & e) {
    throw GeometryError(e.what());
  }
}

std::optional<std::string> scalar_string(const json & v)
{
  if (v.is_string()) {
    return v.get<std::string>();
  }
  if (v.is_number_integer()) {
    return std::to_string(v.get<long long>());
  }
  if (v.is_number()) {
    return fmt::format("{}", v.get<double>());
  }
  return std::nullopt;
}

std::optional<std::string> parse_crs(const json & doc)
{
  if (!doc.contains("crs") || doc["crs"].is_null()) {
    return std::nullopt;
  }
  const json & crs = doc["crs"];
  if (crs.is_string()) {
    return crs.get<std::string>();
  }
  if (crs.is_object() && crs.contains("properties") && crs["properties"].contains("name") &&
      crs["properties"]["name"].is_string()) {
    return crs["properties"]["name"].get<std::string>();
  }
  throw SchemaError("unrecognized crs member");
}

json parse_document(std::string_view text, std::string_view source)
{
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error & e) {
    throw ParseError(fmt::format("{}: malformed JSON: {}", source, e.what()));
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" || !doc.contains("features") ||
      !doc["features"].is_array()) {
    throw SchemaError(fmt::format("{}: not a GeoJSON FeatureCollection", source));
  }
  return doc;
}

json ring_json(const Polygon::ring_type & ring)
{
  // Boost keeps outer rings clockwise; GeoJSON wants them counter-clockwise.
  json out = json::array();
  for (auto it = ring.rbegin(); it != ring.rend(); ++it) {
    out.push_back({it->x(), it->y()});
  }
  return out;
}

json geometry_json(const Region & r)
{
  auto polygon_json = [](const Polygon & p) {
    json rings = json::array();
    rings.push_back(ring_json(p.outer()));
    for (const auto & inner : p.inners()) {
      rings.push_back(ring_json(inner));
    }
    return rings;
  };
  if (r.part_count() == 1) {
    return {{"type", "Polygon"}, {"coordinates", polygon_json(r.parts().front())}};
  }
  json polys = json::array();
  for (const auto & p : r.parts()) {
    polys.push_back(polygon_json(p));
  }
  return {{"type", "MultiPolygon"}, {"coordinates", polys}};
}

json collection(json features, const std::optional<std::string> & crs)
{
  json doc = {{"type", "FeatureCollection"}};
  if (crs) {
    doc["crs"] = {{"type", "name"}, {"properties", {{"name", *crs}}}};
  }
  doc["features"] = std::move(features);
  return doc;
}

}  // namespace

std::string read_text_file(const std::filesystem::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot read " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path & path, std::string_view text)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw DataError("cannot write " + path.string());
  }
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) {
    throw DataError("failed writing " + path.string());
  }
}

FeatureSet parse_features(std::string_view text, std::string_view source)
{
  const json doc = parse_document(text, source);
  FeatureSet out;
  out.crs = parse_crs(doc);

  std::vector<std::string> schema_errors;
  std::vector<std::string> geometry_errors;
  std::set<std::string> ids;
  const auto & features = doc["features"];
  for (std::size_t i = 0; i < features.size(); ++i) {
    const json & f = features[i];
    try {
      if (!f.is_object() || f.value("type", "") != "Feature") {
        throw SchemaError("not a Feature object");
      }
      const json props = f.contains("properties") && f["properties"].is_object() ? f["properties"] : json::object();
      if (!props.contains("role") || !props["role"].is_string()) {
        throw SchemaError("missing role");
      }
      const std::string role = props["role"].get<std::string>();
      if (role != "detection" && role != "groundtruth") {
        throw SchemaError("role '" + role + "' is not detection or groundtruth");
      }
      if (role == "detection") {
        if (!props.contains("score") || !props["score"].is_number()) {
          throw SchemaError("detection without a numeric score");
        }
        const double score = props["score"].get<double>();
        if (!(score >= 0.0 && score <= 1.0)) {
          throw SchemaError(fmt::format("score {} outside [0, 1]", score));
        }
        Detection d;
        d.region = parse_geometry(f.contains("geometry") ? f["geometry"] : json());
        d.score = score;
        if (props.contains("tile_id")) {
          d.tile_id = scalar_string(props["tile_id"]);
        }
        if (d.region.empty()) {
          out.diagnostics.push_back(fmt::format("{}: feature {} has an empty region", source, i));
        }
        out.detections.push_back(std::move(d));
      } else {
        GroundTruth g;
        std::optional<std::string> id;
        if (props.contains("id")) {
          id = scalar_string(props["id"]);
        } else if (f.contains("id")) {
          id = scalar_string(f["id"]);
        }
        g.id = id.value_or(fmt::format("gt{}", out.groundtruths.size()));
        if (!ids.insert(g.id).second) {
          throw SchemaError("duplicate ground truth id '" + g.id + "'");
        }
        if (props.contains("source")) {
          if (!props["source"].is_string()) {
            throw SchemaError("source must be PI or FW");
          }
          g.source = parse_source(props["source"].get<std::string>());
        }
        g.region = parse_geometry(f.contains("geometry") ? f["geometry"] : json());
        if (g.region.empty()) {
          out.diagnostics.push_back(fmt::format("{}: feature {} has an empty region", source, i));
        }
        out.groundtruths.push_back(std::move(g));
      }
    } catch (const GeometryError & e) {
      geometry_errors.push_back(fmt::format("feature {}: {}", i, e.what()));
    } catch (const SchemaError & e) {
      schema_errors.push_back(fmt::format("feature {}: {}", i, e.what()));
    }
  }
  if (!schema_errors.empty()) {
    schema_errors.insert(schema_errors.end(), geometry_errors.begin(), geometry_errors.end());
    throw SchemaError(fmt::format("{}: {}", source, join(schema_errors, "; ")));
  }
  if (!geometry_errors.empty()) {
    throw GeometryError(fmt::format("{}: {}", source, join(geometry_errors, "; ")));
  }
  return out;
}

FeatureSet read_features(const std::filesystem::path & path)
{
  return parse_features(read_text_file(path), path.string());
}

std::string features_to_geojson(
  std::span<const Detection> dets, std::span<const GroundTruth> gts, const std::optional<std::string> & crs)
{
  json features = json::array();
  for (const auto & d : dets) {
    json props = {{"role", "detection"}, {"score", d.score}};
    if (d.tile_id) {
      props["tile_id"] = *d.tile_id;
    }
    features.push_back({{"type", "Feature"}, {"geometry", geometry_json(d.region)}, {"properties", props}});
  }
  for (const auto & g : gts) {
    json props = {{"role", "groundtruth"}, {"id", g.id}, {"source", std::string(to_string(g.source))}};
    features.push_back({{"type", "Feature"}, {"geometry", geometry_json(g.region)}, {"properties", props}});
  }
  return collection(std::move(features), crs).dump(1) + "\n";
}

void write_features(
  const std::filesystem::path & path, std::span<const Detection> dets, std::span<const GroundTruth> gts,
  const std::optional<std::string> & crs)
{
  write_text_file(path, features_to_geojson(dets, gts, crs));
}

std::string map_to_geojson(
  std::span<const DissolvedDetection> map, ScoreField field, const std::optional<std::string> & crs)
{
  json features = json::array();
  for (const auto & d : map) {
    json tiles = json::array();
    for (const auto & t : d.source_tiles) {
      tiles.push_back(t);
    }
    json props = {
      {"role", "detection"},
      {"score", d.score(field)},
      {"score_field", std::string(to_string(field))},
      {"score_avg", d.score_avg},
      {"score_median", d.score_median},
      {"score_max", d.score_max},
      {"member_count", d.member_count},
      {"source_tiles", tiles},
      {"area_m2", d.region.area()},
    };
    features.push_back({{"type", "Feature"}, {"geometry", geometry_json(d.region)}, {"properties", props}});
  }
  return collection(std::move(features), crs).dump(1) + "\n";
}

void write_map(
  const std::filesystem::path & path, std::span<const DissolvedDetection> map, ScoreField field,
  const std::optional<std::string> & crs)
{
  write_text_file(path, map_to_geojson(map, field, crs));
}

std::vector<Site> parse_sites(std::string_view text, std::string_view source)
{
  const json doc = parse_document(text, source);
  std::vector<Site> out;
  std::vector<std::string> errors;
  std::set<std::string> ids;
  const auto & features = doc["features"];
  for (std::size_t i = 0; i < features.size(); ++i) {
    const json & f = features[i];
    try {
      std::optional<std::string> id;
      if (f.contains("properties") && f["properties"].is_object() && f["properties"].contains("id")) {
        id = scalar_string(f["properties"]["id"]);
      } else if (f.contains("id")) {
        id = scalar_string(f["id"]);
      }
      if (!id) {
        throw SchemaError("site without an id");
      }
      if (!ids.insert(*id).second) {
        throw SchemaError("duplicate site id '" + *id + "'");
      }
      Region r = parse_geometry(f.contains("geometry") ? f["geometry"] : json());
      if (r.empty()) {
        throw GeometryError("site footprint is empty");
      }
      out.push_back({*id, std::move(r)});
    } catch (const DataError & e) {
      errors.push_back(fmt::format("feature {}: {}", i, e.what()));
    }
  }
  if (!errors.empty()) {
    throw SchemaError(fmt::format("{}: {}", source, join(errors, "; ")));
  }
  return out;
}

std::vector<Site> read_sites(const std::filesystem::path & path)
{
  return parse_sites(read_text_file(path), path.string());
}

DemGrid parse_dem_ascii(std::string_view text, std::string_view source)
{
  std::istringstream in{std::string(text)};
  std::map<std::string, double> header;
  std::string token;
  std::vector<double> values;
  const std::set<std::string> known = {"ncols", "nrows", "xllcorner", "yllcorner", "xllcenter",
                                       "yllcenter", "cellsize", "nodata_value"};
  while (in >> token) {
    const std::string key = lower(token);
    if (known.count(key)) {
      if (!values.empty()) {
        throw ParseError(fmt::format("{}: header key '{}' after data values", source, token));
      }
      std::string value;
      if (!(in >> value)) {
        throw ParseError(fmt::format("{}: header key '{}' without a value", source, token));
      }
      const auto v = to_double(value);
      if (!v) {
        throw ParseError(fmt::format("{}: header '{}' has non-numeric value '{}'", source, token, value));
      }
      header[key] = *v;
      continue;
    }
    const auto v = to_double(token);
    if (!v) {
      throw ParseError(fmt::format("{}: unexpected token '{}'", source, token));
    }
    values.push_back(*v);
  }
  for (const char * key : {"ncols", "nrows", "cellsize"}) {
    if (!header.count(key)) {
      throw ParseError(fmt::format("{}: missing header '{}'", source, key));
    }
  }
  const double cs = header["cellsize"];
  double x_ll = 0.0;
  double y_ll = 0.0;
  if (header.count("xllcorner")) {
    x_ll = header["xllcorner"];
  } else if (header.count("xllcenter")) {
    x_ll = header["xllcenter"] - cs / 2.0;
  } else {
    throw ParseError(fmt::format("{}: missing header 'xllcorner'", source));
  }
  if (header.count("yllcorner")) {
    y_ll = header["yllcorner"];
  } else if (header.count("yllcenter")) {
    y_ll = header["yllcenter"] - cs / 2.0;
  } else {
    throw ParseError(fmt::format("{}: missing header 'yllcorner'", source));
  }
  const double nodata = header.count("nodata_value") ? header["nodata_value"] : -9999.0;
  try {
    return DemGrid(
      x_ll, y_ll, cs, static_cast<int>(header["ncols"]), static_cast<int>(header["nrows"]), std::move(values),
      nodata);
  } catch (const DataError & e) {
    throw ParseError(fmt::format("{}: {}", source, e.what()));
  }
}

DemGrid read_dem_ascii(const std::filesystem::path & path)
{
  return parse_dem_ascii(read_text_file(path), path.string());
}

std::string dem_to_ascii(const DemGrid & dem)
{
  std::string out = fmt::format(
    "ncols {}\nnrows {}\nxllcorner {}\nyllcorner {}\ncellsize {}\nNODATA_value {}\n", dem.ncols(),
    dem.nrows(), dem.x_ll(), dem.y_ll(), dem.cell_size(), dem.nodata());
  for (int r = 0; r < dem.nrows(); ++r) {
    for (int c = 0; c < dem.ncols(); ++c) {
      out += fmt::format("{}{}", c ? " " : "", dem.at(r, c));
    }
    out += '\n';
  }
  return out;
}

std::vector<Tile> parse_tile_manifest(std::string_view text, std::string_view source)
{
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> column;
  std::vector<Tile> tiles;
  std::set<std::string> ids;

  auto split = [](const std::string & l) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < l.size(); ++i) {
      const char ch = l[i];
      if (ch == '"') {
        if (quoted && i + 1 < l.size() && l[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = !quoted;
        }
      } else if (ch == ',' && !quoted) {
        cells.push_back(trim(cell));
        cell.clear();
      } else {
        cell += ch;
      }
    }
    cells.push_back(trim(cell));
    return cells;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) {
      continue;
    }
    const auto cells = split(line);
    if (column.empty()) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        column[lower(cells[i])] = i;
      }
      for (const char * key : {"tile_id", "x0", "y0", "cols", "rows", "gsd", "image_path"}) {
        if (!column.count(key)) {
          throw ParseError(fmt::format("{}: manifest header lacks column '{}'", source, key));
        }
      }
      continue;
    }
    auto cell = [&](const char * key) -> const std::string & {
      const std::size_t idx = column.at(key);
      if (idx >= cells.size()) {
        throw ParseError(fmt::format("{}:{}: missing column '{}'", source, line_no, key));
      }
      return cells[idx];
    };
    auto number = [&](const char * key) {
      const auto v = to_double(cell(key));
      if (!v) {
        throw ParseError(fmt::format("{}:{}: column '{}' is not a number", source, line_no, key));
      }
      return *v;
    };
    Tile t;
    t.id = cell("tile_id");
    t.x0 = number("x0");
    t.y0 = number("y0");
    t.cols = static_cast<int>(number("cols"));
    t.rows = static_cast<int>(number("rows"));
    t.gsd = number("gsd");
    t.image_path = cell("image_path");
    if (t.id.empty() || t.cols <= 0 || t.rows <= 0 || !(t.gsd > 0.0)) {
      throw ParseError(fmt::format("{}:{}: tile needs an id and positive cols, rows, gsd", source, line_no));
    }
    if (!ids.insert(t.id).second) {
      throw ParseError(fmt::format("{}:{}: duplicate tile id '{}'", source, line_no, t.id));
    }
    tiles.push_back(std::move(t));
  }
  if (column.empty()) {
    throw ParseError(fmt::format("{}: empty manifest", source));
  }
  return tiles;
}

std::vector<Tile> read_tile_manifest(const std::filesystem::path & path)
{
  return parse_tile_manifest(read_text_file(path), path.string());
}

std::string tile_manifest_csv(std::span<const Tile> tiles)
{
  std::string out = "tile_id,x0,y0,cols,rows,gsd,image_path\n";
  for (const auto & t : tiles) {
    out += fmt::format("{},{},{},{},{},{},{}\n", t.id, t.x0, t.y0, t.cols, t.rows, t.gsd, t.image_path);
  }
  return out;
}

MatchConfig RunConfig::match_config() const
{
  MatchConfig m;
  m.metric = metric;
  m.overlap_threshold = overlap_threshold;
  m.score_threshold = score_threshold;
  m.min_intersection_fraction = min_intersection_fraction;
  m.claimed_labels_never_fn = claimed_labels_never_fn;
  return m;
}

void RunConfig::validate() const
{
  match_config().validate();
  if (!std::isfinite(min_altitude)) {
    throw ConfigError("min_altitude must be finite");
  }
  if (!(min_area >= 0.0)) {
    throw ConfigError("min_area must be non-negative");
  }
}

RunConfig parse_run_config(std::string_view text, std::string_view source)
{
  RunConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    if (trim(line).empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(fmt::format("{}:{}: expected key = value", source, line_no));
    }
    const std::string key = lower(trim(line.substr(0, eq)));
    const std::string value = trim(line.substr(eq + 1));
    auto number = [&] {
      const auto v = to_double(value);
      if (!v) {
        throw ConfigError(fmt::format("{}:{}: '{}' needs a number", source, line_no, key));
      }
      return *v;
    };
    if (key == "metric") {
      cfg.metric = parse_metric(value);
    } else if (key == "overlap_threshold") {
      cfg.overlap_threshold = number();
    } else if (key == "score_threshold" || key == "theta") {
      cfg.score_threshold = number();
    } else if (key == "min_altitude") {
      cfg.min_altitude = number();
    } else if (key == "altitude_rule") {
      const std::string v = lower(value);
      if (v != "max" && v != "mean") {
        throw ConfigError(fmt::format("{}:{}: altitude_rule must be max or mean", source, line_no));
      }
      cfg.altitude_rule = v == "max" ? AltitudeRule::Max : AltitudeRule::Mean;
    } else if (key == "min_area") {
      cfg.min_area = number();
    } else if (key == "score_field") {
      cfg.score_field = parse_score_field(value);
    } else if (key == "min_intersection_fraction") {
      cfg.min_intersection_fraction = number();
    } else if (key == "claimed_labels_never_fn") {
      const std::string v = lower(value);
      if (v != "true" && v != "false") {
        throw ConfigError(fmt::format("{}:{}: claimed_labels_never_fn must be true or false", source, line_no));
      }
      cfg.claimed_labels_never_fn = v == "true";
    } else {
      throw ConfigError(fmt::format("{}:{}: unknown key '{}'", source, line_no, key));
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig read_run_config(const std::filesystem::path & path)
{
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const DataError & e) {
    throw ConfigError(e.what());
  }
  return parse_run_config(text, path.string());
}

std::string to_config_text(const RunConfig & cfg)
{
  return fmt::format(
    "metric = {}\noverlap_threshold = {}\nscore_threshold = {}\nmin_altitude = {}\naltitude_rule = {}\n"
    "min_area = {}\nscore_field = {}\nmin_intersection_fraction = {}\nclaimed_labels_never_fn = {}\n",
    cfg.metric == Metric::IoU ? "iou" : "siou", cfg.overlap_threshold, cfg.score_threshold, cfg.min_altitude,
    cfg.altitude_rule == AltitudeRule::Max ? "max" : "mean", cfg.min_area, to_string(cfg.score_field),
    cfg.min_intersection_fraction, cfg.claimed_labels_never_fn ? "true" : "false");
}

void check_crs(const std::optional<std::string> & a, const std::optional<std::string> & b)
{
  if (a && b && *a != *b) {
    throw CrsMismatch("coordinate reference systems differ: '" + *a + "' vs '" + *b + "'");
  }
}

}  // namespace shrubmap::io
