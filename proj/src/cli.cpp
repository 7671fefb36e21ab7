#include "shrubmap/cli.hpp"

#include "shrubmap/errors.hpp"
#include "shrubmap/io.hpp"
#include "shrubmap/mapstats.hpp"
#include "shrubmap/metrics.hpp"
#include "shrubmap/pipeline.hpp"
#include "shrubmap/validation.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

namespace shrubmap::cli
{
namespace
{

struct EvalOptions
{
  std::string dets;
  std::string gts;
  std::string config;
  std::string metric;
  std::vector<double> thresholds;
  double theta = 0.5;
  double min_fraction = 0.0;
  bool claimed = false;
  std::string data = "scene";
  std::string out;
};

struct PostprocessOptions
{
  std::string tiles;
  std::string dem;
  std::string config;
  double min_alt = kDefaultMinAltitude;
  double min_area = kDefaultMinArea;
  std::string score_field = "max";
  std::string altitude_rule = "max";
  double theta = 0.5;
  std::string out;
  std::string detections_dir;
  std::string detector_cmd;
  std::string crs;
  unsigned workers = 0;
  bool strict = false;
};

struct MapStatOptions
{
  std::string map;
  std::string dem;
  std::vector<double> extent;
  std::string out;
  std::string geojson;
  std::string medians;
  bool by_size = false;
};

struct ValidateOptions
{
  std::string sites;
  std::string gts;
  std::string map;
  std::string kind = "count";
  std::string scatter;
  std::string out;
};

struct ClassifyOptions
{
  std::vector<double> areas;
  std::string features;
  std::string out;
};

// Accepts 0.5 or 50 for a 50% threshold.
double as_fraction(double v) { return v > 1.0 ? v / 100.0 : v; }

void emit(const std::string & path, const std::string & text, std::ostream & out)
{
  if (path.empty() || path == "-") {
    out << text;
  } else {
    io::write_text_file(path, text);
  }
}

void print_warnings(const std::vector<std::string> & notes, std::ostream & err)
{
  for (const auto & n : notes) {
    err << "warning: " << n << '\n';
  }
}

struct EvalInputs
{
  std::vector<Detection> dets;
  std::vector<GroundTruth> gts;
  io::RunConfig cfg;
  std::vector<Metric> metrics;
  std::vector<double> thresholds;
};

EvalInputs load_eval(const EvalOptions & o, const CLI::App & sub, std::ostream & err)
{
  EvalInputs in;
  if (!o.config.empty()) {
    in.cfg = io::read_run_config(o.config);
  }
  if (sub.count("--theta")) {
    in.cfg.score_threshold = o.theta;
  }
  if (sub.count("--min-fraction")) {
    in.cfg.min_intersection_fraction = o.min_fraction;
  }
  if (sub.count("--claimed-labels-never-fn")) {
    in.cfg.claimed_labels_never_fn = o.claimed;
  }
  if (o.metric == "both") {
    in.metrics = {Metric::IoU, Metric::SIoU};
  } else if (!o.metric.empty()) {
    in.metrics = {parse_metric(o.metric)};
  } else {
    in.metrics = {in.cfg.metric};
  }
  if (o.thresholds.empty()) {
    in.thresholds = {in.cfg.overlap_threshold};
  } else {
    for (double t : o.thresholds) {
      in.thresholds.push_back(as_fraction(t));
    }
  }
  for (double t : in.thresholds) {
    MatchConfig probe = in.cfg.match_config();
    probe.overlap_threshold = t;
    probe.validate();
  }
  in.cfg.validate();

  io::FeatureSet d = io::read_features(o.dets);
  io::FeatureSet g = io::read_features(o.gts);
  io::check_crs(d.crs, g.crs);
  print_warnings(d.diagnostics, err);
  print_warnings(g.diagnostics, err);
  in.dets = std::move(d.detections);
  in.gts = std::move(g.groundtruths);
  return in;
}

void add_eval_options(CLI::App & sub, EvalOptions & o)
{
  sub.add_option("--dets", o.dets, "Detections feature file (GeoJSON)")->required();
  sub.add_option("--gts", o.gts, "Ground-truth feature file (GeoJSON)")->required();
  sub.add_option("--config", o.config, "Run configuration (key = value)");
  sub.add_option("--metric", o.metric, "iou, siou or both");
  sub.add_option("--thr", o.thresholds, "Overlap threshold(s), 0.5 or 50");
  sub.add_option("--theta", o.theta, "Confidence score threshold");
  sub.add_option("--min-fraction", o.min_fraction, "Minimum intersection / label area for a match");
  sub.add_flag("--claimed-labels-never-fn", o.claimed, "IoU: labels claimed by a TP are never FN");
  sub.add_option("--data", o.data, "Value of the data column");
  sub.add_option("--out", o.out, "Output CSV (default stdout)");
}

int cmd_evaluate(const EvalOptions & o, const CLI::App & sub, std::ostream & out, std::ostream & err)
{
  EvalInputs in = load_eval(o, sub, err);
  std::vector<ScoreRow> rows;
  for (Metric m : in.metrics) {
    for (double t : in.thresholds) {
      MatchConfig mc = in.cfg.match_config();
      mc.metric = m;
      mc.overlap_threshold = t;
      const SceneEvaluation eval = evaluate_scene(in.dets, in.gts, mc);
      print_warnings(eval.diagnostics, err);
      rows.push_back({o.data, m, t, "All", eval.counts, std::nullopt});
    }
  }
  std::ostringstream csv;
  write_score_csv(csv, rows);
  emit(o.out, csv.str(), out);
  return kOk;
}

int cmd_evaluate_by_size(const EvalOptions & o, const CLI::App & sub, std::ostream & out, std::ostream & err)
{
  EvalInputs in = load_eval(o, sub, err);
  std::vector<ScoreRow> rows;
  for (Metric m : in.metrics) {
    for (double t : in.thresholds) {
      MatchConfig mc = in.cfg.match_config();
      mc.metric = m;
      mc.overlap_threshold = t;
      const SizeBreakdown sb = evaluate_by_size(in.dets, in.gts, mc);
      print_warnings(sb.diagnostics, err);
      for (const auto & [cls, counts] : sb.by_class) {
        rows.push_back({o.data, m, t, std::string(to_string(cls)), counts, std::nullopt});
      }
      rows.push_back({o.data, m, t, "All", sb.all, std::nullopt});
    }
  }
  std::ostringstream csv;
  write_score_csv(csv, rows);
  emit(o.out, csv.str(), out);
  return kOk;
}

int cmd_sweep(const EvalOptions & o, const CLI::App & sub, std::ostream & out, std::ostream & err)
{
  EvalInputs in = load_eval(o, sub, err);
  std::vector<ScoreRow> rows;
  for (Metric m : in.metrics) {
    for (double t : in.thresholds) {
      for (int step = 0; step <= 20; ++step) {
        const double theta = step / 20.0;
        MatchConfig mc = in.cfg.match_config();
        mc.metric = m;
        mc.overlap_threshold = t;
        mc.score_threshold = theta;
        const SceneEvaluation eval = evaluate_scene(in.dets, in.gts, mc);
        rows.push_back({o.data, m, t, "All", eval.counts, theta});
      }
    }
  }
  std::ostringstream csv;
  write_score_csv(csv, rows);
  emit(o.out, csv.str(), out);
  return kOk;
}

int cmd_postprocess(const PostprocessOptions & o, const CLI::App & sub, std::ostream & out, std::ostream & err)
{
  io::RunConfig rc;
  if (!o.config.empty()) {
    rc = io::read_run_config(o.config);
  }
  if (o.strict && !sub.count("--score-field") && o.config.empty()) {
    throw ConfigError("--strict requires --score-field (or a config file that sets score_field)");
  }
  PostprocessConfig cfg;
  cfg.min_altitude = sub.count("--min-alt") ? o.min_alt : rc.min_altitude;
  cfg.min_area = sub.count("--min-area") ? o.min_area : rc.min_area;
  cfg.score_field = sub.count("--score-field") ? parse_score_field(o.score_field) : rc.score_field;
  cfg.theta = sub.count("--theta") ? o.theta : rc.score_threshold;
  if (sub.count("--altitude-rule")) {
    cfg.altitude_rule = o.altitude_rule == "mean" ? AltitudeRule::Mean : AltitudeRule::Max;
  } else {
    cfg.altitude_rule = rc.altitude_rule;
  }
  cfg.workers = o.workers;
  if (!(cfg.theta >= 0.0 && cfg.theta <= 1.0)) {
    throw ConfigError("--theta must be in [0, 1]");
  }
  if (!(cfg.min_area >= 0.0)) {
    throw ConfigError("--min-area must be non-negative");
  }

  std::unique_ptr<DetectorPort> detector;
  if (!o.detections_dir.empty()) {
    detector = std::make_unique<FileDetector>(o.detections_dir);
  } else {
    detector = std::make_unique<ProcessDetector>(o.detector_cmd);
  }

  const std::vector<Tile> tiles = io::read_tile_manifest(o.tiles);
  const DemGrid dem = io::read_dem_ascii(o.dem);
  PostprocessResult result;
  try {
    result = postprocess(tiles, dem, *detector, cfg);
  } catch (const DetectorUnavailable & e) {
    throw DataError(e.what());
  }
  print_warnings(result.warnings, err);
  std::optional<std::string> crs;
  if (!o.crs.empty()) {
    crs = o.crs;
  }
  io::write_map(o.out, result.map, cfg.score_field, crs);
  fmt::print(
    out,
    "tiles,{}\ntiles_kept,{}\ntiles_below_altitude,{}\ntiles_without_dem,{}\nraw_detections,{}\n"
    "dissolved,{}\nremoved_by_area,{}\nremoved_by_score,{}\nfinal,{}\n",
    tiles.size(), result.altitude.kept.size(), result.altitude.dropped.size(),
    result.altitude.no_coverage.size(), result.raw_detections, result.dissolved, result.removed_by_area,
    result.removed_by_score, result.map.size());
  return kOk;
}

std::vector<Region> load_map_regions(const std::string & path, std::optional<std::string> * crs, std::ostream & err)
{
  io::FeatureSet fs = io::read_features(path);
  print_warnings(fs.diagnostics, err);
  if (crs) {
    *crs = fs.crs;
  }
  std::vector<Region> out;
  for (auto & d : fs.detections) {
    if (!d.region.empty()) {
      out.push_back(std::move(d.region));
    }
  }
  return out;
}

int cmd_density(const MapStatOptions & o, std::ostream & out, std::ostream & err)
{
  std::optional<std::string> crs;
  const std::vector<Region> regions = load_map_regions(o.map, &crs, err);
  BBox extent;
  if (!o.extent.empty()) {
    if (o.extent.size() != 4) {
      throw ConfigError("--extent takes minx,miny,maxx,maxy");
    }
    extent = {o.extent[0], o.extent[1], o.extent[2], o.extent[3]};
  } else if (!regions.empty()) {
    extent = regions.front().bbox();
    for (const auto & r : regions) {
      const BBox & b = r.bbox();
      extent = {std::min(extent.min_x, b.min_x), std::min(extent.min_y, b.min_y),
                std::max(extent.max_x, b.max_x), std::max(extent.max_y, b.max_y)};
    }
  }
  const DensityGrid grid = density_grid(regions, extent);
  std::ostringstream csv;
  write_density_csv(csv, grid);
  emit(o.out, csv.str(), out);
  if (!o.geojson.empty()) {
    io::write_text_file(o.geojson, density_to_geojson(grid, crs));
  }
  return kOk;
}

int cmd_histogram(const MapStatOptions & o, std::ostream & out, std::ostream & err)
{
  const std::vector<Region> regions = load_map_regions(o.map, nullptr, err);
  const DemGrid dem = io::read_dem_ascii(o.dem);
  const AltitudeHistogram hist = altitude_histogram(regions, dem, o.by_size);
  print_warnings(hist.diagnostics, err);
  std::ostringstream csv;
  write_histogram_csv(csv, hist);
  emit(o.out, csv.str(), out);
  if (!o.medians.empty()) {
    std::ostringstream med;
    write_histogram_medians_csv(med, hist);
    io::write_text_file(o.medians, med.str());
  }
  return kOk;
}

int cmd_validate(const ValidateOptions & o, std::ostream & out, std::ostream & err)
{
  if (o.kind != "cover" && o.kind != "count") {
    throw ConfigError("--kind must be cover or count");
  }
  const std::vector<io::Site> sites = io::read_sites(o.sites);
  io::FeatureSet observed = io::read_features(o.gts);
  std::optional<std::string> map_crs;
  const std::vector<Region> predicted = load_map_regions(o.map, &map_crs, err);
  io::check_crs(observed.crs, map_crs);
  std::vector<Region> obs;
  for (auto & g : observed.groundtruths) {
    obs.push_back(std::move(g.region));
  }
  const PairedSeries series =
    build_site_series(sites, obs, predicted, o.kind == "cover" ? SeriesKind::Cover : SeriesKind::Count);
  if (!o.scatter.empty()) {
    std::ostringstream sc;
    write_scatter_csv(sc, series);
    io::write_text_file(o.scatter, sc.str());
  }
  std::ostringstream stats;
  write_stats_csv(stats, series);
  emit(o.out, stats.str(), out);
  return kOk;
}

int cmd_classify(const ClassifyOptions & o, std::ostream & out, std::ostream & err)
{
  std::ostringstream csv;
  csv << "id,area_m2,class\n";
  std::vector<std::string> notes;
  for (std::size_t i = 0; i < o.areas.size(); ++i) {
    fmt::print(csv, "{},{},{}\n", i, o.areas[i], to_string(classify_size(o.areas[i], &notes)));
  }
  if (!o.features.empty()) {
    io::FeatureSet fs = io::read_features(o.features);
    for (std::size_t i = 0; i < fs.detections.size(); ++i) {
      const double a = fs.detections[i].region.area();
      fmt::print(csv, "det{},{:.6f},{}\n", i, a, to_string(classify_size(a, &notes)));
    }
    for (const auto & g : fs.groundtruths) {
      const double a = g.region.area();
      fmt::print(csv, "{},{:.6f},{}\n", g.id, a, to_string(classify_size(a, &notes)));
    }
  }
  print_warnings(notes, err);
  emit(o.out, csv.str(), out);
  return kOk;
}

}  // namespace

int run(int argc, char ** argv, std::ostream & out, std::ostream & err)
{
  CLI::App app{"Shrub instance-segmentation evaluation and map post-processing", "shrubmap"};
  app.require_subcommand(1);

  EvalOptions eval_opts;
  auto * evaluate = app.add_subcommand("evaluate", "TP/FP/FN with precision, recall, F1 per metric and threshold");
  add_eval_options(*evaluate, eval_opts);

  EvalOptions size_opts;
  auto * by_size = app.add_subcommand("evaluate-by-size", "Scores per shrub size class");
  add_eval_options(*by_size, size_opts);

  EvalOptions sweep_opts;
  auto * sweep = app.add_subcommand("sweep", "Scores over confidence thresholds 0, 0.05, ..., 1");
  add_eval_options(*sweep, sweep_opts);

  PostprocessOptions pp;
  auto * post = app.add_subcommand("postprocess", "Altitude filter, detect, dissolve, area filter, threshold");
  post->add_option("--tiles", pp.tiles, "Tile manifest CSV")->required();
  post->add_option("--dem", pp.dem, "DEM as ESRI ASCII grid")->required();
  post->add_option("--config", pp.config, "Run configuration (key = value)");
  post->add_option("--min-alt", pp.min_alt, "Minimum tile altitude (m)");
  post->add_option("--min-area", pp.min_area, "Minimum crown area (m2)");
  post->add_option("--score-field", pp.score_field, "avg, median or max");
  post->add_option("--altitude-rule", pp.altitude_rule, "max or mean")->check(CLI::IsMember({"max", "mean"}));
  post->add_option("--theta", pp.theta, "Score threshold on the chosen field");
  post->add_option("--out", pp.out, "Output map GeoJSON")->required();
  auto * dir_opt = post->add_option("--detections-dir", pp.detections_dir, "Per-tile detection files <tile_id>.geojson");
  auto * cmd_opt = post->add_option("--detector-cmd", pp.detector_cmd, "Detector command template");
  dir_opt->excludes(cmd_opt);
  post->add_option("--crs", pp.crs, "CRS recorded in the output");
  post->add_option("--workers", pp.workers, "Worker threads (0 = all cores)");
  post->add_flag("--strict", pp.strict, "Require an explicit score field");

  MapStatOptions density_opts;
  auto * density = app.add_subcommand("density", "Shrubs per hectare cell");
  density->add_option("--map", density_opts.map, "Map GeoJSON")->required();
  density->add_option("--extent", density_opts.extent, "minx,miny,maxx,maxy")->delimiter(',');
  density->add_option("--out", density_opts.out, "Output CSV (default stdout)");
  density->add_option("--geojson", density_opts.geojson, "Also write cells as GeoJSON");

  MapStatOptions hist_opts;
  auto * histogram = app.add_subcommand("histogram", "Shrubs per 100 m altitude bin");
  histogram->add_option("--map", hist_opts.map, "Map GeoJSON")->required();
  histogram->add_option("--dem", hist_opts.dem, "DEM as ESRI ASCII grid")->required();
  histogram->add_flag("--by-size", hist_opts.by_size, "Stratify by size class");
  histogram->add_option("--out", hist_opts.out, "Output CSV (default stdout)");
  histogram->add_option("--medians", hist_opts.medians, "Per-stratum median altitude CSV");

  ValidateOptions val;
  auto * validate = app.add_subcommand("validate", "Observed vs predicted per site");
  validate->add_option("--sites", val.sites, "Site footprints GeoJSON")->required();
  validate->add_option("--gts", val.gts, "Observed shrubs GeoJSON")->required();
  validate->add_option("--map", val.map, "Predicted map GeoJSON")->required();
  validate->add_option("--kind", val.kind, "cover or count");
  validate->add_option("--scatter", val.scatter, "Scatter CSV output");
  validate->add_option("--out", val.out, "Statistics CSV (default stdout)");

  ClassifyOptions cls;
  auto * classify = app.add_subcommand("classify", "Size class of areas or features");
  classify->add_option("--area", cls.areas, "Crown area(s) in m2");
  classify->add_option("--features", cls.features, "Feature file whose polygons are classified");
  classify->add_option("--out", cls.out, "Output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp &) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError & e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (evaluate->parsed()) {
      return cmd_evaluate(eval_opts, *evaluate, out, err);
    }
    if (by_size->parsed()) {
      return cmd_evaluate_by_size(size_opts, *by_size, out, err);
    }
    if (sweep->parsed()) {
      return cmd_sweep(sweep_opts, *sweep, out, err);
    }
    if (post->parsed()) {
      if (pp.detections_dir.empty() && pp.detector_cmd.empty()) {
        throw ConfigError("postprocess needs --detections-dir or --detector-cmd");
      }
      return cmd_postprocess(pp, *post, out, err);
    }
    if (density->parsed()) {
      return cmd_density(density_opts, out, err);
    }
    if (histogram->parsed()) {
      return cmd_histogram(hist_opts, out, err);
    }
    if (validate->parsed()) {
      return cmd_validate(val, out, err);
    }
    if (classify->parsed()) {
      if (cls.areas.empty() && cls.features.empty()) {
        throw ConfigError("classify needs --area or --features");
      }
      return cmd_classify(cls, out, err);
    }
  } catch (const ConfigError & e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError & e) {
    err << "error: " << e.what() << '\n';
    return kData;
  } catch (const Error & e) {
    err << "error: " << e.what() << '\n';
    return kData;
  }
  err << app.help();
  return kUsage;
}

int run(const std::vector<std::string> & args, std::ostream & out, std::ostream & err)
{
  std::vector<std::string> storage;
  storage.reserve(args.size() + 1);
  storage.emplace_back("shrubmap");
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char *> argv;
  for (auto & s : storage) {
    argv.push_back(s.data());
  }
  argv.push_back(nullptr);
  return run(static_cast<int>(storage.size()), argv.data(), out, err);
}

}  // namespace shrubmap::cli
