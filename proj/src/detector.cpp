#include "shrubmap/errors.hpp"
#include "shrubmap/io.hpp"
#include "shrubmap/pipeline.hpp"

#include "parallel.hpp"

#include <fmt/format.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <unistd.h>

namespace fs = std::filesystem;

namespace shrubmap
{
namespace
{

std::vector<TileDetection> load_tile_detections(const fs::path & path)
{
  io::FeatureSet features = io::read_features(path);
  std::vector<TileDetection> out;
  out.reserve(features.detections.size());
  for (auto & d : features.detections) {
    out.push_back({std::move(d.region), d.score});
  }
  return out;
}

void replace_all(std::string & s, std::string_view from, const std::string & to)
{
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

}  // namespace

FileDetector::FileDetector(std::string directory) : directory_(std::move(directory)) {}

bool FileDetector::available() const { return fs::is_directory(directory_); }

std::vector<TileDetection> FileDetector::detect(const Tile & tile) const
{
  const fs::path path = fs::path(directory_) / (tile.id + ".geojson");
  if (!fs::exists(path)) {
    return {};
  }
  try {
    return load_tile_detections(path);
  } catch (const DataError & e) {
    throw DetectorFailure(e.what());
  }
}

ProcessDetector::ProcessDetector(std::string command_template, std::string work_dir)
: template_(std::move(command_template)), work_dir_(std::move(work_dir))
{
  if (work_dir_.empty()) {
    work_dir_ = fs::temp_directory_path().string();
  }
}

bool ProcessDetector::available() const { return !template_.empty() && std::system(nullptr) != 0; }

std::string ProcessDetector::command_for(const Tile & tile, const std::string & out_path) const
{
  std::string cmd = template_;
  replace_all(cmd, "{image}", tile.image_path);
  replace_all(cmd, "{out}", out_path);
  replace_all(cmd, "{tile_id}", tile.id);
  replace_all(cmd, "{x0}", fmt::format("{}", tile.x0));
  replace_all(cmd, "{y0}", fmt::format("{}", tile.y0));
  replace_all(cmd, "{gsd}", fmt::format("{}", tile.gsd));
  replace_all(cmd, "{cols}", std::to_string(tile.cols));
  replace_all(cmd, "{rows}", std::to_string(tile.rows));
  return cmd;
}

std::vector<TileDetection> ProcessDetector::detect(const Tile & tile) const
{
  static std::atomic<unsigned long> counter{0};
  const fs::path out = fs::path(work_dir_) /
                       fmt::format("shrubmap-{}-{}-{}.geojson", ::getpid(), tile.id, counter++);
  const std::string cmd = command_for(tile, out.string());
  const int status = std::system(cmd.c_str());
  if (status != 0) {
    std::error_code ec;
    fs::remove(out, ec);
    throw DetectorFailure(fmt::format("detector command exited with status {}", status));
  }
  if (!fs::exists(out)) {
    throw DetectorFailure("detector command wrote no feature file");
  }
  try {
    auto dets = load_tile_detections(out);
    fs::remove(out);
    return dets;
  } catch (const DataError & e) {
    std::error_code ec;
    fs::remove(out, ec);
    throw DetectorFailure(e.what());
  }
}

DetectorRun run_detector(std::span<const Tile> tiles, const DetectorPort & detector, unsigned workers)
{
  if (!detector.available()) {
    throw DetectorUnavailable("detector is not available");
  }
  std::vector<std::vector<Detection>> per_tile(tiles.size());
  std::vector<std::vector<std::string>> notes(tiles.size());
  std::vector<char> failed(tiles.size(), 0);

  detail::parallel_for(tiles.size(), workers, [&](unsigned, std::size_t i) {
    const Tile & tile = tiles[i];
    std::vector<TileDetection> local;
    try {
      local = detector.detect(tile);
    } catch (const std::exception & e) {
      failed[i] = 1;
      notes[i].push_back(fmt::format("tile {}: detector failed: {}", tile.id, e.what()));
      return;
    }
    for (std::size_t k = 0; k < local.size(); ++k) {
      const auto & td = local[k];
      if (!(td.score >= 0.0 && td.score <= 1.0)) {
        notes[i].push_back(fmt::format("tile {}: detection {} skipped: score {} outside [0, 1]", tile.id, k, td.score));
        continue;
      }
      try {
        Region world = td.region.transformed([&tile](const Point & p) { return tile.to_world(p); });
        if (world.empty()) {
          notes[i].push_back(fmt::format("tile {}: detection {} skipped: empty region", tile.id, k));
          continue;
        }
        per_tile[i].push_back({std::move(world), td.score, tile.id});
      } catch (const InvalidGeometry & e) {
        notes[i].push_back(fmt::format("tile {}: detection {} skipped: {}", tile.id, k, e.what()));
      }
    }
  });

  DetectorRun out;
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    out.failed_tiles += failed[i];
    out.warnings.insert(out.warnings.end(), notes[i].begin(), notes[i].end());
    for (auto & d : per_tile[i]) {
      out.detections.push_back(std::move(d));
    }
  }
  return out;
}

}  // namespace shrubmap
