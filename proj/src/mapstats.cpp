#include "shrubmap/mapstats.hpp"

#include "shrubmap/errors.hpp"

#include "parallel.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>

namespace shrubmap
{
namespace
{

double median_of(std::vector<double> v)
{
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::uint64_t DensityGrid::total() const
{
  std::uint64_t t = 0;
  for (auto c : counts) {
    t += c;
  }
  return t;
}

std::uint32_t DensityGrid::max() const
{
  return counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
}

BBox DensityGrid::cell_extent(int row, int col) const
{
  const double x = origin_x + col * cell_size;
  const double y = origin_y + row * cell_size;
  return {x, y, x + cell_size, y + cell_size};
}

std::vector<Region> regions_of(std::span<const DissolvedDetection> map)
{
  std::vector<Region> out;
  out.reserve(map.size());
  for (const auto & d : map) {
    out.push_back(d.region);
  }
  return out;
}

DensityGrid density_grid(std::span<const Region> map, const BBox & extent, unsigned workers)
{
  if (!(extent.width() >= 0.0) || !(extent.height() >= 0.0)) {
    throw DegenerateBBox("density extent is inverted");
  }
  DensityGrid g;
  g.origin_x = std::floor(extent.min_x / kHectareEdge) * kHectareEdge;
  g.origin_y = std::floor(extent.min_y / kHectareEdge) * kHectareEdge;
  g.cols = static_cast<int>(std::floor((extent.max_x - g.origin_x) / kHectareEdge)) + 1;
  g.rows = static_cast<int>(std::floor((extent.max_y - g.origin_y) / kHectareEdge)) + 1;
  g.counts.assign(static_cast<std::size_t>(g.cols) * g.rows, 0);

  std::vector<std::optional<std::size_t>> cell(map.size());
  detail::parallel_for(map.size(), workers, [&](unsigned, std::size_t i) {
    if (map[i].empty()) {
      return;
    }
    const Point c = map[i].centroid();
    if (c.x() < extent.min_x || c.x() > extent.max_x || c.y() < extent.min_y || c.y() > extent.max_y) {
      return;
    }
    const int col = static_cast<int>(std::floor((c.x() - g.origin_x) / kHectareEdge));
    const int row = static_cast<int>(std::floor((c.y() - g.origin_y) / kHectareEdge));
    cell[i] = static_cast<std::size_t>(row) * g.cols + col;
  });
  for (const auto & c : cell) {
    if (c) {
      ++g.counts[*c];
    }
  }
  return g;
}

std::uint64_t AltitudeHistogram::Stratum::total() const
{
  std::uint64_t t = below + above;
  for (auto b : bins) {
    t += b;
  }
  return t;
}

std::size_t AltitudeHistogram::bin_count() const
{
  return static_cast<std::size_t>(std::llround((hi - lo) / width));
}

std::optional<std::size_t> AltitudeHistogram::bin_of(double altitude) const
{
  if (altitude < lo || altitude >= hi) {
    return std::nullopt;
  }
  return std::min(bin_count() - 1, static_cast<std::size_t>(std::floor((altitude - lo) / width)));
}

AltitudeHistogram altitude_histogram(std::span<const Region> map, const DemGrid & dem, bool size_classes)
{
  AltitudeHistogram h;
  std::map<std::string, std::vector<double>> altitudes;
  auto stratum = [&h](const std::string & key) -> AltitudeHistogram::Stratum & {
    auto & s = h.strata[key];
    if (s.bins.empty()) {
      s.bins.assign(h.bin_count(), 0);
    }
    return s;
  };
  stratum("All");

  for (std::size_t i = 0; i < map.size(); ++i) {
    if (map[i].empty()) {
      continue;
    }
    const Point c = map[i].centroid();
    const auto alt = dem.sample(c.x(), c.y());
    if (!alt) {
      ++h.excluded_nodata;
      h.diagnostics.push_back(fmt::format("shrub {} excluded: no DEM value at its centroid", i));
      continue;
    }
    std::vector<std::string> keys{"All"};
    if (size_classes) {
      keys.emplace_back(to_string(classify_size(map[i].area())));
    }
    for (const auto & key : keys) {
      auto & s = stratum(key);
      if (const auto bin = h.bin_of(*alt)) {
        ++s.bins[*bin];
      } else if (*alt < h.lo) {
        ++s.below;
      } else {
        ++s.above;
      }
      altitudes[key].push_back(*alt);
    }
  }
  for (auto & [key, values] : altitudes) {
    h.strata[key].median_altitude = median_of(values);
  }
  return h;
}

double canopy_cover(std::span<const Region> map, const Region & site)
{
  if (site.empty()) {
    throw InvalidGeometry("canopy cover of an empty site");
  }
  std::vector<Region> near;
  for (const auto & r : map) {
    if (!r.empty() && r.bbox().intersects(site.bbox())) {
      near.push_back(r);
    }
  }
  if (near.empty()) {
    return 0.0;
  }
  const double covered = intersection_area(union_of(near), site);
  return std::clamp(100.0 * covered / site.area(), 0.0, 100.0);
}

void write_density_csv(std::ostream & os, const DensityGrid & grid)
{
  os << "row,col,x0,y0,x1,y1,count\n";
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      const BBox b = grid.cell_extent(r, c);
      fmt::print(os, "{},{},{},{},{},{},{}\n", r, c, b.min_x, b.min_y, b.max_x, b.max_y, grid.count(r, c));
    }
  }
}

std::string density_to_geojson(const DensityGrid & grid, const std::optional<std::string> & crs)
{
  nlohmann::json features = nlohmann::json::array();
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      if (grid.count(r, c) == 0) {
        continue;
      }
      const BBox b = grid.cell_extent(r, c);
      nlohmann::json ring = nlohmann::json::array(
        {{b.min_x, b.min_y}, {b.max_x, b.min_y}, {b.max_x, b.max_y}, {b.min_x, b.max_y}, {b.min_x, b.min_y}});
      features.push_back({
        {"type", "Feature"},
        {"geometry", {{"type", "Polygon"}, {"coordinates", nlohmann::json::array({ring})}}},
        {"properties", {{"row", r}, {"col", c}, {"count", grid.count(r, c)}}},
      });
    }
  }
  nlohmann::json doc = {{"type", "FeatureCollection"}, {"features", features}};
  if (crs) {
    doc["crs"] = {{"type", "name"}, {"properties", {{"name", *crs}}}};
  }
  return doc.dump(1) + "\n";
}

void write_histogram_csv(std::ostream & os, const AltitudeHistogram & hist)
{
  os << "stratum,bin_lo,bin_hi,count\n";
  for (const auto & [key, s] : hist.strata) {
    fmt::print(os, "{},-inf,{},{}\n", key, hist.lo, s.below);
    for (std::size_t i = 0; i < s.bins.size(); ++i) {
      fmt::print(os, "{},{},{},{}\n", key, hist.bin_lo(i), hist.bin_lo(i) + hist.width, s.bins[i]);
    }
    fmt::print(os, "{},{},inf,{}\n", key, hist.hi, s.above);
  }
}

void write_histogram_medians_csv(std::ostream & os, const AltitudeHistogram & hist)
{
  os << "stratum,n,median_altitude\n";
  for (const auto & [key, s] : hist.strata) {
    if (s.median_altitude) {
      fmt::print(os, "{},{},{:.2f}\n", key, s.total(), *s.median_altitude);
    } else {
      fmt::print(os, "{},{},\n", key, s.total());
    }
  }
}

}  // namespace shrubmap
