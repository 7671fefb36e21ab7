#pragma once

#include "shrubmap/geometry.hpp"
#include "shrubmap/metrics.hpp"
#include "shrubmap/pipeline.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace shrubmap
{

inline constexpr double kHectareEdge = 100.0;

/// Shrub counts on a 100 m grid. Cells are half-open [x, x+100) x [y, y+100);
/// row 0 is the southernmost row.
struct DensityGrid
{
  double origin_x = 0.0;
  double origin_y = 0.0;
  double cell_size = kHectareEdge;
  int cols = 0;
  int rows = 0;
  std::vector<std::uint32_t> counts;

  std::uint32_t count(int row, int col) const { return counts[static_cast<std::size_t>(row) * cols + col]; }
  std::uint64_t total() const;
  std::uint32_t max() const;
  BBox cell_extent(int row, int col) const;
};

/// Regions of a map, in order.
std::vector<Region> regions_of(std::span<const DissolvedDetection> map);

/// Counts region centroids per hectare cell. The grid origin is the extent's
/// lower-left corner snapped down to a multiple of 100 m; the grid reaches the
/// extent's max corner inclusively. Centroids outside the extent are ignored.
DensityGrid density_grid(std::span<const Region> map, const BBox & extent, unsigned workers = 0);

/// Bins of 100 m from 1900 m to 3500 m, all strata sharing the same edges.
struct AltitudeHistogram
{
  double lo = 1900.0;
  double hi = 3500.0;
  double width = 100.0;

  struct Stratum
  {
    std::vector<std::uint32_t> bins;
    std::uint32_t below = 0;
    std::uint32_t above = 0;
    std::optional<double> median_altitude;

    std::uint64_t total() const;
  };

  /// Key "All" plus one key per size class present when stratified.
  std::map<std::string, Stratum> strata;
  std::uint32_t excluded_nodata = 0;
  std::vector<std::string> diagnostics;

  std::size_t bin_count() const;
  double bin_lo(std::size_t i) const { return lo + width * static_cast<double>(i); }
  /// Bin index for an altitude, nullopt outside [lo, hi).
  std::optional<std::size_t> bin_of(double altitude) const;
};

/// Bins each shrub by the DEM elevation at its centroid. Shrubs on nodata or
/// outside the DEM are excluded and counted.
AltitudeHistogram altitude_histogram(std::span<const Region> map, const DemGrid & dem, bool size_classes);

/// 100 * area(⋃map ∩ site) / area(site).
double canopy_cover(std::span<const Region> map, const Region & site);

void write_density_csv(std::ostream & os, const DensityGrid & grid);
/// One polygon feature per non-empty cell with its count.
std::string density_to_geojson(const DensityGrid & grid, const std::optional<std::string> & crs = std::nullopt);
/// Columns stratum,bin_lo,bin_hi,count; below/above rows use "-inf"/"inf" edges.
void write_histogram_csv(std::ostream & os, const AltitudeHistogram & hist);
/// Columns stratum,n,median_altitude.
void write_histogram_medians_csv(std::ostream & os, const AltitudeHistogram & hist);

}  // namespace shrubmap
