#pragma once

#include "shrubmap/geometry.hpp"
#include "shrubmap/matching.hpp"

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace shrubmap
{

enum class SeriesUnit { PercentCover, CountPerHa };
std::string_view to_string(SeriesUnit u);

/// Observed vs predicted values per site.
struct PairedSeries
{
  std::vector<std::string> site_ids;
  std::vector<double> observed;
  std::vector<double> predicted;
  SeriesUnit unit = SeriesUnit::CountPerHa;

  std::size_t size() const { return observed.size(); }
  /// Throws DataError when lengths differ.
  void check() const;
};

/// Product-moment correlation. Throws DegenerateVariance for fewer than two
/// pairs or a constant series.
double pearson_r(const PairedSeries & s);

/// 1 - SS_res / SS_tot of observed, residuals taken against the 1:1 line.
/// Throws DegenerateVariance when observed is constant or has < 2 pairs.
double coefficient_of_determination(const PairedSeries & s);

/// Errors are predicted - observed; positive mbe means overprediction.
struct ErrorStats
{
  double rmse = 0.0;
  double mae = 0.0;
  double mbe = 0.0;
  /// pearson_r squared; absent when either series is degenerate.
  std::optional<double> r2_fit;
  /// coefficient_of_determination; absent when observed is degenerate.
  std::optional<double> r2_identity;
};

/// Throws DataError for an empty series.
ErrorStats error_stats(const PairedSeries & s);

enum class SeriesKind { Cover, Count };

struct SiteFootprint
{
  std::string id;
  Region region;
};

/// Per site: canopy cover (percent) or shrub count per hectare (centroids
/// inside the site over the exact site area), observed from labels and
/// predicted from the map.
PairedSeries build_site_series(
  std::span<const SiteFootprint> sites, std::span<const Region> observed,
  std::span<const Region> predicted, SeriesKind kind);

/// Columns site_id,observed,predicted,unit.
void write_scatter_csv(std::ostream & os, const PairedSeries & s);
/// Columns n,pearson_r,r2_fit,r2_identity,rmse,mae,mbe; undefined values empty.
void write_stats_csv(std::ostream & os, const PairedSeries & s);

}  // namespace shrubmap
