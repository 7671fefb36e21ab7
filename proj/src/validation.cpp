#include "shrubmap/validation.hpp"

#include "shrubmap/errors.hpp"
#include "shrubmap/mapstats.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <cmath>
#include <ostream>

namespace shrubmap
{
namespace
{

double mean(const std::vector<double> & v)
{
  double s = 0.0;
  for (double x : v) {
    s += x;
  }
  return s / static_cast<double>(v.size());
}

std::size_t centroids_inside(std::span<const Region> shrubs, const Region & site)
{
  std::size_t n = 0;
  for (const auto & r : shrubs) {
    if (!r.empty() && r.bbox().intersects(site.bbox()) && covers(site, r.centroid())) {
      ++n;
    }
  }
  return n;
}

std::string optional_value(const std::optional<double> & v)
{
  return v ? fmt::format("{:.6f}", *v) : std::string();
}

}  // namespace

std::string_view to_string(SeriesUnit u) { return u == SeriesUnit::PercentCover ? "percent_cover" : "count_per_ha"; }

void PairedSeries::check() const
{
  if (observed.size() != predicted.size()) {
    throw DataError("paired series has mismatched lengths");
  }
  if (!site_ids.empty() && site_ids.size() != observed.size()) {
    throw DataError("paired series has mismatched site ids");
  }
}

double pearson_r(const PairedSeries & s)
{
  s.check();
  if (s.size() < 2) {
    throw DegenerateVariance("correlation needs at least two pairs");
  }
  const double mo = mean(s.observed);
  const double mp = mean(s.predicted);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double dx = s.observed[i] - mo;
    const double dy = s.predicted[i] - mp;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw DegenerateVariance("correlation of a constant series");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double coefficient_of_determination(const PairedSeries & s)
{
  s.check();
  if (s.size() < 2) {
    throw DegenerateVariance("coefficient of determination needs at least two pairs");
  }
  const double mo = mean(s.observed);
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double e = s.predicted[i] - s.observed[i];
    const double d = s.observed[i] - mo;
    ss_res += e * e;
    ss_tot += d * d;
  }
  if (ss_tot == 0.0) {
    throw DegenerateVariance("observed series is constant");
  }
  return 1.0 - ss_res / ss_tot;
}

ErrorStats error_stats(const PairedSeries & s)
{
  s.check();
  if (s.size() == 0) {
    throw DataError("error statistics of an empty series");
  }
  ErrorStats out;
  double sq = 0.0;
  double abs_sum = 0.0;
  double bias = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double e = s.predicted[i] - s.observed[i];
    sq += e * e;
    abs_sum += std::abs(e);
    bias += e;
  }
  const double n = static_cast<double>(s.size());
  out.rmse = std::sqrt(sq / n);
  out.mae = abs_sum / n;
  out.mbe = bias / n;
  try {
    const double r = pearson_r(s);
    out.r2_fit = r * r;
  } catch (const DegenerateVariance &) {
  }
  try {
    out.r2_identity = coefficient_of_determination(s);
  } catch (const DegenerateVariance &) {
  }
  return out;
}

PairedSeries build_site_series(
  std::span<const SiteFootprint> sites, std::span<const Region> observed,
  std::span<const Region> predicted, SeriesKind kind)
{
  PairedSeries s;
  s.unit = kind == SeriesKind::Cover ? SeriesUnit::PercentCover : SeriesUnit::CountPerHa;
  for (const auto & site : sites) {
    if (site.region.empty()) {
      throw InvalidGeometry("site " + site.id + " has an empty footprint");
    }
    s.site_ids.push_back(site.id);
    if (kind == SeriesKind::Cover) {
      s.observed.push_back(canopy_cover(observed, site.region));
      s.predicted.push_back(canopy_cover(predicted, site.region));
    } else {
      const double hectares = site.region.area() / 10000.0;
      s.observed.push_back(static_cast<double>(centroids_inside(observed, site.region)) / hectares);
      s.predicted.push_back(static_cast<double>(centroids_inside(predicted, site.region)) / hectares);
    }
  }
  return s;
}

void write_scatter_csv(std::ostream & os, const PairedSeries & s)
{
  s.check();
  os << "site_id,observed,predicted,unit\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    const std::string id = i < s.site_ids.size() ? s.site_ids[i] : std::to_string(i);
    fmt::print(os, "{},{:.6f},{:.6f},{}\n", id, s.observed[i], s.predicted[i], to_string(s.unit));
  }
}

void write_stats_csv(std::ostream & os, const PairedSeries & s)
{
  const ErrorStats e = error_stats(s);
  std::optional<double> r;
  try {
    r = pearson_r(s);
  } catch (const DegenerateVariance &) {
  }
  os << "n,pearson_r,r2_fit,r2_identity,rmse,mae,mbe\n";
  fmt::print(
    os, "{},{},{},{},{:.6f},{:.6f},{:.6f}\n", s.size(), optional_value(r), optional_value(e.r2_fit),
    optional_value(e.r2_identity), e.rmse, e.mae, e.mbe);
}

}  // namespace shrubmap
