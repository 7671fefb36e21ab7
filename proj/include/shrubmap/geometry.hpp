#pragma once

// Planar polygon arithmetic in projected meters. Every Region is normalized on
// construction: rings closed and clockwise, holes counter-clockwise, spikes
// removed, self-intersections repaired, overlapping parts merged.

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/multi_polygon.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>

#include <functional>
#include <span>
#include <vector>

namespace shrubmap
{

using Point = boost::geometry::model::d2::point_xy<double>;
using Polygon = boost::geometry::model::polygon<Point>;
using MultiPolygon = boost::geometry::model::multi_polygon<Polygon>;
using Ring = std::vector<Point>;

/// Regions with less area than this are empty in every predicate.
inline constexpr double kEmptyArea = 1e-12;

struct BBox
{
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
  bool intersects(const BBox & other, double margin = 0.0) const;
  BBox expanded(double margin) const;
};

/// Polygon or multi-polygon payload. Immutable after construction.
class Region
{
public:
  /// The empty region.
  Region() = default;

  /// Outer ring plus holes. Rings may be open or closed and in any orientation.
  static Region from_rings(const Ring & outer, const std::vector<Ring> & holes = {});
  /// Each entry is one polygon: rings[0] outer, the rest holes.
  static Region from_polygons(const std::vector<std::vector<Ring>> & polygons);
  static Region from_multipolygon(MultiPolygon parts);
  /// Skips repair; for parts already known valid (boolean-op output).
  static Region from_valid_multipolygon(MultiPolygon parts);
  static Region rectangle(double min_x, double min_y, double max_x, double max_y);

  double area() const { return area_; }
  bool empty() const { return area_ < kEmptyArea; }
  std::size_t part_count() const { return parts_.size(); }
  const MultiPolygon & parts() const { return parts_; }
  const BBox & bbox() const { return bbox_; }
  Point centroid() const;

  /// Apply a point mapping to every vertex and renormalize.
  Region transformed(const std::function<Point(const Point &)> & fn) const;
  Region translated(double dx, double dy) const;

  /// Orders regions by (area, bbox, vertices). Used to make binary operations
  /// independent of argument order.
  static bool canonical_less(const Region & a, const Region & b);

private:
  explicit Region(MultiPolygon parts, bool already_valid);

  MultiPolygon parts_;
  double area_ = 0.0;
  BBox bbox_;
};

double area(const Region & r);
Region intersection(const Region & a, const Region & b);
/// area(intersection(a, b)), symmetric bit-for-bit in its arguments.
double intersection_area(const Region & a, const Region & b);
Region union_of(std::span<const Region> regions);
Region union_of(const Region & a, const Region & b);
Region difference(const Region & a, const Region & b);
/// Minimum planar distance between two regions, 0 when they touch or overlap.
double distance(const Region & a, const Region & b);
/// True when point lies in the region or on its boundary.
bool covers(const Region & r, const Point & p);

}  // namespace shrubmap
