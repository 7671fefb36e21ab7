#include "shrubmap/geometry.hpp"

#include "shrubmap/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>
#include <utility>

namespace bg = boost::geometry;

namespace shrubmap
{
namespace
{

bool same(const Point & a, const Point & b) { return a.x() == b.x() && a.y() == b.y(); }

double cross(double ax, double ay, double bx, double by) { return ax * by - ay * bx; }

// Orientation of c relative to segment a->b.
double orient(const Point & a, const Point & b, const Point & c)
{
  return cross(b.x() - a.x(), b.y() - a.y(), c.x() - a.x(), c.y() - a.y());
}

bool within_span(const Point & a, const Point & b, const Point & c)
{
  return std::min(a.x(), b.x()) <= c.x() && c.x() <= std::max(a.x(), b.x()) &&
         std::min(a.y(), b.y()) <= c.y() && c.y() <= std::max(a.y(), b.y());
}

// Parameter of c along a->b, c assumed on the segment.
double param_on(const Point & a, const Point & b, const Point & c)
{
  const double dx = b.x() - a.x();
  const double dy = b.y() - a.y();
  return std::abs(dx) >= std::abs(dy) ? (c.x() - a.x()) / dx : (c.y() - a.y()) / dy;
}

// Open ring without consecutive duplicates or closing vertex.
Ring clean_ring(const Ring & raw)
{
  Ring out;
  out.reserve(raw.size());
  for (const auto & p : raw) {
    if (!std::isfinite(p.x()) || !std::isfinite(p.y())) {
      throw InvalidGeometry("ring has a non-finite coordinate");
    }
    if (out.empty() || !same(out.back(), p)) {
      out.push_back(p);
    }
  }
  while (out.size() > 1 && same(out.front(), out.back())) {
    out.pop_back();
  }
  std::set<std::pair<double, double>> distinct;
  for (const auto & p : out) {
    distinct.emplace(p.x(), p.y());
  }
  if (distinct.size() < 3) {
    throw InvalidGeometry("ring has fewer than 3 distinct vertices");
  }
  return out;
}

Polygon polygon_from_open_ring(const Ring & ring)
{
  Polygon poly;
  poly.outer().assign(ring.begin(), ring.end());
  poly.outer().push_back(ring.front());
  bg::correct(poly);
  return poly;
}

MultiPolygon cascade_union(std::vector<MultiPolygon> items)
{
  if (items.empty()) {
    return {};
  }
  while (items.size() > 1) {
    std::vector<MultiPolygon> next;
    next.reserve((items.size() + 1) / 2);
    for (std::size_t i = 0; i + 1 < items.size(); i += 2) {
      MultiPolygon merged;
      bg::union_(items[i], items[i + 1], merged);
      next.push_back(std::move(merged));
    }
    if (items.size() % 2 == 1) {
      next.push_back(std::move(items.back()));
    }
    items = std::move(next);
  }
  return std::move(items.front());
}

// Splits a self-intersecting ring at its crossings into simple loops and
// returns their union.
MultiPolygon repair_ring(const Ring & ring)
{
  const std::size_t n = ring.size();
  struct Hit
  {
    double t;
    Point p;
  };
  std::vector<std::vector<Hit>> hits(n);

  auto add_hit = [&](std::size_t seg, const Point & p) {
    const Point & a = ring[seg];
    const Point & b = ring[(seg + 1) % n];
    if (same(p, a) || same(p, b)) {
      return;
    }
    hits[seg].push_back({param_on(a, b, p), p});
  };

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) {
        continue;
      }
      const Point & a = ring[i];
      const Point & b = ring[(i + 1) % n];
      const Point & c = ring[j];
      const Point & d = ring[(j + 1) % n];
      const double o_c = orient(a, b, c);
      const double o_d = orient(a, b, d);
      const double o_a = orient(c, d, a);
      const double o_b = orient(c, d, b);

      bool touched = false;
      // Endpoints lying on the other segment (covers collinear overlaps too).
      if (o_c == 0.0 && within_span(a, b, c)) {
        add_hit(i, c);
        touched = true;
      }
      if (o_d == 0.0 && within_span(a, b, d)) {
        add_hit(i, d);
        touched = true;
      }
      if (o_a == 0.0 && within_span(c, d, a)) {
        add_hit(j, a);
        touched = true;
      }
      if (o_b == 0.0 && within_span(c, d, b)) {
        add_hit(j, b);
        touched = true;
      }
      if (touched) {
        continue;
      }
      const bool proper = ((o_c > 0.0) != (o_d > 0.0)) && ((o_a > 0.0) != (o_b > 0.0));
      if (!proper) {
        continue;
      }
      const double rx = b.x() - a.x();
      const double ry = b.y() - a.y();
      const double denom = cross(rx, ry, d.x() - c.x(), d.y() - c.y());
      const double t = cross(c.x() - a.x(), c.y() - a.y(), d.x() - c.x(), d.y() - c.y()) / denom;
      const Point p(a.x() + t * rx, a.y() + t * ry);
      add_hit(i, p);
      add_hit(j, p);
    }
  }

  Ring seq;
  for (std::size_t i = 0; i < n; ++i) {
    seq.push_back(ring[i]);
    auto & h = hits[i];
    std::sort(h.begin(), h.end(), [](const Hit & x, const Hit & y) { return x.t < y.t; });
    for (const auto & hit : h) {
      if (!same(seq.back(), hit.p)) {
        seq.push_back(hit.p);
      }
    }
  }

  std::vector<Ring> loops;
  Ring path;
  std::map<std::pair<double, double>, std::size_t> position;
  for (const auto & q : seq) {
    const auto key = std::make_pair(q.x(), q.y());
    auto it = position.find(key);
    if (it == position.end()) {
      position.emplace(key, path.size());
      path.push_back(q);
      continue;
    }
    const std::size_t k = it->second;
    loops.emplace_back(path.begin() + static_cast<std::ptrdiff_t>(k), path.end());
    for (std::size_t m = k + 1; m < path.size(); ++m) {
      position.erase(std::make_pair(path[m].x(), path[m].y()));
    }
    path.resize(k + 1);
  }
  loops.push_back(path);

  std::vector<MultiPolygon> pieces;
  for (const auto & loop : loops) {
    if (loop.size() < 3) {
      continue;
    }
    Polygon poly = polygon_from_open_ring(loop);
    bg::remove_spikes(poly);
    if (poly.outer().size() < 4 || bg::area(poly) < kEmptyArea) {
      continue;
    }
    if (!bg::is_valid(poly)) {
      throw InvalidGeometry("ring could not be repaired");
    }
    pieces.push_back(MultiPolygon{poly});
  }
  return cascade_union(std::move(pieces));
}

MultiPolygon normalize_polygon(const Polygon & raw)
{
  const Ring outer_ring = clean_ring(Ring(raw.outer().begin(), raw.outer().end()));
  std::vector<Ring> hole_rings;
  for (const auto & inner : raw.inners()) {
    hole_rings.push_back(clean_ring(Ring(inner.begin(), inner.end())));
  }

  Polygon poly;
  poly.outer().assign(outer_ring.begin(), outer_ring.end());
  poly.outer().push_back(outer_ring.front());
  for (const auto & h : hole_rings) {
    Polygon::ring_type ring(h.begin(), h.end());
    ring.push_back(h.front());
    poly.inners().push_back(std::move(ring));
  }
  bg::correct(poly);
  bg::remove_spikes(poly);
  if (poly.outer().size() < 4) {
    return {};
  }
  std::erase_if(poly.inners(), [](const auto & ring) { return ring.size() < 4; });

  if (bg::is_valid(poly)) {
    if (bg::area(poly) < kEmptyArea) {
      return {};
    }
    return MultiPolygon{poly};
  }

  MultiPolygon shell = repair_ring(outer_ring);
  std::vector<MultiPolygon> holes;
  for (const auto & h : hole_rings) {
    holes.push_back(repair_ring(h));
  }
  MultiPolygon hole_union = cascade_union(std::move(holes));
  if (hole_union.empty()) {
    return shell;
  }
  MultiPolygon out;
  bg::difference(shell, hole_union, out);
  return out;
}

void drop_slivers(MultiPolygon & mp)
{
  std::erase_if(mp, [](const Polygon & p) { return bg::area(p) < kEmptyArea; });
}

BBox compute_bbox(const MultiPolygon & mp)
{
  if (mp.empty()) {
    return {};
  }
  bg::model::box<Point> box;
  bg::envelope(mp, box);
  return {box.min_corner().x(), box.min_corner().y(), box.max_corner().x(), box.max_corner().y()};
}

}  // namespace

bool BBox::intersects(const BBox & o, double margin) const
{
  return min_x <= o.max_x + margin && o.min_x <= max_x + margin && min_y <= o.max_y + margin &&
         o.min_y <= max_y + margin;
}

BBox BBox::expanded(double margin) const
{
  return {min_x - margin, min_y - margin, max_x + margin, max_y + margin};
}

Region::Region(MultiPolygon parts, bool already_valid)
{
  if (!already_valid) {
    std::vector<MultiPolygon> pieces;
    for (const auto & poly : parts) {
      MultiPolygon fixed = normalize_polygon(poly);
      if (fixed.empty()) {
        throw InvalidGeometry("polygon encloses no area");
      }
      pieces.push_back(std::move(fixed));
    }
    if (pieces.size() == 1) {
      parts = std::move(pieces.front());
    } else {
      MultiPolygon joined;
      for (auto & p : pieces) {
        joined.insert(joined.end(), p.begin(), p.end());
      }
      parts = bg::is_valid(joined) ? std::move(joined) : cascade_union(std::move(pieces));
    }
    if (!parts.empty() && !bg::is_valid(parts)) {
      throw InvalidGeometry("geometry could not be normalized into a valid region");
    }
  } else {
    bg::correct(parts);
  }
  drop_slivers(parts);
  parts_ = std::move(parts);
  area_ = parts_.empty() ? 0.0 : bg::area(parts_);
  bbox_ = compute_bbox(parts_);
}

Region Region::from_rings(const Ring & outer, const std::vector<Ring> & holes)
{
  std::vector<std::vector<Ring>> polys(1);
  polys[0].push_back(outer);
  polys[0].insert(polys[0].end(), holes.begin(), holes.end());
  return from_polygons(polys);
}

Region Region::from_polygons(const std::vector<std::vector<Ring>> & polygons)
{
  MultiPolygon mp;
  for (const auto & rings : polygons) {
    if (rings.empty()) {
      throw InvalidGeometry("polygon without an outer ring");
    }
    Polygon poly;
    poly.outer().assign(rings[0].begin(), rings[0].end());
    for (std::size_t i = 1; i < rings.size(); ++i) {
      poly.inners().emplace_back(rings[i].begin(), rings[i].end());
    }
    mp.push_back(std::move(poly));
  }
  return Region(std::move(mp), false);
}

Region Region::from_multipolygon(MultiPolygon parts) { return Region(std::move(parts), false); }

Region Region::from_valid_multipolygon(MultiPolygon parts) { return Region(std::move(parts), true); }

Region Region::rectangle(double min_x, double min_y, double max_x, double max_y)
{
  if (!(max_x > min_x) || !(max_y > min_y)) {
    throw InvalidGeometry("rectangle with non-positive extent");
  }
  Polygon poly;
  poly.outer() = {
    Point(min_x, min_y), Point(min_x, max_y), Point(max_x, max_y), Point(max_x, min_y),
    Point(min_x, min_y)};
  return Region(MultiPolygon{poly}, true);
}

Point Region::centroid() const
{
  if (parts_.empty()) {
    throw InvalidGeometry("centroid of an empty region");
  }
  Point c;
  bg::centroid(parts_, c);
  return c;
}

Region Region::transformed(const std::function<Point(const Point &)> & fn) const
{
  MultiPolygon out = parts_;
  for (auto & poly : out) {
    for (auto & p : poly.outer()) {
      p = fn(p);
    }
    for (auto & inner : poly.inners()) {
      for (auto & p : inner) {
        p = fn(p);
      }
    }
  }
  return Region(std::move(out), false);
}

Region Region::translated(double dx, double dy) const
{
  MultiPolygon out = parts_;
  bg::for_each_point(out, [dx, dy](Point & p) {
    p.x(p.x() + dx);
    p.y(p.y() + dy);
  });
  return Region(std::move(out), true);
}

bool Region::canonical_less(const Region & a, const Region & b)
{
  if (a.area_ != b.area_) {
    return a.area_ < b.area_;
  }
  const auto key = [](const BBox & x) { return std::tie(x.min_x, x.min_y, x.max_x, x.max_y); };
  if (key(a.bbox_) != key(b.bbox_)) {
    return key(a.bbox_) < key(b.bbox_);
  }
  std::vector<double> ca;
  std::vector<double> cb;
  bg::for_each_point(a.parts_, [&ca](const Point & p) {
    ca.push_back(p.x());
    ca.push_back(p.y());
  });
  bg::for_each_point(b.parts_, [&cb](const Point & p) {
    cb.push_back(p.x());
    cb.push_back(p.y());
  });
  return ca < cb;
}

double area(const Region & r) { return r.area(); }

Region intersection(const Region & a, const Region & b)
{
  if (a.empty() || b.empty() || !a.bbox().intersects(b.bbox())) {
    return {};
  }
  const bool swap = Region::canonical_less(b, a);
  const Region & first = swap ? b : a;
  const Region & second = swap ? a : b;
  MultiPolygon out;
  bg::intersection(first.parts(), second.parts(), out);
  return Region::from_valid_multipolygon(std::move(out));
}

double intersection_area(const Region & a, const Region & b) { return intersection(a, b).area(); }

Region union_of(std::span<const Region> regions)
{
  std::vector<MultiPolygon> items;
  for (const auto & r : regions) {
    if (!r.empty()) {
      items.push_back(r.parts());
    }
  }
  if (items.size() == 1) {
    return Region::from_valid_multipolygon(std::move(items.front()));
  }
  return Region::from_valid_multipolygon(cascade_union(std::move(items)));
}

Region union_of(const Region & a, const Region & b)
{
  const Region pair[] = {a, b};
  return union_of(std::span<const Region>(pair));
}

Region difference(const Region & a, const Region & b)
{
  if (a.empty() || b.empty() || !a.bbox().intersects(b.bbox())) {
    return a;
  }
  MultiPolygon out;
  bg::difference(a.parts(), b.parts(), out);
  return Region::from_valid_multipolygon(std::move(out));
}

double distance(const Region & a, const Region & b)
{
  if (a.empty() || b.empty()) {
    throw InvalidGeometry("distance to an empty region");
  }
  return bg::distance(a.parts(), b.parts());
}

bool covers(const Region & r, const Point & p)
{
  return !r.empty() && bg::covered_by(p, r.parts());
}

}  // namespace shrubmap
