#pragma once

#include <Eigen/Dense>
#include <vector>

namespace safenav::geometry {

/// Vertices in counter-clockwise order. For rigid bodies the coordinates are
/// relative to the body reference point; the polygon need not contain it.
using Polygon = std::vector<Eigen::Vector2d>;

/// Signed area via the shoelace formula; positive for counter-clockwise.
double polygon_area(const Polygon& p);

/// Throws DegenerateGeometry unless p has at least 3 vertices, every corner
/// turns left or is straight (counter-clockwise, convex), and area > 0.
void validate_polygon(const Polygon& p);

/// Convex hull by monotone chain, counter-clockwise, collinear points
/// dropped. Throws DegenerateGeometry when all points are collinear.
Polygon convex_hull(std::vector<Eigen::Vector2d> points);

/// Separating-axis intersection test; touching counts as overlap.
bool polygons_overlap(const Polygon& a, const Polygon& b);

/// Largest vertex norm: the circumradius about the local origin.
double circumradius(const Polygon& p);

} // namespace safenav::geometry
