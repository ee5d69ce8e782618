#include "safenav/geometry.hpp"

#include "safenav/errors.hpp"

#include <algorithm>
#include <cmath>

namespace safenav::geometry {

namespace {

double cross(const Eigen::Vector2d& o, const Eigen::Vector2d& a,
             const Eigen::Vector2d& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

double scale_sq(const Polygon& p) {
    double s = 0.0;
    for (const auto& v : p) s = std::max(s, v.squaredNorm());
    return std::max(s, 1e-300);
}

} // namespace

double polygon_area(const Polygon& p) {
    double twice = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto& a = p[i];
        const auto& b = p[(i + 1) % p.size()];
        twice += a.x() * b.y() - b.x() * a.y();
    }
    return 0.5 * twice;
}

void validate_polygon(const Polygon& p) {
    if (p.size() < 3)
        throw DegenerateGeometry("polygon needs at least 3 vertices, got " +
                                 std::to_string(p.size()));
    const double tol = -1e-12 * scale_sq(p);
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double c =
            cross(p[i], p[(i + 1) % p.size()], p[(i + 2) % p.size()]);
        if (c < tol)
            throw DegenerateGeometry("concave or clockwise corner at vertex " +
                                     std::to_string((i + 1) % p.size()));
    }
    if (polygon_area(p) <= 1e-12 * scale_sq(p))
        throw DegenerateGeometry("polygon has no area");
}

Polygon convex_hull(std::vector<Eigen::Vector2d> points) {
    std::sort(points.begin(), points.end(),
              [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
                  return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
              });
    points.erase(std::unique(points.begin(), points.end(),
                             [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
                                 return a.x() == b.x() && a.y() == b.y();
                             }),
                 points.end());
    const std::size_t n = points.size();
    if (n < 3) throw DegenerateGeometry("hull of fewer than 3 distinct points");

    std::vector<Eigen::Vector2d> hull(2 * n);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], points[i]) <= 0.0) --k;
        hull[k++] = points[i];
    }
    const std::size_t lower = k + 1;
    for (std::size_t i = n - 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], points[i]) <= 0.0) --k;
        hull[k++] = points[i];
    }
    hull.resize(k - 1);
    if (hull.size() < 3) throw DegenerateGeometry("hull is collinear");
    return hull;
}

bool polygons_overlap(const Polygon& a, const Polygon& b) {
    for (const Polygon* poly : {&a, &b}) {
        const Polygon& p = *poly;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const Eigen::Vector2d e = p[(i + 1) % p.size()] - p[i];
            const Eigen::Vector2d axis(-e.y(), e.x());
            double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
            for (const auto& v : a) {
                const double t = axis.dot(v);
                amin = std::min(amin, t);
                amax = std::max(amax, t);
            }
            for (const auto& v : b) {
                const double t = axis.dot(v);
                bmin = std::min(bmin, t);
                bmax = std::max(bmax, t);
            }
            if (amax < bmin || bmax < amin) return false;
        }
    }
    return true;
}

double circumradius(const Polygon& p) {
    double r = 0.0;
    for (const auto& v : p) r = std::max(r, v.norm());
    return r;
}

} // namespace safenav::geometry
