#pragma once

#include "safenav/geometry.hpp"
#include "safenav/quadform.hpp"

#include <Eigen/Dense>

namespace safenav::collision {

/// Rigid body outline: a disc of fixed radius or a convex polygon given
/// counter-clockwise around the body reference point.
struct Body {
    enum class Shape { Sphere, Polygon };
    Shape shape = Shape::Sphere;
    double radius = 0.0;
    geometry::Polygon vertices;

    /// Throws InvalidInput unless radius > 0.
    static Body sphere(double radius);
    /// Validates the outline (convex, counter-clockwise, positive area).
    static Body polygon(geometry::Polygon vertices);

    /// Polygon rotated by angle about the reference point; spheres unchanged.
    Body rotated(double angle) const;
};

/// Planar position estimate.
struct PositionBelief {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Matrix2d covariance = Eigen::Matrix2d::Identity();
};

struct CollisionQuery {
    PositionBelief robot;
    Body robot_body;
    PositionBelief obstacle;
    Body obstacle_body;
    double delta = 1e-3;   // truncation tolerance for the series
    double epsilon = 0.99; // safety level
    int max_terms = 200;   // series length ceiling; tight covariances at
                           // touching range can need a few hundred terms
};

/// Convex hull of all vertex differences {s_i - r_j}, counter-clockwise,
/// expressed relative to the obstacle reference point. Throws
/// DegenerateGeometry when the differences are collinear.
geometry::Polygon minkowski_difference(const geometry::Polygon& s,
                                       const geometry::Polygon& r);

/// Radius of the conservative collision condition ||x - s|| <= radius on the
/// body reference points. Two discs give r1 + s1 exactly. With polygons the
/// condition comes from the configuration-space obstacle S (-) R: any overlap
/// of the bodies puts the reference-point displacement inside it, so its
/// circumradius never misses a collision. Discs enter as their circumradius
/// added on top.
///
/// literal_translation = true replaces a polygonal robot by its reference
/// point, i.e. measures the obstacle outline alone. That variant ignores the
/// robot extent, can under-estimate the radius, and exists only for
/// comparison runs.
double effective_radius(const Body& robot, const Body& obstacle,
                        bool literal_translation = false);

/// P(collision) = P(||x - s||^2 <= effective_radius^2) where x, s are the
/// body reference points, so w = x - s ~ N(mean difference, covariance sum).
/// Evaluated as the series CDF at y = radius^2 with the query's delta.
/// Separations whose certified Gaussian tail already sits below delta skip
/// the series: value 0, error_bound = the tail, zero terms. Means buried
/// inside the disc get the mirrored shortcut, value 1 with the same bound.
quadform::SeriesResult collision_probability(const CollisionQuery& query);

/// True when prob.value + prob.error_bound <= 1 - epsilon: the probability
/// is certified to clear the threshold even at the truncation error's worst.
bool is_epsilon_safe(const quadform::SeriesResult& prob, double epsilon);

} // namespace safenav::collision
