#include "safenav/collision.hpp"

#include "safenav/errors.hpp"

#include <cmath>

namespace safenav::collision {

Body Body::sphere(double radius) {
    if (!(radius > 0.0))
        throw InvalidInput("sphere radius must be > 0, got " + std::to_string(radius));
    Body b;
    b.shape = Shape::Sphere;
    b.radius = radius;
    return b;
}

Body Body::polygon(geometry::Polygon vertices) {
    geometry::validate_polygon(vertices);
    Body b;
    b.shape = Shape::Polygon;
    b.vertices = std::move(vertices);
    return b;
}

Body Body::rotated(double angle) const {
    if (shape == Shape::Sphere) return *this;
    const Eigen::Rotation2Dd rot(angle);
    Body b = *this;
    for (auto& v : b.vertices) v = rot * v;
    return b;
}

geometry::Polygon minkowski_difference(const geometry::Polygon& s,
                                       const geometry::Polygon& r) {
    geometry::validate_polygon(s);
    geometry::validate_polygon(r);
    std::vector<Eigen::Vector2d> diffs;
    diffs.reserve(s.size() * r.size());
    for (const auto& sv : s)
        for (const auto& rv : r) diffs.push_back(sv - rv);
    return geometry::convex_hull(std::move(diffs));
}

double effective_radius(const Body& robot, const Body& obstacle,
                        bool literal_translation) {
    const bool robot_poly = robot.shape == Body::Shape::Polygon;
    const bool obstacle_poly = obstacle.shape == Body::Shape::Polygon;
    if (!robot_poly && !obstacle_poly) return robot.radius + obstacle.radius;

    const double robot_extent =
        robot_poly ? (literal_translation ? 0.0 : geometry::circumradius(robot.vertices))
                   : robot.radius;
    const double obstacle_extent =
        obstacle_poly ? geometry::circumradius(obstacle.vertices) : obstacle.radius;

    if (robot_poly && obstacle_poly && !literal_translation)
        return geometry::circumradius(minkowski_difference(obstacle.vertices,
                                                           robot.vertices));
    return robot_extent + obstacle_extent;
}

quadform::SeriesResult collision_probability(const CollisionQuery& query) {
    const double radius = effective_radius(query.robot_body, query.obstacle_body);

    quadform::QuadFormSpec spec;
    spec.a = Eigen::Matrix2d::Identity();
    spec.mean = query.robot.mean - query.obstacle.mean;
    spec.covariance = query.robot.covariance + query.obstacle.covariance;

    const quadform::SpectralParams params = quadform::spectral_decompose(spec);

    // Every point of the collision disc lies at least dist - radius from the
    // displacement mean, and |w - mu|^2 <= lambda_max chi^2_2, so
    // P <= exp(-(dist - radius)^2 / (2 lambda_max)). Once that tail is below
    // delta the series adds nothing; skipping it keeps the same value +/-
    // error_bound contract and avoids the long noncentral expansions that
    // wide separations over tight covariances would need.
    const double dist = spec.mean.norm();
    if (dist > radius) {
        const double margin = dist - radius;
        const double tail =
            std::exp(-0.5 * margin * margin / params.lambdas.maxCoeff());
        if (tail <= 0.5 * query.delta) {
            quadform::SeriesResult far;
            far.value = 0.0;
            far.terms_used = 0;
            far.error_bound = tail;
            far.rho = 0.0;
            return far;
        }
    } else {
        // Mirror case: the ball of radius radius - dist around the mean lies
        // inside the disc, so P >= 1 - exp(-(radius - dist)^2 / (2 lambda_max)).
        const double margin = radius - dist;
        const double tail =
            std::exp(-0.5 * margin * margin / params.lambdas.maxCoeff());
        if (tail <= 0.5 * query.delta) {
            quadform::SeriesResult near;
            near.value = 1.0;
            near.terms_used = 0;
            near.error_bound = tail;
            near.rho = 0.0;
            return near;
        }
    }

    quadform::SeriesOptions opt;
    opt.delta = query.delta;
    opt.n_max = query.max_terms;
    return quadform::cdf(params, radius * radius, opt);
}

bool is_epsilon_safe(const quadform::SeriesResult& prob, double epsilon) {
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw InvalidInput("epsilon must lie in (0,1), got " + std::to_string(epsilon));
    return prob.value + prob.error_bound <= 1.0 - epsilon;
}

} // namespace safenav::collision
