#include "safenav/obstacle.hpp"

#include "safenav/errors.hpp"

#include <algorithm>
#include <cmath>

namespace safenav::obstacle {

void validate_scan(const Scan& scan) {
    if (!(scan.max_range > 0.0))
        throw InvalidInput("scan max_range must be positive");
    for (std::size_t i = 0; i < scan.rays.size(); ++i) {
        const Ray& r = scan.rays[i];
        if (!std::isfinite(r.bearing) || !std::isfinite(r.range))
            throw InvalidInput("scan ray is not finite");
        if (!(r.range > 0.0) || r.range > scan.max_range)
            throw InvalidInput("scan range outside (0, max_range]");
        if (i > 0 && !(r.bearing > scan.rays[i - 1].bearing))
            throw InvalidInput("scan bearings must be strictly increasing");
    }
}

std::vector<Scan> cluster_scan(const Scan& scan) {
    validate_scan(scan);
    const double cut = scan.max_range - 1e-6;
    std::vector<Scan> out;
    std::size_t i = 0;
    while (i < scan.rays.size()) {
        if (scan.rays[i].range >= cut) {
            ++i;
            continue;
        }
        Scan seg;
        seg.max_range = scan.max_range;
        seg.timestamp = scan.timestamp;
        while (i < scan.rays.size() && scan.rays[i].range < cut)
            seg.rays.push_back(scan.rays[i++]);
        out.push_back(std::move(seg));
    }
    return out;
}

PositionBelief estimate_location(const PoseBelief& robot, const Scan& cluster,
                                 const PositionBelief& prior,
                                 double obstacle_radius,
                                 const SensorNoise& noise) {
    if (cluster.rays.empty())
        throw InvalidInput("cluster has no rays");
    if (obstacle_radius < 0.0)
        throw InvalidInput("obstacle radius must be nonnegative");
    if (!(noise.range_var > 0.0) || !(noise.bearing_var > 0.0))
        throw InvalidInput("sensor noise variances must be positive");

    const Ray& min_ray = *std::min_element(
        cluster.rays.begin(), cluster.rays.end(),
        [](const Ray& a, const Ray& b) { return a.range < b.range; });

    // The ray hits the surface; the center sits one radius further out.
    const Eigen::Vector2d z(min_ray.range + obstacle_radius, min_ray.bearing);

    const Eigen::Vector2d zhat = belief::range_bearing(robot.mean, prior.mean);
    const Eigen::Vector2d w = prior.mean - robot.mean.head<2>();
    const double r = w.norm();
    Eigen::Matrix2d h;
    h << w.x() / r, w.y() / r,
        -w.y() / (r * r), w.x() / (r * r);

    const Eigen::Vector2d innovation(z[0] - zhat[0],
                                     belief::wrap_angle(z[1] - zhat[1]));

    // The measurement jacobian w.r.t. the robot position is -h, so the
    // robot position covariance enters the innovation spread as h P h^T.
    Eigen::Matrix2d q =
        Eigen::Vector2d(noise.range_var, noise.bearing_var).asDiagonal();
    q += h * robot.covariance.topLeftCorner<2, 2>() * h.transpose();

    const belief::Gaussian post = belief::kalman_update(
        belief::Gaussian{prior.mean, prior.covariance}, h, innovation, q);
    return {Eigen::Vector2d(post.mean), Eigen::Matrix2d(post.covariance)};
}

PositionBelief initial_location(const PoseBelief& robot, const Ray& ray,
                                double obstacle_radius, double variance) {
    if (obstacle_radius < 0.0)
        throw InvalidInput("obstacle radius must be nonnegative");
    if (!(variance > 0.0))
        throw InvalidInput("initial location variance must be positive");
    const double heading = robot.mean[2] + ray.bearing;
    const double reach = ray.range + obstacle_radius;
    PositionBelief out;
    out.mean = robot.mean.head<2>() +
               reach * Eigen::Vector2d(std::cos(heading), std::sin(heading));
    out.covariance = Eigen::Matrix2d::Identity() * variance;
    return out;
}

namespace {

// Variance of forward-difference velocity i along one axis: the positions
// are independent Gaussians, so the difference variance is the sum.
double velocity_variance(const std::vector<PositionBelief>& positions,
                         std::size_t i, int axis, double dt) {
    return (positions[i + 1].covariance(axis, axis) +
            positions[i].covariance(axis, axis)) /
           (dt * dt);
}

} // namespace

ObstacleTrack estimate_velocities(const std::vector<PositionBelief>& positions,
                                  double dt) {
    if (positions.size() < 2)
        throw InsufficientData("velocity estimation needs at least 2 positions");
    if (!(dt > 0.0))
        throw InvalidInput("dt must be positive");

    ObstacleTrack track;
    track.positions = positions;
    track.dt = dt;
    const std::size_t n = positions.size();
    for (std::size_t i = 0; i + 1 < n; ++i) {
        track.vx_series.push_back(
            (positions[i + 1].mean.x() - positions[i].mean.x()) / dt);
        track.vy_series.push_back(
            (positions[i + 1].mean.y() - positions[i].mean.y()) / dt);
    }

    const std::size_t m = track.vx_series.size();
    if (m < 2) {
        track.vx_change_var = velocity_variance(positions, 0, 0, dt);
        track.vy_change_var = velocity_variance(positions, 0, 1, dt);
        return track;
    }

    std::size_t best_x = 0, best_y = 0;
    double max_dvx = -1.0, max_dvy = -1.0;
    for (std::size_t i = 0; i + 1 < m; ++i) {
        const double dvx = std::abs(track.vx_series[i + 1] - track.vx_series[i]);
        const double dvy = std::abs(track.vy_series[i + 1] - track.vy_series[i]);
        if (dvx > max_dvx) {
            max_dvx = dvx;
            best_x = i;
        }
        if (dvy > max_dvy) {
            max_dvy = dvy;
            best_y = i;
        }
    }
    track.vx_change_var = velocity_variance(positions, best_x, 0, dt) +
                          velocity_variance(positions, best_x + 1, 0, dt);
    track.vy_change_var = velocity_variance(positions, best_y, 1, dt) +
                          velocity_variance(positions, best_y + 1, 1, dt);
    track.velocity_jump =
        max_dvx > kVelocityJumpThreshold || max_dvy > kVelocityJumpThreshold;
    return track;
}

ObstaclePrediction predict_obstacle(const ObstacleTrack& track, int steps,
                                    double dt) {
    if (track.positions.size() < 2 || track.vx_series.empty() ||
        track.vy_series.size() != track.vx_series.size())
        throw InsufficientData("prediction needs a track with velocities");
    if (steps < 0)
        throw InvalidInput("steps must be nonnegative");
    if (!(dt > 0.0) || !(track.dt > 0.0))
        throw InvalidInput("dt must be positive");

    const PositionBelief& last = track.positions.back();
    const std::size_t m = track.vx_series.size();
    const double vx = track.vx_series.back();
    const double vy = track.vy_series.back();
    // Last velocity change over the estimate spacing, zero when only one
    // velocity exists.
    const double ax =
        m >= 2 ? (track.vx_series[m - 1] - track.vx_series[m - 2]) / track.dt
               : 0.0;
    const double ay =
        m >= 2 ? (track.vy_series[m - 1] - track.vy_series[m - 2]) / track.dt
               : 0.0;

    const double dt4 = dt * dt * dt * dt;
    const Eigen::Matrix2d process_noise =
        Eigen::Vector2d(0.25 * track.vx_change_var * dt4,
                        0.25 * track.vy_change_var * dt4)
            .asDiagonal();

    ObstaclePrediction out;
    out.steps.reserve(static_cast<std::size_t>(steps));
    for (int l = 1; l <= steps; ++l) {
        const double t = l * dt;
        PositionBelief p;
        p.mean = last.mean + Eigen::Vector2d(vx * t + 0.5 * ax * t * t,
                                             vy * t + 0.5 * ay * t * t);
        p.covariance = last.covariance + static_cast<double>(l) * process_noise;
        out.steps.push_back(std::move(p));
    }
    return out;
}

} // namespace safenav::obstacle
