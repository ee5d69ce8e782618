#pragma once

#include "safenav/belief.hpp"
#include "safenav/collision.hpp"

#include <vector>

namespace safenav::obstacle {

using belief::PoseBelief;
using collision::PositionBelief;

struct Ray {
    double bearing = 0.0; // rad, sensor frame
    double range = 0.0;   // m
};

/// One sweep of a range-bearing sensor. Bearings strictly increasing,
/// every range in (0, max_range].
struct Scan {
    std::vector<Ray> rays;
    double max_range = 3.5;
    double timestamp = 0.0;
};

void validate_scan(const Scan& scan);

/// Maximal contiguous runs of rays with range < max_range - 1e-6, in
/// bearing order. A max-range ray separates two obstacles, so each run is
/// one obstacle candidate. May be empty.
std::vector<Scan> cluster_scan(const Scan& scan);

struct SensorNoise {
    double range_var = 0.01;   // (0.1 m)^2
    double bearing_var = 4e-4; // (0.02 rad)^2
};

/// Fuses the cluster's minimum-range ray with the prior in obstacle
/// position space. The ray range is offset by obstacle_radius so the
/// pseudo-measurement points at the obstacle center; the robot pose is
/// fixed at its mean and its position covariance widens the measurement
/// covariance.
///
/// Throws InvalidInput on an empty cluster or negative radius.
PositionBelief estimate_location(const PoseBelief& robot, const Scan& cluster,
                                 const PositionBelief& prior,
                                 double obstacle_radius,
                                 const SensorNoise& noise = {});

/// Back-projects one ray into a first position belief for a target with no
/// history: center at range + obstacle_radius along the ray from the robot
/// mean, isotropic covariance `variance`. Throws InvalidInput when variance
/// <= 0 or obstacle_radius < 0.
PositionBelief initial_location(const PoseBelief& robot, const Ray& ray,
                                double obstacle_radius, double variance);

/// Change between consecutive velocity estimates above which a track is
/// flagged; the prediction model assumes near-constant velocity.
inline constexpr double kVelocityJumpThreshold = 1.0; // m/s

struct ObstacleTrack {
    std::vector<PositionBelief> positions; // time ordered
    std::vector<double> vx_series;         // forward differences, size n-1
    std::vector<double> vy_series;
    double vx_change_var = 0.0; // variance of the largest x-velocity change
    double vy_change_var = 0.0;
    double dt = 0.1;            // spacing of the position estimates
    bool velocity_jump = false; // some |dv| exceeded kVelocityJumpThreshold
};

/// Forward-difference velocities of the position means. The change
/// variances come from the largest-magnitude velocity change per axis;
/// each velocity is a difference of two position Gaussians, so its
/// variance is the sum of the two position variances over dt^2. With a
/// single velocity there is no change pair and its own variance stands in.
///
/// Throws InsufficientData with fewer than 2 positions, InvalidInput on
/// dt <= 0.
ObstacleTrack estimate_velocities(const std::vector<PositionBelief>& positions,
                                  double dt);

/// Per-step position beliefs for l = 1..L; covariance trace nondecreasing.
struct ObstaclePrediction {
    std::vector<PositionBelief> steps;
};

/// Extrapolates the last tracked position l*dt ahead for l = 1..steps with
/// the last velocity and last velocity change (zero with fewer than 3
/// positions). Step l covariance is the last estimate plus l process-noise
/// increments diag(vx_change_var, vy_change_var) * dt^4 / 4.
ObstaclePrediction predict_obstacle(const ObstacleTrack& track, int steps,
                                    double dt);

} // namespace safenav::obstacle
