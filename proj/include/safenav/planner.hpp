#pragma once

#include "safenav/belief.hpp"
#include "safenav/collision.hpp"
#include "safenav/obstacle.hpp"

#include <Eigen/Dense>
#include <limits>
#include <optional>
#include <vector>

namespace safenav::planner {

using belief::PoseBelief;
using belief::UnicycleControl;

/// Objective weights. Control and goal terms are Mahalanobis squares, the
/// uncertainty term is tr(cov_weight' Sigma cov_weight), the collision term
/// is collision_weight * P per obstacle, replaced by penalty whenever the
/// probability is not certified below prob_threshold.
struct Weights {
    Eigen::Matrix2d control_cost = Eigen::Vector2d(0.1, 0.05).asDiagonal();
    Eigen::Matrix2d goal_cost = Eigen::Matrix2d::Identity();
    Eigen::Matrix3d cov_weight = Eigen::Vector3d(1, 1, 0).asDiagonal();
    double collision_weight = 100.0;
    double penalty = 1e6;
    double prob_threshold = 0.01;
};

/// Throws InvalidInput unless the matrices are symmetric PSD,
/// collision_weight >= 0, penalty >= 1e6 and prob_threshold is in (0,1).
void validate_weights(const Weights& w);

/// One obstacle instance a candidate state is checked against.
struct ObstacleAtStep {
    collision::PositionBelief position;
    collision::Body body;
};

/// Control + uncertainty + collision cost of holding `belief` while applying
/// `control`. Each obstacle whose collision probability is not certified
/// below w.prob_threshold contributes w.penalty instead of its weighted
/// probability; a series that cannot reach tolerance within max_terms counts
/// as uncertified. robot_body and delta feed the probability evaluation and
/// are unused when `obstacles` is empty.
double stage_cost(const PoseBelief& belief, const UnicycleControl& control,
                  const std::vector<ObstacleAtStep>& obstacles,
                  const Weights& w,
                  const collision::Body& robot_body = collision::Body{},
                  double delta = 1e-3, int max_terms = 400);

/// Goal Mahalanobis distance on the position components plus the weighted
/// covariance trace.
double terminal_cost(const PoseBelief& belief, const Eigen::Vector2d& goal,
                     const Weights& w);

/// Landmark available to the planner's simulated future observations.
/// `object` switches the update to the viewpoint-aware form.
struct PlannerLandmark {
    Eigen::Vector2d position = Eigen::Vector2d::Zero();
    Eigen::Matrix2d noise = Eigen::Matrix2d::Identity() * 1e-2;
    std::optional<belief::ObjectBelief> object;
    double max_range = std::numeric_limits<double>::infinity();
};

/// Tracked obstacle handed to the planner: the estimate history plus the
/// geometry used for collision checks.
struct PlannedObstacle {
    obstacle::ObstacleTrack track;
    collision::Body body;
};

/// The canonical nine-action set {0, v_max/2, v_max} x {-w_max, 0, +w_max}.
std::vector<UnicycleControl> nine_actions(double v_max, double omega_max);

struct PlanConfig {
    std::vector<UnicycleControl> actions;
    int horizon = 7;
    double dt = 0.1;
    Eigen::Matrix3d motion_noise =
        Eigen::Vector3d(1e-4, 1e-4, 1e-4).asDiagonal();
    double delta = 1e-3;  // collision series tolerance
    int max_terms = 400;  // collision series length ceiling
    // Exhaustive sequence enumeration runs while |actions|^horizon stays
    // within this budget; past it the search falls back to the constant
    // sequences plus a one-step-lookahead greedy sequence.
    double node_budget = 1e5;
};

struct PlanStep {
    UnicycleControl control;
    PoseBelief belief; // after prediction and simulated observations
    std::vector<quadform::SeriesResult> collision; // one entry per obstacle
    bool penalized = false;
};

struct PlanResult {
    std::vector<UnicycleControl> controls;
    std::vector<PlanStep> steps;
    double total_cost = 0.0;
    // False exactly when the chosen sequence hit a penalty; the penalty
    // dwarfs every attainable regular cost, so this means no candidate
    // stayed certified-safe throughout.
    bool feasible = true;
};

/// Finite-horizon argmin over action sequences. Beliefs roll forward with
/// the unicycle model; future observations are closed with their
/// maximum-likelihood value (zero innovation), which leaves the mean in
/// place for plain landmarks while viewpoint-aware landmarks may still
/// shift it. Obstacle tracks are extrapolated once for the whole horizon.
/// Ties in cost keep the earliest sequence in action-index order, making
/// the result deterministic.
///
/// Throws InvalidInput on an empty action set, horizon < 1, dt <= 0 or
/// invalid weights.
PlanResult plan(const PoseBelief& start, const Eigen::Vector2d& goal,
                const std::vector<PlannedObstacle>& obstacles,
                const collision::Body& robot_body,
                const std::vector<PlannerLandmark>& landmarks,
                const Weights& weights, const PlanConfig& config);

} // namespace safenav::planner
