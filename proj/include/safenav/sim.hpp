#pragma once

#include "safenav/planner.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace safenav::sim {

using belief::Pose;

/// One constant-velocity leg of a scripted body. steps = 0 holds forever;
/// the last segment holds forever regardless.
struct ProfileSegment {
    Eigen::Vector2d velocity = Eigen::Vector2d::Zero();
    int steps = 0;
};

struct AgentSpec {
    bool scripted = false;
    Pose start = Pose::Zero();
    Eigen::Vector3d start_variance = {0.1, 0.1, 0.02};
    Eigen::Vector2d goal = Eigen::Vector2d::Zero();
    double radius = 0.22;
    std::vector<ProfileSegment> profile; // scripted agents only
};

struct LandmarkSpec {
    Eigen::Vector2d position = Eigen::Vector2d::Zero();
    double noise_var = 1e-2;
    double max_range = std::numeric_limits<double>::infinity();
    std::optional<belief::ObjectBelief> object;
};

struct ScanNoise {
    double range_var = 0.01;
    double bearing_var = 4e-4;
    double max_range = 3.5;
};

/// Closed-loop configuration. Planner agents drive toward their goals with
/// the receding-horizon planner; every other agent is a scan target they
/// track and avoid. All fields have working defaults so a scenario file only
/// needs the agents.
struct Scenario {
    double dt = 0.1;
    int max_steps = 400;
    double goal_tolerance = 0.1;
    double delta = 1e-3;
    double epsilon = 0.99;
    int horizon = 7;
    double v_max = 0.26;
    double omega_max = 1.82;
    std::vector<belief::UnicycleControl> actions; // empty = nine-action set
    double node_budget = 1e5;
    int max_terms = 1000;
    double pose_tick_probability = 0.3;
    bool use_object_uncertainty = false;
    // Obstacle velocity baseline: tracks keep this many location estimates
    // and difference the endpoints, so the baseline is (window-1) steps.
    int track_window = 6;
    double track_inflation_var = 0.01; // prior widening per tracking step
    double obstacle_prior_var = 0.1;   // first-sighting covariance
    // Extra robot radius used only inside the planner's collision queries;
    // true-collision audits use the real radii.
    double planning_radius_padding = 0.0;
    Eigen::Vector3d motion_noise = {1e-4, 1e-4, 1e-4};
    Eigen::Vector3d pose_tick_noise = {1e-4, 1e-4, 1e-4};
    ScanNoise scan;
    planner::Weights weights; // prob_threshold is overwritten with 1-epsilon
    std::vector<AgentSpec> agents;
    std::vector<LandmarkSpec> landmarks;
};

/// Parses and validates a scenario file. Validation walks the whole
/// document and reports every failing field in one InvalidInput message.
Scenario load_scenario(const std::string& path);
Scenario scenario_from_json_text(const std::string& text);

/// Serializes with every field explicit, so load(save(s)) == s.
void save_scenario(const Scenario& scenario, const std::string& path);
std::string scenario_to_json_text(const Scenario& scenario);

/// One log row per agent per step, written after the step's movement and
/// belief updates. Obstacle fields describe the tracked target with the
/// highest collision probability against the row's own est fields, at the
/// true radii, so the logged probability can be recomputed from the row
/// alone; they are absent when the agent tracks nothing. min_true_distance
/// is the smallest surface clearance to any other agent, from ground truth.
struct LogRow {
    int step = 0;
    double time = 0.0;
    int agent = 0;
    Pose true_pose = Pose::Zero();
    Pose est_mean = Pose::Zero();
    Eigen::Matrix3d est_cov = Eigen::Matrix3d::Zero();
    double v = 0.0;
    double omega = 0.0;
    bool feasible = true;
    bool reached = false;
    bool has_min_distance = false;
    double min_true_distance = 0.0;
    bool has_obstacle = false;
    Eigen::Vector2d obs_mean = Eigen::Vector2d::Zero();
    Eigen::Matrix2d obs_cov = Eigen::Matrix2d::Zero();
    double obs_radius = 0.0;
    double collision_probability = 0.0;
    double collision_bound = 0.0;
};

struct AgentSummary {
    int agent = 0;
    bool scripted = false;
    bool reached_goal = false;
    int steps_taken = 0;
    double final_goal_distance = 0.0;
    bool has_min_distance = false;
    double min_true_distance = 0.0;
    int infeasible_steps = 0;
};

struct TrajectoryLog {
    std::vector<LogRow> rows;
    std::vector<AgentSummary> summary;
};

/// Runs the scenario to max_steps or until every planner agent reached its
/// goal. Deterministic: one seeded stream drawn in a fixed order (scan
/// noise, then motion noise, pose ticks and landmark noise, agents in index
/// order). Planner infeasibility halts the agent for the step and is logged,
/// not thrown.
TrajectoryLog run_scenario(const Scenario& scenario, std::uint64_t seed);

/// CSV with a fixed header; floats printed with %.17g so identical logs are
/// identical bytes. Empty cells for absent optional fields.
void write_log(const TrajectoryLog& log, const std::string& path);
std::string log_to_csv(const TrajectoryLog& log);

/// One series evaluation of a sphere-sphere layout, timed (best of three).
struct ConvergeRow {
    std::string label;
    double separation = 0.0;
    double robot_radius = 0.0;
    double obstacle_radius = 0.0;
    double cov_diag = 0.0; // shared diagonal of both position covariances
    double y = 0.0;        // effective radius squared
    double value = 0.0;
    double error_bound = 0.0;
    int terms = 0;
    double time_us = 0.0;
};

/// Fixed eight-row sweep: rows A-D widen the separation of touching 0.3/0.5
/// discs, rows E-H shrink the obstacle radius at fixed separation. Term
/// counts fall along both ladders.
std::vector<ConvergeRow> converge_sweep(double delta = 1e-3);
std::string converge_to_csv(const std::vector<ConvergeRow>& rows);

} // namespace safenav::sim
