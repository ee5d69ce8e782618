#include <CLI11.hpp>

#include "safenav/baselines.hpp"
#include "safenav/collision.hpp"
#include "safenav/errors.hpp"
#include "safenav/obstacle.hpp"
#include "safenav/planner.hpp"
#include "safenav/sim.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace safenav;

namespace {

std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

Eigen::Matrix2d cov_from_flag(const std::vector<double>& v, const char* flag) {
    if (v.size() != 3)
        throw InvalidInput(std::string(flag) + " needs xx,xy,yy");
    Eigen::Matrix2d m;
    m << v[0], v[1], v[1], v[2];
    return m;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot open output file: " + path);
    out << text;
}

// ---- collide ----

struct CollideArgs {
    double robot_x = 0.0, robot_y = 0.0, robot_radius = 0.22;
    double obs_x = 1.0, obs_y = 0.0, obs_radius = 0.22;
    std::vector<double> robot_cov{0.01, 0.0, 0.01};
    std::vector<double> obs_cov{0.01, 0.0, 0.01};
    double epsilon = 0.99;
    int max_terms = 200;
};

int run_collide(const CollideArgs& a, double delta, const std::string& out) {
    collision::CollisionQuery q;
    q.robot.mean = {a.robot_x, a.robot_y};
    q.robot.covariance = cov_from_flag(a.robot_cov, "--robot-cov");
    q.robot_body = collision::Body::sphere(a.robot_radius);
    q.obstacle.mean = {a.obs_x, a.obs_y};
    q.obstacle.covariance = cov_from_flag(a.obs_cov, "--obs-cov");
    q.obstacle_body = collision::Body::sphere(a.obs_radius);
    q.delta = delta;
    q.epsilon = a.epsilon;
    q.max_terms = a.max_terms;

    const quadform::SeriesResult res = collision::collision_probability(q);
    const bool safe = collision::is_epsilon_safe(res, a.epsilon);
    std::string text;
    text += "probability " + fmt17(res.value) + "\n";
    text += "bound " + fmt17(res.error_bound) + "\n";
    text += "terms " + std::to_string(res.terms_used) + "\n";
    text += "safe_at_epsilon " + std::string(safe ? "yes" : "no") + " (P + bound " +
            (safe ? "<=" : ">") + " " + fmt17(1.0 - a.epsilon) + ")\n";
    std::fputs(text.c_str(), stdout);
    if (!out.empty()) write_text(out, text);
    return 0;
}

// ---- converge ----

int run_converge(double delta, const std::string& out) {
    const std::vector<sim::ConvergeRow> rows = sim::converge_sweep(delta);
    std::printf("%-5s %10s %7s %7s %8s %12s %12s %6s %9s\n", "case", "sep",
                "r_rob", "r_obs", "y", "value", "bound", "terms", "time_us");
    for (const auto& r : rows)
        std::printf("%-5s %10.3f %7.2f %7.2f %8.4f %12.5e %12.5e %6d %9.1f\n",
                    r.label.c_str(), r.separation, r.robot_radius,
                    r.obstacle_radius, r.y, r.value, r.error_bound, r.terms,
                    r.time_us);
    if (!out.empty()) write_text(out, sim::converge_to_csv(rows));
    return 0;
}

// ---- compare ----

int run_compare(char which, double threshold, int samples, int repeats,
                std::uint64_t seed, double delta, const std::string& out) {
    const baselines::ComparisonCase c = baselines::builtin_case(which);
    const std::vector<baselines::ComparisonRow> rows =
        baselines::compare(c, threshold, repeats, samples, seed, delta);
    std::printf("case %s (threshold %.3f)\n", c.label.c_str(), threshold);
    std::printf("%-20s %12s %14s %10s\n", "method", "probability", "time_s",
                "feasible");
    for (const auto& r : rows) {
        char timing[40];
        std::snprintf(timing, sizeof timing, "%.2e±%.1e", r.time_mean_s,
                      r.time_std_s);
        std::printf("%-20s %12.6f %14s %10s%s\n", r.method.c_str(),
                    r.probability, timing, r.feasible ? "yes" : "no",
                    r.degenerate ? " (degenerate)" : "");
    }
    if (!out.empty()) {
        std::string csv =
            "method,probability,time_mean_s,time_std_s,feasible,degenerate\n";
        for (const auto& r : rows)
            csv += r.method + "," + fmt17(r.probability) + "," +
                   fmt17(r.time_mean_s) + "," + fmt17(r.time_std_s) + "," +
                   (r.feasible ? "1" : "0") + "," + (r.degenerate ? "1" : "0") +
                   "\n";
        write_text(out, csv);
    }
    return 0;
}

// ---- estimate ----

struct ScanRow {
    double time = 0.0;
    belief::PoseBelief robot;
    obstacle::Ray ray;
};

std::vector<ScanRow> read_scan_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open scan log: " + path);
    std::vector<ScanRow> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (lineno == 1 && line.rfind("time,", 0) == 0) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> f;
        while (std::getline(ss, cell, ',')) {
            try {
                f.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw InvalidInput("scan log line " + std::to_string(lineno) +
                                   ": '" + cell + "' is not a number");
            }
        }
        if (f.size() != 9)
            throw InvalidInput("scan log line " + std::to_string(lineno) +
                               ": expected 9 fields "
                               "(time,x,y,theta,var_x,var_y,var_theta,bearing,"
                               "range), got " +
                               std::to_string(f.size()));
        ScanRow r;
        r.time = f[0];
        r.robot.mean << f[1], f[2], f[3];
        r.robot.covariance.setZero();
        r.robot.covariance.diagonal() << f[4], f[5], f[6];
        r.ray = {f[7], f[8]};
        rows.push_back(r);
    }
    if (rows.empty()) throw InvalidInput("scan log has no data rows: " + path);
    return rows;
}

struct EstimateArgs {
    std::string input;
    double radius = 0.22;
    double prior_var = 0.1;
    double inflation_var = 0.01;
    double range_var = 0.01;
    double bearing_var = 4e-4;
};

int run_estimate(const EstimateArgs& a, const std::string& out) {
    const std::vector<ScanRow> rows = read_scan_log(a.input);
    const obstacle::SensorNoise noise{a.range_var, a.bearing_var};

    std::string csv = "time,mean_x,mean_y,cov_xx,cov_xy,cov_yy\n";
    bool tracking = false;
    collision::PositionBelief posterior;
    std::size_t i = 0;
    while (i < rows.size()) {
        std::size_t j = i;
        while (j < rows.size() && rows[j].time == rows[i].time) ++j;

        obstacle::Scan cluster;
        cluster.timestamp = rows[i].time;
        for (std::size_t k = i; k < j; ++k) cluster.rays.push_back(rows[k].ray);
        std::sort(cluster.rays.begin(), cluster.rays.end(),
                  [](const obstacle::Ray& l, const obstacle::Ray& r) {
                      return l.bearing < r.bearing;
                  });
        cluster.max_range =
            std::max_element(cluster.rays.begin(), cluster.rays.end(),
                             [](const obstacle::Ray& l, const obstacle::Ray& r) {
                                 return l.range < r.range;
                             })
                ->range +
            1.0;

        if (!tracking) {
            const auto nearest =
                std::min_element(cluster.rays.begin(), cluster.rays.end(),
                                 [](const obstacle::Ray& l,
                                    const obstacle::Ray& r) {
                                     return l.range < r.range;
                                 });
            posterior = obstacle::initial_location(rows[i].robot, *nearest,
                                                   a.radius, a.prior_var);
            tracking = true;
        } else {
            collision::PositionBelief prior = posterior;
            prior.covariance +=
                Eigen::Matrix2d::Identity() * a.inflation_var;
            posterior = obstacle::estimate_location(rows[i].robot, cluster,
                                                    prior, a.radius, noise);
        }
        csv += fmt17(rows[i].time) + "," + fmt17(posterior.mean[0]) + "," +
               fmt17(posterior.mean[1]) + "," +
               fmt17(posterior.covariance(0, 0)) + "," +
               fmt17(posterior.covariance(0, 1)) + "," +
               fmt17(posterior.covariance(1, 1)) + "\n";
        i = j;
    }
    if (out.empty())
        std::fputs(csv.c_str(), stdout);
    else
        write_text(out, csv);
    return 0;
}

// ---- plan / run shared scenario plumbing ----

planner::PlanConfig config_of(const sim::Scenario& s) {
    planner::PlanConfig cfg;
    cfg.actions = s.actions.empty() ? planner::nine_actions(s.v_max, s.omega_max)
                                    : s.actions;
    cfg.horizon = s.horizon;
    cfg.dt = s.dt;
    cfg.node_budget = s.node_budget;
    cfg.max_terms = s.max_terms;
    cfg.delta = s.delta;
    cfg.motion_noise = Eigen::Matrix3d(s.motion_noise.asDiagonal());
    return cfg;
}

int run_plan(const std::string& scenario_path, int agent_index,
             const std::string& out, bool delta_set, double delta) {
    sim::Scenario s = sim::load_scenario(scenario_path);
    if (delta_set) s.delta = delta;
    if (agent_index < 0 || agent_index >= static_cast<int>(s.agents.size()))
        throw InvalidInput("--agent " + std::to_string(agent_index) +
                           " out of range, scenario has " +
                           std::to_string(s.agents.size()) + " agents");
    const sim::AgentSpec& me = s.agents[agent_index];
    if (me.scripted)
        throw InvalidInput("--agent " + std::to_string(agent_index) +
                           " is scripted, planning applies to planner agents");

    belief::PoseBelief start;
    start.mean = me.start;
    start.covariance = Eigen::Matrix3d(me.start_variance.asDiagonal());

    // Every other agent enters as a just-sighted static track at its start
    // pose, the same shape the closed loop hands the planner after a first
    // scan.
    std::vector<planner::PlannedObstacle> obstacles;
    for (std::size_t t = 0; t < s.agents.size(); ++t) {
        if (static_cast<int>(t) == agent_index) continue;
        collision::PositionBelief p;
        p.mean = s.agents[t].start.head<2>();
        p.covariance = Eigen::Matrix2d::Identity() * s.obstacle_prior_var;
        obstacles.push_back(
            {obstacle::estimate_velocities({p, p}, s.dt),
             collision::Body::sphere(s.agents[t].radius)});
    }

    std::vector<planner::PlannerLandmark> landmarks;
    for (const auto& lm : s.landmarks) {
        planner::PlannerLandmark pl;
        pl.position = lm.position;
        pl.noise = Eigen::Matrix2d::Identity() * lm.noise_var;
        pl.max_range = lm.max_range;
        if (s.use_object_uncertainty && lm.object) pl.object = lm.object;
        landmarks.push_back(pl);
    }

    planner::Weights w = s.weights;
    w.prob_threshold = 1.0 - s.epsilon;
    const collision::Body body =
        collision::Body::sphere(me.radius + s.planning_radius_padding);

    const planner::PlanResult r = planner::plan(start, me.goal, obstacles, body,
                                                landmarks, w, config_of(s));

    std::string text = "feasible " + std::string(r.feasible ? "yes" : "no") +
                       "\ntotal_cost " + fmt17(r.total_cost) + "\n";
    text += "step v omega x y theta p_max bound_max\n";
    for (std::size_t k = 0; k < r.steps.size(); ++k) {
        const auto& st = r.steps[k];
        double p = 0.0, b = 0.0;
        for (const auto& c : st.collision) {
            p = std::max(p, c.value);
            b = std::max(b, c.error_bound);
        }
        char line[200];
        std::snprintf(line, sizeof line,
                      "%zu %.3f %.3f %.4f %.4f %.4f %.3e %.3e\n", k + 1,
                      st.control.v, st.control.omega, st.belief.mean[0],
                      st.belief.mean[1], st.belief.mean[2], p, b);
        text += line;
    }
    std::fputs(text.c_str(), stdout);
    if (!out.empty()) write_text(out, text);
    return 0;
}

int run_run(const std::string& scenario_path, std::uint64_t seed,
            const std::string& out, bool delta_set, double delta) {
    sim::Scenario s = sim::load_scenario(scenario_path);
    if (delta_set) s.delta = delta;
    const sim::TrajectoryLog log = sim::run_scenario(s, seed);
    for (const auto& sum : log.summary) {
        std::printf("agent %d (%s):", sum.agent,
                    sum.scripted ? "scripted" : "planner");
        if (!sum.scripted) {
            std::printf(" %s in %d steps, final goal distance %.3f",
                        sum.reached_goal ? "reached goal" : "did not reach goal",
                        sum.steps_taken, sum.final_goal_distance);
            if (sum.infeasible_steps > 0)
                std::printf(", %d infeasible steps", sum.infeasible_steps);
        } else {
            std::printf(" ran %d steps", sum.steps_taken);
        }
        if (sum.has_min_distance)
            std::printf(", min clearance %.3f", sum.min_true_distance);
        std::printf("\n");
    }
    if (!out.empty()) sim::write_log(log, out);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Collision-aware planning toolkit: certified collision "
                 "probabilities, estimator and planner drivers, and "
                 "closed-loop scenario runs"};
    app.require_subcommand(1);

    std::uint64_t seed = 1;
    double delta = 1e-3;
    std::string out;
    app.add_option("--seed", seed, "Random seed for sampling subcommands");
    CLI::Option* delta_opt =
        app.add_option("--delta", delta, "Series truncation tolerance");
    app.add_option("--out", out, "Write the subcommand's artifact here");
    // Lets the global flags appear after the subcommand name.
    app.fallthrough();

    CollideArgs ca;
    CLI::App* collide =
        app.add_subcommand("collide", "One collision probability query");
    collide->add_option("--robot-x", ca.robot_x, "Robot mean x");
    collide->add_option("--robot-y", ca.robot_y, "Robot mean y");
    collide->add_option("--robot-cov", ca.robot_cov,
                        "Robot covariance xx,xy,yy")
        ->delimiter(',')
        ->expected(3);
    collide->add_option("--robot-radius", ca.robot_radius, "Robot disc radius");
    collide->add_option("--obs-x", ca.obs_x, "Obstacle mean x");
    collide->add_option("--obs-y", ca.obs_y, "Obstacle mean y");
    collide->add_option("--obs-cov", ca.obs_cov, "Obstacle covariance xx,xy,yy")
        ->delimiter(',')
        ->expected(3);
    collide->add_option("--obs-radius", ca.obs_radius, "Obstacle disc radius");
    collide->add_option("--epsilon", ca.epsilon, "Safety level in (0,1)");
    collide->add_option("--max-terms", ca.max_terms, "Series length ceiling");

    CLI::App* converge = app.add_subcommand(
        "converge", "Series term counts over separation and radius ladders");

    std::string case_id = "a";
    double threshold = 0.09;
    int samples = 100000;
    int repeats = 5;
    CLI::App* compare = app.add_subcommand(
        "compare", "Exact method against the reference approximations");
    compare->add_option("--case", case_id, "Benchmark geometry: a, b or c")
        ->check(CLI::IsMember({"a", "b", "c"}));
    compare->add_option("--threshold", threshold, "Feasibility threshold");
    compare->add_option("--samples", samples, "Sampling-method draw count");
    compare->add_option("--repeats", repeats, "Timing repetitions");

    EstimateArgs ea;
    CLI::App* estimate = app.add_subcommand(
        "estimate", "Scan log to obstacle location estimates");
    estimate->add_option("input", ea.input, "Scan log CSV")->required();
    estimate->add_option("--radius", ea.radius, "Obstacle radius");
    estimate->add_option("--prior-var", ea.prior_var,
                         "First-sighting position variance");
    estimate->add_option("--inflation-var", ea.inflation_var,
                         "Prior widening between scans");
    estimate->add_option("--range-var", ea.range_var, "Range noise variance");
    estimate->add_option("--bearing-var", ea.bearing_var,
                         "Bearing noise variance");

    std::string scenario_path;
    int agent_index = 0;
    CLI::App* plan = app.add_subcommand(
        "plan", "One planning cycle from an agent's start belief");
    plan->add_option("--scenario", scenario_path, "Scenario JSON")->required();
    plan->add_option("--agent", agent_index, "Planner agent index");

    std::string run_scenario_path;
    CLI::App* run =
        app.add_subcommand("run", "Closed-loop scenario to trajectory log");
    run->add_option("--scenario", run_scenario_path, "Scenario JSON")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (collide->parsed()) return run_collide(ca, delta, out);
        if (converge->parsed()) return run_converge(delta, out);
        if (compare->parsed())
            return run_compare(case_id[0], threshold, samples, repeats, seed,
                               delta, out);
        if (estimate->parsed()) return run_estimate(ea, out);
        if (plan->parsed())
            return run_plan(scenario_path, agent_index, out,
                            delta_opt->count() > 0, delta);
        if (run->parsed())
            return run_run(run_scenario_path, seed, out,
                           delta_opt->count() > 0, delta);
    } catch (const InvalidInput& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const DegenerateGeometry& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const InsufficientData& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const ConvergenceFailure& e) {
        std::fprintf(stderr, "error: %s (best bound %.3e after %d terms)\n",
                     e.what(), e.best_bound, e.terms);
        return 3;
    } catch (const NumericRange& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const InternalInconsistency& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
