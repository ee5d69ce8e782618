#include "safenav/sim.hpp"

#include "safenav/errors.hpp"
#include "safenav/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

namespace safenav::sim {
namespace {

using njson = nlohmann::json;

std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// Collects every schema violation so a bad file is reported in one pass.
struct Check {
    std::vector<std::string> errors;

    void fail(const std::string& field, const std::string& why) {
        errors.push_back(field + " " + why);
    }
    void require(bool ok, const std::string& field, const std::string& why) {
        if (!ok) fail(field, why);
    }
    void throw_if_failed() const {
        if (errors.empty()) return;
        std::string msg = "scenario invalid: ";
        for (std::size_t i = 0; i < errors.size(); ++i) {
            if (i) msg += "; ";
            msg += errors[i];
        }
        throw InvalidInput(msg);
    }
};

// Range rules live here, on the struct, so hand-built scenarios get the same
// checks as parsed ones. The JSON layer only adds type and key errors.
void validate_scenario(const Scenario& s, Check& c) {
    c.require(s.dt > 0.0, "dt", "must be > 0");
    c.require(s.max_steps >= 1, "max_steps", "must be >= 1");
    c.require(s.goal_tolerance > 0.0, "goal_tolerance", "must be > 0");
    c.require(s.delta > 0.0, "delta", "must be > 0");
    c.require(s.epsilon > 0.0 && s.epsilon < 1.0, "epsilon", "must lie in (0,1)");
    c.require(s.horizon >= 1, "horizon", "must be >= 1");
    c.require(s.v_max > 0.0, "v_max", "must be > 0");
    c.require(s.omega_max > 0.0, "omega_max", "must be > 0");
    for (std::size_t i = 0; i < s.actions.size(); ++i)
        c.require(std::isfinite(s.actions[i].v) && std::isfinite(s.actions[i].omega),
                  "actions[" + std::to_string(i) + "]", "must be finite");
    c.require(s.node_budget >= 1.0, "node_budget", "must be >= 1");
    c.require(s.max_terms >= 1, "max_terms", "must be >= 1");
    c.require(s.pose_tick_probability >= 0.0 && s.pose_tick_probability <= 1.0,
              "pose_tick_probability", "must lie in [0,1]");
    c.require(s.track_window >= 2, "track_window", "must be >= 2");
    c.require(s.track_inflation_var >= 0.0, "track_inflation_var", "must be >= 0");
    c.require(s.obstacle_prior_var > 0.0, "obstacle_prior_var", "must be > 0");
    c.require(s.planning_radius_padding >= 0.0, "planning_radius_padding",
              "must be >= 0");

    bool any_planner = false;
    for (const auto& a : s.agents)
        if (!a.scripted) any_planner = true;
    c.require(!any_planner || s.motion_noise.minCoeff() > 0.0, "motion_noise",
              "components must be > 0 when planner agents exist");
    c.require(s.motion_noise.minCoeff() >= 0.0, "motion_noise",
              "components must be >= 0");
    c.require(s.pose_tick_noise.minCoeff() > 0.0, "pose_tick_noise",
              "components must be > 0");
    c.require(s.scan.range_var > 0.0, "scan.range_var", "must be > 0");
    c.require(s.scan.bearing_var > 0.0, "scan.bearing_var", "must be > 0");
    c.require(s.scan.max_range > 0.0, "scan.max_range", "must be > 0");

    if (s.epsilon > 0.0 && s.epsilon < 1.0) {
        planner::Weights w = s.weights;
        w.prob_threshold = 1.0 - s.epsilon;
        try {
            planner::validate_weights(w);
        } catch (const InvalidInput& e) {
            c.fail("weights", e.what());
        }
    }

    c.require(!s.agents.empty(), "agents", "need at least one");
    for (std::size_t i = 0; i < s.agents.size(); ++i) {
        const auto& a = s.agents[i];
        const std::string path = "agents[" + std::to_string(i) + "].";
        c.require(a.start.allFinite(), path + "start", "must be finite");
        c.require(a.start_variance.allFinite() && a.start_variance.minCoeff() >= 0.0,
                  path + "start_variance", "components must be >= 0");
        c.require(a.radius > 0.0, path + "radius", "must be > 0");
        c.require(a.goal.allFinite(), path + "goal", "must be finite");
        c.require(a.profile.empty() || a.scripted, path + "profile",
                  "only applies to scripted agents");
        for (std::size_t k = 0; k < a.profile.size(); ++k) {
            const std::string seg = path + "profile[" + std::to_string(k) + "].";
            c.require(a.profile[k].velocity.allFinite(), seg + "velocity",
                      "must be finite");
            c.require(a.profile[k].steps >= 0, seg + "steps", "must be >= 0");
        }
    }

    for (std::size_t i = 0; i < s.landmarks.size(); ++i) {
        const auto& lm = s.landmarks[i];
        const std::string path = "landmarks[" + std::to_string(i) + "].";
        c.require(lm.position.allFinite(), path + "position", "must be finite");
        c.require(lm.noise_var > 0.0, path + "noise_var", "must be > 0");
        c.require(lm.max_range > 0.0, path + "max_range", "must be > 0");
        if (lm.object) {
            c.require(lm.object->mean.allFinite(), path + "object.mean",
                      "must be finite");
            c.require(lm.object->covariance.diagonal().minCoeff() > 0.0,
                      path + "object.variance", "components must be > 0");
        }
    }
}

// ---- JSON field readers, each recording instead of throwing ----

void reject_unknown(Check& c, const njson& obj, const std::string& path,
                    std::initializer_list<const char*> allowed) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* key : allowed)
            if (item.key() == key) known = true;
        if (!known) c.fail(path + item.key(), "is not a scenario field");
    }
}

double num_field(Check& c, const njson& obj, const std::string& path,
                 const char* key, double fallback) {
    if (!obj.contains(key)) return fallback;
    const njson& v = obj.at(key);
    if (!v.is_number()) {
        c.fail(path + key, "must be a number");
        return fallback;
    }
    return v.get<double>();
}

int int_field(Check& c, const njson& obj, const std::string& path,
              const char* key, int fallback) {
    if (!obj.contains(key)) return fallback;
    const njson& v = obj.at(key);
    if (!v.is_number_integer()) {
        c.fail(path + key, "must be an integer");
        return fallback;
    }
    return v.get<int>();
}

bool bool_field(Check& c, const njson& obj, const std::string& path,
                const char* key, bool fallback) {
    if (!obj.contains(key)) return fallback;
    const njson& v = obj.at(key);
    if (!v.is_boolean()) {
        c.fail(path + key, "must be a boolean");
        return fallback;
    }
    return v.get<bool>();
}

template <typename Vec>
void vec_field(Check& c, const njson& obj, const std::string& path,
               const char* key, Vec& out) {
    if (!obj.contains(key)) return;
    const njson& v = obj.at(key);
    const auto n = static_cast<std::size_t>(out.size());
    if (!v.is_array() || v.size() != n) {
        c.fail(path + key, "must be an array of " + std::to_string(n) + " numbers");
        return;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!v[i].is_number()) {
            c.fail(path + key, "must be an array of " + std::to_string(n) + " numbers");
            return;
        }
        out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
    }
}

} // namespace

Scenario scenario_from_json_text(const std::string& text) {
    njson j;
    try {
        j = njson::parse(text);
    } catch (const njson::parse_error& e) {
        throw InvalidInput(std::string("scenario parse: ") + e.what());
    }
    if (!j.is_object()) throw InvalidInput("scenario root must be an object");

    Check c;
    Scenario s;

    reject_unknown(c, j, "",
                   {"dt", "max_steps", "goal_tolerance", "delta", "epsilon",
                    "horizon", "v_max", "omega_max", "actions", "node_budget",
                    "max_terms", "pose_tick_probability", "use_object_uncertainty",
                    "track_window", "track_inflation_var", "obstacle_prior_var",
                    "planning_radius_padding", "motion_noise", "pose_tick_noise",
                    "scan", "weights", "agents", "landmarks"});

    s.dt = num_field(c, j, "", "dt", s.dt);
    s.max_steps = int_field(c, j, "", "max_steps", s.max_steps);
    s.goal_tolerance = num_field(c, j, "", "goal_tolerance", s.goal_tolerance);
    s.delta = num_field(c, j, "", "delta", s.delta);
    s.epsilon = num_field(c, j, "", "epsilon", s.epsilon);
    s.horizon = int_field(c, j, "", "horizon", s.horizon);
    s.v_max = num_field(c, j, "", "v_max", s.v_max);
    s.omega_max = num_field(c, j, "", "omega_max", s.omega_max);
    s.node_budget = num_field(c, j, "", "node_budget", s.node_budget);
    s.max_terms = int_field(c, j, "", "max_terms", s.max_terms);
    s.pose_tick_probability =
        num_field(c, j, "", "pose_tick_probability", s.pose_tick_probability);
    s.use_object_uncertainty =
        bool_field(c, j, "", "use_object_uncertainty", s.use_object_uncertainty);
    s.track_window = int_field(c, j, "", "track_window", s.track_window);
    s.track_inflation_var =
        num_field(c, j, "", "track_inflation_var", s.track_inflation_var);
    s.obstacle_prior_var =
        num_field(c, j, "", "obstacle_prior_var", s.obstacle_prior_var);
    s.planning_radius_padding =
        num_field(c, j, "", "planning_radius_padding", s.planning_radius_padding);
    vec_field(c, j, "", "motion_noise", s.motion_noise);
    vec_field(c, j, "", "pose_tick_noise", s.pose_tick_noise);

    if (j.contains("actions")) {
        const njson& arr = j.at("actions");
        if (!arr.is_array() || arr.empty()) {
            c.fail("actions", "must be a non-empty array of [v, omega] pairs");
        } else {
            for (std::size_t i = 0; i < arr.size(); ++i) {
                const njson& pair = arr[i];
                if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() ||
                    !pair[1].is_number()) {
                    c.fail("actions[" + std::to_string(i) + "]",
                           "must be a [v, omega] pair");
                    continue;
                }
                s.actions.push_back({pair[0].get<double>(), pair[1].get<double>()});
            }
        }
    }

    if (j.contains("scan")) {
        const njson& sc = j.at("scan");
        if (!sc.is_object()) {
            c.fail("scan", "must be an object");
        } else {
            reject_unknown(c, sc, "scan.", {"range_var", "bearing_var", "max_range"});
            s.scan.range_var = num_field(c, sc, "scan.", "range_var", s.scan.range_var);
            s.scan.bearing_var =
                num_field(c, sc, "scan.", "bearing_var", s.scan.bearing_var);
            s.scan.max_range = num_field(c, sc, "scan.", "max_range", s.scan.max_range);
        }
    }

    if (j.contains("weights")) {
        const njson& w = j.at("weights");
        if (!w.is_object()) {
            c.fail("weights", "must be an object");
        } else {
            reject_unknown(c, w, "weights.",
                           {"control", "goal", "cov", "collision_weight", "penalty"});
            Eigen::Vector2d control = s.weights.control_cost.diagonal();
            Eigen::Vector2d goal = s.weights.goal_cost.diagonal();
            Eigen::Vector3d cov = s.weights.cov_weight.diagonal();
            vec_field(c, w, "weights.", "control", control);
            vec_field(c, w, "weights.", "goal", goal);
            vec_field(c, w, "weights.", "cov", cov);
            s.weights.control_cost = control.asDiagonal();
            s.weights.goal_cost = goal.asDiagonal();
            s.weights.cov_weight = cov.asDiagonal();
            s.weights.collision_weight =
                num_field(c, w, "weights.", "collision_weight", s.weights.collision_weight);
            s.weights.penalty = num_field(c, w, "weights.", "penalty", s.weights.penalty);
        }
    }

    if (!j.contains("agents") || !j.at("agents").is_array()) {
        c.fail("agents", "must be an array with at least one agent");
    } else {
        const njson& arr = j.at("agents");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string path = "agents[" + std::to_string(i) + "].";
            const njson& a = arr[i];
            AgentSpec spec;
            if (!a.is_object()) {
                c.fail("agents[" + std::to_string(i) + "]", "must be an object");
                s.agents.push_back(spec);
                continue;
            }
            reject_unknown(c, a, path,
                           {"controller", "start", "start_variance", "goal", "radius",
                            "profile"});
            if (a.contains("controller")) {
                const njson& ctl = a.at("controller");
                if (!ctl.is_string() ||
                    (ctl.get<std::string>() != "planner" &&
                     ctl.get<std::string>() != "scripted"))
                    c.fail(path + "controller", "must be \"planner\" or \"scripted\"");
                else
                    spec.scripted = ctl.get<std::string>() == "scripted";
            }
            vec_field(c, a, path, "start", spec.start);
            vec_field(c, a, path, "start_variance", spec.start_variance);
            vec_field(c, a, path, "goal", spec.goal);
            spec.radius = num_field(c, a, path, "radius", spec.radius);
            if (a.contains("profile")) {
                const njson& prof = a.at("profile");
                if (!prof.is_array()) {
                    c.fail(path + "profile", "must be an array of segments");
                } else {
                    for (std::size_t k = 0; k < prof.size(); ++k) {
                        const std::string seg = path + "profile[" + std::to_string(k) + "].";
                        ProfileSegment ps;
                        if (!prof[k].is_object()) {
                            c.fail(path + "profile[" + std::to_string(k) + "]",
                                   "must be an object");
                        } else {
                            reject_unknown(c, prof[k], seg, {"velocity", "steps"});
                            vec_field(c, prof[k], seg, "velocity", ps.velocity);
                            ps.steps = int_field(c, prof[k], seg, "steps", ps.steps);
                        }
                        spec.profile.push_back(ps);
                    }
                }
            }
            s.agents.push_back(spec);
        }
    }

    if (j.contains("landmarks")) {
        const njson& arr = j.at("landmarks");
        if (!arr.is_array()) {
            c.fail("landmarks", "must be an array");
        } else {
            for (std::size_t i = 0; i < arr.size(); ++i) {
                const std::string path = "landmarks[" + std::to_string(i) + "].";
                const njson& lm = arr[i];
                LandmarkSpec spec;
                if (!lm.is_object()) {
                    c.fail("landmarks[" + std::to_string(i) + "]", "must be an object");
                    s.landmarks.push_back(spec);
                    continue;
                }
                reject_unknown(c, lm, path,
                               {"position", "noise_var", "max_range", "object"});
                vec_field(c, lm, path, "position", spec.position);
                spec.noise_var = num_field(c, lm, path, "noise_var", spec.noise_var);
                spec.max_range = num_field(c, lm, path, "max_range", spec.max_range);
                if (lm.contains("object")) {
                    const njson& obj = lm.at("object");
                    if (!obj.is_object()) {
                        c.fail(path + "object", "must be an object");
                    } else {
                        reject_unknown(c, obj, path + "object.", {"mean", "variance"});
                        belief::ObjectBelief ob;
                        Eigen::Vector3d variance = Eigen::Vector3d::Ones();
                        vec_field(c, obj, path + "object.", "mean", ob.mean);
                        vec_field(c, obj, path + "object.", "variance", variance);
                        ob.covariance = variance.asDiagonal();
                        spec.object = ob;
                    }
                }
                s.landmarks.push_back(spec);
            }
        }
    }

    validate_scenario(s, c);
    c.throw_if_failed();
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open scenario file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return scenario_from_json_text(ss.str());
}

std::string scenario_to_json_text(const Scenario& s) {
    njson j;
    j["dt"] = s.dt;
    j["max_steps"] = s.max_steps;
    j["goal_tolerance"] = s.goal_tolerance;
    j["delta"] = s.delta;
    j["epsilon"] = s.epsilon;
    j["horizon"] = s.horizon;
    j["v_max"] = s.v_max;
    j["omega_max"] = s.omega_max;
    if (!s.actions.empty()) {
        njson arr = njson::array();
        for (const auto& a : s.actions) arr.push_back({a.v, a.omega});
        j["actions"] = arr;
    }
    j["node_budget"] = s.node_budget;
    j["max_terms"] = s.max_terms;
    j["pose_tick_probability"] = s.pose_tick_probability;
    j["use_object_uncertainty"] = s.use_object_uncertainty;
    j["track_window"] = s.track_window;
    j["track_inflation_var"] = s.track_inflation_var;
    j["obstacle_prior_var"] = s.obstacle_prior_var;
    j["planning_radius_padding"] = s.planning_radius_padding;
    j["motion_noise"] = {s.motion_noise[0], s.motion_noise[1], s.motion_noise[2]};
    j["pose_tick_noise"] = {s.pose_tick_noise[0], s.pose_tick_noise[1],
                            s.pose_tick_noise[2]};
    j["scan"] = {{"range_var", s.scan.range_var},
                 {"bearing_var", s.scan.bearing_var},
                 {"max_range", s.scan.max_range}};
    j["weights"] = {
        {"control",
         {s.weights.control_cost(0, 0), s.weights.control_cost(1, 1)}},
        {"goal", {s.weights.goal_cost(0, 0), s.weights.goal_cost(1, 1)}},
        {"cov",
         {s.weights.cov_weight(0, 0), s.weights.cov_weight(1, 1),
          s.weights.cov_weight(2, 2)}},
        {"collision_weight", s.weights.collision_weight},
        {"penalty", s.weights.penalty}};
    njson agents = njson::array();
    for (const auto& a : s.agents) {
        njson ja;
        ja["controller"] = a.scripted ? "scripted" : "planner";
        ja["start"] = {a.start[0], a.start[1], a.start[2]};
        ja["start_variance"] = {a.start_variance[0], a.start_variance[1],
                                a.start_variance[2]};
        ja["goal"] = {a.goal[0], a.goal[1]};
        ja["radius"] = a.radius;
        if (!a.profile.empty()) {
            njson prof = njson::array();
            for (const auto& seg : a.profile)
                prof.push_back({{"velocity", {seg.velocity[0], seg.velocity[1]}},
                                {"steps", seg.steps}});
            ja["profile"] = prof;
        }
        agents.push_back(ja);
    }
    j["agents"] = agents;
    njson landmarks = njson::array();
    for (const auto& lm : s.landmarks) {
        njson jl;
        jl["position"] = {lm.position[0], lm.position[1]};
        jl["noise_var"] = lm.noise_var;
        // JSON has no infinity token; an absent max_range reloads as the
        // same unlimited default.
        if (std::isfinite(lm.max_range)) jl["max_range"] = lm.max_range;
        if (lm.object) {
            jl["object"] = {
                {"mean",
                 {lm.object->mean[0], lm.object->mean[1], lm.object->mean[2]}},
                {"variance",
                 {lm.object->covariance(0, 0), lm.object->covariance(1, 1),
                  lm.object->covariance(2, 2)}}};
        }
        landmarks.push_back(jl);
    }
    j["landmarks"] = landmarks;
    return j.dump(2) + "\n";
}

void save_scenario(const Scenario& scenario, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot open scenario file for writing: " + path);
    out << scenario_to_json_text(scenario);
}

namespace {

struct TrackedTarget {
    bool seen = false;
    std::vector<collision::PositionBelief> history; // newest last
};

struct AgentState {
    Pose true_pose = Pose::Zero();
    belief::PoseBelief est;
    bool reached = false;
    int reached_at = -1;
    int infeasible_steps = 0;
    int profile_index = 0;
    int profile_spent = 0;
    Eigen::Vector2d applied_velocity = Eigen::Vector2d::Zero(); // scripted
    belief::UnicycleControl control;
    bool feasible = true;
    std::vector<TrackedTarget> targets;
};

// Velocity over the widest available baseline: endpoints of the kept
// history. Differencing consecutive 10 Hz estimates would put meters per
// second of noise on the velocity, the long baseline keeps it centimeters.
// What noise remains still displaces every extrapolated position by up to
// preview * sigma_v, far more than the quartic process-noise term carries,
// so it is folded into the endpoint covariance before the track goes to
// the planner. Short young tracks get wide, honest predictions that firm
// up as the baseline grows.
obstacle::ObstacleTrack target_track(const TrackedTarget& tgt, double dt,
                                     double preview) {
    const auto& h = tgt.history;
    obstacle::ObstacleTrack track;
    if (h.size() == 1) {
        track = obstacle::estimate_velocities({h.front(), h.front()}, dt);
    } else {
        const double spacing = dt * static_cast<double>(h.size() - 1);
        track = obstacle::estimate_velocities({h.front(), h.back()}, spacing);
    }
    Eigen::Matrix2d drift = Eigen::Matrix2d::Zero();
    drift(0, 0) = track.vx_change_var;
    drift(1, 1) = track.vy_change_var;
    track.positions.back().covariance += preview * preview * drift;
    return track;
}

} // namespace

TrajectoryLog run_scenario(const Scenario& scenario, std::uint64_t seed) {
    Check c;
    validate_scenario(scenario, c);
    c.throw_if_failed();

    const int n = static_cast<int>(scenario.agents.size());
    Rng rng(seed);

    planner::PlanConfig config;
    config.actions = scenario.actions.empty()
                         ? planner::nine_actions(scenario.v_max, scenario.omega_max)
                         : scenario.actions;
    config.horizon = scenario.horizon;
    config.dt = scenario.dt;
    config.motion_noise = scenario.motion_noise.asDiagonal();
    config.delta = scenario.delta;
    config.max_terms = scenario.max_terms;
    config.node_budget = scenario.node_budget;

    planner::Weights weights = scenario.weights;
    weights.prob_threshold = 1.0 - scenario.epsilon;

    std::vector<planner::PlannerLandmark> landmarks;
    for (const auto& lm : scenario.landmarks) {
        planner::PlannerLandmark pl;
        pl.position = lm.position;
        pl.noise = Eigen::Matrix2d::Identity() * lm.noise_var;
        pl.max_range = lm.max_range;
        if (scenario.use_object_uncertainty && lm.object) pl.object = lm.object;
        landmarks.push_back(pl);
    }

    std::vector<AgentState> st(n);
    bool any_planner = false;
    for (int i = 0; i < n; ++i) {
        st[i].true_pose = scenario.agents[i].start;
        st[i].true_pose[2] = belief::wrap_angle(st[i].true_pose[2]);
        st[i].est.mean = st[i].true_pose;
        st[i].est.covariance = scenario.agents[i].start_variance.asDiagonal();
        st[i].targets.resize(n);
        if (!scenario.agents[i].scripted) any_planner = true;
    }

    TrajectoryLog log;
    int steps_run = 0;
    for (int step = 0; step < scenario.max_steps; ++step) {
        if (any_planner) {
            bool active = false;
            for (int i = 0; i < n; ++i)
                if (!scenario.agents[i].scripted && !st[i].reached) active = true;
            if (!active) break;
        }
        steps_run = step + 1;

        std::vector<Pose> snapshot(n);
        for (int i = 0; i < n; ++i) snapshot[i] = st[i].true_pose;

        // Sense, track, plan. Scans come from the true poses, the estimator
        // only ever sees the noisy rays and its own belief.
        for (int i = 0; i < n; ++i) {
            auto& agent = st[i];
            agent.control = {0.0, 0.0};
            agent.feasible = true;
            if (scenario.agents[i].scripted || agent.reached) continue;

            for (int t = 0; t < n; ++t) {
                if (t == i) continue;
                const Eigen::Vector2d dvec =
                    snapshot[t].head<2>() - snapshot[i].head<2>();
                const double surface = dvec.norm() - scenario.agents[t].radius;
                if (surface > scenario.scan.max_range) {
                    // Out of range means far beyond any horizon; stale
                    // history would extrapolate from the wrong anchor, so
                    // the target re-initializes on re-entry.
                    agent.targets[t].seen = false;
                    agent.targets[t].history.clear();
                    continue;
                }
                const double zr =
                    std::max(surface, 1e-3) +
                    std::sqrt(scenario.scan.range_var) * rng.gaussian();
                const double zb = belief::wrap_angle(
                    std::atan2(dvec.y(), dvec.x()) - snapshot[i][2] +
                    std::sqrt(scenario.scan.bearing_var) * rng.gaussian());
                const obstacle::Ray ray{zb, std::max(zr, 1e-3)};

                auto& tgt = agent.targets[t];
                collision::PositionBelief post;
                if (!tgt.seen) {
                    post = obstacle::initial_location(agent.est, ray,
                                                      scenario.agents[t].radius,
                                                      scenario.obstacle_prior_var);
                    tgt.seen = true;
                } else {
                    collision::PositionBelief prior = tgt.history.back();
                    prior.covariance += Eigen::Matrix2d::Identity() *
                                        scenario.track_inflation_var;
                    obstacle::Scan cluster;
                    cluster.rays = {ray};
                    cluster.max_range = scenario.scan.max_range;
                    post = obstacle::estimate_location(
                        agent.est, cluster, prior, scenario.agents[t].radius,
                        {scenario.scan.range_var, scenario.scan.bearing_var});
                }
                tgt.history.push_back(post);
                if (static_cast<int>(tgt.history.size()) > scenario.track_window)
                    tgt.history.erase(tgt.history.begin());
            }

            std::vector<planner::PlannedObstacle> obstacles;
            for (int t = 0; t < n; ++t) {
                if (t == i || !agent.targets[t].seen) continue;
                obstacles.push_back(
                    {target_track(agent.targets[t], scenario.dt,
                                  scenario.horizon * scenario.dt),
                     collision::Body::sphere(scenario.agents[t].radius)});
            }

            const collision::Body body = collision::Body::sphere(
                scenario.agents[i].radius + scenario.planning_radius_padding);
            const planner::PlanResult result =
                planner::plan(agent.est, scenario.agents[i].goal, obstacles, body,
                              landmarks, weights, config);
            if (result.feasible) {
                agent.control = result.controls.front();
            } else {
                agent.feasible = false;
                agent.infeasible_steps++;
            }
        }

        // Everyone moves on the controls of this step.
        for (int i = 0; i < n; ++i) {
            auto& agent = st[i];
            if (scenario.agents[i].scripted) {
                agent.applied_velocity = Eigen::Vector2d::Zero();
                const auto& prof = scenario.agents[i].profile;
                if (!prof.empty()) {
                    const auto& seg = prof[agent.profile_index];
                    agent.applied_velocity = seg.velocity;
                    agent.profile_spent++;
                    if (seg.steps > 0 && agent.profile_spent >= seg.steps &&
                        agent.profile_index + 1 < static_cast<int>(prof.size())) {
                        agent.profile_index++;
                        agent.profile_spent = 0;
                    }
                }
                agent.true_pose.head<2>() += agent.applied_velocity * scenario.dt;
                if (agent.applied_velocity.norm() > 1e-12)
                    agent.true_pose[2] = std::atan2(agent.applied_velocity.y(),
                                                    agent.applied_velocity.x());
                continue;
            }
            if (agent.reached) continue;
            agent.true_pose =
                belief::unicycle_step(agent.true_pose, agent.control, scenario.dt);
            for (int k = 0; k < 3; ++k)
                agent.true_pose[k] +=
                    std::sqrt(scenario.motion_noise[k]) * rng.gaussian();
            agent.true_pose[2] = belief::wrap_angle(agent.true_pose[2]);
        }

        // Belief rollforward: predict, sometimes a direct pose measurement,
        // then every landmark in range of the true pose.
        for (int i = 0; i < n; ++i) {
            auto& agent = st[i];
            if (scenario.agents[i].scripted || agent.reached) continue;

            agent.est = belief::ekf_predict(agent.est, agent.control,
                                            config.motion_noise,
                                            belief::UnicycleModel{scenario.dt});

            if (rng.uniform() < scenario.pose_tick_probability) {
                Eigen::Vector3d z = agent.true_pose;
                for (int k = 0; k < 3; ++k)
                    z[k] += std::sqrt(scenario.pose_tick_noise[k]) * rng.gaussian();
                Eigen::Vector3d innovation = z - agent.est.mean;
                innovation[2] = belief::wrap_angle(innovation[2]);
                const belief::Gaussian post = belief::kalman_update(
                    belief::Gaussian{agent.est.mean, agent.est.covariance},
                    Eigen::Matrix3d::Identity(), innovation,
                    Eigen::Matrix3d(scenario.pose_tick_noise.asDiagonal()));
                agent.est.mean = post.mean;
                agent.est.mean[2] = belief::wrap_angle(agent.est.mean[2]);
                agent.est.covariance = post.covariance;
            }

            for (const auto& lm : scenario.landmarks) {
                const double dist =
                    (lm.position - agent.true_pose.head<2>()).norm();
                if (dist < 1e-6 || dist > lm.max_range) continue;
                Eigen::Vector2d z =
                    belief::range_bearing(agent.true_pose, lm.position);
                z[0] = std::max(z[0] + std::sqrt(lm.noise_var) * rng.gaussian(),
                                1e-6);
                z[1] = belief::wrap_angle(
                    z[1] + std::sqrt(lm.noise_var) * rng.gaussian());
                const Eigen::Matrix2d q =
                    Eigen::Matrix2d::Identity() * lm.noise_var;
                if (scenario.use_object_uncertainty && lm.object)
                    agent.est = belief::ekf_update_with_object(agent.est, z,
                                                               *lm.object,
                                                               lm.position, q);
                else
                    agent.est =
                        belief::ekf_update_standard(agent.est, z, lm.position, q);
            }

            if ((agent.true_pose.head<2>() - scenario.agents[i].goal).norm() <
                scenario.goal_tolerance) {
                agent.reached = true;
                agent.reached_at = step + 1;
            }
        }

        // Log the post-move state. The obstacle cells repeat the tracked
        // posterior against the current belief so a row alone can reproduce
        // its collision probability.
        for (int i = 0; i < n; ++i) {
            const auto& agent = st[i];
            LogRow row;
            row.step = step;
            row.time = (step + 1) * scenario.dt;
            row.agent = i;
            row.true_pose = agent.true_pose;
            if (scenario.agents[i].scripted) {
                row.est_mean = agent.true_pose;
                row.est_cov = Eigen::Matrix3d::Zero();
                row.v = agent.applied_velocity.norm();
                row.omega = 0.0;
            } else {
                row.est_mean = agent.est.mean;
                row.est_cov = agent.est.covariance;
                row.v = agent.control.v;
                row.omega = agent.control.omega;
                row.feasible = agent.feasible;
                row.reached = agent.reached;
            }

            for (int t = 0; t < n; ++t) {
                if (t == i) continue;
                const double clearance =
                    (st[t].true_pose.head<2>() - agent.true_pose.head<2>()).norm() -
                    scenario.agents[i].radius - scenario.agents[t].radius;
                if (!row.has_min_distance || clearance < row.min_true_distance) {
                    row.has_min_distance = true;
                    row.min_true_distance = clearance;
                }
            }

            if (!scenario.agents[i].scripted && !agent.reached) {
                for (int t = 0; t < n; ++t) {
                    if (t == i || !agent.targets[t].seen) continue;
                    collision::CollisionQuery q;
                    q.robot.mean = agent.est.mean.head<2>();
                    q.robot.covariance = agent.est.covariance.topLeftCorner<2, 2>();
                    q.obstacle = agent.targets[t].history.back();
                    q.robot_body = collision::Body::sphere(scenario.agents[i].radius);
                    q.obstacle_body =
                        collision::Body::sphere(scenario.agents[t].radius);
                    q.delta = scenario.delta;
                    q.max_terms = scenario.max_terms;
                    const quadform::SeriesResult res = collision_probability(q);
                    if (!row.has_obstacle || res.value > row.collision_probability) {
                        row.has_obstacle = true;
                        row.obs_mean = q.obstacle.mean;
                        row.obs_cov = q.obstacle.covariance;
                        row.obs_radius = scenario.agents[t].radius;
                        row.collision_probability = res.value;
                        row.collision_bound = res.error_bound;
                    }
                }
            }
            log.rows.push_back(row);
        }
    }

    for (int i = 0; i < n; ++i) {
        AgentSummary sum;
        sum.agent = i;
        sum.scripted = scenario.agents[i].scripted;
        sum.reached_goal = st[i].reached;
        sum.steps_taken = st[i].reached ? st[i].reached_at : steps_run;
        sum.final_goal_distance =
            sum.scripted ? 0.0
                         : (st[i].true_pose.head<2>() - scenario.agents[i].goal).norm();
        sum.infeasible_steps = st[i].infeasible_steps;
        for (const auto& row : log.rows) {
            if (row.agent != i || !row.has_min_distance) continue;
            if (!sum.has_min_distance || row.min_true_distance < sum.min_true_distance) {
                sum.has_min_distance = true;
                sum.min_true_distance = row.min_true_distance;
            }
        }
        log.summary.push_back(sum);
    }
    return log;
}

std::string log_to_csv(const TrajectoryLog& log) {
    std::string out =
        "step,time,agent,true_x,true_y,true_theta,est_x,est_y,est_theta,"
        "cov_xx,cov_xy,cov_xtheta,cov_yy,cov_ytheta,cov_thetatheta,"
        "v,omega,feasible,reached,min_true_distance,"
        "obs_mean_x,obs_mean_y,obs_cov_xx,obs_cov_xy,obs_cov_yy,obs_radius,"
        "collision_probability,collision_bound\n";
    for (const auto& r : log.rows) {
        out += std::to_string(r.step) + ',' + fmt17(r.time) + ',' +
               std::to_string(r.agent) + ',';
        for (int k = 0; k < 3; ++k) out += fmt17(r.true_pose[k]) + ',';
        for (int k = 0; k < 3; ++k) out += fmt17(r.est_mean[k]) + ',';
        out += fmt17(r.est_cov(0, 0)) + ',' + fmt17(r.est_cov(0, 1)) + ',' +
               fmt17(r.est_cov(0, 2)) + ',' + fmt17(r.est_cov(1, 1)) + ',' +
               fmt17(r.est_cov(1, 2)) + ',' + fmt17(r.est_cov(2, 2)) + ',';
        out += fmt17(r.v) + ',' + fmt17(r.omega) + ',';
        out += (r.feasible ? "1," : "0,");
        out += (r.reached ? "1," : "0,");
        out += (r.has_min_distance ? fmt17(r.min_true_distance) : "") + std::string(",");
        if (r.has_obstacle) {
            out += fmt17(r.obs_mean[0]) + ',' + fmt17(r.obs_mean[1]) + ',' +
                   fmt17(r.obs_cov(0, 0)) + ',' + fmt17(r.obs_cov(0, 1)) + ',' +
                   fmt17(r.obs_cov(1, 1)) + ',' + fmt17(r.obs_radius) + ',' +
                   fmt17(r.collision_probability) + ',' + fmt17(r.collision_bound);
        } else {
            out += ",,,,,,,";
        }
        out += '\n';
    }
    return out;
}

void write_log(const TrajectoryLog& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot open log file for writing: " + path);
    out << log_to_csv(log);
}

std::vector<ConvergeRow> converge_sweep(double delta) {
    if (!(delta > 0.0)) throw InvalidInput("delta must be > 0");
    struct Layout {
        const char* label;
        double separation, robot_radius, obstacle_radius;
    };
    // A-D pull touching 0.3/0.5 discs apart, E-H shrink the obstacle at the
    // touching separation; both ladders should need fewer terms as they go.
    const Layout layouts[] = {
        {"A", 0.8, 0.3, 0.5},  {"B", 1.2, 0.3, 0.5},  {"C", 1.6, 0.3, 0.5},
        {"D", 2.0, 0.3, 0.5},  {"E", 0.8, 0.3, 0.8},  {"F", 0.8, 0.3, 0.65},
        {"G", 0.8, 0.3, 0.5},  {"H", 0.8, 0.3, 0.25},
    };
    const double cov_diag = 0.04; // combined displacement covariance diagonal

    std::vector<ConvergeRow> rows;
    for (const auto& lay : layouts) {
        ConvergeRow row;
        row.label = lay.label;
        row.separation = lay.separation;
        row.robot_radius = lay.robot_radius;
        row.obstacle_radius = lay.obstacle_radius;
        row.cov_diag = cov_diag;
        const double r = lay.robot_radius + lay.obstacle_radius;
        row.y = r * r;

        quadform::QuadFormSpec spec;
        spec.a = Eigen::Matrix2d::Identity();
        spec.mean = Eigen::Vector2d(lay.separation, 0.0);
        spec.covariance = Eigen::Matrix2d::Identity() * cov_diag;
        quadform::SeriesOptions opt;
        opt.delta = delta;
        opt.n_max = 500;

        // The sweep measures series convergence, so it evaluates the series
        // directly rather than going through the far-separation shortcut.
        quadform::SeriesResult res;
        double best_us = std::numeric_limits<double>::infinity();
        for (int rep = 0; rep < 3; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            res = quadform::cdf(quadform::spectral_decompose(spec), row.y, opt);
            const auto t1 = std::chrono::steady_clock::now();
            best_us = std::min(
                best_us,
                std::chrono::duration<double, std::micro>(t1 - t0).count());
        }
        row.value = res.value;
        row.error_bound = res.error_bound;
        row.terms = res.terms_used;
        row.time_us = best_us;
        rows.push_back(row);
    }
    return rows;
}

std::string converge_to_csv(const std::vector<ConvergeRow>& rows) {
    std::string out =
        "label,separation,robot_radius,obstacle_radius,cov_diag,y,"
        "value,error_bound,terms,time_us\n";
    for (const auto& r : rows) {
        out += r.label + ',' + fmt17(r.separation) + ',' + fmt17(r.robot_radius) +
               ',' + fmt17(r.obstacle_radius) + ',' + fmt17(r.cov_diag) + ',' +
               fmt17(r.y) + ',' + fmt17(r.value) + ',' + fmt17(r.error_bound) +
               ',' + std::to_string(r.terms) + ',' + fmt17(r.time_us) + '\n';
    }
    return out;
}

} // namespace safenav::sim
