#include "safenav/planner.hpp"

#include "safenav/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace safenav::planner {

namespace {

void check_psd(const Eigen::MatrixXd& m, const char* name) {
    const double scale = std::max(1.0, m.norm());
    if ((m - m.transpose()).norm() > 1e-12 * scale)
        throw InvalidInput(std::string(name) + " must be symmetric");
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.eigenvalues().minCoeff() < -1e-12 * scale)
        throw InvalidInput(std::string(name) + " must be positive semidefinite");
}

double control_term(const UnicycleControl& u, const Weights& w) {
    const Eigen::Vector2d xi(u.v, u.omega);
    return xi.dot(w.control_cost * xi);
}

double trace_term(const PoseBelief& b, const Weights& w) {
    return (w.cov_weight.transpose() * b.covariance * w.cov_weight).trace();
}

struct CollisionCheck {
    quadform::SeriesResult result;
    bool safe = false;
};

CollisionCheck check_obstacle(const PoseBelief& b, const ObstacleAtStep& obs,
                              const collision::Body& robot_body,
                              const Weights& w, double delta, int max_terms) {
    collision::CollisionQuery q;
    q.robot.mean = b.mean.head<2>();
    q.robot.covariance = b.covariance.topLeftCorner<2, 2>();
    q.robot_body = robot_body;
    q.obstacle = obs.position;
    q.obstacle_body = obs.body;
    q.delta = delta;
    q.max_terms = max_terms;
    CollisionCheck c;
    try {
        c.result = collision::collision_probability(q);
    } catch (const ConvergenceFailure&) {
        // The series outgrows max_terms only in the shell around contact,
        // where the probability dwarfs any usable threshold. No certificate
        // means unsafe.
        c.result.value = 1.0;
        c.result.error_bound = 1.0;
        c.safe = false;
        return c;
    }
    c.safe = collision::is_epsilon_safe(c.result, 1.0 - w.prob_threshold);
    return c;
}

} // namespace

void validate_weights(const Weights& w) {
    check_psd(w.control_cost, "control_cost");
    check_psd(w.goal_cost, "goal_cost");
    check_psd(w.cov_weight, "cov_weight");
    if (w.collision_weight < 0.0)
        throw InvalidInput("collision_weight must be nonnegative");
    if (w.penalty < 1e6)
        throw InvalidInput("penalty must be at least 1e6");
    if (!(w.prob_threshold > 0.0 && w.prob_threshold < 1.0))
        throw InvalidInput("prob_threshold must lie in (0,1)");
}

double stage_cost(const PoseBelief& belief, const UnicycleControl& control,
                  const std::vector<ObstacleAtStep>& obstacles,
                  const Weights& w, const collision::Body& robot_body,
                  double delta, int max_terms) {
    validate_weights(w);
    double cost = control_term(control, w) + trace_term(belief, w);
    for (const auto& obs : obstacles) {
        const auto c =
            check_obstacle(belief, obs, robot_body, w, delta, max_terms);
        cost += c.safe ? w.collision_weight * c.result.value : w.penalty;
    }
    return cost;
}

double terminal_cost(const PoseBelief& belief, const Eigen::Vector2d& goal,
                     const Weights& w) {
    const Eigen::Vector2d d = belief.mean.head<2>() - goal;
    return d.dot(w.goal_cost * d) + trace_term(belief, w);
}

std::vector<UnicycleControl> nine_actions(double v_max, double omega_max) {
    if (!(v_max > 0.0) || !(omega_max > 0.0))
        throw InvalidInput("action-set limits must be positive");
    std::vector<UnicycleControl> actions;
    actions.reserve(9);
    for (double v : {0.0, 0.5 * v_max, v_max})
        for (double omega : {-omega_max, 0.0, omega_max})
            actions.push_back({v, omega});
    return actions;
}

namespace {

struct SequenceEval {
    double cost = 0.0;
    bool penalized = false;
    std::vector<PlanStep> steps;
};

class Search {
public:
    Search(const PoseBelief& start, const Eigen::Vector2d& goal,
           const std::vector<PlannedObstacle>& obstacles,
           const collision::Body& robot_body,
           const std::vector<PlannerLandmark>& landmarks, const Weights& weights,
           const PlanConfig& config)
        : start_(start),
          goal_(goal),
          robot_body_(robot_body),
          landmarks_(landmarks),
          weights_(weights),
          config_(config) {
        for (const auto& obs : obstacles) {
            predictions_.push_back(
                obstacle::predict_obstacle(obs.track, config.horizon, config.dt)
                    .steps);
            bodies_.push_back(obs.body);
        }
    }

    PlanResult run() {
        const double sequences = std::pow(
            static_cast<double>(config_.actions.size()), config_.horizon);
        if (sequences <= config_.node_budget) {
            std::vector<PlanStep> path;
            path.reserve(static_cast<std::size_t>(config_.horizon));
            exhaustive(0, start_, 0.0, false, path);
        } else {
            for (const auto& action : config_.actions)
                consider(std::vector<UnicycleControl>(
                    static_cast<std::size_t>(config_.horizon), action));
            consider(greedy());
            beam();
        }

        PlanResult result;
        result.total_cost = best_.cost;
        result.feasible = !best_.penalized;
        result.steps = std::move(best_.steps);
        result.controls.reserve(result.steps.size());
        for (const auto& s : result.steps) result.controls.push_back(s.control);
        return result;
    }

private:
    // One planning transition: motion prediction followed by the
    // maximum-likelihood closure of every landmark in range. A landmark
    // the mean sits on is unobservable and skipped.
    PoseBelief advance(const PoseBelief& b, const UnicycleControl& u) const {
        PoseBelief next = belief::ekf_predict(b, u, config_.motion_noise,
                                              belief::UnicycleModel{config_.dt});
        for (const auto& lm : landmarks_) {
            const double dist = (next.mean.head<2>() - lm.position).norm();
            if (dist < 1e-6 || dist > lm.max_range) continue;
            const Eigen::Vector2d z = belief::range_bearing(next.mean, lm.position);
            next = lm.object
                       ? belief::ekf_update_with_object(next, z, *lm.object,
                                                        lm.position, lm.noise)
                       : belief::ekf_update_standard(next, z, lm.position,
                                                     lm.noise);
        }
        return next;
    }

    // Cost of arriving in `b`, writing the collision evidence into `step`.
    double arrival_cost(const PoseBelief& b, const UnicycleControl& u,
                        int post_index, PlanStep& step) const {
        double cost = control_term(u, weights_);
        for (std::size_t j = 0; j < predictions_.size(); ++j) {
            ObstacleAtStep obs{predictions_[j][static_cast<std::size_t>(
                                   post_index - 1)],
                               bodies_[j]};
            const auto c = check_obstacle(b, obs, robot_body_, weights_,
                                          config_.delta, config_.max_terms);
            step.collision.push_back(c.result);
            if (c.safe) {
                cost += weights_.collision_weight * c.result.value;
            } else {
                cost += weights_.penalty;
                step.penalized = true;
            }
        }
        if (post_index < config_.horizon) cost += trace_term(b, weights_);
        return cost;
    }

    void exhaustive(int depth, const PoseBelief& b, double cost, bool penalized,
                    std::vector<PlanStep>& path) {
        if (depth == config_.horizon) {
            const double total = cost + terminal_cost(b, goal_, weights_);
            if (total < best_.cost) {
                best_.cost = total;
                best_.penalized = penalized;
                best_.steps = path;
            }
            return;
        }
        // Stage and terminal terms are nonnegative, so a partial cost at or
        // past the incumbent can never improve on it.
        if (cost >= best_.cost) return;
        for (const auto& action : config_.actions) {
            PlanStep step;
            step.control = action;
            step.belief = advance(b, action);
            const double added =
                arrival_cost(step.belief, action, depth + 1, step);
            const bool step_penalized = step.penalized;
            path.push_back(std::move(step));
            exhaustive(depth + 1, path.back().belief, cost + added,
                       penalized || step_penalized, path);
            path.pop_back();
        }
    }

    SequenceEval evaluate(const std::vector<UnicycleControl>& seq) const {
        SequenceEval ev;
        PoseBelief b = start_;
        for (std::size_t l = 0; l < seq.size(); ++l) {
            PlanStep step;
            step.control = seq[l];
            step.belief = advance(b, seq[l]);
            b = step.belief;
            ev.cost +=
                arrival_cost(b, seq[l], static_cast<int>(l) + 1, step);
            ev.penalized = ev.penalized || step.penalized;
            ev.steps.push_back(std::move(step));
        }
        ev.cost += terminal_cost(b, goal_, weights_);
        return ev;
    }

    void consider(const std::vector<UnicycleControl>& seq) {
        SequenceEval ev = evaluate(seq);
        if (ev.cost < best_.cost) best_ = std::move(ev);
    }

    // One-step lookahead: each step commits to the action minimizing the
    // arrival cost plus the terminal cost of the reached belief.
    std::vector<UnicycleControl> greedy() const {
        std::vector<UnicycleControl> seq;
        PoseBelief b = start_;
        for (int l = 1; l <= config_.horizon; ++l) {
            double best_cost = std::numeric_limits<double>::infinity();
            UnicycleControl best_action = config_.actions.front();
            PoseBelief best_belief = b;
            for (const auto& action : config_.actions) {
                PlanStep scratch;
                const PoseBelief nb = advance(b, action);
                const double c = arrival_cost(nb, action, l, scratch) +
                                 terminal_cost(nb, goal_, weights_);
                if (c < best_cost) {
                    best_cost = c;
                    best_action = action;
                    best_belief = nb;
                }
            }
            seq.push_back(best_action);
            b = best_belief;
        }
        return seq;
    }

    // Width-limited best-first expansion over the real action set. Ranking
    // adds the terminal cost of the reached belief plus the sweep risk ahead
    // so partial sequences compete on where they are heading, not just on
    // what they spent; turns that pay off only after several steps survive
    // long enough to show it.
    void beam() {
        struct Node {
            SequenceEval seq;
            PoseBelief belief;
            double rank = 0.0;
        };
        const auto width = static_cast<std::size_t>(std::max(
            8.0,
            std::min(32.0, config_.node_budget /
                               (static_cast<double>(config_.actions.size()) *
                                config_.horizon))));
        std::vector<Node> front{{SequenceEval{}, start_, 0.0}};
        for (int depth = 1; depth <= config_.horizon; ++depth) {
            std::vector<Node> children;
            children.reserve(front.size() * config_.actions.size());
            for (const auto& node : front) {
                for (const auto& action : config_.actions) {
                    Node child;
                    child.seq = node.seq;
                    PlanStep step;
                    step.control = action;
                    step.belief = advance(node.belief, action);
                    child.belief = step.belief;
                    child.seq.cost +=
                        arrival_cost(step.belief, action, depth, step);
                    child.seq.penalized = child.seq.penalized || step.penalized;
                    child.seq.steps.push_back(std::move(step));
                    child.rank = child.seq.cost +
                                 terminal_cost(child.belief, goal_, weights_) +
                                 risk_ahead(child.belief, depth);
                    children.push_back(std::move(child));
                }
            }
            if (children.size() > width) {
                std::stable_sort(children.begin(), children.end(),
                                 [](const Node& a, const Node& b) {
                                     return a.rank < b.rank;
                                 });
                children.resize(width);
            }
            front = std::move(children);
        }
        for (auto& node : front) {
            node.seq.cost += terminal_cost(node.belief, goal_, weights_);
            if (node.seq.cost < best_.cost) best_ = std::move(node.seq);
        }
    }

    // Beam-ordering bias: a position parked inside an obstacle's remaining
    // predicted sweep gets penalized a few plies from now, after the beam
    // has already discarded the sequences that veer clear. Charging the
    // sweep to the rank up front keeps those alternatives alive. Ordering
    // only, the reported cost never includes it.
    double risk_ahead(const PoseBelief& b, int depth) const {
        double risk = 0.0;
        const Eigen::Vector2d p = b.mean.head<2>();
        const double ba = b.covariance(0, 0);
        const double bd = b.covariance(1, 1);
        const double bc = b.covariance(0, 1);
        for (std::size_t j = 0; j < predictions_.size(); ++j) {
            const double reff =
                collision::effective_radius(robot_body_, bodies_[j]);
            for (int l = depth; l < config_.horizon; ++l) {
                const auto& pred =
                    predictions_[j][static_cast<std::size_t>(l)];
                const double sa = ba + pred.covariance(0, 0);
                const double sd = bd + pred.covariance(1, 1);
                const double sc = bc + pred.covariance(0, 1);
                const double lam =
                    0.5 * (sa + sd) +
                    std::sqrt(0.25 * (sa - sd) * (sa - sd) + sc * sc);
                const double gap = (p - pred.mean).norm() - reff;
                risk += gap <= 0.0
                            ? weights_.penalty
                            : weights_.penalty *
                                  std::exp(-0.5 * gap * gap / lam);
            }
        }
        return risk;
    }

    PoseBelief start_;
    Eigen::Vector2d goal_;
    collision::Body robot_body_;
    std::vector<PlannerLandmark> landmarks_;
    Weights weights_;
    PlanConfig config_;
    std::vector<std::vector<collision::PositionBelief>> predictions_;
    std::vector<collision::Body> bodies_;
    SequenceEval best_{std::numeric_limits<double>::infinity(), false, {}};
};

} // namespace

PlanResult plan(const PoseBelief& start, const Eigen::Vector2d& goal,
                const std::vector<PlannedObstacle>& obstacles,
                const collision::Body& robot_body,
                const std::vector<PlannerLandmark>& landmarks,
                const Weights& weights, const PlanConfig& config) {
    validate_weights(weights);
    if (config.actions.empty())
        throw InvalidInput("action set must not be empty");
    if (config.horizon < 1)
        throw InvalidInput("horizon must be at least 1");
    if (!(config.dt > 0.0))
        throw InvalidInput("dt must be positive");

    return Search(start, goal, obstacles, robot_body, landmarks, weights,
                  config)
        .run();
}

} // namespace safenav::planner
