#include "safenav/baselines.hpp"

#include "safenav/errors.hpp"
#include "safenav/rng.hpp"

#include <chrono>
#include <cmath>
#include <functional>

namespace safenav::baselines {

namespace {

Eigen::Matrix2d chol(const Eigen::Matrix2d& cov, const char* name) {
    Eigen::LLT<Eigen::Matrix2d> llt(cov);
    if (llt.info() != Eigen::Success)
        throw InvalidInput(std::string(name) + " covariance is not positive definite");
    return llt.matrixL();
}

double combined_density(const ComparisonCase& c, const Eigen::Vector2d& at) {
    const Eigen::Matrix2d cov = c.robot.covariance + c.obstacle.covariance;
    const Eigen::Vector2d d = at - c.obstacle.mean;
    const double det = cov.determinant();
    const double q = d.dot(cov.inverse() * d);
    return std::exp(-0.5 * q) / (2.0 * M_PI * std::sqrt(det));
}

double norm_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

} // namespace

std::pair<double, double> mc_oracle(const ComparisonCase& c, int n_samples,
                                    std::uint64_t seed) {
    if (n_samples < 100)
        throw InvalidInput("mc_oracle needs at least 100 samples");
    const Eigen::Matrix2d lx = chol(c.robot.covariance, "robot");
    const Eigen::Matrix2d ls = chol(c.obstacle.covariance, "obstacle");
    const double contact = c.robot_radius + c.obstacle_radius;

    Rng rng(seed);
    long hits = 0;
    for (int i = 0; i < n_samples; ++i) {
        const Eigen::Vector2d gx(rng.gaussian(), rng.gaussian());
        const Eigen::Vector2d gs(rng.gaussian(), rng.gaussian());
        const Eigen::Vector2d x = c.robot.mean + lx * gx;
        const Eigen::Vector2d s = c.obstacle.mean + ls * gs;
        if ((x - s).norm() <= contact) ++hits;
    }
    const double p = static_cast<double>(hits) / n_samples;
    const double se = std::sqrt(p * (1.0 - p) / n_samples);
    return {p, se};
}

double dutoit(const ComparisonCase& c) {
    const double volume = M_PI * c.robot_radius * c.robot_radius;
    const double p = volume * combined_density(c, c.robot.mean);
    return std::min(1.0, std::max(0.0, p));
}

double park(const ComparisonCase& c) {
    const double volume = M_PI * c.robot_radius * c.robot_radius;
    const auto density_at = [&](double theta) {
        const Eigen::Vector2d at =
            c.robot.mean + c.robot_radius * Eigen::Vector2d(std::cos(theta),
                                                            std::sin(theta));
        return combined_density(c, at);
    };

    double best = -1.0, best_theta = 0.0;
    const int scan = 360;
    for (int i = 0; i < scan; ++i) {
        const double theta = 2.0 * M_PI * i / scan;
        const double d = density_at(theta);
        if (d > best) {
            best = d;
            best_theta = theta;
        }
    }
    double lo = best_theta - 2.0 * M_PI / scan;
    double hi = best_theta + 2.0 * M_PI / scan;
    for (int it = 0; it < 80; ++it) {
        const double m1 = lo + (hi - lo) / 3.0;
        const double m2 = hi - (hi - lo) / 3.0;
        if (density_at(m1) < density_at(m2))
            lo = m1;
        else
            hi = m2;
    }
    best = std::max(best, density_at(0.5 * (lo + hi)));
    return std::min(1.0, std::max(0.0, volume * best));
}

ZhuResult zhu(const ComparisonCase& c) {
    const Eigen::Vector2d diff = c.robot.mean - c.obstacle.mean;
    const double dist = diff.norm();
    const double contact = c.robot_radius + c.obstacle_radius;
    if (dist < 1e-12) return {0.5, true};
    const Eigen::Vector2d a = diff / dist;
    const double sigma =
        std::sqrt(a.dot((c.robot.covariance + c.obstacle.covariance) * a));
    return {norm_cdf((contact - dist) / sigma), false};
}

double lambert_mci(const ComparisonCase& c, int n_samples, std::uint64_t seed) {
    if (n_samples < 100)
        throw InvalidInput("lambert_mci needs at least 100 samples");
    const Eigen::Matrix2d lx = chol(c.robot.covariance, "robot");
    const double contact = c.robot_radius + c.obstacle_radius;
    const double y = contact * contact;

    quadform::QuadFormSpec spec;
    spec.a = Eigen::Matrix2d::Identity();
    spec.covariance = c.obstacle.covariance;
    quadform::SeriesOptions opt;
    opt.delta = 1e-6;

    Rng rng(seed);
    double sum = 0.0;
    for (int i = 0; i < n_samples; ++i) {
        const Eigen::Vector2d gx(rng.gaussian(), rng.gaussian());
        spec.mean = c.robot.mean + lx * gx - c.obstacle.mean;
        sum += quadform::cdf(quadform::spectral_decompose(spec), y, opt).value;
    }
    return sum / n_samples;
}

std::vector<ComparisonRow> compare(const ComparisonCase& c, double threshold,
                                   int repeats, int n_samples, std::uint64_t seed,
                                   double delta) {
    if (repeats < 1) throw InvalidInput("repeats must be >= 1");

    collision::CollisionQuery query;
    query.robot = c.robot;
    query.robot_body = collision::Body::sphere(c.robot_radius);
    query.obstacle = c.obstacle;
    query.obstacle_body = collision::Body::sphere(c.obstacle_radius);
    query.delta = delta;

    struct Method {
        std::string name;
        std::function<double()> run;
        bool degenerate = false;
    };
    std::vector<Method> methods;
    methods.push_back({"exact",
                       [&] { return collision::collision_probability(query).value; },
                       false});
    methods.push_back({"numerical_integral",
                       [&] { return mc_oracle(c, n_samples, seed).first; }, false});
    methods.push_back({"lambert_mci",
                       [&] { return lambert_mci(c, n_samples, seed + 1); }, false});
    methods.push_back({"dutoit", [&] { return dutoit(c); }, false});
    methods.push_back({"park", [&] { return park(c); }, false});
    methods.push_back({"zhu", [&] { return zhu(c).probability; }, zhu(c).degenerate});

    std::vector<ComparisonRow> rows;
    for (auto& m : methods) {
        ComparisonRow row;
        row.method = m.name;
        row.degenerate = m.degenerate;
        std::vector<double> times(repeats);
        for (int r = 0; r < repeats; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            row.probability = m.run();
            const auto t1 = std::chrono::steady_clock::now();
            times[r] = std::chrono::duration<double>(t1 - t0).count();
        }
        double mean = 0.0;
        for (double t : times) mean += t / repeats;
        double var = 0.0;
        for (double t : times) var += (t - mean) * (t - mean);
        row.time_mean_s = mean;
        row.time_std_s = repeats > 1 ? std::sqrt(var / (repeats - 1)) : 0.0;
        row.feasible = row.probability <= threshold;
        rows.push_back(std::move(row));
    }
    return rows;
}

ComparisonCase builtin_case(char which) {
    ComparisonCase c;
    c.robot.mean = Eigen::Vector2d::Zero();
    switch (which) {
    case 'a':
        c.robot.covariance = Eigen::Vector2d(1e-6, 1e-6).asDiagonal();
        c.robot_radius = 0.3;
        c.obstacle.mean = Eigen::Vector2d(1.920122, 0.0);
        c.obstacle.covariance = Eigen::Vector2d(0.737088, 0.737088).asDiagonal();
        c.obstacle_radius = 0.5;
        c.label = "a";
        break;
    case 'b':
        c.robot.covariance = Eigen::Vector2d(0.5, 1e-6).asDiagonal();
        c.robot_radius = 0.3;
        c.obstacle.mean = Eigen::Vector2d(1.865726, 0.0);
        c.obstacle.covariance = Eigen::Vector2d(0.737088, 0.737088).asDiagonal();
        c.obstacle_radius = 0.5;
        c.label = "b";
        break;
    case 'c':
        c.robot.covariance = Eigen::Vector2d(0.0128409, 0.0128409).asDiagonal();
        c.robot_radius = 0.05;
        c.obstacle.mean = Eigen::Vector2d(0.1, 0.0);
        c.obstacle.covariance = Eigen::Vector2d(0.0128409, 0.0128409).asDiagonal();
        c.obstacle_radius = 0.05;
        c.label = "c";
        break;
    default:
        throw InvalidInput(std::string("unknown builtin case '") + which + "'");
    }
    return c;
}

} // namespace safenav::baselines
