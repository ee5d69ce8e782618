#include "doctest.h"
#include "safenav/errors.hpp"
#include "safenav/obstacle.hpp"
#include "safenav/rng.hpp"

#include <cmath>

using namespace safenav;
using namespace safenav::obstacle;

namespace {

Scan make_scan(std::initializer_list<double> ranges, double max_range = 3.5) {
    Scan s;
    s.max_range = max_range;
    double bearing = -1.0;
    for (double r : ranges) {
        s.rays.push_back({bearing, r});
        bearing += 0.1;
    }
    return s;
}

PositionBelief pos(double x, double y, double var = 0.01) {
    PositionBelief p;
    p.mean = {x, y};
    p.covariance = Eigen::Matrix2d::Identity() * var;
    return p;
}

} // namespace

TEST_CASE("scan validation") {
    CHECK_NOTHROW(validate_scan(make_scan({1.0, 2.0, 3.5})));
    CHECK_NOTHROW(validate_scan(Scan{}));

    Scan bad = make_scan({1.0, 2.0});
    bad.rays[1].bearing = bad.rays[0].bearing;
    CHECK_THROWS_AS(validate_scan(bad), InvalidInput);

    CHECK_THROWS_AS(validate_scan(make_scan({0.0, 1.0})), InvalidInput);
    CHECK_THROWS_AS(validate_scan(make_scan({1.0, 3.6})), InvalidInput);
    Scan neg = make_scan({1.0});
    neg.max_range = 0.0;
    CHECK_THROWS_AS(validate_scan(neg), InvalidInput);
}

TEST_CASE("scan clustering") {
    SUBCASE("all rays at max range give no clusters") {
        CHECK(cluster_scan(make_scan({3.5, 3.5, 3.5})).empty());
    }
    SUBCASE("one contiguous run is one cluster") {
        const auto c = cluster_scan(make_scan({3.5, 1.0, 1.1, 0.9, 1.2, 1.0, 3.5}));
        REQUIRE(c.size() == 1);
        CHECK(c[0].rays.size() == 5);
        CHECK(c[0].max_range == 3.5);
    }
    SUBCASE("a single max-range ray separates two clusters") {
        const auto c = cluster_scan(make_scan({1.0, 1.1, 3.5, 2.0, 2.1}));
        REQUIRE(c.size() == 2);
        CHECK(c[0].rays.size() == 2);
        CHECK(c[1].rays.size() == 2);
        CHECK(c[1].rays[0].range == 2.0);
    }
    SUBCASE("clusters partition the sub-max-range rays in order") {
        Rng rng(5150);
        for (int trial = 0; trial < 30; ++trial) {
            Scan s;
            s.max_range = 3.5;
            double bearing = -2.0;
            for (int i = 0; i < 40; ++i) {
                bearing += rng.uniform(0.01, 0.1);
                const double r =
                    rng.bernoulli(0.4) ? 3.5 : rng.uniform(0.2, 3.0);
                s.rays.push_back({bearing, r});
            }
            const auto clusters = cluster_scan(s);
            std::vector<double> seen;
            for (const auto& c : clusters) {
                REQUIRE(!c.rays.empty());
                for (const auto& ray : c.rays) {
                    CHECK(ray.range < s.max_range - 1e-6);
                    if (!seen.empty()) CHECK(ray.bearing > seen.back());
                    seen.push_back(ray.bearing);
                }
            }
            std::vector<double> expected;
            for (const auto& ray : s.rays)
                if (ray.range < s.max_range - 1e-6) expected.push_back(ray.bearing);
            CHECK(seen == expected);
        }
    }
}

TEST_CASE("location estimate from the minimum-range ray") {
    PoseBelief robot;
    robot.mean = {0, 0, 0};
    robot.covariance = Eigen::Matrix3d::Identity() * 1e-12;

    SUBCASE("agreeing measurement keeps the mean and shrinks the spread") {
        Scan cluster = make_scan({1.3 - 0.22});
        cluster.rays[0].bearing = 0.0;
        const PositionBelief prior = pos(1.3, 0.0, 0.1);
        const auto post = estimate_location(robot, cluster, prior, 0.22);
        CHECK((post.mean - prior.mean).norm() <= 1e-9);
        CHECK(post.covariance.trace() < prior.covariance.trace());
    }
    SUBCASE("uninformative prior lands on the back-projected center") {
        const Eigen::Vector2d center(1.5, -0.2);
        const double range_to_center = center.norm();
        Scan cluster;
        cluster.rays.push_back(
            {std::atan2(center.y(), center.x()), range_to_center - 0.22});
        PositionBelief prior = pos(1.52, -0.18);
        prior.covariance = Eigen::Matrix2d::Identity() * 1e8;
        const auto post = estimate_location(robot, cluster, prior, 0.22);
        CHECK((post.mean - center).norm() <= 1e-3);
    }
    SUBCASE("fusion lands between prior and measurement") {
        Scan cluster = make_scan({1.0});
        cluster.rays[0].bearing = 0.0;
        const PositionBelief prior = pos(1.3, 0.0, 0.1);
        const auto post = estimate_location(robot, cluster, prior, 0.22);
        CHECK(post.mean.x() > 1.22);
        CHECK(post.mean.x() < 1.3);
        CHECK(std::abs(post.mean.y()) <= 1e-9);
        // scalar fusion along the ray: weights 0.1 vs 0.01
        CHECK(post.mean.x() ==
              doctest::Approx(1.3 + 0.1 / 0.11 * (1.22 - 1.3)).epsilon(1e-9));
        CHECK(post.covariance(0, 0) == doctest::Approx(0.1 * 0.01 / 0.11));
    }
    SUBCASE("robot position spread widens the fused result") {
        Scan cluster = make_scan({1.0});
        cluster.rays[0].bearing = 0.0;
        const PositionBelief prior = pos(1.3, 0.0, 0.1);
        const auto tight = estimate_location(robot, cluster, prior, 0.22);
        PoseBelief sloppy = robot;
        sloppy.covariance.topLeftCorner<2, 2>() =
            Eigen::Matrix2d::Identity() * 0.05;
        const auto wide = estimate_location(sloppy, cluster, prior, 0.22);
        CHECK(wide.covariance(0, 0) > tight.covariance(0, 0));
        CHECK(wide.mean.x() > tight.mean.x()); // pulled less toward the ray
    }
    SUBCASE("minimum ray wins inside a cluster") {
        Scan cluster = make_scan({1.4, 1.0, 1.5});
        cluster.rays[1].bearing = 0.0;
        const auto a = estimate_location(robot, cluster, pos(1.3, 0.0, 0.1), 0.22);
        Scan only_min = make_scan({1.0});
        only_min.rays[0].bearing = 0.0;
        const auto b =
            estimate_location(robot, only_min, pos(1.3, 0.0, 0.1), 0.22);
        CHECK((a.mean - b.mean).norm() <= 1e-12);
    }
    SUBCASE("input validation") {
        CHECK_THROWS_AS(estimate_location(robot, Scan{}, pos(1, 0), 0.22),
                        InvalidInput);
        Scan c = make_scan({1.0});
        CHECK_THROWS_AS(estimate_location(robot, c, pos(1, 0), -0.1),
                        InvalidInput);
    }
}

TEST_CASE("forward-difference velocities") {
    SUBCASE("uniform x motion") {
        const auto t = estimate_velocities(
            {pos(0, 0), pos(0.5, 0), pos(1.0, 0)}, 1.0);
        REQUIRE(t.vx_series.size() == 2);
        CHECK(t.vx_series[0] == doctest::Approx(0.5));
        CHECK(t.vx_series[1] == doctest::Approx(0.5));
        CHECK(t.vy_series[0] == 0.0);
        CHECK(t.vy_series[1] == 0.0);
        CHECK_FALSE(t.velocity_jump);
    }
    SUBCASE("static obstacle has zero velocities") {
        const auto t = estimate_velocities(
            {pos(2, 1), pos(2, 1), pos(2, 1), pos(2, 1)}, 0.5);
        for (double v : t.vx_series) CHECK(v == 0.0);
        for (double v : t.vy_series) CHECK(v == 0.0);
    }
    SUBCASE("velocity-change variance sums four position variances") {
        const auto t = estimate_velocities(
            {pos(0, 0, 0.01), pos(0.5, 0.2, 0.01), pos(1.0, 0.4, 0.01)}, 0.5);
        CHECK(t.vx_change_var == doctest::Approx(0.16).epsilon(1e-12));
        CHECK(t.vy_change_var == doctest::Approx(0.16).epsilon(1e-12));
    }
    SUBCASE("two positions fall back to the single velocity variance") {
        const auto t =
            estimate_velocities({pos(0, 0, 0.02), pos(1, 0, 0.03)}, 0.5);
        CHECK(t.vx_change_var == doctest::Approx(0.05 / 0.25));
    }
    SUBCASE("the largest change is the one reported") {
        const auto t = estimate_velocities(
            {pos(0, 0, 0.01), pos(0.1, 0, 0.01), pos(0.2, 0, 0.5),
             pos(0.9, 0, 0.5)},
            1.0);
        // velocities 0.1, 0.1, 0.7; largest change uses positions 1..3
        CHECK(t.vx_change_var ==
              doctest::Approx(0.01 + 0.5 + 0.5 + 0.5).epsilon(1e-12));
    }
    SUBCASE("abrupt velocity change sets the flag") {
        const auto t =
            estimate_velocities({pos(0, 0), pos(0, 0), pos(2.0, 0)}, 1.0);
        CHECK(t.velocity_jump);
    }
    SUBCASE("input validation") {
        CHECK_THROWS_AS(estimate_velocities({pos(0, 0)}, 1.0),
                        InsufficientData);
        CHECK_THROWS_AS(estimate_velocities({pos(0, 0), pos(1, 0)}, 0.0),
                        InvalidInput);
    }
}

TEST_CASE("obstacle prediction") {
    SUBCASE("static track stays put") {
        const auto t = estimate_velocities({pos(2, 1), pos(2, 1), pos(2, 1)}, 0.1);
        const auto p = predict_obstacle(t, 4, 0.1);
        REQUIRE(p.steps.size() == 4);
        for (const auto& s : p.steps)
            CHECK((s.mean - Eigen::Vector2d(2, 1)).norm() == 0.0);
    }
    SUBCASE("constant velocity advances linearly with zero curvature") {
        const auto t = estimate_velocities(
            {pos(0, 0), pos(0.1, 0), pos(0.2, 0)}, 0.1);
        const auto p = predict_obstacle(t, 3, 0.1);
        REQUIRE(p.steps.size() == 3);
        for (int l = 1; l <= 3; ++l) {
            CHECK(p.steps[l - 1].mean.x() ==
                  doctest::Approx(0.2 + 0.1 * l).epsilon(1e-12));
            CHECK(p.steps[l - 1].mean.y() == 0.0);
        }
    }
    SUBCASE("acceleration adds the quadratic term") {
        const auto t =
            estimate_velocities({pos(0, 0), pos(0.1, 0), pos(0.3, 0)}, 1.0);
        const auto p = predict_obstacle(t, 2, 1.0);
        // v = 0.2, dv = 0.1 over dt = 1
        CHECK(p.steps[0].mean.x() == doctest::Approx(0.3 + 0.2 + 0.05));
        CHECK(p.steps[1].mean.x() == doctest::Approx(0.3 + 0.4 + 0.2));
    }
    SUBCASE("per-step noise increment matches the closed form") {
        ObstacleTrack t;
        t.positions = {pos(0, 0, 0.0), pos(0, 0, 0.0)};
        t.positions[1].covariance.setZero();
        t.positions[0].covariance.setZero();
        t.vx_series = {0.0};
        t.vy_series = {0.0};
        t.vx_change_var = 0.04;
        t.vy_change_var = 0.0;
        t.dt = 0.5;
        const auto p = predict_obstacle(t, 3, 0.5);
        CHECK(p.steps[0].covariance(0, 0) == doctest::Approx(6.25e-4));
        CHECK(p.steps[2].covariance(0, 0) == doctest::Approx(3 * 6.25e-4));
        CHECK(p.steps[2].covariance(1, 1) == 0.0);
    }
    SUBCASE("covariance trace grows with the horizon") {
        const auto t = estimate_velocities(
            {pos(0, 0, 0.01), pos(0.2, 0.1, 0.01), pos(0.4, 0.2, 0.01)}, 0.1);
        const auto p = predict_obstacle(t, 6, 0.1);
        for (std::size_t l = 1; l < p.steps.size(); ++l)
            CHECK(p.steps[l].covariance.trace() >
                  p.steps[l - 1].covariance.trace());
    }
    SUBCASE("noise-free constant velocity matches ground truth exactly") {
        Rng rng(31);
        for (int trial = 0; trial < 20; ++trial) {
            const Eigen::Vector2d v(rng.uniform(-1, 1), rng.uniform(-1, 1));
            const Eigen::Vector2d start(rng.uniform(-3, 3), rng.uniform(-3, 3));
            const double dt = rng.uniform(0.05, 0.5);
            std::vector<PositionBelief> positions;
            for (int i = 0; i < 8; ++i) {
                PositionBelief p;
                p.mean = start + i * dt * v;
                p.covariance.setZero();
                positions.push_back(p);
            }
            const auto track = estimate_velocities(positions, dt);
            const auto pred = predict_obstacle(track, 5, dt);
            for (int l = 1; l <= 5; ++l) {
                const Eigen::Vector2d truth = start + (7 + l) * dt * v;
                CHECK((pred.steps[l - 1].mean - truth).norm() <= 1e-12);
                CHECK(pred.steps[l - 1].covariance.norm() == 0.0);
            }
        }
    }
    SUBCASE("input validation") {
        ObstacleTrack t;
        t.positions = {pos(0, 0)};
        CHECK_THROWS_AS(predict_obstacle(t, 3, 0.1), InsufficientData);
        const auto ok = estimate_velocities({pos(0, 0), pos(1, 0)}, 1.0);
        CHECK_THROWS_AS(predict_obstacle(ok, -1, 0.1), InvalidInput);
        CHECK_THROWS_AS(predict_obstacle(ok, 3, 0.0), InvalidInput);
    }
}

TEST_CASE("tracker stays statistically consistent on a scripted obstacle") {
    const double dt = 0.1;
    const double radius = 0.22;
    int covered = 0, total = 0;
    for (unsigned seed = 0; seed < 100; ++seed) {
        Rng rng(seed + 1);
        PoseBelief robot;
        robot.mean = {0, 0, 0};
        robot.covariance = Eigen::Matrix3d::Identity() * 1e-6;

        const double heading = rng.uniform(0, 2 * M_PI);
        const Eigen::Vector2d v(0.5 * std::cos(heading), 0.5 * std::sin(heading));
        Eigen::Vector2d truth(2.0 + rng.uniform(-0.3, 0.3),
                              1.0 + rng.uniform(-0.3, 0.3));

        PositionBelief prior;
        prior.mean = truth + Eigen::Vector2d(0.4 * rng.gaussian(),
                                             0.4 * rng.gaussian());
        prior.covariance = Eigen::Matrix2d::Identity() * 0.25;

        for (int step = 0; step < 30; ++step) {
            const double range_to_center = truth.norm();
            if (range_to_center < 0.5) break; // keep the target in front
            Scan cluster;
            const double zr = std::max(
                0.05, range_to_center - radius + 0.1 * rng.gaussian());
            const double zb =
                std::atan2(truth.y(), truth.x()) + 0.02 * rng.gaussian();
            cluster.rays.push_back({zb, zr});

            const auto post = estimate_location(robot, cluster, prior, radius);
            const Eigen::Vector2d err = truth - post.mean;
            const double d2 =
                err.dot(post.covariance.ldlt().solve(err));
            covered += d2 <= 9.0;
            ++total;

            truth += v * dt;
            prior.mean = post.mean;
            prior.covariance =
                post.covariance + Eigen::Matrix2d::Identity() * 0.0125;
        }
    }
    CHECK(total > 2000);
    CHECK(static_cast<double>(covered) / total >= 0.97);
}
