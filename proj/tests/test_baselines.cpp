#include "doctest.h"
#include "safenav/baselines.hpp"
#include "safenav/errors.hpp"
#include "safenav/rng.hpp"

#include <cmath>

using namespace safenav;
using namespace safenav::baselines;

namespace {

double exact_probability(const ComparisonCase& c, double delta = 1e-6) {
    collision::CollisionQuery q;
    q.robot = c.robot;
    q.obstacle = c.obstacle;
    q.robot_body = collision::Body::sphere(c.robot_radius);
    q.obstacle_body = collision::Body::sphere(c.obstacle_radius);
    q.delta = delta;
    return collision::collision_probability(q).value;
}

ComparisonCase random_case(Rng& rng) {
    ComparisonCase c;
    c.robot_radius = rng.uniform(0.05, 1.0);
    c.obstacle_radius = rng.uniform(0.05, 1.0);
    c.robot.mean = Eigen::Vector2d::Zero();
    const double dir = rng.uniform(0.0, 2 * M_PI);
    c.obstacle.mean =
        rng.uniform(0.05, 3.0) * Eigen::Vector2d(std::cos(dir), std::sin(dir));
    for (auto* b : {&c.robot, &c.obstacle}) {
        const double e1 = rng.uniform(0.005, 0.75), e2 = rng.uniform(0.005, 0.75);
        const double a = rng.uniform(0.0, M_PI);
        const Eigen::Matrix2d rm = Eigen::Rotation2Dd(a).toRotationMatrix();
        b->covariance = rm * Eigen::Vector2d(e1, e2).asDiagonal() * rm.transpose();
    }
    return c;
}

} // namespace

TEST_CASE("benchmark fixtures hit their frozen probabilities") {
    // series values, frozen once against an independent high-precision run
    CHECK(exact_probability(builtin_case('a')) ==
          doctest::Approx(0.0461999859).epsilon(1e-5));
    CHECK(exact_probability(builtin_case('b')) ==
          doctest::Approx(0.0824000028).epsilon(1e-5));
    CHECK(exact_probability(builtin_case('c')) ==
          doctest::Approx(0.1483000508).epsilon(1e-5));
    CHECK_THROWS_AS(builtin_case('z'), InvalidInput);
}

TEST_CASE("monte carlo oracle") {
    const auto c = builtin_case('a');
    SUBCASE("agrees with the series value") {
        const auto [p, se] = mc_oracle(c, 100000, 99);
        CHECK(std::abs(p - exact_probability(c)) <= 3.0 * se + 1e-3);
        CHECK(se > 0.0);
    }
    SUBCASE("deterministic per seed") {
        const auto r1 = mc_oracle(c, 5000, 1234);
        const auto r2 = mc_oracle(c, 5000, 1234);
        CHECK(r1.first == r2.first);
        CHECK(r1.second == r2.second);
        const auto r3 = mc_oracle(c, 5000, 1235);
        CHECK(r1.first != r3.first);
    }
    SUBCASE("far separation scores zero") {
        ComparisonCase far = c;
        far.obstacle.mean = Eigen::Vector2d(100.0, 0.0);
        far.robot.covariance = far.obstacle.covariance =
            Eigen::Vector2d(0.01, 0.01).asDiagonal();
        const auto [p, se] = mc_oracle(far, 1000, 7);
        CHECK(p == 0.0);
        CHECK(se == 0.0);
    }
    SUBCASE("sample floor enforced") {
        CHECK_THROWS_AS(mc_oracle(c, 99, 1), InvalidInput);
    }
    SUBCASE("isotropic central case matches the closed form") {
        ComparisonCase central;
        central.robot_radius = 0.3;
        central.obstacle_radius = 0.5;
        central.robot.covariance = Eigen::Vector2d(0.02, 0.02).asDiagonal();
        central.obstacle.covariance = Eigen::Vector2d(0.02, 0.02).asDiagonal();
        central.obstacle.mean = central.robot.mean = Eigen::Vector2d(0.4, -1.0);
        const auto [p, se] = mc_oracle(central, 100000, 5);
        CHECK(std::abs(p - (1.0 - std::exp(-8.0))) <= 3.0 * se + 1e-4);
    }
}

TEST_CASE("density-times-volume approximations") {
    SUBCASE("dutoit vanishes with the robot volume") {
        ComparisonCase c = builtin_case('a');
        c.robot_radius = 1e-9;
        CHECK(dutoit(c) <= 1e-12);
    }
    SUBCASE("park equals the offset density under rotational symmetry") {
        ComparisonCase c;
        c.robot_radius = 0.3;
        c.obstacle_radius = 0.5;
        c.robot.mean = c.obstacle.mean = Eigen::Vector2d(1.0, 2.0);
        c.robot.covariance = Eigen::Vector2d(0.1, 0.1).asDiagonal();
        c.obstacle.covariance = Eigen::Vector2d(0.1, 0.1).asDiagonal();
        // combined sigma2 = 0.2; max density on the circle = density at r1
        const double expected = M_PI * 0.09 *
                                std::exp(-0.5 * 0.09 / 0.2) / (2.0 * M_PI * 0.2);
        CHECK(park(c) == doctest::Approx(expected).epsilon(1e-6));
        CHECK(park(c) >= dutoit(c) * std::exp(-0.5 * 0.09 / 0.2) - 1e-12);
    }
    SUBCASE("park upper-bounds dutoit when the robot sits off-center") {
        const auto c = builtin_case('a');
        CHECK(park(c) >= dutoit(c));
    }
}

TEST_CASE("linearized chance constraint") {
    SUBCASE("touching fixture gives exactly one half") {
        const auto r = zhu(builtin_case('c'));
        CHECK(r.probability == doctest::Approx(0.5).epsilon(1e-12));
        CHECK_FALSE(r.degenerate);
    }
    SUBCASE("frozen fixture values") {
        CHECK(zhu(builtin_case('a')).probability ==
              doctest::Approx(0.0960).epsilon(2e-3));
        CHECK(zhu(builtin_case('b')).probability ==
              doctest::Approx(0.1690).epsilon(2e-3));
    }
    SUBCASE("coincident means are flagged") {
        ComparisonCase c = builtin_case('a');
        c.obstacle.mean = c.robot.mean;
        const auto r = zhu(c);
        CHECK(r.probability == 0.5);
        CHECK(r.degenerate);
    }
    SUBCASE("far separation decays to zero") {
        ComparisonCase c = builtin_case('a');
        c.obstacle.mean = Eigen::Vector2d(50.0, 0.0);
        CHECK(zhu(c).probability <= 1e-9);
    }
    SUBCASE("upper-bounds the exact probability") {
        Rng rng(31337);
        for (int i = 0; i < 100; ++i) {
            const auto c = random_case(rng);
            CHECK(zhu(c).probability >= exact_probability(c, 1e-3) - 1e-3);
        }
    }
}

TEST_CASE("sampled obstacle-mass integration") {
    SUBCASE("zero robot uncertainty reduces to the series value") {
        ComparisonCase c = builtin_case('a');
        c.robot.covariance = Eigen::Vector2d(1e-10, 1e-10).asDiagonal();
        const double got = lambert_mci(c, 200, 42);
        CHECK(got == doctest::Approx(exact_probability(c)).epsilon(1e-4));
    }
    SUBCASE("deterministic per seed") {
        const auto c = builtin_case('b');
        CHECK(lambert_mci(c, 500, 9) == lambert_mci(c, 500, 9));
    }
    SUBCASE("tracks the exact value on the fixtures") {
        for (char w : {'a', 'b', 'c'}) {
            const auto c = builtin_case(w);
            CHECK(std::abs(lambert_mci(c, 20000, 11) - exact_probability(c)) <= 0.01);
        }
    }
}

TEST_CASE("comparison table") {
    const double threshold = 0.09;
    const auto run = [&](char w) {
        return compare(builtin_case(w), threshold, 2, 20000, 123, 1e-3);
    };

    const auto rows_a = run('a');
    REQUIRE(rows_a.size() == 6);
    CHECK(rows_a[0].method == "exact");
    CHECK(rows_a[1].method == "numerical_integral");
    CHECK(rows_a[2].method == "lambert_mci");
    CHECK(rows_a[3].method == "dutoit");
    CHECK(rows_a[4].method == "park");
    CHECK(rows_a[5].method == "zhu");

    // feasibility verdicts stable under the fixtures
    CHECK(rows_a[0].feasible);       // exact 4.6%
    CHECK(rows_a[1].feasible);       // numerical integral
    CHECK(rows_a[2].feasible);       // sampled obstacle mass
    CHECK_FALSE(rows_a[5].feasible); // linearized bound 9.6%

    const auto rows_b = run('b');
    CHECK(rows_b[0].feasible);       // exact 8.2%
    CHECK(rows_b[1].feasible);
    CHECK_FALSE(rows_b[5].feasible); // linearized bound 16.9%

    const auto rows_c = run('c');
    CHECK_FALSE(rows_c[0].feasible); // exact 14.8%
    CHECK_FALSE(rows_c[1].feasible);
    CHECK_FALSE(rows_c[2].feasible);
    CHECK(rows_c[3].feasible);       // density-times-volume underestimates
    CHECK(rows_c[4].feasible);
    CHECK_FALSE(rows_c[5].feasible); // 50%

    for (const auto& r : rows_a) {
        CHECK(r.probability >= 0.0);
        CHECK(r.probability <= 1.0);
        CHECK(r.time_mean_s >= 0.0);
    }
}
