#include "doctest.h"
#include "safenav/belief.hpp"
#include "safenav/errors.hpp"
#include "safenav/rng.hpp"

#include <cmath>

using namespace safenav;
using namespace safenav::belief;

namespace {

Pose random_pose(Rng& rng) {
    return {rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-M_PI, M_PI)};
}

Eigen::Matrix3d random_spd3(Rng& rng, double lo, double hi) {
    Eigen::Matrix3d m;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m(i, j) = rng.uniform(-1, 1);
    const Eigen::Matrix3d q =
        Eigen::HouseholderQR<Eigen::Matrix3d>(m).householderQ();
    Eigen::Vector3d eig(rng.uniform(lo, hi), rng.uniform(lo, hi),
                        rng.uniform(lo, hi));
    return q * eig.asDiagonal() * q.transpose();
}

double belief_distance(const PoseBelief& a, const PoseBelief& b) {
    Eigen::Vector3d dm = a.mean - b.mean;
    dm[2] = wrap_angle(dm[2]);
    return dm.norm() + (a.covariance - b.covariance).norm();
}

} // namespace

TEST_CASE("angle wrapping lands in (-pi, pi]") {
    CHECK(wrap_angle(0.0) == 0.0);
    CHECK(wrap_angle(M_PI) == doctest::Approx(M_PI));
    CHECK(wrap_angle(-M_PI) == doctest::Approx(M_PI));
    CHECK(wrap_angle(3.0 * M_PI) == doctest::Approx(M_PI));
    CHECK(wrap_angle(2.0 * M_PI) == doctest::Approx(0.0));
    CHECK(wrap_angle(-0.1) == doctest::Approx(-0.1));
    CHECK(wrap_angle(7.5) == doctest::Approx(7.5 - 2.0 * M_PI));
}

TEST_CASE("odometry step") {
    const Pose a = odometry_step({0, 0, 0}, {0.0, 1.0, 0.0});
    CHECK(a[0] == doctest::Approx(1.0));
    CHECK(a[1] == doctest::Approx(0.0));
    CHECK(a[2] == doctest::Approx(0.0));

    const Pose b = odometry_step({0, 0, 0}, {M_PI_2, 1.0, 0.0});
    CHECK(b[0] == doctest::Approx(0.0));
    CHECK(b[1] == doctest::Approx(1.0));
    CHECK(b[2] == doctest::Approx(M_PI_2));

    const Pose c = odometry_step({1, 2, M_PI_4}, {M_PI_4, std::sqrt(2.0), -M_PI_2});
    CHECK(c[0] == doctest::Approx(1.0));
    CHECK(c[1] == doctest::Approx(2.0 + std::sqrt(2.0)));
    CHECK(c[2] == doctest::Approx(0.0));
}

TEST_CASE("unicycle step") {
    const Pose a = unicycle_step({0, 0, 0}, {1.0, M_PI_2}, 1.0);
    CHECK(a[0] == doctest::Approx(2.0 / M_PI));
    CHECK(a[1] == doctest::Approx(2.0 / M_PI));
    CHECK(a[2] == doctest::Approx(M_PI_2));

    const Pose slow = unicycle_step({0.3, -0.2, 0.7}, {1.0, 1e-9}, 1.0);
    const Pose straight = unicycle_step({0.3, -0.2, 0.7}, {1.0, 0.0}, 1.0);
    CHECK(std::abs(slow[0] - straight[0]) <= 1e-8);
    CHECK(std::abs(slow[1] - straight[1]) <= 1e-8);

    const Pose loop = unicycle_step({0, 0, 0}, {1.0, 2.0 * M_PI}, 1.0);
    CHECK(loop[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(loop[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::abs(loop[2]) <= 1e-12);

    CHECK_THROWS_AS(unicycle_step({0, 0, 0}, {1.0, 0.0}, 0.0), InvalidInput);
}

TEST_CASE("range and bearing") {
    const Eigen::Vector2d a = range_bearing({0, 0, 0}, {1, 1});
    CHECK(a[0] == doctest::Approx(std::sqrt(2.0)));
    CHECK(a[1] == doctest::Approx(M_PI_4));

    const Eigen::Vector2d b = range_bearing({0, 0, M_PI_2}, {0, 2});
    CHECK(b[0] == doctest::Approx(2.0));
    CHECK(b[1] == doctest::Approx(0.0));

    const Eigen::Vector2d c = range_bearing({1, 1, M_PI}, {0, 1});
    CHECK(c[0] == doctest::Approx(1.0));
    CHECK(c[1] == doctest::Approx(0.0));

    CHECK_THROWS_AS(range_bearing({1, 1, 0}, {1, 1}), DegenerateGeometry);
}

TEST_CASE("jacobians match finite differences") {
    Rng rng(2024);
    const double h = 1e-6;
    for (int trial = 0; trial < 100; ++trial) {
        const Pose p = random_pose(rng);

        SUBCASE("") {}
        const OdometryControl uo{rng.uniform(-1, 1), rng.uniform(-1, 1),
                                 rng.uniform(-1, 1)};
        const Eigen::Matrix3d fo = odometry_jacobian(p, uo);
        const UnicycleControl uu{rng.uniform(-0.5, 0.5), rng.uniform(-2, 2)};
        const double dt = rng.uniform(0.05, 0.5);
        const Eigen::Matrix3d fu = unicycle_jacobian(p, uu, dt);
        const Eigen::Vector2d obj(p[0] + rng.uniform(0.5, 3.0),
                                  p[1] + rng.uniform(0.5, 3.0));
        const Eigen::Matrix<double, 2, 3> hj = range_bearing_jacobian(p, obj);

        for (int j = 0; j < 3; ++j) {
            Pose lo = p, hi = p;
            lo[j] -= h;
            hi[j] += h;

            const Pose od_lo = odometry_step(lo, uo), od_hi = odometry_step(hi, uo);
            const Pose un_lo = unicycle_step(lo, uu, dt),
                       un_hi = unicycle_step(hi, uu, dt);
            const Eigen::Vector2d rb_lo = range_bearing(lo, obj),
                                  rb_hi = range_bearing(hi, obj);
            for (int i = 0; i < 3; ++i) {
                double d_od = (od_hi[i] - od_lo[i]) / (2 * h);
                double d_un = (un_hi[i] - un_lo[i]) / (2 * h);
                if (i == 2) {
                    d_od = wrap_angle(od_hi[i] - od_lo[i]) / (2 * h);
                    d_un = wrap_angle(un_hi[i] - un_lo[i]) / (2 * h);
                }
                CHECK(std::abs(fo(i, j) - d_od) <= 1e-6);
                CHECK(std::abs(fu(i, j) - d_un) <= 1e-6);
            }
            CHECK(std::abs(hj(0, j) - (rb_hi[0] - rb_lo[0]) / (2 * h)) <= 1e-6);
            CHECK(std::abs(hj(1, j) - wrap_angle(rb_hi[1] - rb_lo[1]) / (2 * h)) <=
                  1e-6);
        }
    }
}

TEST_CASE("ekf predict") {
    PoseBelief b;
    b.mean = {1.0, -2.0, 0.5};
    b.covariance = Eigen::Vector3d(0.1, 0.2, 0.05).asDiagonal();

    SUBCASE("identity when noise and control vanish") {
        const auto out = ekf_predict(b, OdometryControl{}, Eigen::Matrix3d::Zero(),
                                     OdometryModel{});
        CHECK((out.mean - b.mean).norm() == 0.0);
        CHECK((out.covariance - b.covariance).norm() == 0.0);
    }
    SUBCASE("zero prior covariance returns the process noise") {
        b.covariance.setZero();
        const Eigen::Matrix3d r = Eigen::Vector3d(0.01, 0.02, 0.03).asDiagonal();
        const auto out =
            ekf_predict(b, OdometryControl{0.1, 0.5, -0.2}, r, OdometryModel{});
        CHECK((out.covariance - r).norm() <= 1e-15);
    }
    SUBCASE("covariance grows along the motion jacobian") {
        const UnicycleModel model{0.1};
        const auto out = ekf_predict(b, UnicycleControl{0.3, 0.5},
                                     Eigen::Matrix3d::Identity() * 1e-4, model);
        const Eigen::Matrix3d f = unicycle_jacobian(b.mean, {0.3, 0.5}, 0.1);
        const Eigen::Matrix3d want =
            f * b.covariance * f.transpose() + Eigen::Matrix3d::Identity() * 1e-4;
        CHECK((out.covariance - want).norm() <= 1e-14);
    }
}

TEST_CASE("scalar kalman update") {
    Gaussian prior;
    prior.mean = Eigen::VectorXd::Zero(1);
    prior.covariance = Eigen::MatrixXd::Identity(1, 1);
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(1, 1);
    Eigen::VectorXd innovation(1);
    innovation << 1.0;
    Eigen::MatrixXd q = Eigen::MatrixXd::Identity(1, 1);

    const auto out = kalman_update(prior, h, innovation, q);
    CHECK(out.mean[0] == doctest::Approx(0.5));
    CHECK(out.covariance(0, 0) == doctest::Approx(0.5));

    prior.covariance.setZero();
    q.setZero();
    CHECK_THROWS_AS(kalman_update(prior, h, innovation, q), NumericRange);
}

TEST_CASE("range-bearing ekf update") {
    PoseBelief b;
    b.mean = {0.5, 0.2, 0.3};
    b.covariance = Eigen::Vector3d(0.1, 0.1, 0.02).asDiagonal();
    const Eigen::Vector2d landmark(2.0, 1.5);
    const Eigen::Matrix2d q = Eigen::Vector2d(0.01, 0.005).asDiagonal();

    SUBCASE("zero innovation keeps the mean") {
        const Eigen::Vector2d z = range_bearing(b.mean, landmark);
        const auto out = ekf_update_standard(b, z, landmark, q);
        CHECK((out.mean - b.mean).norm() <= 1e-12);
        CHECK(out.covariance.trace() < b.covariance.trace());
    }
    SUBCASE("uninformative measurement changes nothing") {
        const Eigen::Matrix2d huge = Eigen::Matrix2d::Identity() * 1e12;
        Eigen::Vector2d z = range_bearing(b.mean, landmark);
        z[0] += 0.5;
        const auto out = ekf_update_standard(b, z, landmark, huge);
        CHECK(belief_distance(out, b) <= 1e-6);
    }
    SUBCASE("bearing innovation wraps") {
        Eigen::Vector2d z = range_bearing(b.mean, landmark);
        z[1] = wrap_angle(z[1] + 2.0 * M_PI); // same physical bearing
        const auto out = ekf_update_standard(b, z, landmark, q);
        CHECK((out.mean - b.mean).norm() <= 1e-9);
    }
}

TEST_CASE("object-aware update, scalar ground truth") {
    Gaussian prior;
    prior.mean = Eigen::VectorXd::Zero(1);
    prior.covariance = Eigen::MatrixXd::Identity(1, 1);
    const Eigen::MatrixXd h = Eigen::MatrixXd::Identity(1, 1);
    const Eigen::MatrixXd q = Eigen::MatrixXd::Identity(1, 1);
    Eigen::VectorXd zero(1), one(1);
    zero << 0.0;
    one << 1.0;

    const auto out = kalman_update_with_object(prior, h, zero, q, one,
                                               Eigen::MatrixXd::Identity(1, 1));
    CHECK(out.covariance(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(out.mean[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("object-aware update behaviors") {
    Rng rng(77);
    PoseBelief b;
    b.mean = {0.4, -0.3, 0.2};
    b.covariance = Eigen::Vector3d(0.1, 0.12, 0.02).asDiagonal();
    const Eigen::Vector2d landmark(1.8, 0.9);
    const Eigen::Matrix2d q = Eigen::Vector2d(0.01, 0.005).asDiagonal();

    SUBCASE("huge viewpoint spread reduces to the standard update") {
        ObjectBelief obj;
        obj.mean = {5.0, 5.0, 1.0};
        obj.covariance = Eigen::Matrix3d::Identity() * 1e8;
        Eigen::Vector2d z = range_bearing(b.mean, landmark);
        z[0] += 0.2;
        z[1] += 0.05;
        const auto with_obj = ekf_update_with_object(b, z, obj, landmark, q);
        const auto standard = ekf_update_standard(b, z, landmark, q);
        CHECK(belief_distance(with_obj, standard) <= 1e-5);
    }
    SUBCASE("matching viewpoint and measurement leave the mean, shrink spread") {
        ObjectBelief obj;
        obj.mean = b.mean;
        obj.covariance = Eigen::Vector3d(0.2, 0.2, 0.1).asDiagonal();
        const Eigen::Vector2d z = range_bearing(b.mean, landmark);
        const auto out = ekf_update_with_object(b, z, obj, landmark, q);
        CHECK((out.mean - b.mean).norm() <= 1e-12);
        const auto standard = ekf_update_standard(b, z, landmark, q);
        const Eigen::Vector3d eig =
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(
                standard.covariance - out.covariance)
                .eigenvalues();
        CHECK(eig.minCoeff() >= -1e-10);
    }
    SUBCASE("viewpoint pull moves the mean toward the viewpoint") {
        ObjectBelief obj;
        obj.mean = b.mean + Eigen::Vector3d(0.5, 0.0, 0.0);
        obj.covariance = Eigen::Vector3d(0.1, 0.1, 0.05).asDiagonal();
        const Eigen::Vector2d z = range_bearing(b.mean, landmark);
        const auto out = ekf_update_with_object(b, z, obj, landmark, q);
        CHECK(out.mean[0] > b.mean[0]);
        CHECK(out.mean[0] < obj.mean[0]);
    }
    SUBCASE("shrinking influence is monotone in the viewpoint scale") {
        for (int trial = 0; trial < 10; ++trial) {
            PoseBelief pb;
            pb.mean = random_pose(rng);
            pb.covariance = random_spd3(rng, 0.01, 0.3);
            const Eigen::Vector2d lm(pb.mean[0] + rng.uniform(0.5, 3.0),
                                     pb.mean[1] + rng.uniform(0.5, 3.0));
            ObjectBelief obj;
            obj.mean = random_pose(rng);
            const Eigen::Matrix3d base = random_spd3(rng, 0.5, 2.0);
            Eigen::Vector2d z = range_bearing(pb.mean, lm);
            z[0] += rng.uniform(-0.2, 0.2);
            z[1] += rng.uniform(-0.1, 0.1);
            const auto standard = ekf_update_standard(pb, z, lm, q);
            double prev = 1e300;
            for (double scale = 1e2; scale <= 1e8 + 1.0; scale *= 10.0) {
                obj.covariance = base * scale;
                const auto out = ekf_update_with_object(pb, z, obj, lm, q);
                const double d = belief_distance(out, standard);
                CHECK(d <= prev * (1.0 + 1e-9));
                prev = d;
            }
            CHECK(prev <= 1e-5);
        }
    }
    SUBCASE("position-only viewpoint with unconstrained heading stays consistent") {
        // heading variance 1e6 exercises the worst conditioning the simulator
        // produces; the dual-form consistency check must not trip
        for (int trial = 0; trial < 200; ++trial) {
            PoseBelief pb;
            pb.mean = random_pose(rng);
            pb.covariance = random_spd3(rng, 0.005, 0.4);
            const Eigen::Vector2d lm(pb.mean[0] + rng.uniform(0.4, 3.0),
                                     pb.mean[1] + rng.uniform(0.4, 3.0));
            ObjectBelief obj;
            obj.mean = random_pose(rng);
            obj.covariance = Eigen::Vector3d(rng.uniform(0.01, 0.1),
                                             rng.uniform(0.01, 0.1), 1e6)
                                 .asDiagonal();
            Eigen::Vector2d z = range_bearing(pb.mean, lm);
            z[0] += rng.uniform(-0.3, 0.3);
            z[1] += rng.uniform(-0.15, 0.15);
            CHECK_NOTHROW(ekf_update_with_object(pb, z, obj, lm, q));
        }
    }
}

TEST_CASE("updates preserve symmetry and near-positive spectra") {
    Rng rng(99);
    const Eigen::Matrix2d q = Eigen::Vector2d(0.01, 0.004).asDiagonal();
    for (int trial = 0; trial < 30; ++trial) {
        PoseBelief b;
        b.mean = random_pose(rng);
        b.covariance = random_spd3(rng, 0.01, 0.5);
        const UnicycleModel model{0.1};
        for (int step = 0; step < 10; ++step) {
            const UnicycleControl u{rng.uniform(0, 0.3), rng.uniform(-1, 1)};
            b = ekf_predict(b, u, random_spd3(rng, 1e-5, 1e-3), model);
            const Eigen::Vector2d lm(b.mean[0] + rng.uniform(0.5, 2.0),
                                     b.mean[1] + rng.uniform(0.5, 2.0));
            Eigen::Vector2d z = range_bearing(b.mean, lm);
            z[0] += rng.uniform(-0.1, 0.1);
            z[1] += rng.uniform(-0.05, 0.05);
            if (rng.bernoulli(0.5)) {
                b = ekf_update_standard(b, z, lm, q);
            } else {
                ObjectBelief obj;
                obj.mean = random_pose(rng);
                obj.covariance = random_spd3(rng, 0.5, 5.0);
                b = ekf_update_with_object(b, z, obj, lm, q);
            }
            CHECK((b.covariance - b.covariance.transpose()).norm() <= 1e-12);
            const Eigen::Vector3d eig =
                Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(b.covariance)
                    .eigenvalues();
            CHECK(eig.minCoeff() >= -1e-10);
            CHECK(std::abs(b.mean[2]) <= M_PI + 1e-12);
        }
    }
}
