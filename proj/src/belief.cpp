#include "safenav/belief.hpp"

#include "safenav/errors.hpp"

#include <cmath>

namespace safenav::belief {

double wrap_angle(double a) {
    a = std::fmod(a + M_PI, 2.0 * M_PI);
    if (a <= 0.0) a += 2.0 * M_PI;
    return a - M_PI;
}

Pose odometry_step(const Pose& pose, const OdometryControl& u) {
    const double heading = pose[2] + u.rot1;
    return {pose[0] + u.trans * std::cos(heading),
            pose[1] + u.trans * std::sin(heading),
            wrap_angle(heading + u.rot2)};
}

Pose unicycle_step(const Pose& pose, const UnicycleControl& u, double dt) {
    if (!(dt > 0.0)) throw InvalidInput("dt must be > 0");
    const double th = pose[2];
    if (std::abs(u.omega) < 1e-6) {
        return {pose[0] + u.v * dt * std::cos(th), pose[1] + u.v * dt * std::sin(th),
                wrap_angle(th + u.omega * dt)};
    }
    const double th1 = th + u.omega * dt;
    const double r = u.v / u.omega;
    return {pose[0] + r * (std::sin(th1) - std::sin(th)),
            pose[1] + r * (std::cos(th) - std::cos(th1)), wrap_angle(th1)};
}

Eigen::Vector2d range_bearing(const Pose& pose, const Eigen::Vector2d& object) {
    const double dx = object.x() - pose[0];
    const double dy = object.y() - pose[1];
    const double r = std::hypot(dx, dy);
    if (r <= 1e-9)
        throw DegenerateGeometry("object coincides with the robot position");
    return {r, wrap_angle(std::atan2(dy, dx) - pose[2])};
}

Eigen::Matrix3d odometry_jacobian(const Pose& pose, const OdometryControl& u) {
    const double heading = pose[2] + u.rot1;
    Eigen::Matrix3d f = Eigen::Matrix3d::Identity();
    f(0, 2) = -u.trans * std::sin(heading);
    f(1, 2) = u.trans * std::cos(heading);
    return f;
}

Eigen::Matrix3d unicycle_jacobian(const Pose& pose, const UnicycleControl& u,
                                  double dt) {
    if (!(dt > 0.0)) throw InvalidInput("dt must be > 0");
    const double th = pose[2];
    Eigen::Matrix3d f = Eigen::Matrix3d::Identity();
    if (std::abs(u.omega) < 1e-6) {
        f(0, 2) = -u.v * dt * std::sin(th);
        f(1, 2) = u.v * dt * std::cos(th);
        return f;
    }
    const double th1 = th + u.omega * dt;
    const double r = u.v / u.omega;
    f(0, 2) = r * (std::cos(th1) - std::cos(th));
    f(1, 2) = r * (std::sin(th1) - std::sin(th));
    return f;
}

Eigen::Matrix<double, 2, 3> range_bearing_jacobian(const Pose& pose,
                                                   const Eigen::Vector2d& object) {
    const double dx = object.x() - pose[0];
    const double dy = object.y() - pose[1];
    const double r2 = dx * dx + dy * dy;
    const double r = std::sqrt(r2);
    if (r <= 1e-9)
        throw DegenerateGeometry("object coincides with the robot position");
    Eigen::Matrix<double, 2, 3> h;
    h << -dx / r, -dy / r, 0.0, dy / r2, -dx / r2, -1.0;
    return h;
}

namespace {

void check_dims(const Gaussian& prior, const Eigen::MatrixXd& h,
                const Eigen::VectorXd& innovation, const Eigen::MatrixXd& q) {
    const auto n = prior.mean.size();
    if (prior.covariance.rows() != n || prior.covariance.cols() != n ||
        h.cols() != n || h.rows() != innovation.size() || q.rows() != h.rows() ||
        q.cols() != h.rows())
        throw InvalidInput("update dimensions do not agree");
}

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) {
    return 0.5 * (m + m.transpose());
}

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m, const char* name) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success)
        throw InvalidInput(std::string(name) + " is not positive definite");
    return llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
}

} // namespace

Gaussian kalman_update(const Gaussian& prior, const Eigen::MatrixXd& h,
                       const Eigen::VectorXd& innovation, const Eigen::MatrixXd& q) {
    check_dims(prior, h, innovation, q);
    const Eigen::MatrixXd s =
        symmetrized(h * prior.covariance * h.transpose() + q);
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success)
        throw NumericRange("innovation covariance is not positive definite", -1);
    const Eigen::MatrixXd k = llt.solve(h * prior.covariance).transpose();
    Gaussian out;
    out.mean = prior.mean + k * innovation;
    const auto n = prior.mean.size();
    out.covariance =
        symmetrized((Eigen::MatrixXd::Identity(n, n) - k * h) * prior.covariance);
    return out;
}

Gaussian kalman_update_with_object(const Gaussian& prior, const Eigen::MatrixXd& h,
                                   const Eigen::VectorXd& innovation,
                                   const Eigen::MatrixXd& q,
                                   const Eigen::VectorXd& viewpoint_offset,
                                   const Eigen::MatrixXd& viewpoint_cov) {
    check_dims(prior, h, innovation, q);
    const auto n = prior.mean.size();
    if (viewpoint_offset.size() != n || viewpoint_cov.rows() != n ||
        viewpoint_cov.cols() != n)
        throw InvalidInput("viewpoint dimensions do not agree");

    Eigen::LLT<Eigen::MatrixXd> sum_llt(
        symmetrized(prior.covariance + viewpoint_cov));
    if (sum_llt.info() != Eigen::Success)
        throw InvalidInput("prior plus viewpoint covariance is not positive definite");

    // fused prior (S_prior^-1 + S_view^-1)^-1 without forming either inverse
    const Eigen::MatrixXd fused =
        symmetrized(prior.covariance * sum_llt.solve(viewpoint_cov));

    const Eigen::MatrixXd s = symmetrized(h * fused * h.transpose() + q);
    Eigen::LLT<Eigen::MatrixXd> s_llt(s);
    if (s_llt.info() != Eigen::Success)
        throw NumericRange("innovation covariance is not positive definite", -1);
    const Eigen::MatrixXd k = s_llt.solve(h * fused).transpose();
    const Eigen::MatrixXd gain_form =
        symmetrized((Eigen::MatrixXd::Identity(n, n) - k * h) * fused);

    const Eigen::MatrixXd q_inv = spd_inverse(q, "measurement covariance");
    const Eigen::MatrixXd info_form =
        spd_inverse(symmetrized(h.transpose() * q_inv * h +
                                spd_inverse(prior.covariance, "prior covariance") +
                                spd_inverse(viewpoint_cov, "viewpoint covariance")),
                    "posterior information");

    const double gap =
        (info_form - gain_form).norm() / std::max(info_form.norm(), 1e-300);
    if (gap > 1e-8)
        throw InternalInconsistency(
            "information-form and gain-form posteriors disagree", gap);

    Gaussian out;
    out.covariance = gain_form;
    out.mean = prior.mean + gain_form * (h.transpose() * (q_inv * innovation)) +
               gain_form * spd_inverse(viewpoint_cov, "viewpoint covariance") *
                   viewpoint_offset;
    return out;
}

namespace {

PoseBelief from_gaussian(const Gaussian& g) {
    PoseBelief out;
    out.mean = g.mean;
    out.mean[2] = wrap_angle(out.mean[2]);
    out.covariance = g.covariance;
    return out;
}

} // namespace

PoseBelief ekf_update_standard(const PoseBelief& belief, const Eigen::Vector2d& z,
                               const Eigen::Vector2d& object_position,
                               const Eigen::Matrix2d& q) {
    const Eigen::Vector2d predicted = range_bearing(belief.mean, object_position);
    Eigen::Vector2d innovation = z - predicted;
    innovation[1] = wrap_angle(innovation[1]);
    Gaussian prior{belief.mean, belief.covariance};
    return from_gaussian(kalman_update(
        prior, range_bearing_jacobian(belief.mean, object_position), innovation, q));
}

PoseBelief ekf_update_with_object(const PoseBelief& belief, const Eigen::Vector2d& z,
                                  const ObjectBelief& object,
                                  const Eigen::Vector2d& object_position,
                                  const Eigen::Matrix2d& q) {
    const Eigen::Vector2d predicted = range_bearing(belief.mean, object_position);
    Eigen::Vector2d innovation = z - predicted;
    innovation[1] = wrap_angle(innovation[1]);
    Eigen::Vector3d offset = object.mean - belief.mean;
    offset[2] = wrap_angle(offset[2]);
    Gaussian prior{belief.mean, belief.covariance};
    return from_gaussian(kalman_update_with_object(
        prior, range_bearing_jacobian(belief.mean, object_position), innovation, q,
        offset, object.covariance));
}

} // namespace safenav::belief
