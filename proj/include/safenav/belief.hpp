#pragma once

#include <Eigen/Dense>

namespace safenav::belief {

/// x, y, heading. Heading stays in (-pi, pi].
using Pose = Eigen::Vector3d;

/// Shortest representative of the angle in (-pi, pi].
double wrap_angle(double a);

struct PoseBelief {
    Pose mean = Pose::Zero();
    Eigen::Matrix3d covariance = Eigen::Matrix3d::Identity();
};

/// Gaussian over the pose from which an object is expected to be observed.
/// A position-only viewpoint gets a huge heading variance so the update
/// leaves heading unconstrained.
struct ObjectBelief {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    Eigen::Matrix3d covariance = Eigen::Matrix3d::Identity();
};

struct OdometryControl {
    double rot1 = 0.0;
    double trans = 0.0;
    double rot2 = 0.0;
};

struct UnicycleControl {
    double v = 0.0;
    double omega = 0.0;
};

/// Rotate by rot1, drive trans along the new heading, rotate by rot2.
Pose odometry_step(const Pose& pose, const OdometryControl& u);

/// Constant-twist arc over dt; |omega| < 1e-6 rad/s falls back to the
/// straight-line limit.
Pose unicycle_step(const Pose& pose, const UnicycleControl& u, double dt);

/// (range, bearing) of the object in the robot frame, bearing in (-pi, pi].
/// Throws DegenerateGeometry when the object sits on the robot (r <= 1e-9).
Eigen::Vector2d range_bearing(const Pose& pose, const Eigen::Vector2d& object);

Eigen::Matrix3d odometry_jacobian(const Pose& pose, const OdometryControl& u);
Eigen::Matrix3d unicycle_jacobian(const Pose& pose, const UnicycleControl& u,
                                  double dt);
/// d(range, bearing) / d(pose) at the given pose.
Eigen::Matrix<double, 2, 3> range_bearing_jacobian(const Pose& pose,
                                                   const Eigen::Vector2d& object);

struct OdometryModel {
    Pose step(const Pose& p, const OdometryControl& u) const {
        return odometry_step(p, u);
    }
    Eigen::Matrix3d jacobian(const Pose& p, const OdometryControl& u) const {
        return odometry_jacobian(p, u);
    }
};

struct UnicycleModel {
    double dt = 0.1;
    Pose step(const Pose& p, const UnicycleControl& u) const {
        return unicycle_step(p, u, dt);
    }
    Eigen::Matrix3d jacobian(const Pose& p, const UnicycleControl& u) const {
        return unicycle_jacobian(p, u, dt);
    }
};

/// Linearized propagation: mean through the model, covariance F S F' + R.
template <typename Model, typename Control>
PoseBelief ekf_predict(const PoseBelief& b, const Control& u,
                       const Eigen::Matrix3d& process_noise, const Model& model) {
    PoseBelief out;
    out.mean = model.step(b.mean, u);
    out.mean[2] = wrap_angle(out.mean[2]);
    const Eigen::Matrix3d f = model.jacobian(b.mean, u);
    out.covariance = f * b.covariance * f.transpose() + process_noise;
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
    return out;
}

/// Dimension-generic Gaussian for the update cores (also covers the scalar
/// sanity cases).
struct Gaussian {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
};

/// Standard Kalman measurement update with a precomputed innovation.
/// Throws NumericRange when the innovation covariance is not positive
/// definite.
Gaussian kalman_update(const Gaussian& prior, const Eigen::MatrixXd& h,
                       const Eigen::VectorXd& innovation, const Eigen::MatrixXd& q);

/// Measurement update conditioned on the observation viewpoint: the prior is
/// first fused with the viewpoint Gaussian (mean offset, covariance), then
/// measured. The posterior covariance is computed independently in
/// information form, (H'Q^-1 H + S_prior^-1 + S_view^-1)^-1, and in gain form
/// on the fused prior; a relative gap above 1e-8 raises
/// InternalInconsistency. The mean adds both the measurement correction
/// S H'Q^-1 innovation and the viewpoint pull S S_view^-1 offset.
Gaussian kalman_update_with_object(const Gaussian& prior, const Eigen::MatrixXd& h,
                                   const Eigen::VectorXd& innovation,
                                   const Eigen::MatrixXd& q,
                                   const Eigen::VectorXd& viewpoint_offset,
                                   const Eigen::MatrixXd& viewpoint_cov);

/// Range-bearing EKF update at the predicted mean; bearing innovation
/// wrapped, posterior heading wrapped.
PoseBelief ekf_update_standard(const PoseBelief& belief, const Eigen::Vector2d& z,
                               const Eigen::Vector2d& object_position,
                               const Eigen::Matrix2d& q);

/// Same update but aware that the object's viewpoint is itself uncertain;
/// object.mean is the most likely observation pose, object.covariance its
/// spread. Heading components of the viewpoint offset are angle-wrapped.
PoseBelief ekf_update_with_object(const PoseBelief& belief, const Eigen::Vector2d& z,
                                  const ObjectBelief& object,
                                  const Eigen::Vector2d& object_position,
                                  const Eigen::Matrix2d& q);

} // namespace safenav::belief
