#include "bevnet/geometry.hpp"

#include <cmath>

namespace bevnet {

namespace {
constexpr double kRigidTol = 1e-9;
}

RigidTransform::RigidTransform(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation)
    : rotation_(rotation), translation_(translation) {
    if (rigidity_residual(rotation) > kRigidTol) {
        throw DegenerateError("RigidTransform: rotation is not orthonormal with det +1");
    }
    if (!translation.allFinite()) {
        throw NumericError("RigidTransform: non-finite translation");
    }
}

RigidTransform RigidTransform::rot_z(double angle_rad, const Eigen::Vector3d& translation) {
    Eigen::Matrix3d r;
    const double c = std::cos(angle_rad), s = std::sin(angle_rad);
    r << c, -s, 0, s, c, 0, 0, 0, 1;
    return RigidTransform(r, translation);
}

RigidTransform RigidTransform::from_matrix34(const Eigen::Matrix<double, 3, 4>& m) {
    return RigidTransform(m.leftCols<3>(), m.col(3));
}

RigidTransform RigidTransform::compose(const RigidTransform& other) const {
    // Re-orthonormalize via the constructor's invariant check only; drift over
    // long chains stays below tolerance for double precision.
    return RigidTransform(rotation_ * other.rotation_, rotation_ * other.translation_ + translation_);
}

RigidTransform RigidTransform::inverse() const {
    Eigen::Matrix3d rt = rotation_.transpose();
    return RigidTransform(rt, -(rt * translation_));
}

Eigen::Matrix<double, 3, 4> RigidTransform::matrix34() const {
    Eigen::Matrix<double, 3, 4> m;
    m.leftCols<3>() = rotation_;
    m.col(3) = translation_;
    return m;
}

PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& t) {
    PointCloud out;
    out.points.reserve(cloud.points.size());
    for (const auto& p : cloud.points) out.points.push_back(t.apply(p));
    return out;
}

double rigidity_residual(const Eigen::Matrix3d& rotation) {
    const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).norm();
    const double det = std::abs(rotation.determinant() - 1.0);
    return std::max(ortho, det);
}

}  // namespace bevnet
