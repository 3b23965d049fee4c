#pragma once

#include <Eigen/Dense>
#include <vector>

#include "bevnet/errors.hpp"

namespace bevnet {

struct PointCloud {
    std::vector<Eigen::Vector3d> points;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

// Proper rigid motion: R orthonormal with det +1.
class RigidTransform {
public:
    RigidTransform() : rotation_(Eigen::Matrix3d::Identity()), translation_(Eigen::Vector3d::Zero()) {}
    RigidTransform(const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation);

    static RigidTransform identity() { return RigidTransform(); }
    static RigidTransform rot_z(double angle_rad, const Eigen::Vector3d& translation = Eigen::Vector3d::Zero());
    // 3x4 row-major [R | t].
    static RigidTransform from_matrix34(const Eigen::Matrix<double, 3, 4>& m);

    const Eigen::Matrix3d& rotation() const { return rotation_; }
    const Eigen::Vector3d& translation() const { return translation_; }

    Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation_ * p + translation_; }
    RigidTransform compose(const RigidTransform& other) const;  // this ∘ other
    RigidTransform inverse() const;
    Eigen::Matrix<double, 3, 4> matrix34() const;

private:
    Eigen::Matrix3d rotation_;
    Eigen::Vector3d translation_;
};

PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& t);

// Residual of R against the orthonormal det-one group, used by invariant checks.
double rigidity_residual(const Eigen::Matrix3d& rotation);

}  // namespace bevnet
