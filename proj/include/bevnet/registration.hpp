#pragma once

#include <cstdint>

#include "bevnet/heads.hpp"

namespace bevnet {

struct Correspondence {
    int index_p = -1;
    int index_q = -1;
    double descriptor_distance = 0;
};

using CorrespondenceSet = std::vector<Correspondence>;

// Mutual nearest neighbours in descriptor space; ties resolved toward the
// lower index.
CorrespondenceSet match(const std::vector<Keypoint>& keypoints_p,
                        const std::vector<Keypoint>& keypoints_q);

// Weighted Procrustes: the rigid transform mapping the q points onto the p
// points with minimal weighted squared error. Throws DegenerateError on
// rank-deficient (collinear) configurations.
RigidTransform kabsch(const std::vector<Eigen::Vector3d>& points_p,
                      const std::vector<Eigen::Vector3d>& points_q,
                      const std::vector<double>& weights = {});

struct RansacConfig {
    int max_iterations = 50000;
    double inlier_radius = 0.6;  // meters
    double early_exit_ratio = 0.9;
    std::uint64_t seed = 0;
};

struct RegistrationResult {
    RigidTransform transform;  // Q frame -> P frame
    std::vector<int> inliers;  // indices into the correspondence set
    double inlier_ratio = 0;
    int iterations = 0;
    bool success = false;  // false when fewer than 3 inliers support the model
};

// Minimal-sample (3) RANSAC with a final Kabsch refit on the best inlier set.
// Deterministic in (inputs, seed).
RegistrationResult ransac_register(const CorrespondenceSet& cs,
                                   const std::vector<Keypoint>& keypoints_p,
                                   const std::vector<Keypoint>& keypoints_q,
                                   const RansacConfig& cfg);

}  // namespace bevnet
