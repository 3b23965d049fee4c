#pragma once

#include <string>
#include <vector>

#include "bevnet/geometry.hpp"

namespace bevnet {

// KITTI velodyne .bin: x, y, z, reflectance as little-endian float32 per point.
// Reflectance is read and discarded.
PointCloud load_kitti_bin(const std::string& path);

// Same layout with reflectance written as 0; used for all internal cloud files.
void save_kitti_bin(const std::string& path, const PointCloud& cloud);

// Pose file: one 3x4 row-major pose per line, 12 whitespace-separated decimals.
std::vector<RigidTransform> load_poses(const std::string& path);
void save_poses(const std::string& path, const std::vector<RigidTransform>& poses);

}  // namespace bevnet
