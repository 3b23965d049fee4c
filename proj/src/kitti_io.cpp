#include "bevnet/kitti_io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace bevnet {

PointCloud load_kitti_bin(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("load_kitti_bin: cannot open " + path);
    const std::streamoff size = in.tellg();
    if (size % 16 != 0) {
        throw FormatError("load_kitti_bin: file length " + std::to_string(size) +
                          " is not a multiple of 16: " + path);
    }
    in.seekg(0);
    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(size / 16));
    float rec[4];
    for (std::streamoff off = 0; off < size; off += 16) {
        in.read(reinterpret_cast<char*>(rec), 16);
        if (!in) throw IoError("load_kitti_bin: short read on " + path);
        cloud.points.emplace_back(rec[0], rec[1], rec[2]);
    }
    return cloud;
}

void save_kitti_bin(const std::string& path, const PointCloud& cloud) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("save_kitti_bin: cannot open " + path);
    for (const auto& p : cloud.points) {
        const float rec[4] = {static_cast<float>(p.x()), static_cast<float>(p.y()),
                              static_cast<float>(p.z()), 0.0f};
        out.write(reinterpret_cast<const char*>(rec), 16);
    }
    if (!out) throw IoError("save_kitti_bin: write failed on " + path);
}

std::vector<RigidTransform> load_poses(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_poses: cannot open " + path);
    std::vector<RigidTransform> poses;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ss(line);
        Eigen::Matrix<double, 3, 4> m;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 4; ++c) {
                if (!(ss >> m(r, c))) {
                    throw FormatError("load_poses: line " + std::to_string(lineno) +
                                      " does not hold 12 decimals: " + path);
                }
            }
        }
        double extra;
        if (ss >> extra) {
            throw FormatError("load_poses: line " + std::to_string(lineno) +
                              " has trailing values: " + path);
        }
        poses.push_back(RigidTransform::from_matrix34(m));
    }
    return poses;
}

void save_poses(const std::string& path, const std::vector<RigidTransform>& poses) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("save_poses: cannot open " + path);
    char buf[32];
    for (const auto& pose : poses) {
        const auto m = pose.matrix34();
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 4; ++c) {
                std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
                out << buf << (r == 2 && c == 3 ? "" : " ");
            }
        }
        out << "\n";
    }
    if (!out) throw IoError("save_poses: write failed on " + path);
}

}  // namespace bevnet
