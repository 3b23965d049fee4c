#include "bevnet/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>

namespace bevnet {

double SceneParams::expected_point_count() const {
    const double nx = std::floor(extent_x / ground_spacing) + 1;
    const double ny = std::floor(extent_y / ground_spacing) + 1;
    const double ground = nx * ny;
    const double wall_len = 0.5 * (wall_min_len + wall_max_len);
    const double mean_wall_h = 0.5 * (0.55 + 1.5) * wall_height;
    const double mean_pole_h = 0.5 * (0.6 + 1.5) * pole_height;
    const double walls =
        wall_count * (std::floor(wall_len / wall_spacing) + 1) * (mean_wall_h / wall_spacing + 1);
    const double poles = pole_count * (mean_pole_h / pole_spacing + 1);
    const double clutter = static_cast<double>(clutter_count) * clutter_points;
    return ground + walls + poles + clutter;
}

Scene generate_scene(std::uint64_t seed, const SceneParams& p) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(-p.extent_x / 2, p.extent_x / 2);
    std::uniform_real_distribution<double> uy(-p.extent_y / 2, p.extent_y / 2);
    std::uniform_real_distribution<double> angle(0, 2 * M_PI);
    std::normal_distribution<double> gnoise(0.0, p.ground_noise);

    Scene scene;
    auto put = [&](double x, double y, double z, StructureLabel l) {
        scene.world.points.emplace_back(x, y, z);
        scene.labels.push_back(l);
    };

    const int nx = static_cast<int>(std::floor(p.extent_x / p.ground_spacing)) + 1;
    const int ny = static_cast<int>(std::floor(p.extent_y / p.ground_spacing)) + 1;
    for (int ix = 0; ix < nx; ++ix) {
        for (int iy = 0; iy < ny; ++iy) {
            put(-p.extent_x / 2 + ix * p.ground_spacing, -p.extent_y / 2 + iy * p.ground_spacing,
                gnoise(rng), StructureLabel::Ground);
        }
    }

    // Orientations and heights vary so structures stay locally distinctive;
    // identical axis-aligned walls make distant places look alike in BEV and
    // give rigid registration spurious 90/180 degree solutions.
    std::uniform_real_distribution<double> wall_len(p.wall_min_len, p.wall_max_len);
    std::uniform_real_distribution<double> wall_h(0.55 * p.wall_height, 1.5 * p.wall_height);
    for (int w = 0; w < p.wall_count; ++w) {
        const double x0 = ux(rng), y0 = uy(rng);
        const double len = wall_len(rng);
        const double h = wall_h(rng);
        const double th = angle(rng);
        const Eigen::Vector2d dir(std::cos(th), std::sin(th));
        const int nl = static_cast<int>(std::floor(len / p.wall_spacing)) + 1;
        const int nh = static_cast<int>(std::floor(h / p.wall_spacing)) + 1;
        for (int a = 0; a < nl; ++a) {
            for (int b = 0; b < nh; ++b) {
                put(x0 + a * p.wall_spacing * dir.x(), y0 + a * p.wall_spacing * dir.y(),
                    b * p.wall_spacing, StructureLabel::Wall);
            }
        }
    }

    std::uniform_real_distribution<double> pole_h(0.6 * p.pole_height, 1.5 * p.pole_height);
    for (int q = 0; q < p.pole_count; ++q) {
        const double x = ux(rng), y = uy(rng);
        const int nh = static_cast<int>(std::floor(pole_h(rng) / p.pole_spacing)) + 1;
        for (int b = 0; b < nh; ++b) put(x, y, b * p.pole_spacing, StructureLabel::Pole);
    }

    std::normal_distribution<double> blob(0.0, 1.0);
    std::uniform_real_distribution<double> blob_z(0.2, 3.0);
    std::uniform_real_distribution<double> blob_r(0.5, 1.6);
    for (int c = 0; c < p.clutter_count; ++c) {
        const double cx = ux(rng), cy = uy(rng), cz = blob_z(rng);
        const double r = p.clutter_radius * blob_r(rng);
        for (int q = 0; q < p.clutter_points; ++q) {
            put(cx + r * blob(rng) * 0.4, cy + r * blob(rng) * 0.4,
                std::max(0.0, cz + r * blob(rng) * 0.3), StructureLabel::Clutter);
        }
    }
    return scene;
}

PointCloud simulate_scan(const Scene& scene, const RigidTransform& sensor_pose,
                         const ScanParams& p) {
    const RigidTransform world_to_sensor = sensor_pose.inverse();
    const double az_step = 2 * M_PI / p.azimuth_bins;
    const double el_step = (p.elevation_max - p.elevation_min) / p.elevation_bins;
    // nearest hit per (azimuth, elevation) ray bin
    std::unordered_map<std::int64_t, std::pair<double, Eigen::Vector3d>> hits;
    for (const auto& wp : scene.world.points) {
        const Eigen::Vector3d s = world_to_sensor.apply(wp);
        const double range = s.norm();
        if (range < 1e-6 || range > p.range_limit) continue;
        const double az = std::atan2(s.y(), s.x());
        const double el = std::asin(s.z() / range);
        if (el < p.elevation_min || el > p.elevation_max) continue;
        const int ai = std::min(static_cast<int>(std::floor((az + M_PI) / az_step)),
                                p.azimuth_bins - 1);
        const int ei = std::min(static_cast<int>(std::floor((el - p.elevation_min) / el_step)),
                                p.elevation_bins - 1);
        const std::int64_t key = static_cast<std::int64_t>(ai) * p.elevation_bins + ei;
        auto it = hits.find(key);
        if (it == hits.end() || range < it->second.first) hits[key] = {range, s};
    }
    // deterministic output order regardless of hash layout
    std::vector<std::pair<std::int64_t, Eigen::Vector3d>> ordered;
    ordered.reserve(hits.size());
    for (const auto& [key, hit] : hits) ordered.emplace_back(key, hit.second);
    std::sort(ordered.begin(), ordered.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    PointCloud out;
    out.points.reserve(ordered.size());
    for (const auto& [key, pt] : ordered) out.points.push_back(pt);
    return out;
}

ScanPair make_pair(const Scene& scene, const SceneParams& scene_params, double distance,
                   std::uint64_t seed, const PairParams& p) {
    if (distance < 0) throw ConfigError("make_pair: negative distance");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> angle(0, 2 * M_PI);
    std::uniform_real_distribution<double> jitter(-p.center_jitter, p.center_jitter);
    const double half_x = scene_params.extent_x / 2 - 1.0;
    const double half_y = scene_params.extent_y / 2 - 1.0;
    for (int attempt = 0; attempt < 200; ++attempt) {
        const Eigen::Vector2d mid(jitter(rng), jitter(rng));
        const double heading = angle(rng);
        const Eigen::Vector2d dir(std::cos(heading), std::sin(heading));
        const Eigen::Vector2d pos_p = mid - 0.5 * distance * dir;
        const Eigen::Vector2d pos_q = mid + 0.5 * distance * dir;
        if (std::abs(pos_p.x()) > half_x || std::abs(pos_p.y()) > half_y ||
            std::abs(pos_q.x()) > half_x || std::abs(pos_q.y()) > half_y)
            continue;
        const RigidTransform pose_p = RigidTransform::rot_z(
            angle(rng), Eigen::Vector3d(pos_p.x(), pos_p.y(), p.sensor_height));
        const RigidTransform pose_q = RigidTransform::rot_z(
            angle(rng), Eigen::Vector3d(pos_q.x(), pos_q.y(), p.sensor_height));
        ScanPair pair;
        pair.cloud_p = simulate_scan(scene, pose_p, p.scan);
        pair.cloud_q = simulate_scan(scene, pose_q, p.scan);
        pair.gt = pose_p.inverse().compose(pose_q);
        pair.distance = distance;
        return pair;
    }
    throw ConfigError("make_pair: could not place both sensors inside the scene extent");
}

LoopCorpus make_loop_corpus(const SceneParams& base, int frames, double sensor_height) {
    if (frames < 4) throw ConfigError("make_loop_corpus: need at least 4 frames");
    LoopCorpus c;
    c.scene_params = base;
    c.scene_params.extent_x = 3.0 * base.extent_x;
    c.scene_params.extent_y = 0.75 * base.extent_y;
    const double area = (c.scene_params.extent_x * c.scene_params.extent_y) /
                        (base.extent_x * base.extent_y);
    c.scene_params.wall_count = std::max(1, static_cast<int>(std::lround(base.wall_count * area)));
    c.scene_params.pole_count = std::max(1, static_cast<int>(std::lround(base.pole_count * area)));
    c.scene_params.clutter_count =
        std::max(1, static_cast<int>(std::lround(base.clutter_count * area)));
    const int n_out = frames / 2;
    const int n_back = frames - n_out;
    const double half = 0.4 * c.scene_params.extent_x;
    for (int i = 0; i < frames; ++i) {
        double x, y, yaw;
        if (i < n_out) {
            x = -half + 2.0 * half * i / std::max(1, n_out - 1);
            y = -0.25;
            yaw = 0.0;
        } else {
            const int j = i - n_out;
            x = half - 2.0 * half * j / std::max(1, n_back - 1);
            y = 0.25;
            yaw = M_PI;
        }
        c.poses.push_back(RigidTransform::rot_z(yaw, Eigen::Vector3d(x, y, sensor_height)));
    }
    return c;
}

std::vector<KittiPair> kitti_pairs(const std::vector<RigidTransform>& poses, double bucket_lo,
                                   double bucket_hi) {
    std::vector<KittiPair> out;
    const int n = static_cast<int>(poses.size());
    for (int a = 0; a < n; ++a) {
        for (int b = a + 1; b < n; ++b) {
            const double d = (poses[a].translation() - poses[b].translation()).norm();
            if (d > bucket_lo && d <= bucket_hi) {
                KittiPair pair;
                pair.frame_p = a;
                pair.frame_q = b;
                pair.gt = poses[a].inverse().compose(poses[b]);
                pair.distance = d;
                out.push_back(std::move(pair));
            }
        }
    }
    return out;
}

void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("save_manifest: cannot open " + path);
    char buf[32];
    for (const auto& e : entries) {
        out << e.path_p << " " << e.path_q;
        const auto m = e.gt.matrix34();
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 4; ++c) {
                std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
                out << " " << buf;
            }
        }
        std::snprintf(buf, sizeof(buf), "%.17g", e.distance);
        out << " " << buf << "\n";
    }
    if (!out) throw IoError("save_manifest: write failed on " + path);
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_manifest: cannot open " + path);
    std::vector<ManifestEntry> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ss(line);
        ManifestEntry e;
        Eigen::Matrix<double, 3, 4> m;
        bool ok = static_cast<bool>(ss >> e.path_p >> e.path_q);
        for (int r = 0; ok && r < 3; ++r)
            for (int c = 0; ok && c < 4; ++c) ok = static_cast<bool>(ss >> m(r, c));
        ok = ok && static_cast<bool>(ss >> e.distance);
        if (!ok)
            throw FormatError("load_manifest: malformed line " + std::to_string(lineno) + " in " +
                              path);
        e.gt = RigidTransform::from_matrix34(m);
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace bevnet
