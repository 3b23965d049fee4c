#pragma once

#include <cstdint>
#include <string>

#include "bevnet/geometry.hpp"

namespace bevnet {

enum class StructureLabel : std::uint8_t { Ground, Wall, Pole, Clutter };

struct Scene {
    PointCloud world;
    std::vector<StructureLabel> labels;  // one per point
};

struct SceneParams {
    double extent_x = 40;  // metric footprint, centered on the origin
    double extent_y = 40;
    double ground_spacing = 0.5;
    double ground_noise = 0.06;
    int wall_count = 14;
    double wall_min_len = 4, wall_max_len = 12;
    double wall_height = 3;
    double wall_spacing = 0.35;
    int pole_count = 24;
    double pole_height = 4;
    double pole_spacing = 0.25;
    int clutter_count = 16;
    int clutter_points = 40;
    double clutter_radius = 1.2;

    // Expectation of the generated point count, matching the construction.
    double expected_point_count() const;
};

Scene generate_scene(std::uint64_t seed, const SceneParams& params);

struct ScanParams {
    double range_limit = 30;
    int azimuth_bins = 720;
    int elevation_bins = 48;
    double elevation_min = -0.60;  // radians
    double elevation_max = 0.25;
};

// Rotating-LiDAR visibility model: scene points are binned by ray direction
// and only the nearest point per ray survives. Output is in the sensor frame.
PointCloud simulate_scan(const Scene& scene, const RigidTransform& sensor_pose,
                         const ScanParams& params);

struct ScanPair {
    PointCloud cloud_p;
    PointCloud cloud_q;
    RigidTransform gt;  // Q frame -> P frame
    double distance = 0;
};

struct PairParams {
    ScanParams scan;
    double sensor_height = 1.6;
    double center_jitter = 4.0;  // random offset of the pair midpoint
};

// Two sensor poses at the given planar separation with random headings.
ScanPair make_pair(const Scene& scene, const SceneParams& scene_params, double distance,
                   std::uint64_t seed, const PairParams& params);

// Out-and-back corridor sweep for loop-closure evaluation. The corridor is
// three times longer than the base scene footprint so frames far apart along
// the path genuinely share no visible structure; the return leg passes each
// outbound pose at a small lateral offset, giving every query a true revisit.
struct LoopCorpus {
    SceneParams scene_params;
    std::vector<RigidTransform> poses;
};
LoopCorpus make_loop_corpus(const SceneParams& base, int frames, double sensor_height);

// All frame pairs (a < b) whose pose distance lies in (bucket_lo, bucket_hi].
struct KittiPair {
    int frame_p = 0;
    int frame_q = 0;
    RigidTransform gt;
    double distance = 0;
};
std::vector<KittiPair> kitti_pairs(const std::vector<RigidTransform>& poses, double bucket_lo,
                                   double bucket_hi);

// Pair manifest: one line per pair - P path, Q path, 12 gt decimals, distance.
struct ManifestEntry {
    std::string path_p;
    std::string path_q;
    RigidTransform gt;
    double distance = 0;
};
void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> load_manifest(const std::string& path);

}  // namespace bevnet
