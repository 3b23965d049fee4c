#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "bevnet/dataset.hpp"

using namespace bevnet;

TEST_CASE("scene generation is deterministic in the seed") {
    const SceneParams p;
    const Scene a = generate_scene(42, p);
    const Scene b = generate_scene(42, p);
    const Scene c = generate_scene(43, p);
    REQUIRE(a.world.size() == b.world.size());
    for (std::size_t i = 0; i < a.world.size(); ++i)
        CHECK(a.world.points[i] == b.world.points[i]);
    CHECK(a.labels == b.labels);
    // a different seed moves at least the structures
    bool differs = a.world.size() != c.world.size();
    for (std::size_t i = 0; !differs && i < a.world.size(); ++i)
        differs = a.world.points[i] != c.world.points[i];
    CHECK(differs);
}

TEST_CASE("ground-only scene") {
    SceneParams p;
    p.wall_count = 0;
    p.pole_count = 0;
    p.clutter_count = 0;
    const Scene s = generate_scene(7, p);
    const int nx = static_cast<int>(std::floor(p.extent_x / p.ground_spacing)) + 1;
    const int ny = static_cast<int>(std::floor(p.extent_y / p.ground_spacing)) + 1;
    CHECK(s.world.size() == static_cast<std::size_t>(nx) * ny);
    for (const auto l : s.labels) CHECK(l == StructureLabel::Ground);
    for (const auto& pt : s.world.points) CHECK(std::abs(pt.z()) < 6 * p.ground_noise + 1e-9);
}

TEST_CASE("scene point count tracks the expectation over 20 seeds") {
    const SceneParams p;
    double total = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed)
        total += static_cast<double>(generate_scene(seed, p).world.size());
    const double mean = total / 20.0;
    const double expected = p.expected_point_count();
    CHECK(std::abs(mean - expected) / expected < 0.10);
}

TEST_CASE("scan of an empty scene is empty") {
    CHECK(simulate_scan(Scene{}, RigidTransform::identity(), ScanParams{}).empty());
}

TEST_CASE("scan returns a single visible point in the sensor frame") {
    Scene s;
    s.world.points = {{3, 1, 0.2}};
    s.labels = {StructureLabel::Pole};
    const RigidTransform pose = RigidTransform::rot_z(0.5, {1, 2, 0});
    const PointCloud scan = simulate_scan(s, pose, ScanParams{});
    REQUIRE(scan.size() == 1);
    CHECK((scan.points[0] - pose.inverse().apply(Eigen::Vector3d(3, 1, 0.2))).norm() < 1e-12);
}

TEST_CASE("occluders hide collinear points behind them") {
    Scene s;
    s.world.points = {{10, 0, 0}, {5, 0, 0}};
    s.labels = {StructureLabel::Wall, StructureLabel::Wall};
    const PointCloud scan = simulate_scan(s, RigidTransform::identity(), ScanParams{});
    REQUIRE(scan.size() == 1);
    CHECK((scan.points[0] - Eigen::Vector3d(5, 0, 0)).norm() < 1e-12);
}

TEST_CASE("scan respects the range limit") {
    Scene s;
    s.world.points = {{10, 0, 0}, {40, 5, 0}};
    s.labels = {StructureLabel::Pole, StructureLabel::Pole};
    ScanParams p;
    p.range_limit = 30;
    const PointCloud scan = simulate_scan(s, RigidTransform::identity(), p);
    REQUIRE(scan.size() == 1);
    CHECK(scan.points[0].x() == doctest::Approx(10.0));
}

TEST_CASE("pair construction geometry") {
    const SceneParams sp;
    const Scene scene = generate_scene(11, sp);
    const PairParams pp;

    SUBCASE("zero distance gives a pure yaw gt") {
        const ScanPair pair = make_pair(scene, sp, 0.0, 3, pp);
        CHECK(pair.gt.translation().norm() < 1e-9);
        CHECK(rigidity_residual(pair.gt.rotation()) < 1e-12);
        // yaw-only: the z axis is fixed
        CHECK((pair.gt.rotation() * Eigen::Vector3d::UnitZ() - Eigen::Vector3d::UnitZ()).norm() <
              1e-12);
    }
    SUBCASE("gt translation norm equals the requested distance") {
        for (const double d : {5.0, 12.0, 24.0}) {
            const ScanPair pair = make_pair(scene, sp, d, 5, pp);
            CHECK(pair.gt.translation().norm() == doctest::Approx(d).epsilon(1e-6));
            CHECK(pair.gt.translation().z() == doctest::Approx(0.0).epsilon(1e-9));
            CHECK(pair.distance == d);
        }
    }
    SUBCASE("deterministic in the seed") {
        const ScanPair a = make_pair(scene, sp, 8.0, 9, pp);
        const ScanPair b = make_pair(scene, sp, 8.0, 9, pp);
        REQUIRE(a.cloud_p.size() == b.cloud_p.size());
        for (std::size_t i = 0; i < a.cloud_p.size(); ++i)
            CHECK(a.cloud_p.points[i] == b.cloud_p.points[i]);
        CHECK((a.gt.matrix34() - b.gt.matrix34()).norm() == 0.0);
    }
    SUBCASE("unplaceable distance raises an extent error") {
        CHECK_THROWS_AS(make_pair(scene, sp, 500.0, 1, pp), ConfigError);
    }
}

TEST_CASE("pair clouds overlap under the ground-truth transform") {
    const SceneParams sp;
    const Scene scene = generate_scene(13, sp);
    const ScanPair pair = make_pair(scene, sp, 6.0, 17, PairParams{});
    REQUIRE(pair.cloud_p.size() > 500);
    REQUIRE(pair.cloud_q.size() > 500);
    // a transformed Q point should usually have a P point nearby: both scans
    // sample the same world surfaces
    int close = 0, tested = 0;
    for (std::size_t j = 0; j < pair.cloud_q.size(); j += 25) {
        const Eigen::Vector3d q = pair.gt.apply(pair.cloud_q.points[j]);
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : pair.cloud_p.points) best = std::min(best, (p - q).norm());
        close += best < 0.5;
        ++tested;
    }
    CHECK(static_cast<double>(close) / tested > 0.5);
}

TEST_CASE("kitti pair bucketing") {
    std::vector<RigidTransform> poses = {
        RigidTransform::identity(),
        RigidTransform::rot_z(0.2, {15, 0, 0}),
        RigidTransform::rot_z(-0.1, {36, 0, 0}),
    };

    SUBCASE("degenerate bucket is empty") { CHECK(kitti_pairs(poses, 0, 0).empty()); }
    SUBCASE("hand-computed distances select exactly one pair") {
        const auto pairs = kitti_pairs(poses, 10, 20);
        REQUIRE(pairs.size() == 1);
        CHECK(pairs[0].frame_p == 0);
        CHECK(pairs[0].frame_q == 1);
        CHECK(pairs[0].distance == doctest::Approx(15.0));
        const RigidTransform expect = poses[0].inverse().compose(poses[1]);
        CHECK((pairs[0].gt.matrix34() - expect.matrix34()).norm() < 1e-12);
    }
    SUBCASE("every returned distance lies in the bucket") {
        for (const auto& pr : kitti_pairs(poses, 10, 40)) {
            CHECK(pr.distance > 10);
            CHECK(pr.distance <= 40);
        }
        CHECK(kitti_pairs(poses, 10, 40).size() == 3);
    }
}

TEST_CASE("manifest round trip") {
    const auto path = std::filesystem::temp_directory_path() / "bevnet_test_manifest.txt";
    std::vector<ManifestEntry> entries(2);
    entries[0] = {"a/p0.bin", "a/q0.bin", RigidTransform::rot_z(0.37, {1.25, -3.5, 0.0625}), 12.5};
    entries[1] = {"b/p1.bin", "b/q1.bin", RigidTransform::identity(), 0.0};
    save_manifest(path.string(), entries);
    const auto back = load_manifest(path.string());
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(back[i].path_p == entries[i].path_p);
        CHECK(back[i].path_q == entries[i].path_q);
        CHECK((back[i].gt.matrix34() - entries[i].gt.matrix34()).norm() == 0.0);
        CHECK(back[i].distance == entries[i].distance);
    }

    std::ofstream(path) << "only_one_token\n";
    CHECK_THROWS_AS(load_manifest(path.string()), FormatError);
    std::filesystem::remove(path);
}
