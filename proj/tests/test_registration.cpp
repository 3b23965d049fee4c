#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "bevnet/registration.hpp"

using namespace bevnet;

namespace {

std::vector<Keypoint> make_keypoints(const std::vector<Eigen::Vector3d>& positions,
                                     const Mat& descriptors) {
    std::vector<Keypoint> out(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
        out[i].position = positions[i];
        out[i].descriptor = descriptors.row(static_cast<int>(i));
    }
    return out;
}

Mat random_mat(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = u(rng);
    return m;
}

std::vector<Eigen::Vector3d> random_points(std::mt19937_64& rng, int n, double span) {
    std::uniform_real_distribution<double> u(-span, span);
    std::vector<Eigen::Vector3d> pts(n);
    for (auto& p : pts) p = Eigen::Vector3d(u(rng), u(rng), u(rng));
    return pts;
}

}  // namespace

TEST_CASE("match equals the brute-force mutual nearest-neighbour oracle") {
    std::mt19937_64 rng(3);
    const Mat dp = random_mat(rng, 12, 4), dq = random_mat(rng, 15, 4);
    const auto kp = make_keypoints(random_points(rng, 12, 5), dp);
    const auto kq = make_keypoints(random_points(rng, 15, 5), dq);
    const CorrespondenceSet got = match(kp, kq);

    CorrespondenceSet oracle;
    for (int i = 0; i < 12; ++i) {
        int bj = 0;
        for (int j = 1; j < 15; ++j)
            if ((dp.row(i) - dq.row(j)).norm() < (dp.row(i) - dq.row(bj)).norm()) bj = j;
        int bi = 0;
        for (int i2 = 1; i2 < 12; ++i2)
            if ((dq.row(bj) - dp.row(i2)).norm() < (dq.row(bj) - dp.row(bi)).norm()) bi = i2;
        if (bi == i) oracle.push_back({i, bj, (dp.row(i) - dq.row(bj)).norm()});
    }
    REQUIRE(got.size() == oracle.size());
    for (std::size_t k = 0; k < got.size(); ++k) {
        CHECK(got[k].index_p == oracle[k].index_p);
        CHECK(got[k].index_q == oracle[k].index_q);
        CHECK(got[k].descriptor_distance ==
              doctest::Approx(oracle[k].descriptor_distance).epsilon(1e-12));
    }
    CHECK_THROWS_AS(match({}, kq), EmptyInputError);
}

TEST_CASE("identical descriptor sets match one-to-one") {
    std::mt19937_64 rng(5);
    const Mat d = random_mat(rng, 8, 3);
    const auto kp = make_keypoints(random_points(rng, 8, 5), d);
    const CorrespondenceSet got = match(kp, kp);
    REQUIRE(got.size() == 8);
    for (const auto& c : got) {
        CHECK(c.index_p == c.index_q);
        CHECK(c.descriptor_distance == 0.0);
    }
}

TEST_CASE("kabsch recovers a known transform") {
    std::mt19937_64 rng(7);
    const RigidTransform gt = RigidTransform::rot_z(0.8, {2.0, -1.5, 0.75});
    const auto q = random_points(rng, 10, 4);
    std::vector<Eigen::Vector3d> p(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) p[i] = gt.apply(q[i]);
    const RigidTransform est = kabsch(p, q);
    CHECK((est.rotation() - gt.rotation()).norm() < 1e-10);
    CHECK((est.translation() - gt.translation()).norm() < 1e-10);
    CHECK(rigidity_residual(est.rotation()) < 1e-12);
}

TEST_CASE("kabsch with a general rotation") {
    std::mt19937_64 rng(8);
    Eigen::Quaterniond quat(0.3, -0.5, 0.7, 0.1);
    quat.normalize();
    const RigidTransform gt(quat.toRotationMatrix(), {0.1, 0.2, -0.3});
    const auto q = random_points(rng, 25, 3);
    std::vector<Eigen::Vector3d> p(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) p[i] = gt.apply(q[i]);
    const RigidTransform est = kabsch(p, q);
    CHECK((est.matrix34() - gt.matrix34()).norm() < 1e-10);
}

TEST_CASE("zero-weight outliers do not disturb the kabsch fit") {
    std::mt19937_64 rng(9);
    const RigidTransform gt = RigidTransform::rot_z(-0.4, {1, 2, 3});
    auto q = random_points(rng, 8, 4);
    std::vector<Eigen::Vector3d> p(q.size());
    std::vector<double> w(q.size(), 1.0);
    for (std::size_t i = 0; i < q.size(); ++i) p[i] = gt.apply(q[i]);
    // corrupt two pairs but weight them out
    p[2] += Eigen::Vector3d(50, 0, 0);
    p[5] -= Eigen::Vector3d(0, 30, 10);
    w[2] = 0;
    w[5] = 0;
    const RigidTransform est = kabsch(p, q, w);
    CHECK((est.matrix34() - gt.matrix34()).norm() < 1e-10);
}

TEST_CASE("kabsch degenerate inputs") {
    std::vector<Eigen::Vector3d> line = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
    CHECK_THROWS_AS(kabsch(line, line), DegenerateError);
    std::vector<Eigen::Vector3d> two = {{0, 0, 0}, {1, 1, 1}};
    CHECK_THROWS_AS(kabsch(two, two), EmptyInputError);
}

TEST_CASE("ransac recovers the transform from 30 percent inliers") {
    std::mt19937_64 rng(11);
    const RigidTransform gt = RigidTransform::rot_z(0.6, {3.0, -2.0, 0.4});
    const int n = 60, inlier_count = 18;
    std::uniform_real_distribution<double> noise(-0.05, 0.05), junk(-40, 40);
    std::vector<Eigen::Vector3d> pq = random_points(rng, n, 15), pp(n);
    for (int i = 0; i < n; ++i) {
        if (i < inlier_count) {
            pp[i] = gt.apply(pq[i]) + Eigen::Vector3d(noise(rng), noise(rng), noise(rng));
        } else {
            pp[i] = Eigen::Vector3d(junk(rng), junk(rng), junk(rng));
        }
    }
    const Mat desc = random_mat(rng, n, 3);
    const auto kp = make_keypoints(pp, desc);
    const auto kq = make_keypoints(pq, desc);
    CorrespondenceSet cs;
    for (int i = 0; i < n; ++i) cs.push_back({i, i, 0.0});

    RansacConfig cfg;
    cfg.seed = 4;
    const RegistrationResult res = ransac_register(cs, kp, kq, cfg);
    CHECK(res.success);
    CHECK(static_cast<int>(res.inliers.size()) >= inlier_count - 1);
    CHECK((res.transform.rotation() - gt.rotation()).norm() < 0.02);
    CHECK((res.transform.translation() - gt.translation()).norm() < 0.1);
    for (int i : res.inliers)
        CHECK((kp[i].position - res.transform.apply(kq[i].position)).norm() <=
              cfg.inlier_radius + 1e-12);
}

TEST_CASE("ransac reports failure when no consistent model exists") {
    std::mt19937_64 rng(13);
    const int n = 10;
    // unrelated random point sets spread over a huge volume: no rigid model
    // fits any 3 pairs within the inlier radius
    const auto pp = random_points(rng, n, 200);
    const auto pq = random_points(rng, n, 200);
    const Mat desc = random_mat(rng, n, 3);
    const auto kp = make_keypoints(pp, desc);
    const auto kq = make_keypoints(pq, desc);
    CorrespondenceSet cs;
    for (int i = 0; i < n; ++i) cs.push_back({i, i, 0.0});
    RansacConfig cfg;
    cfg.max_iterations = 2000;
    cfg.seed = 5;
    const RegistrationResult res = ransac_register(cs, kp, kq, cfg);
    CHECK_FALSE(res.success);
    CHECK(res.inlier_ratio == 0.0);
    CHECK_THROWS_AS(ransac_register(CorrespondenceSet{cs.begin(), cs.begin() + 2}, kp, kq, cfg),
                    EmptyInputError);
}

TEST_CASE("ransac is deterministic and exits early on clean data") {
    std::mt19937_64 rng(17);
    const RigidTransform gt = RigidTransform::rot_z(-0.25, {1, 1, 0});
    const auto pq = random_points(rng, 30, 10);
    std::vector<Eigen::Vector3d> pp(pq.size());
    for (std::size_t i = 0; i < pq.size(); ++i) pp[i] = gt.apply(pq[i]);
    const Mat desc = random_mat(rng, 30, 3);
    const auto kp = make_keypoints(pp, desc);
    const auto kq = make_keypoints(pq, desc);
    CorrespondenceSet cs;
    for (int i = 0; i < 30; ++i) cs.push_back({i, i, 0.0});

    RansacConfig cfg;
    cfg.seed = 21;
    const RegistrationResult r1 = ransac_register(cs, kp, kq, cfg);
    const RegistrationResult r2 = ransac_register(cs, kp, kq, cfg);
    CHECK(r1.success);
    CHECK(r1.iterations == r2.iterations);
    CHECK(r1.inliers == r2.inliers);
    CHECK((r1.transform.matrix34() - r2.transform.matrix34()).norm() == 0.0);
    // all-inlier data triggers the early-exit ratio almost immediately
    CHECK(r1.iterations < 100);
    CHECK(r1.inlier_ratio == 1.0);
}
