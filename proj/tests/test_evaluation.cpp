#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "bevnet/evaluation.hpp"

using namespace bevnet;

TEST_CASE("overlap confusion counts match a hand-built oracle") {
    Eigen::VectorXd pred(6), truth(6);
    pred << 0.9, 0.6, 0.4, 0.5, 0.1, 0.2;
    truth << 1, 0, 1, 1, 0, 1;
    const OverlapMetrics m = overlap_metrics(pred, truth, 0.5);
    CHECK(m.tp == 2);  // 0.9/1, 0.5/1
    CHECK(m.fp == 1);  // 0.6/0
    CHECK(m.fn == 2);  // 0.4/1, 0.2/1
    CHECK(m.tn == 1);  // 0.1/0
    CHECK(*m.iou() == doctest::Approx(2.0 / 5.0));
    CHECK(*m.precision() == doctest::Approx(2.0 / 3.0));
    CHECK(*m.recall() == doctest::Approx(2.0 / 4.0));
}

TEST_CASE("undefined overlap metrics come back empty") {
    Eigen::VectorXd zeros = Eigen::VectorXd::Zero(3);
    const OverlapMetrics m = overlap_metrics(zeros, zeros, 0.5);
    CHECK(m.tn == 3);
    CHECK_FALSE(m.iou().has_value());
    CHECK_FALSE(m.precision().has_value());
    CHECK_FALSE(m.recall().has_value());
    CHECK_THROWS_AS(overlap_metrics(zeros, Eigen::VectorXd::Zero(4), 0.5), ShapeError);
}

TEST_CASE("pose errors closed forms") {
    SUBCASE("exact estimate gives zero error") {
        const RigidTransform t = RigidTransform::rot_z(0.4, {1, 2, 3});
        const auto [rte, rre] = pose_errors(t, t);
        CHECK(rte == 0.0);
        CHECK(rre == doctest::Approx(0.0).epsilon(1e-9));
    }
    SUBCASE("pure translation offset") {
        const RigidTransform gt;
        const RigidTransform est(Eigen::Matrix3d::Identity(), {3, 4, 0});
        const auto [rte, rre] = pose_errors(est, gt);
        CHECK(rte == doctest::Approx(5.0));
        CHECK(rre == doctest::Approx(0.0).epsilon(1e-9));
    }
    SUBCASE("pure rotation offset in degrees") {
        const RigidTransform gt;
        const RigidTransform est = RigidTransform::rot_z(30.0 * M_PI / 180.0);
        const auto [rte, rre] = pose_errors(est, gt);
        CHECK(rte == 0.0);
        CHECK(rre == doctest::Approx(30.0).epsilon(1e-9));
    }
    SUBCASE("error is relative to the ground truth") {
        const RigidTransform gt = RigidTransform::rot_z(0.5, {10, 0, 0});
        const RigidTransform est = RigidTransform::rot_z(0.5 + 10.0 * M_PI / 180.0, {10, 1, 0});
        const auto [rte, rre] = pose_errors(est, gt);
        CHECK(rte == doctest::Approx(1.0));
        CHECK(rre == doctest::Approx(10.0).epsilon(1e-9));
    }
}

TEST_CASE("registration recall counts strict successes only") {
    std::vector<PairOutcome> outcomes = {
        {true, 0.5, 1.0},   // success
        {true, 1.99, 4.99}, // success, just inside both strict bounds
        {true, 2.0, 1.0},   // rte at the bound: miss
        {true, 0.1, 5.0},   // rre at the bound: miss
        {false, 0.0, 0.0},  // registration failure: miss
        {true, 3.0, 9.0},   // miss
        {true, 0.2, 0.2},   // success
        {true, 1.0, 4.0},   // success
        {true, 5.0, 1.0},   // miss
        {true, 1.5, 2.5},   // success
    };
    CHECK(registration_recall(outcomes, 2.0, 5.0) == doctest::Approx(0.5));
    CHECK_THROWS_AS(registration_recall({}, 2.0, 5.0), EmptyInputError);
}

TEST_CASE("recall at 1 protocol") {
    // straight path that loops back over itself: frames 0..9 go out, 10..19
    // come back along the same line
    std::vector<RigidTransform> poses;
    for (int i = 0; i < 10; ++i)
        poses.push_back(RigidTransform(Eigen::Matrix3d::Identity(), {i * 5.0, 0, 0}));
    for (int i = 0; i < 10; ++i)
        poses.push_back(RigidTransform(Eigen::Matrix3d::Identity(), {45.0 - i * 5.0, 2.0, 0}));
    RetrievalProtocol protocol;
    protocol.exclusion_window = 3;
    protocol.success_radius = 4.0;

    SUBCASE("perfect similarity gives perfect recall") {
        auto score = [&](int a, int b) {
            return -(poses[a].translation() - poses[b].translation()).norm();
        };
        const RetrievalResult res = recall_at_1(poses, score, protocol);
        CHECK(res.queries > 0);
        CHECK(res.correct == res.queries);
        CHECK(res.recall_at_1() == doctest::Approx(1.0));
        for (int q = 0; q < 20; ++q) {
            if (res.top_choice[q] < 0) continue;
            CHECK(std::abs(res.top_choice[q] - q) > protocol.exclusion_window);
        }
    }
    SUBCASE("adversarial similarity gives zero recall") {
        auto score = [&](int a, int b) {
            return (poses[a].translation() - poses[b].translation()).norm();
        };
        const RetrievalResult res = recall_at_1(poses, score, protocol);
        CHECK(res.correct == 0);
        CHECK(res.recall_at_1() == 0.0);
    }
    SUBCASE("queries without a true candidate are skipped") {
        // isolated linear path: no frame has a distant-in-time neighbor within
        // the radius, so every query is skipped
        std::vector<RigidTransform> line;
        for (int i = 0; i < 12; ++i)
            line.push_back(RigidTransform(Eigen::Matrix3d::Identity(), {i * 20.0, 0, 0}));
        auto score = [](int, int) { return 0.0; };
        CHECK_THROWS_AS(recall_at_1(line, score, protocol), EmptyInputError);
    }
    SUBCASE("sequence shorter than the exclusion window is rejected") {
        protocol.exclusion_window = 100;
        auto score = [](int, int) { return 0.0; };
        CHECK_THROWS_AS(recall_at_1(poses, score, protocol), EmptyInputError);
    }
}

TEST_CASE("exclusion window is honoured by construction") {
    // neighbors within the window would otherwise always win: place a decoy
    // right next to each query and a true loop far away in time
    std::vector<RigidTransform> poses;
    for (int i = 0; i < 8; ++i)
        poses.push_back(RigidTransform(Eigen::Matrix3d::Identity(), {i * 1.0, 0, 0}));
    RetrievalProtocol protocol;
    protocol.exclusion_window = 2;
    protocol.success_radius = 3.5;
    int calls_inside_window = 0;
    auto score = [&](int a, int b) {
        if (std::abs(a - b) <= protocol.exclusion_window) ++calls_inside_window;
        return -(poses[a].translation() - poses[b].translation()).norm();
    };
    const RetrievalResult res = recall_at_1(poses, score, protocol);
    CHECK(calls_inside_window == 0);
    CHECK(res.queries > 0);
}
