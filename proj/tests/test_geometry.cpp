#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "scone/error.hpp"
#include "scone/geometry.hpp"
#include "scone/rng.hpp"

using namespace scone;

namespace {

struct TestScene {
    CameraIntrinsics K{500, 500, 320, 240};
    Eigen::Matrix3d R;  // camera-1 -> camera-2
    Eigen::Vector3d t;
    Eigen::Matrix3d E_gt;
    std::vector<Correspondence> corrs; // pixel coordinates
};

// Two calibrated views of random points in front of both cameras. Points
// project inside both images by construction; pixels are exact (no noise).
TestScene make_scene(uint64_t seed, int n_points, double t_scale = 1.0) {
    Rng rng(seed);
    TestScene scene;
    const Eigen::Vector3d axis =
        Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized();
    scene.R = Eigen::AngleAxisd(0.25 + 0.1 * rng.uniform(), axis).toRotationMatrix();
    scene.t = t_scale * Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized();
    scene.E_gt = skew(scene.t) * scene.R;
    while (static_cast<int>(scene.corrs.size()) < n_points) {
        const Eigen::Vector3d X(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(4, 9));
        const Eigen::Vector3d X2 = scene.R * X + scene.t;
        if (X2.z() < 0.5) continue;
        const Eigen::Vector2d p1 = scene.K.project(X);
        const Eigen::Vector2d p2 = scene.K.project(X2);
        if (p1.x() < 0 || p1.x() >= 640 || p1.y() < 0 || p1.y() >= 480) continue;
        if (p2.x() < 0 || p2.x() >= 640 || p2.y() < 0 || p2.y() >= 480) continue;
        scene.corrs.push_back({p1, p2});
    }
    return scene;
}

double essential_gap(const Eigen::Matrix3d& estimated, const Eigen::Matrix3d& gt) {
    const Eigen::Matrix3d gn = gt * (std::sqrt(2.0) / gt.norm());
    return std::min((estimated - gn).norm(), (estimated + gn).norm()) / gn.norm();
}

Eigen::Matrix3d rodrigues(double angle, const Eigen::Vector3d& axis) {
    return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

} // namespace

TEST_CASE("scene generator satisfies the epipolar identity") {
    const TestScene scene = make_scene(1, 30);
    for (const auto& c : scene.corrs) {
        const Eigen::Vector2d x1 = scene.K.normalize(c.p1);
        const Eigen::Vector2d x2 = scene.K.normalize(c.p2);
        const Eigen::Vector3d h1(x1.x(), x1.y(), 1.0), h2(x2.x(), x2.y(), 1.0);
        CHECK(std::abs(h2.dot(scene.E_gt * h1)) < 1e-12);
    }
}

TEST_CASE("eight point: noise-free residuals at numerical zero") {
    const TestScene scene = make_scene(2, 20);
    const EssentialMatrix E = normalize_and_eight_point(scene.corrs, scene.K, scene.K);
    double max_residual = 0.0;
    for (const auto& c : scene.corrs) {
        const Eigen::Vector2d x1 = scene.K.normalize(c.p1);
        const Eigen::Vector2d x2 = scene.K.normalize(c.p2);
        const Eigen::Vector3d h1(x1.x(), x1.y(), 1.0), h2(x2.x(), x2.y(), 1.0);
        max_residual = std::max(max_residual, std::abs(h2.dot(E.E * h1)));
    }
    CHECK(max_residual < 1e-9);
    CHECK(E.E.norm() == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK(essential_gap(E.E, scene.E_gt) < 1e-6);
}

TEST_CASE("eight point: degenerate configurations") {
    const TestScene scene = make_scene(3, 10);
    std::vector<Correspondence> same(10, scene.corrs[0]);
    CHECK_THROWS_WITH_AS(normalize_and_eight_point(same, scene.K, scene.K),
                         doctest::Contains("degenerate-configuration"), Error);
    std::vector<Correspondence> seven(scene.corrs.begin(), scene.corrs.begin() + 7);
    CHECK_THROWS_AS(normalize_and_eight_point(seven, scene.K, scene.K), Error);
}

TEST_CASE("sampson distance is zero on the constraint and positive off it") {
    const TestScene scene = make_scene(4, 10);
    const Eigen::Vector2d x1 = scene.K.normalize(scene.corrs[0].p1);
    const Eigen::Vector2d x2 = scene.K.normalize(scene.corrs[0].p2);
    CHECK(sampson_distance(scene.E_gt, x1, x2) < 1e-12);
    CHECK(sampson_distance(scene.E_gt, x1, x2 + Eigen::Vector2d(0.01, 0.01)) > 1e-5);
}

TEST_CASE("ransac: zero outliers means every point is an inlier") {
    const TestScene scene = make_scene(5, 40);
    RansacConfig config;
    config.seed = 9;
    const RansacResult r = ransac_essential(scene.corrs, scene.K, scene.K, config);
    CHECK(r.n_inliers == 40);
    for (bool b : r.inliers) CHECK(b);
}

TEST_CASE("ransac under 30% outliers recovers pose and inliers") {
    const TestScene scene = make_scene(6, 140);
    Rng rng(66);
    std::vector<Correspondence> corrs = scene.corrs; // first 140 are true inliers
    for (int i = 0; i < 60; ++i)
        corrs.push_back({{rng.uniform(0, 640), rng.uniform(0, 480)},
                         {rng.uniform(0, 640), rng.uniform(0, 480)}});
    RansacConfig config;
    config.seed = 7;
    const RansacResult r = ransac_essential(corrs, scene.K, scene.K, config);
    int recovered = 0;
    for (int i = 0; i < 140; ++i) recovered += r.inliers[i] ? 1 : 0;
    CHECK(recovered >= 133); // >= 95% of the true inliers

    const RelativePose pose = estimate_relative_pose(corrs, scene.K, scene.K, config);
    CHECK(rotation_error(pose.R, scene.R) < 0.5 * kPi / 180.0);
    CHECK(translation_error(pose.t, scene.t) < 0.01);
}

TEST_CASE("ransac rejects fewer than 8 correspondences") {
    const TestScene scene = make_scene(7, 7);
    RansacConfig config;
    CHECK_THROWS_AS(ransac_essential(scene.corrs, scene.K, scene.K, config), Error);
}

TEST_CASE("ransac rejects out-of-range configuration") {
    const TestScene scene = make_scene(7, 12);
    RansacConfig config;
    config.confidence = 1.0; // would degenerate the adaptive trial bound
    CHECK_THROWS_AS(ransac_essential(scene.corrs, scene.K, scene.K, config), Error);
    config.confidence = 0.999;
    config.inlier_threshold = 0.0;
    CHECK_THROWS_AS(ransac_essential(scene.corrs, scene.K, scene.K, config), Error);
}

TEST_CASE("ransac is deterministic given the seed and thread count") {
    const TestScene scene = make_scene(8, 60);
    Rng rng(88);
    std::vector<Correspondence> corrs = scene.corrs;
    for (int i = 0; i < 25; ++i)
        corrs.push_back({{rng.uniform(0, 640), rng.uniform(0, 480)},
                         {rng.uniform(0, 640), rng.uniform(0, 480)}});
    RansacConfig config;
    config.seed = 3;
    const RansacResult a = ransac_essential(corrs, scene.K, scene.K, config);
    const RansacResult b = ransac_essential(corrs, scene.K, scene.K, config);
    CHECK(a.n_inliers == b.n_inliers);
    CHECK(a.inliers == b.inliers);
    CHECK((a.E.E - b.E.E).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("decompose_essential recovers the ground-truth pose") {
    const TestScene scene = make_scene(9, 50);
    const EssentialMatrix E = normalize_and_eight_point(scene.corrs, scene.K, scene.K);
    const RelativePose pose = decompose_essential(E, scene.corrs, scene.K, scene.K);
    CHECK((pose.R - scene.R).norm() < 1e-6);
    CHECK(translation_error(pose.t, scene.t) < 1e-6);
    CHECK(is_rotation_matrix(pose.R, 1e-9));
    CHECK(pose.t.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pose.n_inliers == 50);
}

TEST_CASE("pure rotation is signalled, not silently mis-estimated") {
    // t -> 0: every skew-symmetric E fits, so the pipeline must refuse.
    Rng rng(10);
    const Eigen::Matrix3d R = rodrigues(0.3, {0.2, -0.5, 1.0});
    CameraIntrinsics K{500, 500, 320, 240};
    std::vector<Correspondence> corrs;
    while (corrs.size() < 40) {
        const Eigen::Vector3d X(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(4, 9));
        const Eigen::Vector3d X2 = R * X;
        if (X2.z() < 0.5) continue;
        const Eigen::Vector2d p1 = K.project(X), p2 = K.project(X2);
        if (p2.x() < 0 || p2.x() >= 640 || p2.y() < 0 || p2.y() >= 480) continue;
        corrs.push_back({p1, p2});
    }
    RansacConfig config;
    config.seed = 4;
    try {
        estimate_relative_pose(corrs, K, K, config);
        FAIL("expected an error for a pure-rotation scene");
    } catch (const Error& e) {
        const std::string code = e.code();
        CHECK((code == "no-consensus" || code == "cheirality-tie" ||
               code == "degenerate-configuration"));
    }
}

TEST_CASE("rotation_error basics") {
    CHECK(rotation_error(Eigen::Matrix3d::Identity(), Eigen::Matrix3d::Identity()) == 0.0);
    const Eigen::Matrix3d R = rodrigues(1.2, {1, 2, 3});
    CHECK(rotation_error(R, R) <= 1e-7); // clamp absorbs round-off, no NaN
    CHECK(std::isfinite(rotation_error(R, R)));
}

TEST_CASE("rotation_error recovers axis-angle magnitudes") {
    for (double theta : {0.1, kPi / 2, 3.0}) {
        for (const Eigen::Vector3d axis :
             {Eigen::Vector3d(0, 0, 1), Eigen::Vector3d(1, -1, 0.5), Eigen::Vector3d(2, 1, -3)}) {
            const Eigen::Matrix3d base = rodrigues(0.7, {0.3, 0.9, -0.2});
            const Eigen::Matrix3d rotated = base * rodrigues(theta, axis);
            CHECK(rotation_error(base, rotated) == doctest::Approx(theta).epsilon(1e-9));
        }
    }
}

TEST_CASE("rotation_error symmetry, bound and conjugation invariance") {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Matrix3d A =
            rodrigues(rng.uniform(0, 3), {rng.normal(), rng.normal(), rng.normal()});
        const Eigen::Matrix3d B =
            rodrigues(rng.uniform(0, 3), {rng.normal(), rng.normal(), rng.normal()});
        const Eigen::Matrix3d C =
            rodrigues(rng.uniform(0, 3), {rng.normal(), rng.normal(), rng.normal()});
        const double ab = rotation_error(A, B);
        CHECK(ab >= 0.0);
        CHECK(ab <= kPi);
        CHECK(rotation_error(B, A) == doctest::Approx(ab).epsilon(1e-12));
        CHECK(rotation_error(C * A, C * B) == doctest::Approx(ab).epsilon(1e-9));
    }
}

TEST_CASE("translation_error handles sign, scale and degenerate input") {
    const Eigen::Vector3d t(0.0, 0.0, 2.0);
    CHECK(translation_error(t.normalized(), t) == 0.0);
    CHECK(translation_error(-t.normalized(), t) == 0.0); // sign resolved
    CHECK(translation_error(Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 1, 0)) ==
          doctest::Approx(std::sqrt(2.0)));
    CHECK_THROWS_WITH_AS(translation_error(t, Eigen::Vector3d::Zero()),
                         doctest::Contains("zero-translation"), Error);
}

TEST_CASE("epipolar_verify accepts true correspondences and rejects displaced ones") {
    Rng rng(13);
    const CameraIntrinsics K{500, 500, 320, 240};
    CameraPose pose1; // identity
    CameraPose pose2;
    pose2.R = rodrigues(0.2, {0.1, 1.0, 0.3});
    pose2.t = Eigen::Vector3d(0.8, -0.2, 0.1);

    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Vector3d X(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(4, 9));
        const Eigen::Vector3d X2 = pose2.R * X + pose2.t;
        if (X2.z() < 0.5) continue;
        const Eigen::Vector2d p1 = K.project(X), p2 = K.project(X2);
        CHECK(epipolar_verify(p1, p2, pose1, pose2, K, K, 1.0));

        // displace p2 by 50 px orthogonal to its epipolar line
        const CameraPose rel = relative_pose(pose1, pose2);
        const Eigen::Matrix3d E = skew(rel.t.normalized()) * rel.R;
        Eigen::Matrix3d Km;
        Km << K.fx, 0, K.cx, 0, K.fy, K.cy, 0, 0, 1;
        const Eigen::Matrix3d F = Km.inverse().transpose() * E * Km.inverse();
        const Eigen::Vector3d l2 = F * Eigen::Vector3d(p1.x(), p1.y(), 1.0);
        const Eigen::Vector2d n = Eigen::Vector2d(l2.x(), l2.y()).normalized();
        CHECK_FALSE(epipolar_verify(p1, p2 + 50.0 * n, pose1, pose2, K, K, 3.0));
    }
}

TEST_CASE("epipolar_verify with identical cameras and points") {
    const CameraIntrinsics K{500, 500, 320, 240};
    CameraPose pose;
    pose.R = rodrigues(0.5, {1, 1, 1});
    pose.t = Eigen::Vector3d(1, 2, 3);
    CHECK(epipolar_verify({100, 100}, {100, 100}, pose, pose, K, K, 1.0));
}
