#pragma once

#include <Eigen/Dense>
#include <vector>

#include "scone/types.hpp"

namespace scone {

/// A pixel correspondence between two views.
struct Correspondence {
    Eigen::Vector2d p1, p2;
};

/// Essential matrix, kept on the essential manifold: singular values (1,1,0),
/// Frobenius norm sqrt(2).
struct EssentialMatrix {
    Eigen::Matrix3d E;
};

struct RansacConfig {
    int max_iterations = 2000;
    double inlier_threshold = 1e-3; // Sampson distance, normalized coordinates
    double confidence = 0.999;
    uint64_t seed = 0;
};

struct RelativePose {
    Eigen::Matrix3d R;
    Eigen::Vector3d t; // unit direction
    int n_inliers = 0;
};

Eigen::Matrix3d skew(const Eigen::Vector3d& v);

/// First-order geometric (Sampson) distance of a normalized-coordinate
/// correspondence to the epipolar constraint of E.
double sampson_distance(const Eigen::Matrix3d& E, const Eigen::Vector2d& x1,
                        const Eigen::Vector2d& x2);

/// Normalized 8-point solve over all given pixel correspondences: converts to
/// camera coordinates, solves the linear epipolar system by least squares, and
/// projects onto the essential manifold. Throws "degenerate-configuration"
/// when the design matrix is rank deficient.
EssentialMatrix normalize_and_eight_point(const std::vector<Correspondence>& corrs,
                                          const CameraIntrinsics& K1, const CameraIntrinsics& K2);

struct RansacResult {
    EssentialMatrix E;
    std::vector<bool> inliers;
    int n_inliers = 0;
};

/// RANSAC over 8-point minimal samples with Sampson scoring and a final
/// refit on the consensus set. Deterministic given config.seed; trials run
/// in parallel with a reduction that is independent of the thread count
/// (best inlier count, ties by lower trial index).
RansacResult ransac_essential(const std::vector<Correspondence>& corrs,
                              const CameraIntrinsics& K1, const CameraIntrinsics& K2,
                              const RansacConfig& config);

/// Picks the (R, t) factorization with the most points in front of both
/// cameras. Throws "cheirality-tie" when no factorization wins strictly.
RelativePose decompose_essential(const EssentialMatrix& E,
                                 const std::vector<Correspondence>& corrs,
                                 const CameraIntrinsics& K1, const CameraIntrinsics& K2);

/// Full pipeline: RANSAC, refit, decomposition on the inlier set.
RelativePose estimate_relative_pose(const std::vector<Correspondence>& corrs,
                                    const CameraIntrinsics& K1, const CameraIntrinsics& K2,
                                    const RansacConfig& config);

/// acos(clamp((tr(R_est^T R_gt) - 1)/2, -1, 1)), radians in [0, pi].
double rotation_error(const Eigen::Matrix3d& R_est, const Eigen::Matrix3d& R_gt);

/// Direction difference between unit translations, after resolving the sign
/// ambiguity of t_est. Throws "zero-translation" if t_gt is (near) zero.
double translation_error(const Eigen::Vector3d& t_est, const Eigen::Vector3d& t_gt);

/// Ground-truth epipolar check: composes the relative pose of the two views,
/// builds E, and tests the symmetric epipolar distance in pixels.
bool epipolar_verify(const Eigen::Vector2d& p1, const Eigen::Vector2d& p2,
                     const CameraPose& pose1, const CameraPose& pose2,
                     const CameraIntrinsics& K1, const CameraIntrinsics& K2,
                     double threshold_px);

} // namespace scone
