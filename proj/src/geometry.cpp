#include "scone/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "scone/error.hpp"
#include "scone/rng.hpp"

namespace scone {

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
    Eigen::Matrix3d m;
    m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    return m;
}

double sampson_distance(const Eigen::Matrix3d& E, const Eigen::Vector2d& x1,
                        const Eigen::Vector2d& x2) {
    const Eigen::Vector3d h1(x1.x(), x1.y(), 1.0);
    const Eigen::Vector3d h2(x2.x(), x2.y(), 1.0);
    const Eigen::Vector3d Ex1 = E * h1;
    const Eigen::Vector3d Etx2 = E.transpose() * h2;
    const double err = h2.dot(Ex1);
    const double denom =
        Ex1.x() * Ex1.x() + Ex1.y() * Ex1.y() + Etx2.x() * Etx2.x() + Etx2.y() * Etx2.y();
    if (denom < 1e-300) return std::abs(err) > 0 ? std::numeric_limits<double>::infinity() : 0.0;
    return std::abs(err) / std::sqrt(denom);
}

namespace {

std::vector<Correspondence> to_normalized(const std::vector<Correspondence>& corrs,
                                          const CameraIntrinsics& K1,
                                          const CameraIntrinsics& K2) {
    std::vector<Correspondence> out(corrs.size());
    for (size_t i = 0; i < corrs.size(); ++i)
        out[i] = {K1.normalize(corrs[i].p1), K2.normalize(corrs[i].p2)};
    return out;
}

// Least-squares epipolar solve over normalized correspondences, then
// projection onto the essential manifold (singular values 1,1,0).
Eigen::Matrix3d eight_point_normalized(const std::vector<Correspondence>& norm,
                                       const std::vector<int>* subset) {
    const int n = subset ? static_cast<int>(subset->size()) : static_cast<int>(norm.size());
    Eigen::MatrixXd A(n, 9);
    for (int r = 0; r < n; ++r) {
        const Correspondence& c = norm[subset ? (*subset)[r] : r];
        const double a = c.p1.x(), b = c.p1.y();
        const double u = c.p2.x(), v = c.p2.y();
        A.row(r) << u * a, u * b, u, v * a, v * b, v, a, b, 1.0;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    // The system needs rank 8 for a unique (up to scale) solution.
    if (sv(0) <= 0 || sv(std::min<int>(7, n - 1)) / sv(0) < 1e-12)
        throw_data("degenerate-configuration", "rank-deficient epipolar design matrix");
    const Eigen::VectorXd e = svd.matrixV().col(8);
    Eigen::Matrix3d E;
    E << e(0), e(1), e(2), e(3), e(4), e(5), e(6), e(7), e(8); // row-major assembly

    Eigen::JacobiSVD<Eigen::Matrix3d> esvd(E, Eigen::ComputeFullU | Eigen::ComputeFullV);
    return esvd.matrixU() * Eigen::Vector3d(1.0, 1.0, 0.0).asDiagonal() *
           esvd.matrixV().transpose();
}

} // namespace

EssentialMatrix normalize_and_eight_point(const std::vector<Correspondence>& corrs,
                                          const CameraIntrinsics& K1,
                                          const CameraIntrinsics& K2) {
    if (corrs.size() < 8)
        throw_data("degenerate-configuration",
                   "need at least 8 correspondences, got " + std::to_string(corrs.size()));
    const auto norm = to_normalized(corrs, K1, K2);
    return {eight_point_normalized(norm, nullptr)};
}

RansacResult ransac_essential(const std::vector<Correspondence>& corrs,
                              const CameraIntrinsics& K1, const CameraIntrinsics& K2,
                              const RansacConfig& config) {
    const int n = static_cast<int>(corrs.size());
    if (n < 8)
        throw_data("degenerate-configuration",
                   "need at least 8 correspondences, got " + std::to_string(n));
    if (config.max_iterations < 1 || config.inlier_threshold <= 0 || config.confidence <= 0 ||
        config.confidence >= 1)
        throw_data("parse", "invalid RANSAC configuration");
    const auto norm = to_normalized(corrs, K1, K2);

    // Minimal samples are drawn up front so trial results never depend on
    // scheduling; the reduction is by (inlier count, trial index).
    Rng rng = Rng(config.seed).derive("ransac");
    std::vector<std::vector<int>> samples(config.max_iterations);
    for (auto& s : samples) {
        s.reserve(8);
        while (static_cast<int>(s.size()) < 8) {
            const int idx = static_cast<int>(rng.uniform_int(n));
            if (std::find(s.begin(), s.end(), idx) == s.end()) s.push_back(idx);
        }
    }

    int best_count = -1;
    int best_trial = -1;
    Eigen::Matrix3d best_E = Eigen::Matrix3d::Zero();
    int trials_needed = config.max_iterations;

    constexpr int kChunk = 64;
    for (int chunk_lo = 0; chunk_lo < config.max_iterations && chunk_lo < trials_needed;
         chunk_lo += kChunk) {
        const int chunk_len = std::min(kChunk, config.max_iterations - chunk_lo);
        std::vector<int> counts(chunk_len, -1);
        std::vector<Eigen::Matrix3d> models(chunk_len);
#pragma omp parallel for schedule(static)
        for (int ti = 0; ti < chunk_len; ++ti) {
            try {
                const Eigen::Matrix3d E = eight_point_normalized(norm, &samples[chunk_lo + ti]);
                int count = 0;
                for (const auto& c : norm)
                    if (sampson_distance(E, c.p1, c.p2) < config.inlier_threshold) ++count;
                counts[ti] = count;
                models[ti] = E;
            } catch (const Error&) {
                counts[ti] = -1; // degenerate sample, skip
            }
        }
        for (int ti = 0; ti < chunk_len; ++ti) {
            if (counts[ti] > best_count) {
                best_count = counts[ti];
                best_trial = chunk_lo + ti;
                best_E = models[ti];
            }
        }
        if (best_count > 0) {
            // Standard adaptive trial bound from the current inlier ratio.
            const double w = static_cast<double>(best_count) / n;
            const double denom = std::log(std::max(1e-12, 1.0 - std::pow(w, 8)));
            if (denom < 0) {
                const int needed =
                    static_cast<int>(std::ceil(std::log(1.0 - config.confidence) / denom));
                trials_needed = std::min(trials_needed, std::max(needed, chunk_lo + chunk_len));
            }
        }
    }
    (void)best_trial;

    if (best_count < 8) throw_data("no-consensus", "best consensus has fewer than 8 inliers");

    std::vector<bool> inliers(n, false);
    std::vector<int> inlier_idx;
    for (int i = 0; i < n; ++i) {
        if (sampson_distance(best_E, norm[i].p1, norm[i].p2) < config.inlier_threshold) {
            inliers[i] = true;
            inlier_idx.push_back(i);
        }
    }
    // Refit on the full consensus set.
    Eigen::Matrix3d refit = best_E;
    try {
        refit = eight_point_normalized(norm, &inlier_idx);
    } catch (const Error&) {
        // keep the minimal-sample model if the refit degenerates
    }
    // Recount with the refit model; keep whichever explains more points.
    int refit_count = 0;
    for (const auto& c : norm)
        if (sampson_distance(refit, c.p1, c.p2) < config.inlier_threshold) ++refit_count;
    if (refit_count >= best_count) {
        best_E = refit;
        best_count = refit_count;
        for (int i = 0; i < n; ++i)
            inliers[i] = sampson_distance(best_E, norm[i].p1, norm[i].p2) < config.inlier_threshold;
    }

    return {{best_E}, inliers, best_count};
}

namespace {

// Linear (DLT) triangulation in normalized coordinates with P1 = [I|0],
// P2 = [R|t]. Returns the point in camera-1 coordinates.
Eigen::Vector3d triangulate(const Eigen::Matrix3d& R, const Eigen::Vector3d& t,
                            const Eigen::Vector2d& x1, const Eigen::Vector2d& x2) {
    Eigen::Matrix<double, 3, 4> P1 = Eigen::Matrix<double, 3, 4>::Zero();
    P1.block<3, 3>(0, 0).setIdentity();
    Eigen::Matrix<double, 3, 4> P2;
    P2.block<3, 3>(0, 0) = R;
    P2.col(3) = t;
    Eigen::Matrix4d A;
    A.row(0) = x1.x() * P1.row(2) - P1.row(0);
    A.row(1) = x1.y() * P1.row(2) - P1.row(1);
    A.row(2) = x2.x() * P2.row(2) - P2.row(0);
    A.row(3) = x2.y() * P2.row(2) - P2.row(1);
    Eigen::JacobiSVD<Eigen::Matrix4d> svd(A, Eigen::ComputeFullV);
    const Eigen::Vector4d X = svd.matrixV().col(3);
    if (std::abs(X(3)) < 1e-300) return Eigen::Vector3d::Constant(1e300);
    return X.head<3>() / X(3);
}

} // namespace

RelativePose decompose_essential(const EssentialMatrix& Em,
                                 const std::vector<Correspondence>& corrs,
                                 const CameraIntrinsics& K1, const CameraIntrinsics& K2) {
    if (corrs.empty()) throw_data("degenerate-configuration", "no correspondences to decompose on");
    const auto norm = to_normalized(corrs, K1, K2);

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(Em.E, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d U = svd.matrixU();
    Eigen::Matrix3d V = svd.matrixV();
    if (U.determinant() < 0) U.col(2) *= -1.0;
    if (V.determinant() < 0) V.col(2) *= -1.0;
    Eigen::Matrix3d W;
    W << 0, -1, 0, 1, 0, 0, 0, 0, 1;

    const Eigen::Matrix3d R1 = U * W * V.transpose();
    const Eigen::Matrix3d R2 = U * W.transpose() * V.transpose();
    const Eigen::Vector3d t = U.col(2);

    const std::array<std::pair<Eigen::Matrix3d, Eigen::Vector3d>, 4> candidates = {
        std::make_pair(R1, t), std::make_pair(R1, (-t).eval()),
        std::make_pair(R2, t), std::make_pair(R2, (-t).eval())};

    std::array<int, 4> counts{0, 0, 0, 0};
    for (int ci = 0; ci < 4; ++ci) {
        const auto& [R, tc] = candidates[ci];
        for (const auto& c : norm) {
            const Eigen::Vector3d X1 = triangulate(R, tc, c.p1, c.p2);
            if (!X1.allFinite() || X1.z() <= 0) continue;
            const Eigen::Vector3d X2 = R * X1 + tc;
            if (X2.z() > 0) ++counts[ci];
        }
    }

    int best = 0;
    for (int ci = 1; ci < 4; ++ci)
        if (counts[ci] > counts[best]) best = ci;
    int second = -1;
    for (int ci = 0; ci < 4; ++ci)
        if (ci != best && counts[ci] > second) second = counts[ci];
    const int n = static_cast<int>(norm.size());
    if (counts[best] <= second || counts[best] * 2 <= n)
        throw_data("cheirality-tie", "no factorization places a strict majority in front of "
                                     "both cameras (near-zero translation?)");

    RelativePose pose;
    pose.R = candidates[best].first;
    pose.t = candidates[best].second.normalized();
    pose.n_inliers = counts[best];
    return pose;
}

RelativePose estimate_relative_pose(const std::vector<Correspondence>& corrs,
                                    const CameraIntrinsics& K1, const CameraIntrinsics& K2,
                                    const RansacConfig& config) {
    const RansacResult r = ransac_essential(corrs, K1, K2, config);
    std::vector<Correspondence> inlier_corrs;
    inlier_corrs.reserve(r.n_inliers);
    for (size_t i = 0; i < corrs.size(); ++i)
        if (r.inliers[i]) inlier_corrs.push_back(corrs[i]);
    RelativePose pose = decompose_essential(r.E, inlier_corrs, K1, K2);
    pose.n_inliers = r.n_inliers;
    return pose;
}

double rotation_error(const Eigen::Matrix3d& R_est, const Eigen::Matrix3d& R_gt) {
    const Eigen::Matrix3d dR = R_est.transpose() * R_gt;
    const double d = (dR.trace() - 1.0) / 2.0;
    return std::acos(std::max(std::min(d, 1.0), -1.0));
}

double translation_error(const Eigen::Vector3d& t_est, const Eigen::Vector3d& t_gt) {
    const double gt_norm = t_gt.norm();
    if (gt_norm < 1e-12)
        throw_data("zero-translation", "ground-truth translation is zero; direction undefined");
    const Eigen::Vector3d g = t_gt / gt_norm;
    const Eigen::Vector3d e = t_est.normalized();
    return std::min((e - g).norm(), (e + g).norm());
}

bool epipolar_verify(const Eigen::Vector2d& p1, const Eigen::Vector2d& p2,
                     const CameraPose& pose1, const CameraPose& pose2,
                     const CameraIntrinsics& K1, const CameraIntrinsics& K2,
                     double threshold_px) {
    const CameraPose rel = relative_pose(pose1, pose2); // camera-1 -> camera-2
    if (rel.t.norm() < 1e-12) return true; // pure rotation: the constraint is vacuous
    const Eigen::Matrix3d E = skew(rel.t.normalized()) * rel.R;

    Eigen::Matrix3d K1m, K2m;
    K1m << K1.fx, 0, K1.cx, 0, K1.fy, K1.cy, 0, 0, 1;
    K2m << K2.fx, 0, K2.cx, 0, K2.fy, K2.cy, 0, 0, 1;
    const Eigen::Matrix3d F = K2m.inverse().transpose() * E * K1m.inverse();

    const Eigen::Vector3d h1(p1.x(), p1.y(), 1.0);
    const Eigen::Vector3d h2(p2.x(), p2.y(), 1.0);
    const Eigen::Vector3d l2 = F * h1;          // epipolar line of p1 in image 2
    const Eigen::Vector3d l1 = F.transpose() * h2;
    const double val = h2.dot(l2);
    const double n2 = std::hypot(l2.x(), l2.y());
    const double n1 = std::hypot(l1.x(), l1.y());
    if (n1 < 1e-300 || n2 < 1e-300) return std::abs(val) < 1e-300;
    const double d = std::max(std::abs(val) / n2, std::abs(val) / n1);
    return d < threshold_px;
}

} // namespace scone
