#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scone/rng.hpp"

namespace scone {

inline constexpr int kDescriptorBits = 512;
inline constexpr int kDescriptorWords = kDescriptorBits / 64;
inline constexpr double kPi = 3.14159265358979323846;

/// Fixed 512-bit binary feature descriptor. Bit i is stored in word i/64 at
/// position i%64 (bit 0 = lowest bit of word 0), matching the on-disk layout.
/// Immutable after construction.
class BinaryDescriptor {
public:
    using Words = std::array<uint64_t, kDescriptorWords>;

    BinaryDescriptor() : words_{} {}
    explicit BinaryDescriptor(const Words& words) : words_(words) {}

    bool bit(int i) const { return (words_[i >> 6] >> (i & 63)) & 1u; }
    const Words& words() const { return words_; }

    BinaryDescriptor complemented() const {
        Words w;
        for (int i = 0; i < kDescriptorWords; ++i) w[i] = ~words_[i];
        return BinaryDescriptor(w);
    }

    static BinaryDescriptor random(Rng& rng) {
        Words w;
        for (auto& word : w) word = rng.next_u64();
        return BinaryDescriptor(w);
    }

    /// 128 hex chars; the first char encodes bits 511..508, the last bits 3..0.
    std::string to_hex() const;
    static BinaryDescriptor from_hex(const std::string& hex);

    friend bool operator==(const BinaryDescriptor& a, const BinaryDescriptor& b) {
        return a.words_ == b.words_;
    }
    friend bool operator!=(const BinaryDescriptor& a, const BinaryDescriptor& b) {
        return !(a == b);
    }

private:
    Words words_;
};

/// Number of differing bit positions, in [0, 512].
int hamming_distance(const BinaryDescriptor& a, const BinaryDescriptor& b);

/// Encodes each bit as {0 -> 0.0, 1 -> 1.0}.
Eigen::VectorXd descriptor_to_real_vector(const BinaryDescriptor& d);

/// Wraps an angle into [-pi, pi).
double wrap_angle(double a);

struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    double scale = 1.0;             // pixels, > 0
    double orientation = 0.0;       // radians in [-pi, pi)
    BinaryDescriptor descriptor;
    std::optional<int64_t> landmark_id;
};

/// World-to-camera rigid transform: x_cam = R * x_world + t.
struct CameraPose {
    Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
    Eigen::Vector3d t = Eigen::Vector3d::Zero();
};

CameraPose inverse_pose(const CameraPose& p);
/// Applies a, then b: (compose(a,b)).apply(x) == b.apply(a.apply(x)).
CameraPose compose_pose(const CameraPose& a, const CameraPose& b);
/// Transform taking `from`-camera coordinates to `to`-camera coordinates.
CameraPose relative_pose(const CameraPose& from, const CameraPose& to);

bool is_rotation_matrix(const Eigen::Matrix3d& R, double tol = 1e-9);

struct CameraIntrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;

    /// Pixel -> normalized camera coordinates.
    Eigen::Vector2d normalize(const Eigen::Vector2d& px) const {
        return {(px.x() - cx) / fx, (px.y() - cy) / fy};
    }
    /// Camera-frame point -> pixel (z must be positive).
    Eigen::Vector2d project(const Eigen::Vector3d& xc) const {
        return {fx * xc.x() / xc.z() + cx, fy * xc.y() / xc.z() + cy};
    }
};

struct Keyframe {
    int64_t frame_id = 0;
    std::vector<Keypoint> keypoints;
    std::optional<CameraPose> pose;
    std::optional<CameraIntrinsics> intrinsics;
};

struct Landmark {
    int64_t landmark_id = 0;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
};

struct Dataset {
    std::optional<CameraIntrinsics> intrinsics;
    std::vector<Landmark> landmarks;
    std::vector<Keyframe> frames;
};

} // namespace scone
