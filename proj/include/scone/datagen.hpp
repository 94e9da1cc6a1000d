#pragma once

#include <utility>
#include <vector>

#include "scone/config.hpp"
#include "scone/rng.hpp"
#include "scone/types.hpp"

namespace scone {

enum class TrajectoryKind { orbit, line };

struct WorldConfig {
    int n_landmarks = 200;
    double world_extent = 10.0; // landmarks uniform in a centred cube of this side
    int n_frames = 30;
    TrajectoryKind trajectory = TrajectoryKind::orbit;
    double orbit_radius = 25.0;
    double orbit_step_deg = 5.0;
    Eigen::Vector3d line_origin = {25.0, 0.0, 0.0};
    Eigen::Vector3d line_step = {0.0, 0.5, 0.0};
    int image_width = 640;
    int image_height = 480;
    CameraIntrinsics intrinsics = {520.0, 520.0, 320.0, 240.0};
    double descriptor_noise = 0.0;   // per-bit flip probability, [0, 0.5)
    double unlinked_fraction = 0.0;  // extra clutter keypoints per frame
    int duplicate_descriptor_groups = 0;
    uint64_t seed = 1;
    double base_scale = 16.0;        // keypoint scale at the reference depth
    double orientation_jitter = 0.02;
    bool quantize_pixels = false;    // round to 0.1 px when set
};

WorldConfig load_world_config(const std::string& path);

struct World {
    std::vector<Landmark> landmarks;
    std::vector<BinaryDescriptor> descriptors;   // per landmark ground truth
    std::vector<double> base_orientations;       // per landmark
    std::vector<CameraPose> trajectory;
    double depth_ref = 1.0;
};

/// Landmarks uniform in the world cube, one ground-truth descriptor each
/// (grouped landmarks share a descriptor and a canonical orientation when
/// duplicate_descriptor_groups > 0, so only the surrounding keypoint layout
/// can tell group members apart; otherwise all descriptors are pairwise
/// distinct), and a camera trajectory whose every pose faces the landmark
/// cloud. Deterministic given the seed.
World generate_world(const WorldConfig& config);

/// Projects visible landmarks through the pose, flips descriptor bits with
/// probability descriptor_noise, synthesizes depth-consistent scales and
/// jittered per-landmark orientations, and appends unlinked clutter.
Keyframe render_keyframe(const World& world, const CameraPose& pose, const WorldConfig& config,
                         Rng& rng);

/// World generation plus all frames, as one dataset.
Dataset generate_dataset(const WorldConfig& config);

/// Splits frames into a train prefix and validation suffix; the validation
/// side always keeps at least one frame. Both share the landmark table.
std::pair<Dataset, Dataset> make_split(const Dataset& dataset, double train_fraction);

} // namespace scone
