#include "scone/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "scone/error.hpp"

namespace scone {

WorldConfig load_world_config(const std::string& path) {
    const ConfigMap cfg = ConfigMap::parse_file(path);
    cfg.require_known_keys({"n_landmarks", "world_extent", "n_frames", "trajectory",
                            "orbit_radius", "orbit_step_deg", "line_origin_x", "line_origin_y",
                            "line_origin_z", "line_step_x", "line_step_y", "line_step_z",
                            "image_width", "image_height", "fx", "fy", "cx", "cy",
                            "descriptor_noise", "unlinked_fraction",
                            "duplicate_descriptor_groups", "seed", "base_scale",
                            "orientation_jitter", "quantize_pixels"});
    WorldConfig c;
    c.n_landmarks = cfg.get_int("n_landmarks", c.n_landmarks);
    c.world_extent = cfg.get_double("world_extent", c.world_extent);
    c.n_frames = cfg.get_int("n_frames", c.n_frames);
    const std::string traj = cfg.get_string("trajectory", "orbit");
    if (traj == "orbit")
        c.trajectory = TrajectoryKind::orbit;
    else if (traj == "line")
        c.trajectory = TrajectoryKind::line;
    else
        throw_data("parse", "trajectory must be 'orbit' or 'line', got '" + traj + "'");
    c.orbit_radius = cfg.get_double("orbit_radius", c.orbit_radius);
    c.orbit_step_deg = cfg.get_double("orbit_step_deg", c.orbit_step_deg);
    c.line_origin = {cfg.get_double("line_origin_x", c.line_origin.x()),
                     cfg.get_double("line_origin_y", c.line_origin.y()),
                     cfg.get_double("line_origin_z", c.line_origin.z())};
    c.line_step = {cfg.get_double("line_step_x", c.line_step.x()),
                   cfg.get_double("line_step_y", c.line_step.y()),
                   cfg.get_double("line_step_z", c.line_step.z())};
    c.image_width = cfg.get_int("image_width", c.image_width);
    c.image_height = cfg.get_int("image_height", c.image_height);
    c.intrinsics.fx = cfg.get_double("fx", c.intrinsics.fx);
    c.intrinsics.fy = cfg.get_double("fy", c.intrinsics.fy);
    c.intrinsics.cx = cfg.get_double("cx", c.intrinsics.cx);
    c.intrinsics.cy = cfg.get_double("cy", c.intrinsics.cy);
    c.descriptor_noise = cfg.get_double("descriptor_noise", c.descriptor_noise);
    c.unlinked_fraction = cfg.get_double("unlinked_fraction", c.unlinked_fraction);
    c.duplicate_descriptor_groups =
        cfg.get_int("duplicate_descriptor_groups", c.duplicate_descriptor_groups);
    c.seed = cfg.get_u64("seed", c.seed);
    c.base_scale = cfg.get_double("base_scale", c.base_scale);
    c.orientation_jitter = cfg.get_double("orientation_jitter", c.orientation_jitter);
    c.quantize_pixels = cfg.get_int("quantize_pixels", c.quantize_pixels ? 1 : 0) != 0;

    if (c.n_landmarks < 0 || c.n_frames < 0 || c.world_extent <= 0 ||
        c.descriptor_noise < 0 || c.descriptor_noise >= 0.5 || c.unlinked_fraction < 0 ||
        c.unlinked_fraction >= 1.0 || c.duplicate_descriptor_groups < 0 ||
        c.intrinsics.fx <= 0 || c.intrinsics.fy <= 0 || c.base_scale <= 0)
        throw_data("parse", "world config value out of range");
    return c;
}

namespace {

// World-to-camera look-at with world up (0,0,1); camera x right, y down,
// z forward.
CameraPose look_at(const Eigen::Vector3d& center, const Eigen::Vector3d& target) {
    const Eigen::Vector3d fwd = (target - center).normalized();
    const Eigen::Vector3d up(0.0, 0.0, 1.0);
    Eigen::Vector3d right = fwd.cross(up);
    if (right.norm() < 1e-9) right = fwd.cross(Eigen::Vector3d(0.0, 1.0, 0.0));
    right.normalize();
    const Eigen::Vector3d down = fwd.cross(right).normalized();
    CameraPose pose;
    pose.R.row(0) = right.transpose();
    pose.R.row(1) = down.transpose();
    pose.R.row(2) = fwd.transpose();
    pose.t = -(pose.R * center);
    return pose;
}

} // namespace

World generate_world(const WorldConfig& config) {
    World world;
    Rng master(config.seed);

    Rng lm_rng = master.derive("landmarks");
    world.landmarks.resize(config.n_landmarks);
    const double half = config.world_extent / 2.0;
    for (int i = 0; i < config.n_landmarks; ++i) {
        world.landmarks[i].landmark_id = i;
        world.landmarks[i].position = {lm_rng.uniform(-half, half), lm_rng.uniform(-half, half),
                                       lm_rng.uniform(-half, half)};
    }

    Rng desc_rng = master.derive("descriptors");
    if (config.duplicate_descriptor_groups > 0) {
        // Each group shares one descriptor, so descriptors alone cannot
        // distinguish group members; keypoint geometry becomes the only cue.
        std::vector<BinaryDescriptor> group_desc(config.duplicate_descriptor_groups);
        for (auto& d : group_desc) d = BinaryDescriptor::random(desc_rng);
        world.descriptors.resize(config.n_landmarks);
        for (int i = 0; i < config.n_landmarks; ++i)
            world.descriptors[i] = group_desc[i % config.duplicate_descriptor_groups];
    } else {
        world.descriptors.resize(config.n_landmarks);
        std::set<std::string> seen;
        for (int i = 0; i < config.n_landmarks; ++i) {
            BinaryDescriptor d = BinaryDescriptor::random(desc_rng);
            while (!seen.insert(d.to_hex()).second) d = BinaryDescriptor::random(desc_rng);
            world.descriptors[i] = d;
        }
    }

    Rng orient_rng = master.derive("orientations");
    world.base_orientations.resize(config.n_landmarks);
    if (config.duplicate_descriptor_groups > 0) {
        // Duplicated structure repeats its whole local appearance, so group
        // members share the canonical orientation as well; nothing about the
        // central keypoint alone can then separate them.
        std::vector<double> group_orient(config.duplicate_descriptor_groups);
        for (auto& o : group_orient) o = orient_rng.uniform(-kPi, kPi);
        for (int i = 0; i < config.n_landmarks; ++i)
            world.base_orientations[i] = group_orient[i % config.duplicate_descriptor_groups];
    } else {
        for (int i = 0; i < config.n_landmarks; ++i)
            world.base_orientations[i] = orient_rng.uniform(-kPi, kPi);
    }

    world.trajectory.resize(config.n_frames);
    const Eigen::Vector3d target = Eigen::Vector3d::Zero();
    for (int f = 0; f < config.n_frames; ++f) {
        Eigen::Vector3d center;
        if (config.trajectory == TrajectoryKind::orbit) {
            const double theta = config.orbit_step_deg * kPi / 180.0 * f;
            center = {config.orbit_radius * std::cos(theta),
                      config.orbit_radius * std::sin(theta), 0.0};
        } else {
            center = config.line_origin + static_cast<double>(f) * config.line_step;
        }
        world.trajectory[f] = look_at(center, target);
    }
    world.depth_ref = config.trajectory == TrajectoryKind::orbit ? config.orbit_radius
                                                                 : config.line_origin.norm();
    if (world.depth_ref <= 0) world.depth_ref = 1.0;
    return world;
}

Keyframe render_keyframe(const World& world, const CameraPose& pose, const WorldConfig& config,
                         Rng& rng) {
    Keyframe frame;
    frame.pose = pose;
    const double znear = 1e-3;
    auto quantize = [&config](double v) {
        return config.quantize_pixels ? std::round(v * 10.0) / 10.0 : v;
    };
    for (size_t li = 0; li < world.landmarks.size(); ++li) {
        const Eigen::Vector3d xc = pose.R * world.landmarks[li].position + pose.t;
        if (xc.z() <= znear) continue;
        const Eigen::Vector2d px = config.intrinsics.project(xc);
        if (px.x() < 0 || px.x() >= config.image_width || px.y() < 0 ||
            px.y() >= config.image_height)
            continue;
        Keypoint kp;
        kp.x = quantize(px.x());
        kp.y = quantize(px.y());
        kp.scale = config.base_scale * world.depth_ref / xc.z();
        kp.orientation =
            wrap_angle(world.base_orientations[li] + config.orientation_jitter * rng.normal());
        BinaryDescriptor::Words words = world.descriptors[li].words();
        if (config.descriptor_noise > 0) {
            for (int b = 0; b < kDescriptorBits; ++b)
                if (rng.bernoulli(config.descriptor_noise)) words[b >> 6] ^= uint64_t{1} << (b & 63);
        }
        kp.descriptor = BinaryDescriptor(words);
        kp.landmark_id = world.landmarks[li].landmark_id;
        frame.keypoints.push_back(std::move(kp));
    }
    const int n_unlinked =
        static_cast<int>(std::ceil(config.unlinked_fraction * frame.keypoints.size()));
    for (int i = 0; i < n_unlinked; ++i) {
        Keypoint kp;
        kp.x = quantize(rng.uniform(0.0, config.image_width));
        kp.y = quantize(rng.uniform(0.0, config.image_height));
        kp.scale = config.base_scale * (0.5 + rng.uniform());
        kp.orientation = rng.uniform(-kPi, kPi);
        kp.descriptor = BinaryDescriptor::random(rng);
        frame.keypoints.push_back(std::move(kp));
    }
    return frame;
}

Dataset generate_dataset(const WorldConfig& config) {
    const World world = generate_world(config);
    Dataset dataset;
    dataset.intrinsics = config.intrinsics;
    dataset.landmarks = world.landmarks;
    dataset.frames.resize(config.n_frames);
    const Rng master(config.seed);
#pragma omp parallel for schedule(static)
    for (int f = 0; f < config.n_frames; ++f) {
        Rng frame_rng = master.derive("frame", static_cast<uint64_t>(f));
        dataset.frames[f] = render_keyframe(world, world.trajectory[f], config, frame_rng);
        dataset.frames[f].frame_id = f;
    }
    return dataset;
}

std::pair<Dataset, Dataset> make_split(const Dataset& dataset, double train_fraction) {
    const int n = static_cast<int>(dataset.frames.size());
    if (n < 2) throw_data("insufficient-data", "need at least 2 frames to split");
    int n_train = static_cast<int>(std::ceil(train_fraction * n));
    n_train = std::clamp(n_train, 1, n - 1); // validation keeps at least one frame
    Dataset train, val;
    train.intrinsics = val.intrinsics = dataset.intrinsics;
    train.landmarks = val.landmarks = dataset.landmarks;
    train.frames.assign(dataset.frames.begin(), dataset.frames.begin() + n_train);
    val.frames.assign(dataset.frames.begin() + n_train, dataset.frames.end());
    return {std::move(train), std::move(val)};
}

} // namespace scone
