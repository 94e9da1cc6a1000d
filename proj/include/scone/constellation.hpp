#pragma once

#include <Eigen/Dense>
#include <vector>

#include "scone/types.hpp"

namespace scone {

/// Per-neighbour record: descriptor plus geometry relative to the central
/// keypoint. rel_scale is the log of the scale ratio (neighbour / central).
struct NeighborFeature {
    BinaryDescriptor descriptor;
    double rel_x = 0.0;
    double rel_y = 0.0;
    double rel_scale = 0.0;
    double rel_orientation = 0.0;
};

/// A central keypoint plus its k nearest neighbours in image space.
/// Neighbours are ordered by ascending distance to the central keypoint,
/// ties broken by ascending keypoint index.
struct Constellation {
    Keypoint central;
    std::vector<NeighborFeature> neighbors;
    int k = 0;

    /// Distance of the farthest (k-th) neighbour; the rel_x/rel_y divisor.
    double neighbor_radius() const {
        const NeighborFeature& last = neighbors.back();
        return std::sqrt(last.rel_x * last.rel_x + last.rel_y * last.rel_y);
    }
};

struct RelativeGeometry {
    double rel_x, rel_y, rel_scale, rel_orientation;
};

RelativeGeometry relative_geometry(const Keypoint& central, const Keypoint& neighbor);

/// Indices of the k nearest keypoints to `central_index` (excluded), sorted by
/// ascending distance then index. Throws "insufficient-keypoints" when the
/// frame has fewer than k+1 keypoints.
std::vector<int> find_k_nearest(const Keyframe& frame, int central_index, int k);

Constellation build_constellation(const Keyframe& frame, int central_index, int k);

/// One constellation per keypoint of the frame, in keypoint order. Frames with
/// at most k keypoints yield no constellations (skipped, never padded).
std::vector<Constellation> build_all_constellations(const Keyframe& frame, int k);

/// Fixed geometry scaling applied to network inputs. rel_x/rel_y are divided
/// by the constellation's neighbor_radius (floored by min_radius), orientations
/// by orientation_divisor, and the central scale enters as ln(scale). Stored in
/// the model checkpoint so inference always matches training.
struct GeometryNormalization {
    double orientation_divisor = kPi;
    double min_radius = 1e-9;
};

inline constexpr int kCentralDims = kDescriptorBits + 2;     // 514
inline constexpr int kNeighborDims = kDescriptorBits + 4;    // 516

/// Flat input length: 514 + 516k.
inline int input_dims(int k) { return kCentralDims + kNeighborDims * k; }

/// Flat network input: [central bits (512) | ln(scale) | orientation] then per
/// neighbour [bits (512) | rel_x | rel_y | rel_scale | rel_orientation], with
/// geometry channels normalized as described on GeometryNormalization.
Eigen::VectorXd assemble_input(const Constellation& c, const GeometryNormalization& norm = {});

/// Column-writing variant used when packing batches.
void assemble_input_into(const Constellation& c, const GeometryNormalization& norm,
                         Eigen::Ref<Eigen::VectorXd> out);

} // namespace scone
