#include "scone/constellation.hpp"

#include <algorithm>
#include <cmath>

#include "scone/error.hpp"

namespace scone {

RelativeGeometry relative_geometry(const Keypoint& central, const Keypoint& neighbor) {
    RelativeGeometry g;
    g.rel_x = neighbor.x - central.x;
    g.rel_y = neighbor.y - central.y;
    g.rel_scale = std::log(neighbor.scale / central.scale);
    g.rel_orientation = wrap_angle(neighbor.orientation - central.orientation);
    return g;
}

std::vector<int> find_k_nearest(const Keyframe& frame, int central_index, int k) {
    const int n = static_cast<int>(frame.keypoints.size());
    if (central_index < 0 || central_index >= n)
        throw_data("insufficient-keypoints", "central_index out of range");
    if (k < 1) throw_data("insufficient-keypoints", "k must be at least 1");
    if (n <= k)
        throw_data("insufficient-keypoints",
                   "frame " + std::to_string(frame.frame_id) + " has " + std::to_string(n) +
                       " keypoints, need more than " + std::to_string(k));

    const Keypoint& c = frame.keypoints[central_index];
    std::vector<std::pair<double, int>> dist; // (squared distance, index)
    dist.reserve(n - 1);
    for (int i = 0; i < n; ++i) {
        if (i == central_index) continue;
        const double dx = frame.keypoints[i].x - c.x;
        const double dy = frame.keypoints[i].y - c.y;
        dist.emplace_back(dx * dx + dy * dy, i);
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    std::vector<int> out(k);
    for (int i = 0; i < k; ++i) out[i] = dist[i].second;
    return out;
}

Constellation build_constellation(const Keyframe& frame, int central_index, int k) {
    const std::vector<int> nn = find_k_nearest(frame, central_index, k);
    Constellation c;
    c.central = frame.keypoints[central_index];
    c.k = k;
    c.neighbors.reserve(k);
    for (int idx : nn) {
        const Keypoint& nkp = frame.keypoints[idx];
        const RelativeGeometry g = relative_geometry(c.central, nkp);
        c.neighbors.push_back({nkp.descriptor, g.rel_x, g.rel_y, g.rel_scale, g.rel_orientation});
    }
    return c;
}

std::vector<Constellation> build_all_constellations(const Keyframe& frame, int k) {
    const int n = static_cast<int>(frame.keypoints.size());
    if (n <= k) return {};
    std::vector<Constellation> out(n);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) out[i] = build_constellation(frame, i, k);
    return out;
}

void assemble_input_into(const Constellation& c, const GeometryNormalization& norm,
                         Eigen::Ref<Eigen::VectorXd> out) {
    const int k = c.k;
    if (out.size() != input_dims(k) || static_cast<int>(c.neighbors.size()) != k)
        throw_data("shape-mismatch", "output length must be 514 + 516k");
    const double radius = std::max(c.neighbor_radius(), norm.min_radius);
    for (int i = 0; i < kDescriptorBits; ++i) out[i] = c.central.descriptor.bit(i) ? 1.0 : 0.0;
    out[kDescriptorBits] = std::log(c.central.scale);
    out[kDescriptorBits + 1] = c.central.orientation / norm.orientation_divisor;
    for (int j = 0; j < k; ++j) {
        const NeighborFeature& nb = c.neighbors[j];
        const int base = kCentralDims + kNeighborDims * j;
        for (int i = 0; i < kDescriptorBits; ++i) out[base + i] = nb.descriptor.bit(i) ? 1.0 : 0.0;
        out[base + kDescriptorBits] = nb.rel_x / radius;
        out[base + kDescriptorBits + 1] = nb.rel_y / radius;
        out[base + kDescriptorBits + 2] = nb.rel_scale;
        out[base + kDescriptorBits + 3] = nb.rel_orientation / norm.orientation_divisor;
    }
}

Eigen::VectorXd assemble_input(const Constellation& c, const GeometryNormalization& norm) {
    Eigen::VectorXd out(input_dims(c.k));
    assemble_input_into(c, norm, out);
    return out;
}

} // namespace scone
