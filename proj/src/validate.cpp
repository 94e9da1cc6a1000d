#include "scone/validate.hpp"

#include <cmath>
#include <unordered_set>

namespace scone {

std::vector<Violation> validate_dataset(const Dataset& dataset) {
    std::vector<Violation> out;
    auto add = [&out](int f, int k, std::string msg) {
        out.push_back({f, k, std::move(msg)});
    };

    std::unordered_set<int64_t> landmark_ids;
    for (const auto& lm : dataset.landmarks) {
        if (!landmark_ids.insert(lm.landmark_id).second)
            add(-1, -1, "duplicate landmark_id " + std::to_string(lm.landmark_id));
        if (!lm.position.allFinite())
            add(-1, -1, "non-finite landmark position, id " + std::to_string(lm.landmark_id));
    }

    if (dataset.intrinsics && (dataset.intrinsics->fx <= 0 || dataset.intrinsics->fy <= 0))
        add(-1, -1, "intrinsics focal lengths must be positive");

    std::unordered_set<int64_t> frame_ids;
    for (int fi = 0; fi < static_cast<int>(dataset.frames.size()); ++fi) {
        const Keyframe& frame = dataset.frames[fi];
        if (!frame_ids.insert(frame.frame_id).second)
            add(fi, -1, "duplicate frame_id " + std::to_string(frame.frame_id));
        if (frame.pose) {
            if (!is_rotation_matrix(frame.pose->R))
                add(fi, -1, "pose rotation is not orthonormal with det +1");
            if (!frame.pose->t.allFinite()) add(fi, -1, "non-finite pose translation");
        }
        if (frame.intrinsics && (frame.intrinsics->fx <= 0 || frame.intrinsics->fy <= 0))
            add(fi, -1, "frame intrinsics focal lengths must be positive");
        for (int ki = 0; ki < static_cast<int>(frame.keypoints.size()); ++ki) {
            const Keypoint& kp = frame.keypoints[ki];
            if (!(kp.scale > 0)) add(fi, ki, "scale must be positive");
            if (!(kp.orientation >= -kPi && kp.orientation < kPi))
                add(fi, ki, "orientation not wrapped into [-pi, pi)");
            if (!std::isfinite(kp.x) || !std::isfinite(kp.y))
                add(fi, ki, "non-finite keypoint position");
            if (kp.landmark_id && !landmark_ids.count(*kp.landmark_id))
                add(fi, ki, "dangling landmark_id " + std::to_string(*kp.landmark_id));
        }
    }
    return out;
}

} // namespace scone
