#pragma once

#include <string>
#include <vector>

#include "scone/types.hpp"

namespace scone {

/// One invariant violation. frame_index / keypoint_index are -1 when the
/// violation is not tied to a frame or keypoint.
struct Violation {
    int frame_index = -1;
    int keypoint_index = -1;
    std::string message;
};

/// Checks every type invariant plus landmark reference integrity.
/// Returns an empty list iff the dataset is well formed.
std::vector<Violation> validate_dataset(const Dataset& dataset);

} // namespace scone
