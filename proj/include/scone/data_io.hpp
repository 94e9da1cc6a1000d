#pragma once

#include <string>

#include "scone/types.hpp"

namespace scone {

// Versioned binary dataset container, magic "SCONED1":
//   magic (7 bytes) | u32 n_landmarks | u32 n_frames | u8 has_intrinsics
//   [fx fy cx cy : f64] | landmark table | frame records
// landmark: i64 id | 3 x f64 position
// frame:    i64 id | u8 has_pose [9 x f64 R row-major, 3 x f64 t]
//           | u32 n_keypoints | keypoints
// keypoint: f64 x y scale orientation | 64 descriptor bytes (little-endian
//           64-bit words, bit 0 = lowest bit of word 0) | u8 has_landmark
//           [i64 landmark_id]
// All integers little-endian.

void write_dataset(const Dataset& dataset, const std::string& path);
Dataset read_dataset(const std::string& path);

/// Imports a directory of per-frame text files. Each "frame_*.txt" holds one
/// keypoint per line: "x y scale orientation hex512 [landmark_id]". Optional
/// "poses.txt" rows are "frame_id r00 r01 ... r22 tx ty tz"; optional
/// "intrinsics.txt" is "fx fy cx cy". Optional "landmarks.txt" rows are
/// "landmark_id x y z" (referenced landmarks default to the origin when the
/// file is absent). Orientations outside [-pi, pi) are wrapped with a warning
/// on stderr.
Dataset import_plain_features(const std::string& directory);

} // namespace scone
