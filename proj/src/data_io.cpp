#include "scone/data_io.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "scone/error.hpp"

namespace fs = std::filesystem;

namespace scone {

namespace {

constexpr char kDatasetMagic[7] = {'S', 'C', 'O', 'N', 'E', 'D', '1'};

class Writer {
public:
    explicit Writer(const std::string& path) : os_(path, std::ios::binary | std::ios::trunc) {
        if (!os_) throw_data("corrupt-file", "cannot open " + path + " for writing");
    }
    void bytes(const void* p, size_t n) { os_.write(static_cast<const char*>(p), n); }
    void u8(uint8_t v) { bytes(&v, 1); }
    void u32(uint32_t v) { bytes(&v, 4); }
    void i64(int64_t v) { bytes(&v, 8); }
    void f64(double v) { bytes(&v, 8); }
    bool ok() const { return static_cast<bool>(os_); }

private:
    std::ofstream os_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : is_(path, std::ios::binary) {
        if (!is_) throw_data("corrupt-file", "cannot open " + path);
    }
    // what != nullptr: a short read raises count-mismatch naming `what`,
    // the promised-records-vs-body check of the format.
    void bytes(void* p, size_t n, const char* what) {
        is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(is_.gcount()) != n) {
            if (what) throw_data("count-mismatch", std::string("file ends inside ") + what);
            throw_data("corrupt-file", "truncated header");
        }
    }
    uint8_t u8(const char* what) {
        uint8_t v;
        bytes(&v, 1, what);
        return v;
    }
    uint32_t u32(const char* what) {
        uint32_t v;
        bytes(&v, 4, what);
        return v;
    }
    int64_t i64(const char* what) {
        int64_t v;
        bytes(&v, 8, what);
        return v;
    }
    double f64(const char* what) {
        double v;
        bytes(&v, 8, what);
        return v;
    }
    bool at_eof() {
        is_.peek();
        return is_.eof();
    }

private:
    std::ifstream is_;
};

} // namespace

void write_dataset(const Dataset& dataset, const std::string& path) {
    Writer w(path);
    w.bytes(kDatasetMagic, sizeof(kDatasetMagic));
    w.u32(static_cast<uint32_t>(dataset.landmarks.size()));
    w.u32(static_cast<uint32_t>(dataset.frames.size()));
    w.u8(dataset.intrinsics ? 1 : 0);
    if (dataset.intrinsics) {
        w.f64(dataset.intrinsics->fx);
        w.f64(dataset.intrinsics->fy);
        w.f64(dataset.intrinsics->cx);
        w.f64(dataset.intrinsics->cy);
    }
    for (const Landmark& lm : dataset.landmarks) {
        w.i64(lm.landmark_id);
        for (int i = 0; i < 3; ++i) w.f64(lm.position(i));
    }
    for (const Keyframe& frame : dataset.frames) {
        w.i64(frame.frame_id);
        w.u8(frame.pose ? 1 : 0);
        if (frame.pose) {
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) w.f64(frame.pose->R(r, c));
            for (int i = 0; i < 3; ++i) w.f64(frame.pose->t(i));
        }
        w.u32(static_cast<uint32_t>(frame.keypoints.size()));
        for (const Keypoint& kp : frame.keypoints) {
            w.f64(kp.x);
            w.f64(kp.y);
            w.f64(kp.scale);
            w.f64(kp.orientation);
            for (uint64_t word : kp.descriptor.words()) w.bytes(&word, 8);
            w.u8(kp.landmark_id ? 1 : 0);
            if (kp.landmark_id) w.i64(*kp.landmark_id);
        }
    }
    if (!w.ok()) throw_data("corrupt-file", "write failed for " + path);
}

Dataset read_dataset(const std::string& path) {
    Reader r(path);
    char magic[7];
    r.bytes(magic, sizeof(magic), nullptr);
    if (std::memcmp(magic, kDatasetMagic, sizeof(magic)) != 0) {
        if (std::memcmp(magic, kDatasetMagic, 6) == 0)
            throw_data("version-mismatch",
                       std::string("unsupported dataset version '") + magic[6] + "'");
        throw_data("corrupt-file", "bad magic in " + path);
    }
    const uint32_t n_landmarks = r.u32(nullptr);
    const uint32_t n_frames = r.u32(nullptr);
    Dataset dataset;
    if (r.u8(nullptr)) {
        CameraIntrinsics K;
        K.fx = r.f64(nullptr);
        K.fy = r.f64(nullptr);
        K.cx = r.f64(nullptr);
        K.cy = r.f64(nullptr);
        dataset.intrinsics = K;
    }
    dataset.landmarks.reserve(n_landmarks);
    for (uint32_t i = 0; i < n_landmarks; ++i) {
        Landmark lm;
        lm.landmark_id = r.i64("landmark table");
        for (int j = 0; j < 3; ++j) lm.position(j) = r.f64("landmark table");
        dataset.landmarks.push_back(lm);
    }
    dataset.frames.reserve(n_frames);
    for (uint32_t i = 0; i < n_frames; ++i) {
        Keyframe frame;
        frame.frame_id = r.i64("frame records");
        if (r.u8("frame records")) {
            CameraPose pose;
            for (int rr = 0; rr < 3; ++rr)
                for (int cc = 0; cc < 3; ++cc) pose.R(rr, cc) = r.f64("frame records");
            for (int j = 0; j < 3; ++j) pose.t(j) = r.f64("frame records");
            frame.pose = pose;
        }
        const uint32_t n_kp = r.u32("frame records");
        frame.keypoints.reserve(n_kp);
        for (uint32_t ki = 0; ki < n_kp; ++ki) {
            Keypoint kp;
            kp.x = r.f64("keypoint records");
            kp.y = r.f64("keypoint records");
            kp.scale = r.f64("keypoint records");
            kp.orientation = r.f64("keypoint records");
            BinaryDescriptor::Words words;
            for (auto& word : words) r.bytes(&word, 8, "keypoint records");
            kp.descriptor = BinaryDescriptor(words);
            if (r.u8("keypoint records")) kp.landmark_id = r.i64("keypoint records");
            frame.keypoints.push_back(std::move(kp));
        }
        dataset.frames.push_back(std::move(frame));
    }
    if (!r.at_eof()) throw_data("count-mismatch", "trailing bytes after the promised body");
    return dataset;
}

namespace {

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

double parse_double(const std::string& s, const std::string& where) {
    try {
        size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw_data("parse", where + ": bad number '" + s + "'");
    }
}

int64_t parse_i64(const std::string& s, const std::string& where) {
    try {
        size_t pos = 0;
        const int64_t v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw_data("parse", where + ": bad integer '" + s + "'");
    }
}

} // namespace

Dataset import_plain_features(const std::string& directory) {
    if (!fs::is_directory(directory)) throw_data("parse", directory + " is not a directory");

    Dataset dataset;
    std::vector<std::pair<int64_t, fs::path>> frame_files;
    for (const auto& entry : fs::directory_iterator(directory)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("frame_", 0) == 0 && entry.path().extension() == ".txt") {
            const std::string id_str = name.substr(6, name.size() - 6 - 4);
            frame_files.emplace_back(parse_i64(id_str, name), entry.path());
        }
    }
    std::sort(frame_files.begin(), frame_files.end());
    if (frame_files.empty()) throw_data("parse", "no frame_*.txt files in " + directory);

    const fs::path intr_path = fs::path(directory) / "intrinsics.txt";
    if (fs::exists(intr_path)) {
        std::ifstream is(intr_path);
        std::string line;
        std::getline(is, line);
        const auto tok = split_ws(line);
        if (tok.size() != 4) throw_data("parse", "intrinsics.txt: expected 'fx fy cx cy'");
        CameraIntrinsics K;
        K.fx = parse_double(tok[0], "intrinsics.txt");
        K.fy = parse_double(tok[1], "intrinsics.txt");
        K.cx = parse_double(tok[2], "intrinsics.txt");
        K.cy = parse_double(tok[3], "intrinsics.txt");
        dataset.intrinsics = K;
    }

    std::map<int64_t, CameraPose> poses;
    const fs::path poses_path = fs::path(directory) / "poses.txt";
    if (fs::exists(poses_path)) {
        std::ifstream is(poses_path);
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const std::string where = "poses.txt:" + std::to_string(lineno);
            const auto tok = split_ws(line);
            if (tok.empty()) continue;
            if (tok.size() != 13) throw_data("parse", where + ": expected frame_id + 12 numbers");
            CameraPose pose;
            const int64_t id = parse_i64(tok[0], where);
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 4; ++c) {
                    const double v = parse_double(tok[1 + r * 4 + c], where);
                    if (c < 3)
                        pose.R(r, c) = v;
                    else
                        pose.t(r) = v;
                }
            poses[id] = pose;
        }
    }

    std::set<int64_t> referenced;
    std::map<int64_t, Eigen::Vector3d> landmark_positions;
    const fs::path lm_path = fs::path(directory) / "landmarks.txt";
    if (fs::exists(lm_path)) {
        std::ifstream is(lm_path);
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const std::string where = "landmarks.txt:" + std::to_string(lineno);
            const auto tok = split_ws(line);
            if (tok.empty()) continue;
            if (tok.size() != 4) throw_data("parse", where + ": expected 'landmark_id x y z'");
            landmark_positions[parse_i64(tok[0], where)] =
                Eigen::Vector3d(parse_double(tok[1], where), parse_double(tok[2], where),
                                parse_double(tok[3], where));
        }
    }

    for (const auto& [frame_id, path] : frame_files) {
        Keyframe frame;
        frame.frame_id = frame_id;
        auto pose_it = poses.find(frame_id);
        if (pose_it != poses.end()) frame.pose = pose_it->second;
        std::ifstream is(path);
        if (!is) throw_data("parse", "cannot open " + path.string());
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const std::string where = path.filename().string() + ":" + std::to_string(lineno);
            const auto tok = split_ws(line);
            if (tok.empty() || tok[0][0] == '#') continue;
            if (tok.size() != 5 && tok.size() != 6)
                throw_data("parse",
                           where + ": expected 'x y scale orientation hex512 [landmark_id]'");
            Keypoint kp;
            kp.x = parse_double(tok[0], where);
            kp.y = parse_double(tok[1], where);
            kp.scale = parse_double(tok[2], where);
            kp.orientation = parse_double(tok[3], where);
            if (kp.orientation < -kPi || kp.orientation >= kPi) {
                const double wrapped = wrap_angle(kp.orientation);
                std::cerr << "warning: " << where << ": orientation " << kp.orientation
                          << " wrapped to " << wrapped << "\n";
                kp.orientation = wrapped;
            }
            try {
                kp.descriptor = BinaryDescriptor::from_hex(tok[4]);
            } catch (const Error& e) {
                throw_data("parse", where + ": " + e.what());
            }
            if (tok.size() == 6) {
                kp.landmark_id = parse_i64(tok[5], where);
                referenced.insert(*kp.landmark_id);
            }
            frame.keypoints.push_back(std::move(kp));
        }
        dataset.frames.push_back(std::move(frame));
    }

    for (const auto& [id, pos] : landmark_positions) referenced.insert(id);
    for (int64_t id : referenced) {
        Landmark lm;
        lm.landmark_id = id;
        auto it = landmark_positions.find(id);
        if (it != landmark_positions.end()) lm.position = it->second;
        dataset.landmarks.push_back(lm);
    }
    return dataset;
}

} // namespace scone
