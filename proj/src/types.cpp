#include "scone/types.hpp"

#include <bit>
#include <cmath>

#include "scone/error.hpp"

namespace scone {

namespace {
int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}
} // namespace

std::string BinaryDescriptor::to_hex() const {
    static const char* digits = "0123456789abcdef";
    std::string out(kDescriptorBits / 4, '0');
    for (int j = 0; j < kDescriptorBits / 4; ++j) {
        const int lo = 4 * (kDescriptorBits / 4 - 1 - j); // bits lo..lo+3
        int v = 0;
        for (int b = 3; b >= 0; --b) v = (v << 1) | (bit(lo + b) ? 1 : 0);
        out[j] = digits[v];
    }
    return out;
}

BinaryDescriptor BinaryDescriptor::from_hex(const std::string& hex) {
    if (hex.size() != kDescriptorBits / 4)
        throw_data("parse", "descriptor hex must be " + std::to_string(kDescriptorBits / 4) +
                                " chars, got " + std::to_string(hex.size()));
    Words w{};
    for (int j = 0; j < kDescriptorBits / 4; ++j) {
        const int v = hex_value(hex[j]);
        if (v < 0) throw_data("parse", std::string("invalid hex char '") + hex[j] + "'");
        const int lo = 4 * (kDescriptorBits / 4 - 1 - j);
        for (int b = 0; b < 4; ++b)
            if (v & (1 << b)) w[(lo + b) >> 6] |= uint64_t{1} << ((lo + b) & 63);
    }
    return BinaryDescriptor(w);
}

int hamming_distance(const BinaryDescriptor& a, const BinaryDescriptor& b) {
    int d = 0;
    for (int i = 0; i < kDescriptorWords; ++i)
        d += std::popcount(a.words()[i] ^ b.words()[i]);
    return d;
}

Eigen::VectorXd descriptor_to_real_vector(const BinaryDescriptor& d) {
    Eigen::VectorXd v(kDescriptorBits);
    for (int i = 0; i < kDescriptorBits; ++i) v[i] = d.bit(i) ? 1.0 : 0.0;
    return v;
}

double wrap_angle(double a) {
    double r = std::fmod(a + kPi, 2.0 * kPi);
    if (r < 0) r += 2.0 * kPi;
    return r - kPi;
}

CameraPose inverse_pose(const CameraPose& p) {
    CameraPose out;
    out.R = p.R.transpose();
    out.t = -(p.R.transpose() * p.t);
    return out;
}

CameraPose compose_pose(const CameraPose& a, const CameraPose& b) {
    CameraPose out;
    out.R = b.R * a.R;
    out.t = b.R * a.t + b.t;
    return out;
}

CameraPose relative_pose(const CameraPose& from, const CameraPose& to) {
    return compose_pose(inverse_pose(from), to);
}

bool is_rotation_matrix(const Eigen::Matrix3d& R, double tol) {
    const Eigen::Matrix3d err = R.transpose() * R - Eigen::Matrix3d::Identity();
    return err.cwiseAbs().maxCoeff() <= tol && std::abs(R.determinant() - 1.0) <= tol;
}

} // namespace scone
