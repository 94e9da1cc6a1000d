#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "scone/error.hpp"
#include "scone/rng.hpp"
#include "scone/types.hpp"
#include "scone/validate.hpp"

using namespace scone;

namespace {

BinaryDescriptor random_descriptor(uint64_t seed) {
    Rng rng(seed);
    return BinaryDescriptor::random(rng);
}

} // namespace

TEST_CASE("hamming distance identity and complement") {
    const BinaryDescriptor a = random_descriptor(7);
    CHECK(hamming_distance(a, a) == 0);
    CHECK(hamming_distance(a, a.complemented()) == 512);
}

TEST_CASE("hamming distance equals per-bit loop oracle") {
    Rng rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        const BinaryDescriptor a = BinaryDescriptor::random(rng);
        const BinaryDescriptor b = BinaryDescriptor::random(rng);
        int expected = 0;
        for (int i = 0; i < 512; ++i)
            if (a.bit(i) != b.bit(i)) ++expected;
        CHECK(hamming_distance(a, b) == expected);
        CHECK(hamming_distance(b, a) == expected); // symmetry
    }
}

TEST_CASE("hamming distance is a metric on random triples") {
    Rng rng(101);
    for (int trial = 0; trial < 50; ++trial) {
        const BinaryDescriptor a = BinaryDescriptor::random(rng);
        const BinaryDescriptor b = BinaryDescriptor::random(rng);
        const BinaryDescriptor c = BinaryDescriptor::random(rng);
        const int ab = hamming_distance(a, b);
        const int bc = hamming_distance(b, c);
        const int ac = hamming_distance(a, c);
        CHECK(ab >= 0);
        CHECK(ac <= ab + bc); // triangle inequality
    }
}

TEST_CASE("descriptor_to_real_vector maps bits to 0.0/1.0") {
    BinaryDescriptor zeros;
    const Eigen::VectorXd vz = descriptor_to_real_vector(zeros);
    CHECK(vz.size() == 512);
    CHECK(vz.minCoeff() == 0.0);
    CHECK(vz.maxCoeff() == 0.0);

    const Eigen::VectorXd vo = descriptor_to_real_vector(zeros.complemented());
    CHECK(vo.minCoeff() == 1.0);
    CHECK(vo.maxCoeff() == 1.0);

    // alternating pattern 1010... starting with bit 0 set
    BinaryDescriptor::Words w{};
    for (auto& word : w) word = 0x5555555555555555ull;
    const Eigen::VectorXd va = descriptor_to_real_vector(BinaryDescriptor(w));
    for (int i = 0; i < 512; ++i) CHECK(va[i] == (i % 2 == 0 ? 1.0 : 0.0));
}

TEST_CASE("descriptor_to_real_vector is injective on random pairs") {
    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const BinaryDescriptor a = BinaryDescriptor::random(rng);
        const BinaryDescriptor b = BinaryDescriptor::random(rng);
        if (a == b) continue;
        CHECK(descriptor_to_real_vector(a) != descriptor_to_real_vector(b));
    }
}

TEST_CASE("descriptor hex round-trip") {
    Rng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        const BinaryDescriptor d = BinaryDescriptor::random(rng);
        CHECK(BinaryDescriptor::from_hex(d.to_hex()) == d);
    }
    // bit 0 set -> last hex char is '1'
    BinaryDescriptor::Words w{};
    w[0] = 1;
    const std::string hex = BinaryDescriptor(w).to_hex();
    CHECK(hex.size() == 128);
    CHECK(hex.back() == '1');
    CHECK(hex.substr(0, 127) == std::string(127, '0'));
    CHECK_THROWS_AS(BinaryDescriptor::from_hex("abc"), Error);
}

TEST_CASE("wrap_angle matches repeated 2-pi reduction") {
    Rng rng(17);
    auto oracle = [](double a) {
        while (a >= kPi) a -= 2 * kPi;
        while (a < -kPi) a += 2 * kPi;
        return a;
    };
    for (int trial = 0; trial < 200; ++trial) {
        const double a = rng.uniform(-50.0, 50.0);
        CHECK(wrap_angle(a) == doctest::Approx(oracle(a)).epsilon(1e-12));
        CHECK(wrap_angle(a) >= -kPi);
        CHECK(wrap_angle(a) < kPi);
    }
    CHECK(wrap_angle(kPi) == doctest::Approx(-kPi));
    CHECK(wrap_angle(0.0) == 0.0);
}

TEST_CASE("pose compose and invert keep rotations orthonormal") {
    Rng rng(23);
    auto random_pose = [&rng]() {
        const Eigen::Vector3d axis =
            Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized();
        const double angle = rng.uniform(-3.0, 3.0);
        CameraPose p;
        p.R = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
        p.t = {rng.normal(), rng.normal(), rng.normal()};
        return p;
    };
    for (int trial = 0; trial < 20; ++trial) {
        const CameraPose a = random_pose();
        const CameraPose b = random_pose();
        CHECK(is_rotation_matrix(inverse_pose(a).R));
        CHECK(is_rotation_matrix(compose_pose(a, b).R));
        CHECK(is_rotation_matrix(relative_pose(a, b).R));
        // compose(a, inverse(a)) is the identity
        const CameraPose id = compose_pose(a, inverse_pose(a));
        CHECK((id.R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(id.t.norm() < 1e-12);
    }
}

TEST_CASE("validate_dataset flags the documented violations") {
    Dataset ds;
    ds.landmarks.push_back({0, {0, 0, 0}});
    Keyframe frame;
    frame.frame_id = 0;
    Keypoint kp;
    kp.x = 1;
    kp.y = 2;
    kp.scale = 3;
    kp.orientation = 0.5;
    kp.landmark_id = 0;
    frame.keypoints.push_back(kp);
    ds.frames.push_back(frame);
    CHECK(validate_dataset(ds).empty());

    SUBCASE("dangling landmark reference") {
        ds.frames[0].keypoints[0].landmark_id = 999;
        const auto v = validate_dataset(ds);
        REQUIRE(v.size() == 1);
        CHECK(v[0].frame_index == 0);
        CHECK(v[0].keypoint_index == 0);
        CHECK(v[0].message.find("dangling") != std::string::npos);
    }
    SUBCASE("reflection is not a rotation") {
        CameraPose pose;
        pose.R = Eigen::Matrix3d::Identity();
        pose.R(2, 2) = -1.0; // det -1
        ds.frames[0].pose = pose;
        const auto v = validate_dataset(ds);
        REQUIRE(v.size() == 1);
        CHECK(v[0].message.find("rotation") != std::string::npos);
    }
    SUBCASE("non-positive scale") {
        ds.frames[0].keypoints[0].scale = 0.0;
        CHECK(validate_dataset(ds).size() == 1);
    }
    SUBCASE("unwrapped orientation") {
        ds.frames[0].keypoints[0].orientation = 4.0;
        CHECK(validate_dataset(ds).size() == 1);
    }
    SUBCASE("duplicate frame ids") {
        ds.frames.push_back(ds.frames[0]);
        CHECK(validate_dataset(ds).size() == 1);
    }
}

TEST_CASE("rng determinism and substreams") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    // substream is independent of parent consumption
    Rng c(7), d(7);
    c.next_u64();
    CHECK(c.derive("x").next_u64() == d.derive("x").next_u64());
    CHECK(Rng(7).derive("x").next_u64() != Rng(7).derive("y").next_u64());
}

TEST_CASE("rng uniform_int stays in range") {
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) CHECK(rng.uniform_int(17) < 17);
}
