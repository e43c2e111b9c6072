// Parser corpus, stream derivation, resampling, synthetic dataset and cache.

#include <catch2/catch_amalgamated.hpp>
#include <sstream>

#include "hocslm/skeleton_file.hpp"
#include "hocslm/streams.hpp"
#include "hocslm/synthetic.hpp"
#include "oracles.hpp"
#include "skeleton_fixtures.hpp"
#include "testutil.hpp"

using namespace hocslm;

namespace {

std::vector<double> numeric_tokens(const std::string& text) {
    std::vector<double> out;
    std::istringstream is(text);
    std::string tok;
    while (is >> tok) out.push_back(std::stod(tok));
    return out;
}

SkeletonSequence tiny_sequence(int frames, EdgeList edges, int joints) {
    SkeletonSequence seq;
    seq.coords = Tensor(Shape{3, frames, joints, 1});
    seq.edges = std::move(edges);
    return seq;
}

}  // namespace

TEST_CASE("skeleton fixture corpus parses per golden annotations") {
    for (const auto& fx : fixtures::skeleton_fixtures()) {
        INFO("fixture " << fx.name);
        std::istringstream is(fx.text);
        switch (fx.expect) {
            case fixtures::Expect::Ok: CHECK_NOTHROW(parse_skeleton_raw(is)); break;
            case fixtures::Expect::MalformedHeader: CHECK_THROWS_AS(parse_skeleton_raw(is), MalformedHeader); break;
            case fixtures::Expect::JointCountMismatch:
                CHECK_THROWS_AS(parse_skeleton_raw(is), JointCountMismatch);
                break;
            case fixtures::Expect::TruncatedFile: CHECK_THROWS_AS(parse_skeleton_raw(is), TruncatedFile); break;
        }
    }
}

TEST_CASE("parser round-trips numeric content at printed precision") {
    for (const auto& fx : fixtures::skeleton_fixtures()) {
        if (fx.expect != fixtures::Expect::Ok) continue;
        INFO("fixture " << fx.name);
        std::istringstream is(fx.text);
        auto raw = parse_skeleton_raw(is);
        const std::string serialized = serialize_skeleton_raw(raw);
        auto orig_tokens = numeric_tokens(fx.text);
        auto new_tokens = numeric_tokens(serialized);
        REQUIRE(orig_tokens.size() == new_tokens.size());
        for (std::size_t i = 0; i < orig_tokens.size(); ++i) CHECK(orig_tokens[i] == new_tokens[i]);
        // serialize is a fixpoint
        std::istringstream is2(serialized);
        CHECK(serialize_skeleton_raw(parse_skeleton_raw(is2)) == serialized);
    }
}

TEST_CASE("zero single-body file maps to an all-zero sequence") {
    const auto& fx = fixtures::skeleton_fixtures().front();
    REQUIRE(fx.name == "zero_single_body");
    auto seq = parse_skeleton_file(fx.text);
    CHECK(seq.frames() == 1);
    CHECK(seq.joints() == 25);
    CHECK(seq.bodies() == 2);
    for (std::size_t i = 0; i < seq.coords.size(); ++i) CHECK(seq.coords[i] == 0.0);
}

TEST_CASE("hand-crafted two-frame file parses to the expected coordinates") {
    for (const auto& fx : fixtures::skeleton_fixtures()) {
        if (fx.name != "two_frame_motion") continue;
        auto seq = parse_skeleton_file(fx.text);
        REQUIRE(seq.frames() == 2);
        REQUIRE(seq.joints() == 2);
        CHECK(seq.at(0, 0, 0) == 1.0);
        CHECK(seq.at(1, 0, 0) == 2.0);
        CHECK(seq.at(2, 0, 0) == 3.0);
        CHECK(seq.at(0, 1, 0) == 4.0);
        CHECK(seq.at(1, 1, 0) == 5.0);
        CHECK(seq.at(2, 1, 0) == 6.0);
    }
}

TEST_CASE("body selection keeps the two highest-motion bodies") {
    for (const auto& fx : fixtures::skeleton_fixtures()) {
        if (fx.name != "three_bodies") continue;
        auto seq = parse_skeleton_file(fx.text);
        REQUIRE(seq.bodies() == 2);
        // body 200 moved 1->5 (energy 16), body 300 moved 2->2.5 (0.25), body 100 static
        CHECK(seq.at(0, 0, 0, 0) == 1.0);  // most active body in slot 0
        CHECK(seq.at(0, 1, 0, 0) == 5.0);
        CHECK(seq.at(0, 0, 0, 1) == 2.0);
        CHECK(seq.at(0, 1, 0, 1) == 2.5);
    }
}

TEST_CASE("label from filename") {
    CHECK(label_from_filename("S001C002P003R002A013.skeleton") == 12);
    CHECK(label_from_filename("A060.skeleton") == 59);
    CHECK_FALSE(label_from_filename("noaction.skeleton").has_value());
}

TEST_CASE("physical mask is symmetric with trace N") {
    auto mask = PhysicalMask::from_edges(kinect25_edges(), kKinectJoints);
    double trace = 0.0;
    for (int i = 0; i < kKinectJoints; ++i) {
        trace += mask.mask.at(i, i);
        for (int j = 0; j < kKinectJoints; ++j) {
            CHECK(mask.mask.at(i, j) == mask.mask.at(j, i));
            CHECK((mask.mask.at(i, j) == 0.0 || mask.mask.at(i, j) == 1.0));
        }
    }
    CHECK(trace == 25.0);
    int ones = 0;
    for (std::size_t i = 0; i < mask.mask.size(); ++i) ones += mask.mask[i] == 1.0;
    CHECK(ones == 25 + 2 * 24);  // self loops + both edge directions
}

TEST_CASE("kinect tree is a rooted tree over 25 joints") {
    auto parents = parents_from_edges(kinect25_edges(), kKinectJoints);
    CHECK(parents[0] == -1);
    for (int j = 1; j < kKinectJoints; ++j) CHECK(parents[j] >= 0);
}

TEST_CASE("constant sequence has zero motion and second-order streams") {
    auto seq = tiny_sequence(5, kinect25_edges(), 25);
    Rng rng(3);
    for (int j = 0; j < 25; ++j)
        for (int c = 0; c < 3; ++c) {
            const double v = rng.gauss();
            for (int t = 0; t < 5; ++t) seq.at(c, t, j) = v;
        }
    auto streams = derive_streams(seq);
    CHECK(streams.joint_motion.sq_norm() == 0.0);
    CHECK(streams.bone_motion.sq_norm() == 0.0);
    CHECK(streams.joint_2nd.sq_norm() == 0.0);
    CHECK(streams.vel_2nd.sq_norm() == 0.0);
    CHECK(max_abs_diff(streams.joint, seq.coords) == 0.0);
}

TEST_CASE("single edge bone stream is child minus parent") {
    auto seq = tiny_sequence(3, {{0, 1}}, 2);
    for (int t = 0; t < 3; ++t) seq.at(0, t, 1) = 1.0;  // joint 1 at (1,0,0), joint 0 at origin
    auto streams = derive_streams(seq);
    for (int t = 0; t < 3; ++t) {
        CHECK(streams.bone.at(0, t, 1, 0) == 1.0);
        CHECK(streams.bone.at(1, t, 1, 0) == 0.0);
        CHECK(streams.bone.at(0, t, 0, 0) == 0.0);
    }
}

TEST_CASE("linear motion: first difference one, second difference zero inside") {
    const int T = 8;
    auto seq = tiny_sequence(T, {{0, 1}}, 2);
    for (int t = 0; t < T; ++t) seq.at(0, t, 1) = static_cast<double>(t);  // x(t) = t
    auto streams = derive_streams(seq);
    for (int t = 0; t + 1 < T; ++t) CHECK(streams.joint_motion.at(0, t, 1, 0) == 1.0);
    CHECK(streams.joint_motion.at(0, T - 1, 1, 0) == 0.0);
    for (int t = 0; t + 2 < T; ++t) CHECK(streams.joint_2nd.at(0, t, 1, 0) == 0.0);
}

TEST_CASE("too few frames rejected") {
    auto seq = tiny_sequence(2, {{0, 1}}, 2);
    CHECK_THROWS_AS(derive_streams(seq), TooFewFrames);
}

TEST_CASE("telescoping: bones along root-to-leaf paths sum to leaf minus root") {
    auto seq = make_synthetic_sample(2, 0, 5);
    auto streams = derive_streams(seq);
    auto parents = parents_from_edges(seq.edges, seq.joints());
    for (int leaf : {3, 7, 11, 15, 19, 21, 23}) {
        for (int t = 0; t < seq.frames(); t += 13)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int j = leaf; parents[j] >= 0; j = parents[j]) acc += streams.bone.at(c, t, j, 0);
                CHECK(acc == Catch::Approx(seq.at(c, t, leaf) - seq.at(c, t, 0)).margin(1e-6));
            }
    }
}

TEST_CASE("derived streams are translation covariant") {
    auto seq = make_synthetic_sample(0, 1, 9);
    auto base = derive_streams(seq);
    SkeletonSequence shifted = seq;
    const double offset[3] = {0.7, -1.3, 2.9};
    for (int c = 0; c < 3; ++c)
        for (int t = 0; t < seq.frames(); ++t)
            for (int j = 0; j < seq.joints(); ++j) shifted.at(c, t, j) += offset[c];
    auto moved = derive_streams(shifted);
    CHECK(max_abs_diff(base.bone, moved.bone) < 1e-12);
    CHECK(max_abs_diff(base.joint_motion, moved.joint_motion) < 1e-12);
    CHECK(max_abs_diff(base.bone_motion, moved.bone_motion) < 1e-12);
    CHECK(max_abs_diff(base.joint_2nd, moved.joint_2nd) < 1e-12);
    CHECK(max_abs_diff(base.vel_2nd, moved.vel_2nd) < 1e-12);
}

TEST_CASE("resample is identity at matching length") {
    auto seq = make_synthetic_sample(1, 2, 11);
    auto out = resample(seq, seq.frames());
    CHECK(max_abs_diff(out.coords, seq.coords) == 0.0);  // bitwise
}

TEST_CASE("resample midpoint of a 2-frame sequence") {
    auto seq = tiny_sequence(2, {{0, 1}}, 2);
    seq.at(0, 0, 0) = 2.0;
    seq.at(0, 1, 0) = 4.0;
    auto out = resample(seq, 3);
    CHECK(out.frames() == 3);
    CHECK(out.at(0, 0, 0) == 2.0);
    CHECK(out.at(0, 1, 0) == 3.0);  // (P0+P1)/2
    CHECK(out.at(0, 2, 0) == 4.0);
}

TEST_CASE("resample matches the independent interpolation oracle") {
    Rng rng(21);
    SkeletonSequence seq = tiny_sequence(100, {{0, 1}, {0, 2}}, 3);
    for (std::size_t i = 0; i < seq.coords.size(); ++i) seq.coords[i] = rng.gauss();
    auto out = resample(seq, 64);
    Tensor expected = oracle::resample_linear(seq.coords, 64);
    CHECK(max_abs_diff(out.coords, expected) < 1e-6);
}

TEST_CASE("resample rejects empty input and bad targets") {
    SkeletonSequence empty;
    empty.coords = Tensor(Shape{3, 0, 2, 1});
    CHECK_THROWS_AS(resample(empty, 4), EmptySequence);
    auto seq = tiny_sequence(4, {{0, 1}}, 2);
    CHECK_THROWS_AS(resample(seq, 0), UsageError);
}

TEST_CASE("synthetic dataset is deterministic and correctly shaped") {
    auto a = make_synthetic_dataset(4, 16, 7);
    auto b = make_synthetic_dataset(4, 16, 7);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(max_abs_diff(a[i].coords, b[i].coords) == 0.0);  // byte identical
        CHECK(a[i].caption == b[i].caption);
        CHECK(a[i].label == b[i].label);
    }
    auto tiny = make_synthetic_dataset(2, 1, 0);
    REQUIRE(tiny.size() == 2);
    CHECK(tiny[0].label == 0);
    CHECK(tiny[1].label == 1);
    CHECK(tiny[0].caption == "A person is waving.");
    CHECK_THROWS_AS(make_synthetic_dataset(1, 4, 0), UsageError);
}

TEST_CASE("synthetic classes separate under a nearest-centroid oracle") {
    const int classes = 4, per_class = 64;
    auto data = make_synthetic_dataset(classes, per_class, 0);
    const std::size_t dim = data.front().coords.size();
    std::vector<std::vector<double>> centroids(classes, std::vector<double>(dim, 0.0));
    for (const auto& s : data)
        for (std::size_t i = 0; i < dim; ++i) centroids[*s.label][i] += s.coords[i] / per_class;
    int hits = 0;
    for (const auto& s : data) {
        int best = -1;
        double best_d = 1e300;
        for (int c = 0; c < classes; ++c) {
            double d = 0.0;
            for (std::size_t i = 0; i < dim; ++i) {
                const double diff = s.coords[i] - centroids[c][i];
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        hits += best == *s.label;
    }
    const double accuracy = static_cast<double>(hits) / data.size();
    CHECK(accuracy > 1.0 / classes);  // strictly better than chance
}

TEST_CASE("binary cache round-trips samples exactly") {
    auto seq = make_synthetic_sample(3, 1, 4);
    std::ostringstream os;
    write_cache(os, seq);
    std::istringstream is(os.str());
    auto back = read_cache(is);
    CHECK(max_abs_diff(back.coords, seq.coords) == 0.0);
    CHECK(back.label == seq.label);
    CHECK(back.caption == seq.caption);
    CHECK(back.edges == seq.edges);

    std::istringstream bad("NOPE1 garbage");
    CHECK_THROWS_AS(read_cache(bad), CheckpointVersionMismatch);
}

TEST_CASE("normalization centers the root and skips padded bodies") {
    auto fxseq = make_synthetic_sample(0, 0, 1);
    SkeletonSequence two_bodies;
    two_bodies.coords = Tensor(Shape{3, fxseq.frames(), fxseq.joints(), 2});
    two_bodies.edges = fxseq.edges;
    for (int c = 0; c < 3; ++c)
        for (int t = 0; t < fxseq.frames(); ++t)
            for (int j = 0; j < fxseq.joints(); ++j) two_bodies.at(c, t, j, 0) = fxseq.at(c, t, j) + 5.0;
    auto out = normalize_sequence(two_bodies);
    for (int c = 0; c < 3; ++c) {
        CHECK(out.at(c, 0, 0, 0) == 0.0);
        for (int t = 0; t < fxseq.frames(); ++t)
            for (int j = 0; j < fxseq.joints(); ++j) CHECK(out.at(c, t, j, 1) == 0.0);  // padding untouched
    }
}
