#pragma once

// Deterministic desk-scale dataset: parametric motion families on the
// 25-joint tree, one family per class, captioned for the fusion module.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "hocslm/skeleton.hpp"

namespace hocslm {

inline constexpr int kSyntheticFrames = 64;

inline const std::vector<std::string>& motion_family_names() {
    static const std::vector<std::string> names = {
        "waving", "jumping", "kicking",   "bowing",   "marching",
        "clapping", "stretching", "squatting", "spinning", "balancing",
    };
    return names;
}

inline std::string synthetic_class_name(int cls) {
    const auto& names = motion_family_names();
    if (cls < static_cast<int>(names.size())) return names[cls];
    return "motion-" + std::to_string(cls);
}

inline std::string synthetic_caption(int cls) { return "A person is " + synthetic_class_name(cls) + "."; }

namespace detail_syn {

// rough standing pose, meters, y up, z depth
inline const std::array<std::array<double, 3>, kKinectJoints>& rest_pose() {
    static const std::array<std::array<double, 3>, kKinectJoints> pose = {{
        {0.00, 0.00, 0.00},   // 0 spine base
        {0.00, 0.25, 0.00},   // 1 spine mid
        {0.00, 0.55, 0.00},   // 2 neck
        {0.00, 0.70, 0.00},   // 3 head
        {-0.20, 0.45, 0.00},  // 4 left shoulder
        {-0.30, 0.20, 0.00},  // 5 left elbow
        {-0.35, -0.05, 0.00}, // 6 left wrist
        {-0.37, -0.12, 0.00}, // 7 left hand
        {0.20, 0.45, 0.00},   // 8 right shoulder
        {0.30, 0.20, 0.00},   // 9 right elbow
        {0.35, -0.05, 0.00},  // 10 right wrist
        {0.37, -0.12, 0.00},  // 11 right hand
        {-0.10, -0.05, 0.00}, // 12 left hip
        {-0.12, -0.50, 0.00}, // 13 left knee
        {-0.13, -0.90, 0.00}, // 14 left ankle
        {-0.13, -0.97, 0.08}, // 15 left foot
        {0.10, -0.05, 0.00},  // 16 right hip
        {0.12, -0.50, 0.00},  // 17 right knee
        {0.13, -0.90, 0.00},  // 18 right ankle
        {0.13, -0.97, 0.08},  // 19 right foot
        {0.00, 0.50, 0.00},   // 20 spine shoulder
        {-0.39, -0.18, 0.00}, // 21 left hand tip
        {-0.40, -0.14, 0.03}, // 22 left thumb
        {0.39, -0.18, 0.00},  // 23 right hand tip
        {0.40, -0.14, 0.03},  // 24 right thumb
    }};
    return pose;
}

inline const std::vector<int>& right_arm() {
    static const std::vector<int> v = {9, 10, 11, 23, 24};
    return v;
}
inline const std::vector<int>& left_arm() {
    static const std::vector<int> v = {5, 6, 7, 21, 22};
    return v;
}
inline const std::vector<int>& right_leg() {
    static const std::vector<int> v = {17, 18, 19};
    return v;
}
inline const std::vector<int>& left_leg() {
    static const std::vector<int> v = {13, 14, 15};
    return v;
}
inline const std::vector<int>& upper_body() {
    static const std::vector<int> v = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 20, 21, 22, 23, 24};
    return v;
}

struct MotionSpec {
    double freq;
    double amplitude;
    double phase;
};

inline void apply_family(Tensor& coords, int family, int t, double time, const MotionSpec& ms) {
    auto move = [&](const std::vector<int>& joints, int channel, double delta) {
        for (int j : joints) coords.at(channel, t, j, 0) += delta;
    };
    const double s = std::sin(2.0 * M_PI * ms.freq * time + ms.phase);
    const double a = ms.amplitude;
    switch (family % 10) {
        case 0:  // waving: right arm swings sideways
            move(right_arm(), 0, 0.25 * a * s);
            move(right_arm(), 1, 0.35 * a * (1.0 + s) * 0.5);
            break;
        case 1: {  // jumping: whole body bobs
            const double lift = 0.18 * a * std::abs(s);
            for (int j = 0; j < kKinectJoints; ++j) coords.at(1, t, j, 0) += lift;
            break;
        }
        case 2:  // kicking: right leg forward
            move(right_leg(), 2, 0.30 * a * std::max(0.0, s));
            move(right_leg(), 1, 0.10 * a * std::max(0.0, s));
            break;
        case 3: {  // bowing: upper body pitches forward
            const double bend = 0.5 * a * (1.0 + s) * 0.5;
            for (int j : upper_body()) {
                const double h = coords.at(1, t, j, 0);
                coords.at(2, t, j, 0) += bend * std::max(0.0, h);
                coords.at(1, t, j, 0) -= 0.3 * bend * std::max(0.0, h);
            }
            break;
        }
        case 4:  // marching: alternate knee lifts
            move(left_leg(), 1, 0.15 * a * std::max(0.0, s));
            move(right_leg(), 1, 0.15 * a * std::max(0.0, -s));
            break;
        case 5:  // clapping: hands meet at the chest
            move(left_arm(), 0, 0.22 * a * (1.0 + s) * 0.5);
            move(right_arm(), 0, -0.22 * a * (1.0 + s) * 0.5);
            move(left_arm(), 1, 0.18 * a);
            move(right_arm(), 1, 0.18 * a);
            break;
        case 6:  // stretching: both arms rise overhead
            move(left_arm(), 1, 0.45 * a * (1.0 + s) * 0.5);
            move(right_arm(), 1, 0.45 * a * (1.0 + s) * 0.5);
            break;
        case 7: {  // squatting: hips sink, knees push forward
            const double sink = 0.22 * a * (1.0 + s) * 0.5;
            for (int j = 0; j < kKinectJoints; ++j)
                if (j != 14 && j != 15 && j != 18 && j != 19) coords.at(1, t, j, 0) -= sink;
            move(left_leg(), 2, 0.5 * sink);
            move(right_leg(), 2, 0.5 * sink);
            break;
        }
        case 8: {  // spinning: yaw rotation of the whole body
            const double theta = a * 0.9 * std::sin(2.0 * M_PI * ms.freq * time * 0.5 + ms.phase);
            const double ct = std::cos(theta), st = std::sin(theta);
            for (int j = 0; j < kKinectJoints; ++j) {
                const double x = coords.at(0, t, j, 0), z = coords.at(2, t, j, 0);
                coords.at(0, t, j, 0) = ct * x + st * z;
                coords.at(2, t, j, 0) = -st * x + ct * z;
            }
            break;
        }
        default:  // balancing: left leg held up, arms out with a slow sway
            move(left_leg(), 1, 0.35 * a);
            move(left_leg(), 2, 0.15 * a);
            move(left_arm(), 0, -0.12 * a * s);
            move(right_arm(), 0, 0.12 * a * s);
            break;
    }
}

}  // namespace detail_syn

// Deterministic per (seed, class, index); safe to shard by index.
inline SkeletonSequence make_synthetic_sample(int cls, int index, int seed) {
    using namespace detail_syn;
    Rng rng(static_cast<std::uint64_t>(seed), static_cast<std::uint64_t>(cls),
            static_cast<std::uint64_t>(index) + 1);
    MotionSpec ms;
    ms.freq = (0.6 + 0.17 * (cls / 10)) * (1.0 + 0.05 * (rng.uniform() - 0.5));
    ms.amplitude = 0.85 + 0.3 * rng.uniform();
    ms.phase = 0.3 * (rng.uniform() - 0.5);

    SkeletonSequence seq;
    seq.coords = Tensor(Shape{3, kSyntheticFrames, kKinectJoints, 1});
    seq.edges = kinect25_edges();
    seq.label = cls;
    seq.caption = synthetic_caption(cls);

    const auto& pose = rest_pose();
    for (int t = 0; t < kSyntheticFrames; ++t)
        for (int j = 0; j < kKinectJoints; ++j)
            for (int c = 0; c < 3; ++c) seq.coords.at(c, t, j, 0) = pose[j][c];
    for (int t = 0; t < kSyntheticFrames; ++t)
        apply_family(seq.coords, cls, t, static_cast<double>(t) / kSyntheticFrames * 2.0, ms);
    for (std::size_t i = 0; i < seq.coords.size(); ++i) seq.coords[i] += 0.004 * rng.gauss();
    return seq;
}

inline std::vector<SkeletonSequence> make_synthetic_dataset(int num_classes, int samples_per_class, int seed) {
    if (num_classes < 2) throw UsageError("synthetic dataset needs at least 2 classes");
    std::vector<SkeletonSequence> out;
    out.reserve(static_cast<std::size_t>(num_classes) * samples_per_class);
    for (int cls = 0; cls < num_classes; ++cls)
        for (int i = 0; i < samples_per_class; ++i) out.push_back(make_synthetic_sample(cls, i, seed));
    return out;
}

}  // namespace hocslm
