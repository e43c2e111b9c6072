#pragma once

// The six ensemble input representations derived from one sequence, plus
// temporal resampling and coordinate centering.

#include <array>
#include <string>

#include "hocslm/skeleton.hpp"

namespace hocslm {

enum class StreamKind { Joint = 0, Bone, JointMotion, BoneMotion, Joint2nd, Vel2nd };

inline const std::array<std::string, 6>& stream_names() {
    static const std::array<std::string, 6> names = {"joint",       "bone",      "joint_motion",
                                                     "bone_motion", "joint_2nd", "vel_2nd"};
    return names;
}

inline StreamKind stream_from_name(const std::string& name) {
    const auto& names = stream_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<StreamKind>(i);
    throw UsageError("unknown stream '" + name + "'");
}

struct StreamBundle {
    Tensor joint, bone, joint_motion, bone_motion, joint_2nd, vel_2nd;  // all {C,T,N,M}

    const Tensor& get(StreamKind kind) const {
        switch (kind) {
            case StreamKind::Joint: return joint;
            case StreamKind::Bone: return bone;
            case StreamKind::JointMotion: return joint_motion;
            case StreamKind::BoneMotion: return bone_motion;
            case StreamKind::Joint2nd: return joint_2nd;
            default: return vel_2nd;
        }
    }
};

namespace detail_streams {

// forward frame difference, last frame zero-padded
inline Tensor time_diff(const Tensor& x) {
    const int C = x.dim(0), T = x.dim(1), N = x.dim(2), M = x.dim(3);
    Tensor out(x.shape());
    for (int c = 0; c < C; ++c)
        for (int t = 0; t + 1 < T; ++t)
            for (int n = 0; n < N; ++n)
                for (int m = 0; m < M; ++m) out.at(c, t, n, m) = x.at(c, t + 1, n, m) - x.at(c, t, n, m);
    return out;
}

}  // namespace detail_streams

inline StreamBundle derive_streams(const SkeletonSequence& seq) {
    if (seq.frames() < 3)
        throw TooFewFrames("need at least 3 frames for second differences, got " + std::to_string(seq.frames()));
    const auto parents = parents_from_edges(seq.edges, seq.joints());
    const int C = seq.channels(), T = seq.frames(), N = seq.joints(), M = seq.bodies();

    StreamBundle out;
    out.joint = seq.coords;
    out.bone = Tensor(seq.coords.shape());
    for (int c = 0; c < C; ++c)
        for (int t = 0; t < T; ++t)
            for (int n = 0; n < N; ++n) {
                if (parents[n] < 0) continue;  // root bone stays zero
                for (int m = 0; m < M; ++m)
                    out.bone.at(c, t, n, m) = seq.at(c, t, n, m) - seq.at(c, t, parents[n], m);
            }
    out.joint_motion = detail_streams::time_diff(out.joint);
    out.bone_motion = detail_streams::time_diff(out.bone);
    out.joint_2nd = detail_streams::time_diff(out.joint_motion);
    out.vel_2nd = detail_streams::time_diff(out.bone_motion);
    return out;
}

// Linear temporal resampling to exactly target_T frames; identity when the
// length already matches.
inline SkeletonSequence resample(const SkeletonSequence& seq, int target_t) {
    if (seq.frames() == 0 || seq.coords.empty()) throw EmptySequence("cannot resample an empty sequence");
    if (target_t < 1) throw UsageError("target frame count must be >= 1");
    const int C = seq.channels(), T = seq.frames(), N = seq.joints(), M = seq.bodies();

    SkeletonSequence out;
    out.edges = seq.edges;
    out.label = seq.label;
    out.caption = seq.caption;
    out.coords = Tensor(Shape{C, target_t, N, M});
    for (int k = 0; k < target_t; ++k) {
        double src = 0.0;
        if (target_t > 1 && T > 1) src = static_cast<double>(k) * (T - 1) / (target_t - 1);
        const int lo = static_cast<int>(src);
        const int hi = std::min(lo + 1, T - 1);
        const double w = src - lo;
        for (int c = 0; c < C; ++c)
            for (int n = 0; n < N; ++n)
                for (int m = 0; m < M; ++m)
                    out.coords.at(c, k, n, m) =
                        (1.0 - w) * seq.at(c, lo, n, m) + w * seq.at(c, hi, n, m);
    }
    return out;
}

// Center each tracked body on its own root joint at the first frame. All-zero
// body slots (padding) are left untouched.
inline SkeletonSequence normalize_sequence(const SkeletonSequence& seq) {
    const int C = seq.channels(), T = seq.frames(), N = seq.joints(), M = seq.bodies();
    SkeletonSequence out = seq;
    for (int m = 0; m < M; ++m) {
        bool any = false;
        for (int c = 0; c < C && !any; ++c)
            for (int t = 0; t < T && !any; ++t)
                for (int n = 0; n < N && !any; ++n) any = seq.at(c, t, n, m) != 0.0;
        if (!any) continue;
        for (int c = 0; c < C; ++c) {
            const double origin = seq.at(c, 0, 0, m);
            for (int t = 0; t < T; ++t)
                for (int n = 0; n < N; ++n) out.at(c, t, n, m) -= origin;
        }
    }
    return out;
}

// model input view: fold one body of one stream into a {C,T,N} tensor
inline Tensor body_slice(const Tensor& coords, int body) {
    const int C = coords.dim(0), T = coords.dim(1), N = coords.dim(2);
    Tensor out(Shape{C, T, N});
    for (int c = 0; c < C; ++c)
        for (int t = 0; t < T; ++t)
            for (int n = 0; n < N; ++n) out.at(c, t, n) = coords.at(c, t, n, body);
    return out;
}

inline bool body_is_empty(const Tensor& coords, int body) {
    const int C = coords.dim(0), T = coords.dim(1), N = coords.dim(2);
    for (int c = 0; c < C; ++c)
        for (int t = 0; t < T; ++t)
            for (int n = 0; n < N; ++n)
                if (coords.at(c, t, n, body) != 0.0) return false;
    return true;
}

}  // namespace hocslm
