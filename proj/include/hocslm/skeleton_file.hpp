#pragma once

// Capture-file ingestion: the `.skeleton` text grammar, a lossless raw
// representation for round-tripping, body selection, and the binary sample
// cache.
//
// Grammar (whitespace-separated, line-oriented):
//   line 1: frame count F
//   per frame: body count B
//   per body: header line "body_id m1..m9 J", then J lines of
//             "x y z depthX depthY colorX colorY orientW orientX orientY orientZ state"
// Only x y z feed the model; everything else is retained in RawSkeletonFile.

#include <array>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "hocslm/skeleton.hpp"

namespace hocslm {

constexpr int kJointFields = 12;
constexpr int kBodyMetaFields = 9;

struct RawJoint {
    std::array<double, kJointFields> fields{};  // x y z come first
};

struct RawBody {
    long long body_id = 0;
    std::array<double, kBodyMetaFields> meta{};
    int joint_count = 0;
    std::vector<RawJoint> joints;
};

struct RawFrame {
    std::vector<RawBody> bodies;
};

struct RawSkeletonFile {
    int frame_count = 0;
    std::vector<RawFrame> frames;
};

namespace detail_sk {

inline std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

inline bool next_tokens(std::istream& in, std::vector<std::string>& toks) {
    std::string line;
    while (std::getline(in, line)) {
        toks = split_ws(line);
        if (!toks.empty()) return true;
    }
    return false;
}

inline bool parse_ll(const std::string& s, long long& out) {
    const char* b = s.data();
    const char* e = b + s.size();
    auto r = std::from_chars(b, e, out);
    return r.ec == std::errc() && r.ptr == e;
}

inline bool parse_f64(const std::string& s, double& out) {
    // strtod accepts the full decimal-float grammar incl. exponents
    const char* b = s.c_str();
    char* end = nullptr;
    out = std::strtod(b, &end);
    return end == b + s.size() && s.size() > 0;
}

inline std::string fmt_f64(double v) {
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof(buf), v);  // shortest round-trip form
    return std::string(buf, r.ptr);
}

}  // namespace detail_sk

inline RawSkeletonFile parse_skeleton_raw(std::istream& in) {
    using namespace detail_sk;
    RawSkeletonFile raw;
    std::vector<std::string> toks;

    if (!next_tokens(in, toks)) throw MalformedHeader("empty file");
    long long frames = 0;
    if (toks.size() != 1 || !parse_ll(toks[0], frames) || frames <= 0)
        throw MalformedHeader("frame count must be a positive integer, got '" + toks[0] + "'");
    raw.frame_count = static_cast<int>(frames);

    int declared_joints = -1;
    for (int f = 0; f < raw.frame_count; ++f) {
        if (!next_tokens(in, toks))
            throw TruncatedFile("missing body count for frame " + std::to_string(f));
        long long bodies = 0;
        if (toks.size() != 1 || !parse_ll(toks[0], bodies) || bodies < 0)
            throw TruncatedFile("bad body count for frame " + std::to_string(f));
        RawFrame frame;
        for (int b = 0; b < bodies; ++b) {
            if (!next_tokens(in, toks))
                throw TruncatedFile("missing body header in frame " + std::to_string(f));
            if (toks.size() != 2 + kBodyMetaFields)
                throw TruncatedFile("body header must have " + std::to_string(2 + kBodyMetaFields) +
                                    " fields, got " + std::to_string(toks.size()));
            RawBody body;
            if (!parse_ll(toks[0], body.body_id)) throw TruncatedFile("bad body id '" + toks[0] + "'");
            for (int i = 0; i < kBodyMetaFields; ++i)
                if (!parse_f64(toks[1 + i], body.meta[i]))
                    throw TruncatedFile("bad tracking value '" + toks[1 + i] + "'");
            long long jc = 0;
            if (!parse_ll(toks.back(), jc) || jc <= 0)
                throw JointCountMismatch("declared joint count '" + toks.back() + "' is not a positive integer");
            body.joint_count = static_cast<int>(jc);
            if (declared_joints < 0) declared_joints = body.joint_count;
            if (body.joint_count != declared_joints)
                throw JointCountMismatch("joint count changed from " + std::to_string(declared_joints) + " to " +
                                         std::to_string(body.joint_count));
            for (int j = 0; j < body.joint_count; ++j) {
                if (!next_tokens(in, toks))
                    throw TruncatedFile("missing joint " + std::to_string(j) + " of frame " + std::to_string(f));
                if (static_cast<int>(toks.size()) != kJointFields)
                    throw JointCountMismatch("declared " + std::to_string(body.joint_count) +
                                             " joints but joint line " + std::to_string(j) + " has " +
                                             std::to_string(toks.size()) + " fields");
                RawJoint joint;
                for (int i = 0; i < kJointFields; ++i)
                    if (!parse_f64(toks[i], joint.fields[i]))
                        throw TruncatedFile("bad joint value '" + toks[i] + "'");
                body.joints.push_back(joint);
            }
            frame.bodies.push_back(std::move(body));
        }
        raw.frames.push_back(std::move(frame));
    }
    return raw;
}

inline std::string serialize_skeleton_raw(const RawSkeletonFile& raw) {
    using namespace detail_sk;
    std::ostringstream os;
    os << raw.frame_count << "\n";
    for (const auto& frame : raw.frames) {
        os << frame.bodies.size() << "\n";
        for (const auto& body : frame.bodies) {
            os << body.body_id;
            for (double m : body.meta) os << " " << fmt_f64(m);
            os << " " << body.joint_count << "\n";
            for (const auto& joint : body.joints) {
                for (int i = 0; i < kJointFields; ++i) os << (i ? " " : "") << fmt_f64(joint.fields[i]);
                os << "\n";
            }
        }
    }
    return os.str();
}

// total squared frame-to-frame displacement; used to rank bodies
inline double body_motion_energy(const RawSkeletonFile& raw, long long body_id) {
    double energy = 0.0;
    const RawBody* prev = nullptr;
    for (const auto& frame : raw.frames) {
        const RawBody* cur = nullptr;
        for (const auto& b : frame.bodies)
            if (b.body_id == body_id) cur = &b;
        if (cur && prev && prev->joint_count == cur->joint_count) {
            for (int j = 0; j < cur->joint_count; ++j)
                for (int c = 0; c < 3; ++c) {
                    const double d = cur->joints[j].fields[c] - prev->joints[j].fields[c];
                    energy += d * d;
                }
        }
        prev = cur;
    }
    return energy;
}

// Collapses a raw file to the model input: top-2 bodies by motion energy,
// zero-padded to exactly two body slots.
inline SkeletonSequence to_sequence(const RawSkeletonFile& raw) {
    int joints = kKinectJoints;
    for (const auto& f : raw.frames)
        if (!f.bodies.empty()) {
            joints = f.bodies.front().joint_count;
            break;
        }

    std::vector<long long> ids;
    for (const auto& f : raw.frames)
        for (const auto& b : f.bodies)
            if (std::find(ids.begin(), ids.end(), b.body_id) == ids.end()) ids.push_back(b.body_id);
    std::vector<std::pair<double, long long>> ranked;
    for (long long id : ids) ranked.emplace_back(-body_motion_energy(raw, id), id);
    std::stable_sort(ranked.begin(), ranked.end());
    std::vector<long long> keep;
    for (std::size_t i = 0; i < ranked.size() && i < 2; ++i) keep.push_back(ranked[i].second);

    SkeletonSequence seq;
    seq.coords = Tensor(Shape{3, raw.frame_count, joints, 2});
    seq.edges = (joints == kKinectJoints) ? kinect25_edges() : EdgeList{};
    for (int f = 0; f < raw.frame_count; ++f)
        for (const auto& body : raw.frames[f].bodies) {
            auto it = std::find(keep.begin(), keep.end(), body.body_id);
            if (it == keep.end()) continue;
            const int m = static_cast<int>(it - keep.begin());
            for (int j = 0; j < joints && j < body.joint_count; ++j)
                for (int c = 0; c < 3; ++c) seq.at(c, f, j, m) = body.joints[j].fields[c];
        }
    return seq;
}

inline SkeletonSequence parse_skeleton_file(std::istream& in) { return to_sequence(parse_skeleton_raw(in)); }

inline SkeletonSequence parse_skeleton_file(const std::string& text) {
    std::istringstream is(text);
    return parse_skeleton_file(is);
}

// Action label from an NTU-style file name: ...A012.skeleton -> 11 (0-based).
inline std::optional<int> label_from_filename(const std::string& name) {
    auto pos = name.rfind('A');
    if (pos == std::string::npos || pos + 3 >= name.size()) return std::nullopt;
    int v = 0;
    for (int i = 1; i <= 3; ++i) {
        const char c = name[pos + i];
        if (c < '0' || c > '9') return std::nullopt;
        v = v * 10 + (c - '0');
    }
    return v - 1;
}

// ------------------------------------------------------------- binary cache

// Self-describing little-endian sample container, magic "HOCS1".
namespace detail_sk {

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw TruncatedFile("cache stream ended early");
    return v;
}

}  // namespace detail_sk

inline void write_cache(std::ostream& os, const SkeletonSequence& seq) {
    using namespace detail_sk;
    os.write("HOCS1", 5);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(seq.coords.rank()));
    for (int d : seq.coords.shape()) put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    put<std::uint8_t>(os, 8);  // dtype: 64-bit float
    put<std::int32_t>(os, seq.label ? *seq.label : -1);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(seq.caption.size()));
    os.write(seq.caption.data(), static_cast<std::streamsize>(seq.caption.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(seq.edges.size()));
    for (auto [a, b] : seq.edges) {
        put<std::uint16_t>(os, static_cast<std::uint16_t>(a));
        put<std::uint16_t>(os, static_cast<std::uint16_t>(b));
    }
    os.write(reinterpret_cast<const char*>(seq.coords.data()),
             static_cast<std::streamsize>(seq.coords.size() * sizeof(double)));
}

inline SkeletonSequence read_cache(std::istream& is) {
    using namespace detail_sk;
    char magic[5];
    is.read(magic, 5);
    if (!is || std::memcmp(magic, "HOCS1", 5) != 0)
        throw CheckpointVersionMismatch("bad cache magic (expected HOCS1)");
    const auto rank = get<std::uint32_t>(is);
    if (rank > 8) throw TruncatedFile("implausible cache rank");
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<int>(get<std::uint32_t>(is)));
    if (get<std::uint8_t>(is) != 8) throw CheckpointVersionMismatch("unsupported cache dtype");
    SkeletonSequence seq;
    const auto label = get<std::int32_t>(is);
    if (label >= 0) seq.label = label;
    const auto cap_len = get<std::uint32_t>(is);
    seq.caption.resize(cap_len);
    is.read(seq.caption.data(), cap_len);
    const auto edge_count = get<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < edge_count; ++i) {
        const int a = get<std::uint16_t>(is);
        const int b = get<std::uint16_t>(is);
        seq.edges.emplace_back(a, b);
    }
    seq.coords = Tensor(shape);
    is.read(reinterpret_cast<char*>(seq.coords.data()),
            static_cast<std::streamsize>(seq.coords.size() * sizeof(double)));
    if (!is) throw TruncatedFile("cache coords ended early");
    return seq;
}

}  // namespace hocslm
