#pragma once

// Skeleton sequence container, the canonical 25-joint tree and the physical
// adjacency mask.

#include <optional>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "hocslm/tensor.hpp"

namespace hocslm {

using EdgeList = std::vector<std::pair<int, int>>;  // (parent, child)

// coords layout: {C, T, N, M}. M (tracked bodies) is 1 for synthetic data and
// 2 for parsed capture files.
struct SkeletonSequence {
    Tensor coords;
    EdgeList edges;
    std::optional<int> label;
    std::string caption;

    int channels() const { return coords.dim(0); }
    int frames() const { return coords.dim(1); }
    int joints() const { return coords.dim(2); }
    int bodies() const { return coords.dim(3); }

    double& at(int c, int t, int n, int m = 0) { return coords.at(c, t, n, m); }
    double at(int c, int t, int n, int m = 0) const { return coords.at(c, t, n, m); }
};

// Kinect-25 tree rooted at the spine base (joint 0), oriented parent->child.
inline const EdgeList& kinect25_edges() {
    static const EdgeList edges = {
        {0, 1},  {0, 12},  {0, 16},  {1, 20},  {12, 13}, {13, 14}, {14, 15}, {16, 17},
        {17, 18}, {18, 19}, {20, 2},  {20, 4},  {20, 8},  {2, 3},   {4, 5},   {5, 6},
        {6, 7},   {7, 22},  {22, 21}, {8, 9},   {9, 10},  {10, 11}, {11, 24}, {24, 23},
    };
    return edges;
}

inline constexpr int kKinectJoints = 25;

// parent index per joint, -1 at the root; validates that edges form a tree
inline std::vector<int> parents_from_edges(const EdgeList& edges, int joints) {
    if (static_cast<int>(edges.size()) != joints - 1)
        throw ShapeMismatch("skeleton edges must form a tree: expected " + std::to_string(joints - 1) +
                            " edges, got " + std::to_string(edges.size()));
    std::vector<std::vector<int>> adj(joints);
    for (auto [a, b] : edges) {
        if (a < 0 || a >= joints || b < 0 || b >= joints)
            throw ShapeMismatch("skeleton edge index out of range");
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    std::vector<int> parent(joints, -2);
    std::queue<int> q;
    parent[0] = -1;
    q.push(0);
    int seen = 1;
    while (!q.empty()) {
        const int u = q.front();
        q.pop();
        for (int v : adj[u])
            if (parent[v] == -2) {
                parent[v] = u;
                q.push(v);
                ++seen;
            }
    }
    if (seen != joints) throw ShapeMismatch("skeleton edges are not connected");
    return parent;
}

// binary N x N adjacency-plus-self-loops mask
struct PhysicalMask {
    Tensor mask;  // {N, N}

    static PhysicalMask from_edges(const EdgeList& edges, int joints) {
        PhysicalMask out;
        out.mask = Tensor(Shape{joints, joints});
        for (int i = 0; i < joints; ++i) out.mask.at(i, i) = 1.0;
        for (auto [a, b] : edges) {
            out.mask.at(a, b) = 1.0;
            out.mask.at(b, a) = 1.0;
        }
        return out;
    }

    int joints() const { return mask.dim(0); }
};

}  // namespace hocslm
