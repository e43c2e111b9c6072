#pragma once

// Named parameter registry shared by all modules. Names double as checkpoint
// keys ("cts.0.query_w", "dht.2.fuse_global", ...).

#include <map>
#include <string>
#include <vector>

#include "hocslm/autograd.hpp"

namespace hocslm {

struct ParamEntry {
    std::string name;
    Var var;
};

class ParamRegistry {
public:
    Var add(const std::string& name, Tensor init, bool trainable = true) {
        if (index_.count(name)) throw ShapeMismatch("duplicate parameter name: " + name);
        Var v = std::make_shared<Node>();
        v->value = std::move(init);
        v->requires_grad = trainable;  // leaves ignore grad_mode at creation
        index_[name] = entries_.size();
        entries_.push_back({name, v});
        return v;
    }

    Var find(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ShapeMismatch("unknown parameter: " + name);
        return entries_[it->second].var;
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    const std::vector<ParamEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    // deep copy of all values, in registration order
    std::map<std::string, Tensor> snapshot() const {
        std::map<std::string, Tensor> out;
        for (const auto& e : entries_) out[e.name] = e.var->value;
        return out;
    }

    void restore(const std::map<std::string, Tensor>& snap) {
        for (auto& e : entries_) {
            auto it = snap.find(e.name);
            if (it == snap.end()) throw ShapeMismatch("snapshot missing parameter: " + e.name);
            if (!it->second.same_shape(e.var->value))
                throw ShapeMismatch("snapshot shape mismatch for " + e.name);
            e.var->value = it->second;
        }
    }

    std::uint64_t checksum(const std::string& prefix = "") const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const auto& e : entries_) {
            if (e.name.rfind(prefix, 0) != 0) continue;
            h = fnv1a(e.name.data(), e.name.size(), h);
            h = fnv1a(e.var->value.data(), e.var->value.size() * sizeof(double), h);
        }
        return h;
    }

private:
    std::vector<ParamEntry> entries_;
    std::map<std::string, std::size_t> index_;
};

}  // namespace hocslm
