#pragma once

// Composite-topology spatial layer. A temporal pooling stage lifts joint
// features to per-channel pairwise maps; a global branch derives per-channel
// attention topologies modulated by row similarity and row distinctiveness;
// a local branch gates the Gram energy of pooled features through the
// physical adjacency mask. The fused topology acts as a graph kernel on the
// channel-transformed input.

#include <string>
#include <vector>

#include "hocslm/params.hpp"
#include "hocslm/skeleton.hpp"

namespace hocslm {

struct CtsConfig {
    int in_channels = 16;
    int out_channels = 16;
    int joints = 25;
    int reduction = 8;  // channel reduction of the pooling stage
    bool use_gsm = true;
    bool use_lse = true;
};

inline void ensure_finite(const Var& v, const std::string& where) {
    if (!v->value.all_finite()) throw NonFiniteActivation("non-finite values in " + where);
}

class CtsLayer {
public:
    struct Activation {
        Var pooled;                 // [C_r, N]
        Var pairwise;               // [C_r, N, N]
        std::vector<Var> attn_rows; // per-channel row-softmax weights, [N,N]
        std::vector<Var> similarity, distinctness;  // per-channel [N,N]
        Var global_topology;        // [C_out, N, N]
        Var local_topology;         // [N, N]
        Var fused_topology;         // [C_out, N, N]
        Var transformed;            // [C_out, T, N]
        Var output;                 // [C_out, T, N]
    };

    CtsLayer(const CtsConfig& cfg, ParamRegistry& reg, const std::string& prefix, Rng& rng) : cfg_(cfg) {
        if (cfg.in_channels % cfg.reduction != 0)
            throw ShapeMismatch("reduction " + std::to_string(cfg.reduction) + " must divide in_channels " +
                                std::to_string(cfg.in_channels));
        const int n = cfg.joints;
        const int cr = reduced_channels();
        const int hidden = std::max(1, n * cr / 2);

        pool_w_ = reg.add(prefix + "pool_w", random_gauss({cr, cfg.in_channels}, rng, 1.0 / std::sqrt(cfg.in_channels)));
        pool_b_ = reg.add(prefix + "pool_b", Tensor(Shape{cr}));
        lift_w_ = reg.add(prefix + "lift_w", random_gauss({n, n * n}, rng, 1.0 / std::sqrt(n)));
        lift_b_ = reg.add(prefix + "lift_b", Tensor(Shape{n * n}));
        query_w_ = reg.add(prefix + "query_w", random_gauss({n, n}, rng, 1.0 / std::sqrt(n)));
        key_w_ = reg.add(prefix + "key_w", random_gauss({n, n}, rng, 1.0 / std::sqrt(n)));
        value_w_ = reg.add(prefix + "value_w", random_gauss({n, n}, rng, 1.0 / std::sqrt(n)));
        sim_gain_ = reg.add(prefix + "sim_gain", Tensor(Shape{cr}));
        diff_gain_ = reg.add(prefix + "diff_gain", Tensor(Shape{cr}));
        res_gain_ = reg.add(prefix + "res_gain", Tensor(Shape{cr}));
        mix_w_ = reg.add(prefix + "mix_w", random_gauss({cr, cfg.out_channels}, rng, 1.0 / std::sqrt(cr)));
        gate_h_w_ = reg.add(prefix + "gate_h_w", random_gauss({cr * n, hidden}, rng, 1.0 / std::sqrt(cr * n)));
        gate_h_b_ = reg.add(prefix + "gate_h_b", Tensor(Shape{hidden}));
        gate_o_w_ = reg.add(prefix + "gate_o_w", random_gauss({hidden, n * n}, rng, 1.0 / std::sqrt(hidden)));
        gate_o_b_ = reg.add(prefix + "gate_o_b", Tensor(Shape{n * n}));
        prior_gain_ = reg.add(prefix + "prior_gain", Tensor::scalar(0.0));
        fuse_global_ = reg.add(prefix + "fuse_global", Tensor::scalar(1.0));
        fuse_local_ = reg.add(prefix + "fuse_local", Tensor::scalar(0.1));
        feat_w_ = reg.add(prefix + "feat_w",
                          random_gauss({cfg.out_channels, cfg.in_channels}, rng, 1.0 / std::sqrt(cfg.in_channels)));
        feat_b_ = reg.add(prefix + "feat_b", Tensor(Shape{cfg.out_channels}));
    }

    int reduced_channels() const { return cfg_.in_channels / cfg_.reduction; }
    const CtsConfig& config() const { return cfg_; }

    // temporal pooling + channel reduction + pairwise lift
    std::pair<Var, Var> preprocess(const Var& x) const {
        if (x->value.rank() != 3 || x->value.dim(0) != cfg_.in_channels || x->value.dim(2) != cfg_.joints)
            throw ShapeMismatch("cts preprocess: expected [" + std::to_string(cfg_.in_channels) + ",T," +
                                std::to_string(cfg_.joints) + "], got " + shape_str(x->value.shape()));
        const int n = cfg_.joints;
        Var pooled = ag::gelu(ag::channel_map(ag::mean_time(x), pool_w_, pool_b_));
        std::vector<Var> maps;
        for (int i = 0; i < reduced_channels(); ++i)
            maps.push_back(ag::reshape(ag::linear(ag::slice0(pooled, i), lift_w_, lift_b_), {n, n}));
        return {pooled, ag::stack0(maps)};
    }

    // global branch: per-channel modulated attention topologies mixed to C_out
    Var gsm(const Var& pairwise, Activation* act = nullptr) const {
        const int n = cfg_.joints;
        const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
        std::vector<Var> channels;
        for (int i = 0; i < reduced_channels(); ++i) {
            Var xt = ag::slice0(pairwise, i);
            Var q = ag::matmul(query_w_, xt);
            Var k = ag::matmul(key_w_, xt);
            Var v = ag::matmul(value_w_, xt);
            Var weights = ag::softmax_lastdim(ag::scale(ag::matmul_nt(q, k), inv_sqrt_n));
            if (act) act->attn_rows.push_back(weights);
            Var base = ag::matmul(weights, v);
            Var sim = ag::cosine_rows(q, k);
            Var dist = ag::sigmoid(ag::l2dist_rows(q, k));
            if (act) {
                act->similarity.push_back(sim);
                act->distinctness.push_back(dist);
            }
            Var modulated = ag::add(ag::mul(base, ag::add_const(ag::smul(sim, ag::index0d(sim_gain_, i)), 1.0)),
                                    ag::smul(dist, ag::index0d(diff_gain_, i)));
            channels.push_back(ag::add(modulated, ag::smul(xt, ag::index0d(res_gain_, i))));
        }
        return ag::mix_channels(ag::stack0(channels), mix_w_);
    }

    // local branch: mask-gated Gram energy with a learned prior weight
    Var lse(const Var& pooled, const PhysicalMask& mask) const {
        const int n = cfg_.joints;
        if (mask.joints() != n) throw ShapeMismatch("lse: mask size does not match joint count");
        Var flat = ag::reshape(pooled, {reduced_channels() * n});
        Var hidden = ag::relu(ag::linear(flat, gate_h_w_, gate_h_b_));
        Var gate = ag::reshape(ag::sigmoid(ag::linear(hidden, gate_o_w_, gate_o_b_)), {n, n});
        Var mask_c = constant(mask.mask);
        Var energy = ag::relu(ag::gram(pooled));
        return ag::add(ag::mul(ag::mul(mask_c, gate), energy), ag::smul(mask_c, prior_gain_));
    }

    Var forward(const Var& x, const PhysicalMask& mask, Activation* act = nullptr) const {
        auto [pooled, pairwise] = preprocess(x);
        Var fused;
        Var global_topology, local_topology;
        if (cfg_.use_gsm) {
            global_topology = gsm(pairwise, act);
            fused = ag::smul(global_topology, fuse_global_);
        }
        if (cfg_.use_lse) {
            local_topology = lse(pooled, mask);
            Var local = ag::smul(ag::broadcast0(local_topology, cfg_.out_channels), fuse_local_);
            fused = fused ? ag::add(fused, local) : local;
        }
        if (!fused) throw ShapeMismatch("cts: at least one spatial branch must be enabled");
        Var transformed = ag::channel_map(x, feat_w_, feat_b_);
        Var out = ag::topology_apply(fused, transformed);
        ensure_finite(out, "cts output");
        if (act) {
            act->pooled = pooled;
            act->pairwise = pairwise;
            act->global_topology = global_topology;
            act->local_topology = local_topology;
            act->fused_topology = fused;
            act->transformed = transformed;
            act->output = out;
        }
        return out;
    }

    // parameter handles for targeted tests
    Var query_w() const { return query_w_; }
    Var key_w() const { return key_w_; }
    Var value_w() const { return value_w_; }
    Var mix_w() const { return mix_w_; }
    Var lift_w() const { return lift_w_; }
    Var lift_b() const { return lift_b_; }
    Var pool_w() const { return pool_w_; }
    Var pool_b() const { return pool_b_; }
    Var sim_gain() const { return sim_gain_; }
    Var diff_gain() const { return diff_gain_; }
    Var res_gain() const { return res_gain_; }
    Var gate_h_w() const { return gate_h_w_; }
    Var gate_h_b() const { return gate_h_b_; }
    Var gate_o_w() const { return gate_o_w_; }
    Var gate_o_b() const { return gate_o_b_; }
    Var prior_gain() const { return prior_gain_; }
    Var fuse_global() const { return fuse_global_; }
    Var fuse_local() const { return fuse_local_; }
    Var feat_w() const { return feat_w_; }
    Var feat_b() const { return feat_b_; }

private:
    CtsConfig cfg_;
    Var pool_w_, pool_b_;
    Var lift_w_, lift_b_;
    Var query_w_, key_w_, value_w_;
    Var sim_gain_, diff_gain_, res_gain_;
    Var mix_w_;
    Var gate_h_w_, gate_h_b_, gate_o_w_, gate_o_b_;
    Var prior_gain_;
    Var fuse_global_, fuse_local_;
    Var feat_w_, feat_b_;
};

}  // namespace hocslm
