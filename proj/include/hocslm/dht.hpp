#pragma once

// Dual-path temporal layer: frame-to-frame attention over the whole window in
// parallel with a four-branch convolution bank (plain K=5, dilated K=5/d=2,
// max-pool K=3, and a 1x1 shortcut), fused by learnable gains.

#include <string>
#include <vector>

#include "hocslm/cts.hpp"  // ensure_finite
#include "hocslm/params.hpp"

namespace hocslm {

struct DhtConfig {
    int channels = 16;      // input width (and attention width)
    int out_channels = 16;  // must be divisible by 4
    bool use_gta = true;
    bool use_ltc = true;
};

class DhtLayer {
public:
    struct Activation {
        Var frame_weights;  // [T,T] row-stochastic attention map
        Var gta_out;        // [C_out,T,N]
        Var ltc_out;        // [C_out,T,N]
        Var output;
    };

    DhtLayer(const DhtConfig& cfg, ParamRegistry& reg, const std::string& prefix, Rng& rng) : cfg_(cfg) {
        if (cfg.out_channels % 4 != 0)
            throw ShapeMismatch("dht out_channels must be divisible by 4, got " + std::to_string(cfg.out_channels));
        const int c = cfg.channels;
        const int c4 = branch_channels();
        auto cmap = [&](const std::string& name, int co, int ci) {
            return reg.add(prefix + name, random_gauss({co, ci}, rng, 1.0 / std::sqrt(ci)));
        };
        q_w_ = cmap("q_w", c, c);
        q_b_ = reg.add(prefix + "q_b", Tensor(Shape{c}));
        k_w_ = cmap("k_w", c, c);
        k_b_ = reg.add(prefix + "k_b", Tensor(Shape{c}));
        v_w_ = cmap("v_w", c, c);
        v_b_ = reg.add(prefix + "v_b", Tensor(Shape{c}));
        gta_proj_w_ = cmap("gta_proj_w", cfg.out_channels, c);
        gta_proj_b_ = reg.add(prefix + "gta_proj_b", Tensor(Shape{cfg.out_channels}));

        b1_in_w_ = cmap("b1_in_w", c4, c);
        b1_in_b_ = reg.add(prefix + "b1_in_b", Tensor(Shape{c4}));
        b1_conv_w_ = reg.add(prefix + "b1_conv_w", random_gauss({c4, c4, 5}, rng, 1.0 / std::sqrt(5.0 * c4)));
        b1_conv_b_ = reg.add(prefix + "b1_conv_b", Tensor(Shape{c4}));
        b2_in_w_ = cmap("b2_in_w", c4, c);
        b2_in_b_ = reg.add(prefix + "b2_in_b", Tensor(Shape{c4}));
        b2_conv_w_ = reg.add(prefix + "b2_conv_w", random_gauss({c4, c4, 5}, rng, 1.0 / std::sqrt(5.0 * c4)));
        b2_conv_b_ = reg.add(prefix + "b2_conv_b", Tensor(Shape{c4}));
        b3_in_w_ = cmap("b3_in_w", c4, c);
        b3_in_b_ = reg.add(prefix + "b3_in_b", Tensor(Shape{c4}));
        b4_w_ = cmap("b4_w", c4, c);
        b4_b_ = reg.add(prefix + "b4_b", Tensor(Shape{c4}));

        fuse_global_ = reg.add(prefix + "fuse_global", Tensor::scalar(1.0));
        fuse_local_ = reg.add(prefix + "fuse_local", Tensor::scalar(1.0));
    }

    int branch_channels() const { return cfg_.out_channels / 4; }
    const DhtConfig& config() const { return cfg_; }

    // whole-window frame attention; keeps the input channel width
    Var gta(const Var& x, Activation* act = nullptr) const {
        const int c = x->value.dim(0);
        const int n = x->value.dim(2);
        if (c != cfg_.channels) throw ShapeMismatch("gta: channel width mismatch");
        Var q = ag::channel_map(x, q_w_, q_b_);
        Var k = ag::channel_map(x, k_w_, k_b_);
        Var v = ag::channel_map(x, v_w_, v_b_);
        const double inv = 1.0 / (std::sqrt(static_cast<double>(c)) * n);
        Var weights = ag::softmax_lastdim(ag::scale(ag::matmul_nt(ag::frames_flatten(q), ag::frames_flatten(k)), inv));
        if (act) act->frame_weights = weights;
        return ag::time_attention_apply(weights, v);
    }

    // four-branch convolution bank, each branch C_out/4 wide
    Var ltc(const Var& x) const {
        Var s1 = ag::conv_time(ag::channel_map(x, b1_in_w_, b1_in_b_), b1_conv_w_, b1_conv_b_, 1);
        Var s2 = ag::conv_time(ag::channel_map(x, b2_in_w_, b2_in_b_), b2_conv_w_, b2_conv_b_, 2);
        Var s3 = ag::maxpool_time(ag::channel_map(x, b3_in_w_, b3_in_b_), 3);
        Var s4 = ag::channel_map(x, b4_w_, b4_b_);
        return ag::concat0({s1, s2, s3, s4});
    }

    Var forward(const Var& x, Activation* act = nullptr) const {
        Var out;
        Var gta_path, ltc_path;
        if (cfg_.use_gta) {
            gta_path = ag::smul(ag::channel_map(gta(x, act), gta_proj_w_, gta_proj_b_), fuse_global_);
            out = gta_path;
        }
        if (cfg_.use_ltc) {
            ltc_path = ag::smul(ltc(x), fuse_local_);
            out = out ? ag::add(out, ltc_path) : ltc_path;
        }
        if (!out) throw ShapeMismatch("dht: at least one temporal branch must be enabled");
        ensure_finite(out, "dht output");
        if (act) {
            act->gta_out = gta_path;
            act->ltc_out = ltc_path;
            act->output = out;
        }
        return out;
    }

    Var fuse_global() const { return fuse_global_; }
    Var fuse_local() const { return fuse_local_; }
    Var b1_in_w() const { return b1_in_w_; }
    Var b1_conv_w() const { return b1_conv_w_; }
    Var b2_in_w() const { return b2_in_w_; }
    Var b2_conv_w() const { return b2_conv_w_; }
    Var b3_in_w() const { return b3_in_w_; }
    Var b3_in_b() const { return b3_in_b_; }
    Var b4_w() const { return b4_w_; }
    Var b4_b() const { return b4_b_; }
    Var q_w() const { return q_w_; }

private:
    DhtConfig cfg_;
    Var q_w_, q_b_, k_w_, k_b_, v_w_, v_b_;
    Var gta_proj_w_, gta_proj_b_;
    Var b1_in_w_, b1_in_b_, b1_conv_w_, b1_conv_b_;
    Var b2_in_w_, b2_in_b_, b2_conv_w_, b2_conv_b_;
    Var b3_in_w_, b3_in_b_;
    Var b4_w_, b4_b_;
    Var fuse_global_, fuse_local_;
};

}  // namespace hocslm
