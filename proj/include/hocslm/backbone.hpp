#pragma once

// HGLNet: input stem, a stack of spatial+temporal blocks with residual
// connections and per-channel normalization, global average pooling and the
// classification head. Also exposes the sample-level semantic vector used by
// the fusion module.

#include <memory>
#include <string>
#include <vector>

#include "hocslm/cts.hpp"
#include "hocslm/dht.hpp"
#include "hocslm/streams.hpp"

namespace hocslm {

enum class SsfStrategy { T0 = 0, T1, T2, T3, T4 };

inline std::string strategy_name(SsfStrategy s) {
    switch (s) {
        case SsfStrategy::T0: return "T0";
        case SsfStrategy::T1: return "T1";
        case SsfStrategy::T2: return "T2";
        case SsfStrategy::T3: return "T3";
        default: return "T4";
    }
}

inline SsfStrategy strategy_from_name(const std::string& s) {
    for (int i = 0; i <= 4; ++i)
        if (s == strategy_name(static_cast<SsfStrategy>(i))) return static_cast<SsfStrategy>(i);
    throw UsageError("unknown strategy '" + s + "' (expected T0..T4)");
}

struct AblationConfig {
    bool use_gsm = true;
    bool use_lse = true;
    bool use_gta = true;
    bool use_ltc = true;
    bool use_ssf = true;
    SsfStrategy ssf_strategy = SsfStrategy::T3;

    void validate() const {
        if (!use_gsm && !use_lse) throw UsageError("at least one spatial branch must be enabled");
        if (!use_gta && !use_ltc) throw UsageError("at least one temporal branch must be enabled");
        if (ssf_strategy == SsfStrategy::T0 && use_ssf)
            throw UsageError("strategy T0 implies use_ssf = false");
    }
};

struct BlockSpec {
    int in_channels;
    int out_channels;
    int stride;  // 1 or 2
};

struct BackboneConfig {
    std::vector<BlockSpec> blocks;
    int num_classes = 4;
    int joints = kKinectJoints;
    int window = 64;
    int reduction = 8;
    AblationConfig ablation;

    void validate() const {
        if (blocks.empty()) throw UsageError("backbone needs at least one block");
        for (std::size_t i = 0; i + 1 < blocks.size(); ++i)
            if (blocks[i].out_channels != blocks[i + 1].in_channels)
                throw UsageError("block widths must chain");
        for (const auto& b : blocks)
            if (b.stride != 1 && b.stride != 2) throw UsageError("block stride must be 1 or 2");
        ablation.validate();
    }

    int feature_dim() const { return blocks.back().out_channels; }

    // desk-scale preset: 4 blocks, widths 16/16/32/32, one temporal stride
    static BackboneConfig desk(int num_classes) {
        BackboneConfig cfg;
        cfg.blocks = {{16, 16, 1}, {16, 16, 1}, {16, 32, 2}, {32, 32, 1}};
        cfg.num_classes = num_classes;
        return cfg;
    }

    // full-scale layout mirroring the usual ten-block stack
    static BackboneConfig full(int num_classes) {
        BackboneConfig cfg;
        cfg.blocks = {{64, 64, 1},  {64, 64, 1},  {64, 64, 1},  {64, 64, 1},  {64, 128, 2},
                      {128, 128, 1}, {128, 128, 1}, {128, 256, 2}, {256, 256, 1}, {256, 256, 1}};
        cfg.num_classes = num_classes;
        return cfg;
    }
};

class Hglnet {
public:
    struct BlockTrace {
        CtsLayer::Activation cts;
        DhtLayer::Activation dht;
    };

    Hglnet(const BackboneConfig& cfg, ParamRegistry& reg, Rng& rng) : cfg_(cfg) {
        cfg_.validate();
        if (cfg_.joints == kKinectJoints) {
            mask_ = PhysicalMask::from_edges(kinect25_edges(), cfg_.joints);
        } else {  // small test skeletons: a chain tree
            EdgeList chain;
            for (int j = 1; j < cfg_.joints; ++j) chain.emplace_back(j - 1, j);
            mask_ = PhysicalMask::from_edges(chain, cfg_.joints);
        }
        const int w0 = cfg_.blocks.front().in_channels;
        stem_w_ = reg.add("backbone.stem.w", random_gauss({w0, 3}, rng, 1.0 / std::sqrt(3.0)));
        stem_b_ = reg.add("backbone.stem.b", Tensor(Shape{w0}));
        stem_gain_ = reg.add("backbone.stem.norm_gain", Tensor::full({w0}, 1.0));
        stem_bias_ = reg.add("backbone.stem.norm_bias", Tensor(Shape{w0}));
        for (std::size_t k = 0; k < cfg_.blocks.size(); ++k) {
            const auto& spec = cfg_.blocks[k];
            CtsConfig cc;
            cc.in_channels = spec.in_channels;
            cc.out_channels = spec.out_channels;
            cc.joints = cfg_.joints;
            cc.reduction = cfg_.reduction;
            cc.use_gsm = cfg_.ablation.use_gsm;
            cc.use_lse = cfg_.ablation.use_lse;
            cts_.push_back(std::make_unique<CtsLayer>(cc, reg, "cts." + std::to_string(k) + ".", rng));
            DhtConfig dc;
            dc.channels = spec.out_channels;
            dc.out_channels = spec.out_channels;
            dc.use_gta = cfg_.ablation.use_gta;
            dc.use_ltc = cfg_.ablation.use_ltc;
            dht_.push_back(std::make_unique<DhtLayer>(dc, reg, "dht." + std::to_string(k) + ".", rng));
            const std::string bp = "backbone." + std::to_string(k) + ".";
            norm_s_gain_.push_back(reg.add(bp + "norm_s_gain", Tensor::full({spec.out_channels}, 1.0)));
            norm_s_bias_.push_back(reg.add(bp + "norm_s_bias", Tensor(Shape{spec.out_channels})));
            norm_t_gain_.push_back(reg.add(bp + "norm_t_gain", Tensor::full({spec.out_channels}, 1.0)));
            norm_t_bias_.push_back(reg.add(bp + "norm_t_bias", Tensor(Shape{spec.out_channels})));
            if (spec.in_channels != spec.out_channels || spec.stride != 1) {
                res_w_.push_back(reg.add(bp + "res_w", random_gauss({spec.out_channels, spec.in_channels}, rng,
                                                                    1.0 / std::sqrt(spec.in_channels))));
                res_b_.push_back(reg.add(bp + "res_b", Tensor(Shape{spec.out_channels})));
            } else {
                res_w_.push_back(nullptr);
                res_b_.push_back(nullptr);
            }
        }
        const int d = cfg_.feature_dim();
        fc_w_ = reg.add("backbone.fc.w", random_gauss({d, cfg_.num_classes}, rng, 1.0 / std::sqrt(d)));
        fc_b_ = reg.add("backbone.fc.b", Tensor(Shape{cfg_.num_classes}));
    }

    const BackboneConfig& config() const { return cfg_; }
    const PhysicalMask& mask() const { return mask_; }
    int block_count() const { return static_cast<int>(cts_.size()); }
    CtsLayer& cts(int k) { return *cts_[k]; }
    DhtLayer& dht(int k) { return *dht_[k]; }
    Var fc_w() const { return fc_w_; }
    Var fc_b() const { return fc_b_; }

    int output_frames() const {
        int t = cfg_.window;
        for (const auto& b : cfg_.blocks) t = (t + b.stride - 1) / b.stride;
        return t;
    }

    // single body {C=3,T,N} -> final feature map {D,T',N}
    Var features(const Var& x, std::vector<BlockTrace>* traces = nullptr) const {
        Var h = ag::relu(ag::instance_norm(ag::channel_map(x, stem_w_, stem_b_), stem_gain_, stem_bias_));
        for (std::size_t k = 0; k < cts_.size(); ++k) {
            BlockTrace trace;
            BlockTrace* tp = traces ? &trace : nullptr;
            Var z = cts_[k]->forward(h, mask_, tp ? &tp->cts : nullptr);
            z = ag::relu(ag::instance_norm(z, norm_s_gain_[k], norm_s_bias_[k]));
            Var t = dht_[k]->forward(z, tp ? &tp->dht : nullptr);
            t = ag::instance_norm(t, norm_t_gain_[k], norm_t_bias_[k]);
            t = ag::subsample_time(t, cfg_.blocks[k].stride);
            Var r = h;
            if (res_w_[k]) r = ag::channel_map(h, res_w_[k], res_b_[k]);
            r = ag::subsample_time(r, cfg_.blocks[k].stride);
            h = ag::relu(ag::add(t, r));
            if (traces) traces->push_back(std::move(trace));
        }
        ensure_finite(h, "backbone features");
        return h;
    }

    // mean over time and joints of the final feature map
    Var semantic_vector(const Var& feature_map) const { return ag::global_avg_pool(feature_map); }

    Var logits_from_semantic(const Var& f) const { return ag::linear(f, fc_w_, fc_b_); }

    struct Forward {
        Var features;  // body-0 feature map {D,T',N}
        Var semantic;  // {D}
        Var logits;    // {num_classes}
    };

    // full sample {C,T,N,M}; non-empty bodies are folded and mean-pooled
    Forward forward_sample(const Tensor& coords, std::vector<BlockTrace>* traces = nullptr) const {
        if (coords.rank() != 4) throw ShapeMismatch("forward_sample expects {C,T,N,M}");
        Forward out;
        std::vector<Var> pooled;
        for (int m = 0; m < coords.dim(3); ++m) {
            if (m > 0 && body_is_empty(coords, m)) continue;
            Var body = constant(body_slice(coords, m));
            Var fm = features(body, (m == 0) ? traces : nullptr);
            if (m == 0) out.features = fm;
            pooled.push_back(semantic_vector(fm));
        }
        Var f = pooled.front();
        if (pooled.size() > 1) f = ag::scale(ag::add(pooled[0], pooled[1]), 0.5);
        out.semantic = f;
        out.logits = logits_from_semantic(f);
        ensure_finite(out.logits, "classifier logits");
        return out;
    }

private:
    BackboneConfig cfg_;
    PhysicalMask mask_;
    Var stem_w_, stem_b_, stem_gain_, stem_bias_;
    std::vector<std::unique_ptr<CtsLayer>> cts_;
    std::vector<std::unique_ptr<DhtLayer>> dht_;
    std::vector<Var> norm_s_gain_, norm_s_bias_, norm_t_gain_, norm_t_bias_;
    std::vector<Var> res_w_, res_b_;
    Var fc_w_, fc_b_;
};

}  // namespace hocslm
