#pragma once

// Desk-scale frozen decoder: a byte-level tokenizer and a small causal
// transformer whose weights are drawn once from a seeded generator and never
// trained. Activations stay differentiable so upstream modules can learn
// through it. Any external decoder honoring this interface can be swapped in.

#include <string>
#include <vector>

#include "hocslm/params.hpp"

namespace hocslm {

// V=256 byte vocabulary; control bytes double as specials (captions are ASCII)
struct ByteTokenizer {
    static constexpr int kVocab = 256;
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;

    std::vector<int> encode(const std::string& text, bool add_eos = true) const {
        std::vector<int> ids;
        ids.reserve(text.size() + 1);
        for (unsigned char c : text) ids.push_back(static_cast<int>(c));
        if (add_eos) ids.push_back(kEos);
        return ids;
    }

    std::string decode(const std::vector<int>& ids) const {
        std::string out;
        for (int id : ids) {
            if (id == kEos || id == kPad || id == kBos) continue;
            out.push_back(static_cast<char>(id));
        }
        return out;
    }
};

struct DecoderConfig {
    int vocab_size = ByteTokenizer::kVocab;
    int embed_dim = 64;   // D*
    int layers = 2;
    int heads = 4;
    int mlp_hidden = 256;
    int max_len = 512;
    int seed = 7777;
};

class FrozenDecoderLm {
public:
    static constexpr int kIgnoreIndex = -100;

    FrozenDecoderLm(const DecoderConfig& cfg, ParamRegistry& reg) : cfg_(cfg) {
        if (cfg.embed_dim % cfg.heads != 0) throw ShapeMismatch("embed_dim must split across heads");
        Rng rng(static_cast<std::uint64_t>(cfg.seed), 0x1a2b3c4dULL);
        const int d = cfg.embed_dim;
        auto frozen = [&](const std::string& name, Shape shape, double stddev) {
            return reg.add("lm." + name, random_gauss(std::move(shape), rng, stddev), /*trainable=*/false);
        };
        auto frozen_const = [&](const std::string& name, Tensor t) {
            return reg.add("lm." + name, std::move(t), /*trainable=*/false);
        };
        token_table_ = frozen("embed", {cfg.vocab_size, d}, 0.4);
        pos_table_ = frozen("pos", {cfg.max_len, d}, 0.1);
        for (int l = 0; l < cfg.layers; ++l) {
            Layer layer;
            const std::string p = std::to_string(l) + ".";
            layer.ln1_gain = frozen_const(p + "ln1.gain", Tensor::full({d}, 1.0));
            layer.ln1_bias = frozen_const(p + "ln1.bias", Tensor(Shape{d}));
            layer.q_w = frozen(p + "attn.q_w", {d, d}, 1.0 / std::sqrt(d));
            layer.q_b = frozen_const(p + "attn.q_b", Tensor(Shape{d}));
            layer.k_w = frozen(p + "attn.k_w", {d, d}, 1.0 / std::sqrt(d));
            layer.k_b = frozen_const(p + "attn.k_b", Tensor(Shape{d}));
            layer.v_w = frozen(p + "attn.v_w", {d, d}, 1.0 / std::sqrt(d));
            layer.v_b = frozen_const(p + "attn.v_b", Tensor(Shape{d}));
            layer.o_w = frozen(p + "attn.o_w", {d, d}, 1.0 / std::sqrt(d));
            layer.o_b = frozen_const(p + "attn.o_b", Tensor(Shape{d}));
            layer.ln2_gain = frozen_const(p + "ln2.gain", Tensor::full({d}, 1.0));
            layer.ln2_bias = frozen_const(p + "ln2.bias", Tensor(Shape{d}));
            layer.mlp_w1 = frozen(p + "mlp.w1", {d, cfg.mlp_hidden}, 1.0 / std::sqrt(d));
            layer.mlp_b1 = frozen_const(p + "mlp.b1", Tensor(Shape{cfg.mlp_hidden}));
            layer.mlp_w2 = frozen(p + "mlp.w2", {cfg.mlp_hidden, d}, 1.0 / std::sqrt(cfg.mlp_hidden));
            layer.mlp_b2 = frozen_const(p + "mlp.b2", Tensor(Shape{d}));
            layers_.push_back(layer);
        }
        ln_f_gain_ = frozen_const("ln_f.gain", Tensor::full({d}, 1.0));
        ln_f_bias_ = frozen_const("ln_f.bias", Tensor(Shape{d}));
        head_w_ = frozen("head.w", {d, cfg.vocab_size}, 1.0 / std::sqrt(d));
        head_b_ = frozen_const("head.b", Tensor(Shape{cfg.vocab_size}));
    }

    const DecoderConfig& config() const { return cfg_; }
    Var token_table() const { return token_table_; }

    Var embed_tokens(const std::vector<int>& ids) const { return ag::embed_rows(token_table_, ids); }

    // adds positional rows for positions [offset, offset+L)
    Var add_positions(const Var& embeddings, int offset = 0) const {
        const int len = embeddings->value.dim(0);
        if (offset + len > cfg_.max_len) throw ShapeMismatch("sequence exceeds decoder max length");
        return ag::add(embeddings, ag::slice_rows(pos_table_, offset, len));
    }

    // causal decoder over input embeddings [L,D*] -> logits [L,V]
    Var logits(const Var& embeddings) const {
        const int d = cfg_.embed_dim;
        const int dh = d / cfg_.heads;
        const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
        Var h = embeddings;
        for (const auto& layer : layers_) {
            Var xn = ag::layer_norm(h, layer.ln1_gain, layer.ln1_bias);
            Var q = ag::linear(xn, layer.q_w, layer.q_b);
            Var k = ag::linear(xn, layer.k_w, layer.k_b);
            Var v = ag::linear(xn, layer.v_w, layer.v_b);
            const int len = h->value.dim(0);
            std::vector<Var> heads;
            for (int hd = 0; hd < cfg_.heads; ++hd) {
                Var qh = slice_cols(q, hd * dh, dh, len);
                Var kh = slice_cols(k, hd * dh, dh, len);
                Var vh = slice_cols(v, hd * dh, dh, len);
                Var w = ag::softmax_lastdim(ag::causal_mask(ag::scale(ag::matmul_nt(qh, kh), inv)));
                heads.push_back(ag::matmul(w, vh));
            }
            Var attn = concat_cols(heads, len, dh);
            h = ag::add(h, ag::linear(attn, layer.o_w, layer.o_b));
            Var hn = ag::layer_norm(h, layer.ln2_gain, layer.ln2_bias);
            Var mid = ag::gelu(ag::linear(hn, layer.mlp_w1, layer.mlp_b1));
            h = ag::add(h, ag::linear(mid, layer.mlp_w2, layer.mlp_b2));
        }
        h = ag::layer_norm(h, ln_f_gain_, ln_f_bias_);
        return ag::linear(h, head_w_, head_b_);
    }

private:
    static Var slice_cols(const Var& x, int start, int len, int rows) {
        // reshape-free column slice via per-row gather
        Tensor out(Shape{rows, len});
        const int d = x->value.dim(1);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < len; ++c) out.at(r, c) = x->value.at(r, start + c);
        return ag::make_op(std::move(out), {x}, [x, start, len, rows, d](const Tensor& g, GradMap& sink) {
            if (!x->requires_grad) return;
            Tensor gx(Shape{rows, d});
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < len; ++c) gx.at(r, start + c) = g.at(r, c);
            ag::accum(sink, x.get(), std::move(gx));
        });
    }

    static Var concat_cols(const std::vector<Var>& xs, int rows, int width) {
        Tensor out(Shape{rows, static_cast<int>(xs.size()) * width});
        for (std::size_t i = 0; i < xs.size(); ++i)
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < width; ++c)
                    out.at(r, static_cast<int>(i) * width + c) = xs[i]->value.at(r, c);
        std::vector<Var> parents = xs;
        return ag::make_op(std::move(out), std::move(parents), [xs, rows, width](const Tensor& g, GradMap& sink) {
            for (std::size_t i = 0; i < xs.size(); ++i) {
                if (!xs[i]->requires_grad) continue;
                Tensor gx(Shape{rows, width});
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < width; ++c) gx.at(r, c) = g.at(r, static_cast<int>(i) * width + c);
                ag::accum(sink, xs[i].get(), std::move(gx));
            }
        });
    }

    struct Layer {
        Var ln1_gain, ln1_bias;
        Var q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;
        Var ln2_gain, ln2_bias;
        Var mlp_w1, mlp_b1, mlp_w2, mlp_b2;
    };

    DecoderConfig cfg_;
    Var token_table_, pos_table_;
    std::vector<Layer> layers_;
    Var ln_f_gain_, ln_f_bias_;
    Var head_w_, head_b_;
};

}  // namespace hocslm
