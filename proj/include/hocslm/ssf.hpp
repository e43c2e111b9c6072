#pragma once

// Skeleton-language sequential fusion: projects the sample-level semantic
// vector into the decoder embedding space as a single skeleton token,
// assembles [SK] + prompt + caption into one teacher-forced sequence, and
// scores it with the frozen decoder.

#include <string>
#include <vector>

#include "hocslm/lm.hpp"

namespace hocslm {

struct SsfConfig {
    int feature_dim = 32;   // D, backbone output
    int prompt_len = 8;     // L_p
    std::string prompt_init_text = "Describe the action:";
};

struct MultimodalSequence {
    Var embeddings;           // [1 + L_p + L_t, D*]
    std::vector<int> labels;  // ignore index at non-caption positions
};

struct GenLossResult {
    Var value;
    bool all_masked = false;
};

class SsfModule {
public:
    SsfModule(const SsfConfig& cfg, const FrozenDecoderLm& lm, ParamRegistry& reg, Rng& rng)
        : cfg_(cfg), lm_(lm) {
        const int d = cfg.feature_dim;
        const int ds = lm.config().embed_dim;
        w1_ = reg.add("ssf.proj.w1", random_gauss({d, d}, rng, 1.0 / std::sqrt(d)));
        b1_ = reg.add("ssf.proj.b1", Tensor(Shape{d}));
        w2_ = reg.add("ssf.proj.w2", random_gauss({d, ds}, rng, 1.0 / std::sqrt(d)));
        b2_ = reg.add("ssf.proj.b2", Tensor(Shape{ds}));
        ln_gain_ = reg.add("ssf.proj.ln_gain", Tensor::full({ds}, 1.0));
        ln_bias_ = reg.add("ssf.proj.ln_bias", Tensor(Shape{ds}));

        // prompt starts from the embedded init text, padded/truncated to L_p
        Tensor prompt(Shape{cfg.prompt_len, ds});
        ByteTokenizer tok;
        auto ids = tok.encode(cfg.prompt_init_text, /*add_eos=*/false);
        {
            NoGradGuard ng;
            Var rows = lm.embed_tokens(ids);
            for (int p = 0; p < cfg.prompt_len; ++p)
                for (int j = 0; j < ds; ++j)
                    prompt.at(p, j) = (p < static_cast<int>(ids.size())) ? rows->value.at(p, j)
                                                                         : 0.02 * rng.gauss();
        }
        prompt_ = reg.add("ssf.prompt", std::move(prompt));
    }

    const SsfConfig& config() const { return cfg_; }
    const FrozenDecoderLm& lm() const { return lm_; }
    Var prompt() const { return prompt_; }
    Var w1() const { return w1_; }
    Var b1() const { return b1_; }
    Var w2() const { return w2_; }
    Var b2() const { return b2_; }
    Var ln_gain() const { return ln_gain_; }
    Var ln_bias() const { return ln_bias_; }

    // [SK] = LayerNorm(W2 ReLU(W1 f + b1) + b2)
    Var project_skeleton_token(const Var& semantic) const {
        if (!semantic->value.all_finite()) throw NonFiniteActivation("semantic vector is not finite");
        Var hidden = ag::relu(ag::linear(semantic, w1_, b1_));
        Var token = ag::layer_norm(ag::linear(hidden, w2_, b2_), ln_gain_, ln_bias_);
        if (!token->value.all_finite()) throw NonFiniteActivation("skeleton token is not finite");
        return token;
    }

    MultimodalSequence assemble(const Var& skeleton_token, const std::vector<int>& caption_ids_in) const {
        if (caption_ids_in.empty()) throw EmptyCaption("caption token list is empty");
        std::vector<int> caption_ids = caption_ids_in;
        if (caption_ids.back() != ByteTokenizer::kEos) caption_ids.push_back(ByteTokenizer::kEos);

        const int lp = cfg_.prompt_len;
        const int lt = static_cast<int>(caption_ids.size());
        MultimodalSequence seq;
        Var sk_row = ag::reshape(skeleton_token, {1, lm_.config().embed_dim});
        Var caption_rows = lm_.embed_tokens(caption_ids);
        seq.embeddings = lm_.add_positions(ag::concat0({sk_row, prompt_, caption_rows}));
        seq.labels.assign(static_cast<std::size_t>(1 + lp + lt), FrozenDecoderLm::kIgnoreIndex);
        for (int t = 0; t < lt; ++t) seq.labels[static_cast<std::size_t>(1 + lp + t)] = caption_ids[t];
        return seq;
    }

    // Teacher-forced next-token loss: position t is predicted by logits[t-1];
    // only positions whose label is not the ignore index contribute.
    static GenLossResult generation_loss(const Var& lm_logits, const std::vector<int>& labels) {
        if (static_cast<std::size_t>(lm_logits->value.dim(0)) != labels.size())
            throw ShapeMismatch("generation_loss: logits/labels length mismatch");
        const int len = static_cast<int>(labels.size());
        bool any = false;
        for (int t = 1; t < len; ++t) any = any || labels[t] >= 0;
        GenLossResult out;
        out.all_masked = !any;
        if (!any) {
            out.value = constant(Tensor::scalar(0.0));
            return out;
        }
        std::vector<int> shifted(labels.begin() + 1, labels.end());
        out.value = ag::masked_nll(ag::slice_rows(lm_logits, 0, len - 1), shifted);
        return out;
    }

    GenLossResult caption_loss(const Var& semantic, const std::vector<int>& caption_ids) const {
        auto seq = assemble(project_skeleton_token(semantic), caption_ids);
        return generation_loss(lm_.logits(seq.embeddings), seq.labels);
    }

    static Var total_loss(const Var& gen, const Var& cls, double lambda_gen, double lambda_cls) {
        return ag::add(ag::scale(gen, lambda_gen), ag::scale(cls, lambda_cls));
    }

    // greedy decoding conditioned on [SK] + prompt; stops at eos or max_tokens
    std::string generate_caption(const Var& semantic, int max_tokens) const {
        NoGradGuard ng;
        ByteTokenizer tok;
        std::vector<int> generated;
        Var sk_row = ag::reshape(project_skeleton_token(semantic), {1, lm_.config().embed_dim});
        for (int step = 0; step < max_tokens; ++step) {
            std::vector<Var> parts = {sk_row, prompt_};
            if (!generated.empty()) parts.push_back(lm_.embed_tokens(generated));
            Var seq = lm_.add_positions(ag::concat0(parts));
            Var logits = lm_.logits(seq);
            const int last = logits->value.dim(0) - 1;
            int best = 0;
            double best_v = logits->value.at(last, 0);
            for (int v = 1; v < logits->value.dim(1); ++v)
                if (logits->value.at(last, v) > best_v) {
                    best_v = logits->value.at(last, v);
                    best = v;
                }
            if (best == ByteTokenizer::kEos) break;
            generated.push_back(best);
        }
        return tok.decode(generated);
    }

private:
    SsfConfig cfg_;
    const FrozenDecoderLm& lm_;
    Var w1_, b1_, w2_, b2_;
    Var ln_gain_, ln_bias_;
    Var prompt_;
};

}  // namespace hocslm
