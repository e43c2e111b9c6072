#pragma once

// Full model: backbone + optional fusion stack behind one parameter registry,
// plus the versioned checkpoint container ("HOCS-CKPT-1").

#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "hocslm/backbone.hpp"
#include "hocslm/ssf.hpp"
#include "hocslm/synthetic.hpp"

namespace hocslm {

struct ModelConfig {
    BackboneConfig backbone;
    SsfConfig ssf;
    DecoderConfig decoder;
    StreamKind stream = StreamKind::Joint;
    std::vector<std::string> class_names;
    int seed = 0;
};

class HocslmModel {
public:
    explicit HocslmModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
        Rng rng(static_cast<std::uint64_t>(cfg_.seed), 0x9e3779b97f4a7c15ULL);
        backbone_ = std::make_unique<Hglnet>(cfg_.backbone, reg_, rng);
        if (cfg_.backbone.ablation.use_ssf) {
            lm_ = std::make_unique<FrozenDecoderLm>(cfg_.decoder, reg_);
            cfg_.ssf.feature_dim = cfg_.backbone.feature_dim();
            ssf_ = std::make_unique<SsfModule>(cfg_.ssf, *lm_, reg_, rng);
        }
        if (cfg_.class_names.empty())
            for (int c = 0; c < cfg_.backbone.num_classes; ++c)
                cfg_.class_names.push_back(synthetic_class_name(c));
    }

    const ModelConfig& config() const { return cfg_; }
    ParamRegistry& params() { return reg_; }
    const ParamRegistry& params() const { return reg_; }
    Hglnet& backbone() { return *backbone_; }
    const Hglnet& backbone() const { return *backbone_; }
    bool has_ssf() const { return ssf_ != nullptr; }
    SsfModule& ssf() {
        if (!ssf_) throw DecoderUnavailable("model was built without the fusion stack");
        return *ssf_;
    }
    const SsfModule& ssf() const {
        if (!ssf_) throw DecoderUnavailable("model was built without the fusion stack");
        return *ssf_;
    }
    FrozenDecoderLm& lm() {
        if (!lm_) throw DecoderUnavailable("model was built without the frozen decoder");
        return *lm_;
    }

    std::string class_name(int label) const {
        if (label < 0 || label >= static_cast<int>(cfg_.class_names.size()))
            return "class-" + std::to_string(label);
        return cfg_.class_names[static_cast<std::size_t>(label)];
    }

    std::string caption_for(const SkeletonSequence& seq) const {
        if (!seq.caption.empty()) return seq.caption;
        if (seq.label) return "A person is " + class_name(*seq.label) + ".";
        return "A person is moving.";
    }

    std::string generate_caption(const Tensor& coords, int max_tokens) const {
        NoGradGuard ng;
        auto fwd = backbone_->forward_sample(coords);
        return ssf().generate_caption(fwd.semantic, max_tokens);
    }

    std::uint64_t frozen_lm_checksum() const { return reg_.checksum("lm."); }

private:
    ModelConfig cfg_;
    ParamRegistry reg_;
    std::unique_ptr<Hglnet> backbone_;
    std::unique_ptr<FrozenDecoderLm> lm_;
    std::unique_ptr<SsfModule> ssf_;
};

// ------------------------------------------------------------- config json

inline nlohmann::json to_json(const ModelConfig& cfg) {
    nlohmann::json j;
    for (const auto& b : cfg.backbone.blocks)
        j["backbone"]["blocks"].push_back({b.in_channels, b.out_channels, b.stride});
    j["backbone"]["num_classes"] = cfg.backbone.num_classes;
    j["backbone"]["joints"] = cfg.backbone.joints;
    j["backbone"]["window"] = cfg.backbone.window;
    j["backbone"]["reduction"] = cfg.backbone.reduction;
    const auto& a = cfg.backbone.ablation;
    j["ablation"] = {{"use_gsm", a.use_gsm}, {"use_lse", a.use_lse},       {"use_gta", a.use_gta},
                     {"use_ltc", a.use_ltc}, {"use_ssf", a.use_ssf},       {"ssf_strategy", strategy_name(a.ssf_strategy)}};
    j["ssf"] = {{"prompt_len", cfg.ssf.prompt_len}, {"prompt_init_text", cfg.ssf.prompt_init_text}};
    j["decoder"] = {{"vocab_size", cfg.decoder.vocab_size}, {"embed_dim", cfg.decoder.embed_dim},
                    {"layers", cfg.decoder.layers},         {"heads", cfg.decoder.heads},
                    {"mlp_hidden", cfg.decoder.mlp_hidden}, {"max_len", cfg.decoder.max_len},
                    {"seed", cfg.decoder.seed}};
    j["stream"] = stream_names()[static_cast<std::size_t>(cfg.stream)];
    j["class_names"] = cfg.class_names;
    j["seed"] = cfg.seed;
    return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.backbone.blocks.clear();
    for (const auto& b : j.at("backbone").at("blocks"))
        cfg.backbone.blocks.push_back({b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>()});
    cfg.backbone.num_classes = j.at("backbone").at("num_classes").get<int>();
    cfg.backbone.joints = j.at("backbone").at("joints").get<int>();
    cfg.backbone.window = j.at("backbone").at("window").get<int>();
    cfg.backbone.reduction = j.at("backbone").at("reduction").get<int>();
    const auto& a = j.at("ablation");
    cfg.backbone.ablation.use_gsm = a.at("use_gsm").get<bool>();
    cfg.backbone.ablation.use_lse = a.at("use_lse").get<bool>();
    cfg.backbone.ablation.use_gta = a.at("use_gta").get<bool>();
    cfg.backbone.ablation.use_ltc = a.at("use_ltc").get<bool>();
    cfg.backbone.ablation.use_ssf = a.at("use_ssf").get<bool>();
    cfg.backbone.ablation.ssf_strategy = strategy_from_name(a.at("ssf_strategy").get<std::string>());
    cfg.ssf.prompt_len = j.at("ssf").at("prompt_len").get<int>();
    cfg.ssf.prompt_init_text = j.at("ssf").at("prompt_init_text").get<std::string>();
    const auto& d = j.at("decoder");
    cfg.decoder.vocab_size = d.at("vocab_size").get<int>();
    cfg.decoder.embed_dim = d.at("embed_dim").get<int>();
    cfg.decoder.layers = d.at("layers").get<int>();
    cfg.decoder.heads = d.at("heads").get<int>();
    cfg.decoder.mlp_hidden = d.at("mlp_hidden").get<int>();
    cfg.decoder.max_len = d.at("max_len").get<int>();
    cfg.decoder.seed = d.at("seed").get<int>();
    cfg.stream = stream_from_name(j.at("stream").get<std::string>());
    cfg.class_names = j.at("class_names").get<std::vector<std::string>>();
    cfg.seed = j.at("seed").get<int>();
    return cfg;
}

// ------------------------------------------------------------- checkpoints

inline constexpr const char* kCheckpointMagic = "HOCS-CKPT-1\n";

inline void save_checkpoint(std::ostream& os, const HocslmModel& model) {
    nlohmann::json header;
    header["config"] = to_json(model.config());
    std::size_t offset = 0;
    for (const auto& e : model.params().entries()) {
        header["tensors"].push_back(
            {{"name", e.name}, {"shape", e.var->value.shape()}, {"offset", offset}});
        offset += e.var->value.size();
    }
    header["total_doubles"] = offset;
    const std::string htext = header.dump();
    os.write(kCheckpointMagic, static_cast<std::streamsize>(std::strlen(kCheckpointMagic)));
    const auto hlen = static_cast<std::uint64_t>(htext.size());
    os.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    os.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    for (const auto& e : model.params().entries())
        os.write(reinterpret_cast<const char*>(e.var->value.data()),
                 static_cast<std::streamsize>(e.var->value.size() * sizeof(double)));
}

inline void save_checkpoint(const std::string& path, const HocslmModel& model) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint '" + path + "'");
    save_checkpoint(os, model);
}

inline std::unique_ptr<HocslmModel> load_checkpoint(std::istream& is) {
    const std::size_t magic_len = std::strlen(kCheckpointMagic);
    std::string magic(magic_len, '\0');
    is.read(magic.data(), static_cast<std::streamsize>(magic_len));
    if (!is || magic != kCheckpointMagic)
        throw CheckpointVersionMismatch("bad checkpoint magic (expected HOCS-CKPT-1)");
    std::uint64_t hlen = 0;
    is.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string htext(hlen, '\0');
    is.read(htext.data(), static_cast<std::streamsize>(hlen));
    if (!is) throw TruncatedFile("checkpoint header ended early");
    nlohmann::json header = nlohmann::json::parse(htext);

    auto model = std::make_unique<HocslmModel>(model_config_from_json(header.at("config")));
    for (const auto& t : header.at("tensors")) {
        const auto name = t.at("name").get<std::string>();
        Var v = model->params().find(name);
        const auto shape = t.at("shape").get<Shape>();
        if (shape != v->value.shape())
            throw CheckpointVersionMismatch("tensor shape mismatch for " + name);
        is.read(reinterpret_cast<char*>(v->value.data()),
                static_cast<std::streamsize>(v->value.size() * sizeof(double)));
        if (!is) throw TruncatedFile("checkpoint tensor data ended early at " + name);
    }
    return model;
}

inline std::unique_ptr<HocslmModel> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read checkpoint '" + path + "'");
    return load_checkpoint(is);
}

}  // namespace hocslm
