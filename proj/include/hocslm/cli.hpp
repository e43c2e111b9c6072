#pragma once

// Command-line surface: prepare / train / eval / ablate / ensemble /
// viz-attn / captions. All file outputs are written atomically under the
// declared output directory; failures exit nonzero with a single
// machine-parseable "error: category=..." line.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "hocslm/skeleton_file.hpp"
#include "hocslm/trainer.hpp"
#include "hocslm/viz.hpp"

namespace hocslm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ----------------------------------------------------------- run manifests

inline json train_config_to_json(const TrainConfig& cfg) {
    return json{{"batch_size", cfg.batch_size},
                {"epochs", cfg.epochs},
                {"learning_rate", cfg.learning_rate},
                {"weight_decay", cfg.weight_decay},
                {"lambda_gen", cfg.lambda_gen},
                {"lambda_cls", cfg.lambda_cls},
                {"seed", cfg.seed},
                {"strategy", strategy_name(cfg.strategy)},
                {"streams", cfg.streams}};
}

inline TrainConfig train_config_from_json(const json& j) {
    static const std::vector<std::string> known = {"batch_size", "epochs",     "learning_rate",
                                                   "weight_decay", "lambda_gen", "lambda_cls",
                                                   "seed",       "strategy",   "streams",
                                                   "model",      "data"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw UsageError("unknown config key '" + it.key() + "'");
    TrainConfig cfg;
    if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<int>();
    if (j.contains("epochs")) cfg.epochs = j["epochs"].get<int>();
    if (j.contains("learning_rate")) cfg.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("weight_decay")) cfg.weight_decay = j["weight_decay"].get<double>();
    if (j.contains("lambda_gen")) cfg.lambda_gen = j["lambda_gen"].get<double>();
    if (j.contains("lambda_cls")) cfg.lambda_cls = j["lambda_cls"].get<double>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<int>();
    if (j.contains("strategy")) cfg.strategy = strategy_from_name(j["strategy"].get<std::string>());
    if (j.contains("streams")) cfg.streams = j["streams"].get<std::vector<std::string>>();
    cfg.validate();
    return cfg;
}

inline void apply_model_section(ModelConfig& mc, const json& m) {
    static const std::vector<std::string> known = {"preset",  "blocks",    "window",         "reduction",
                                                   "ablation", "prompt_len", "init_checkpoint", "num_classes"};
    for (auto it = m.begin(); it != m.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw UsageError("unknown model key '" + it.key() + "'");
    if (m.contains("preset")) {
        const auto preset = m["preset"].get<std::string>();
        if (preset == "desk")
            mc.backbone.blocks = BackboneConfig::desk(mc.backbone.num_classes).blocks;
        else if (preset == "full")
            mc.backbone.blocks = BackboneConfig::full(mc.backbone.num_classes).blocks;
        else
            throw UsageError("unknown preset '" + preset + "' (expected desk|full)");
    }
    if (m.contains("blocks")) {
        mc.backbone.blocks.clear();
        for (const auto& b : m["blocks"])
            mc.backbone.blocks.push_back({b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>()});
    }
    if (m.contains("window")) mc.backbone.window = m["window"].get<int>();
    if (m.contains("reduction")) mc.backbone.reduction = m["reduction"].get<int>();
    if (m.contains("num_classes")) mc.backbone.num_classes = m["num_classes"].get<int>();
    if (m.contains("prompt_len")) mc.ssf.prompt_len = m["prompt_len"].get<int>();
    if (m.contains("ablation")) {
        const auto& a = m["ablation"];
        static const std::vector<std::string> flags = {"use_gsm", "use_lse", "use_gta",
                                                       "use_ltc", "use_ssf", "ssf_strategy"};
        for (auto it = a.begin(); it != a.end(); ++it)
            if (std::find(flags.begin(), flags.end(), it.key()) == flags.end())
                throw UsageError("unknown ablation key '" + it.key() + "'");
        if (a.contains("use_gsm")) mc.backbone.ablation.use_gsm = a["use_gsm"].get<bool>();
        if (a.contains("use_lse")) mc.backbone.ablation.use_lse = a["use_lse"].get<bool>();
        if (a.contains("use_gta")) mc.backbone.ablation.use_gta = a["use_gta"].get<bool>();
        if (a.contains("use_ltc")) mc.backbone.ablation.use_ltc = a["use_ltc"].get<bool>();
        if (a.contains("use_ssf")) mc.backbone.ablation.use_ssf = a["use_ssf"].get<bool>();
        if (a.contains("ssf_strategy"))
            mc.backbone.ablation.ssf_strategy = strategy_from_name(a["ssf_strategy"].get<std::string>());
    }
}

// "--set a.b.c=value" updates into the manifest json; values parse as json
// scalars when possible, else strings
inline void apply_override(json& doc, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("override must look like key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (...) {
        value = raw;
    }
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw UsageError("bad override key '" + key + "'");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            break;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

// ------------------------------------------------------------ dataset spec

inline std::string default_cache_dir() {
    if (const char* env = std::getenv("HOCSLM_CACHE")) return env;
    return "hocslm_cache";
}

struct LoadedDataset {
    std::vector<SkeletonSequence> samples;
    std::vector<std::string> ids;
    std::vector<std::string> class_names;
};

// spec: "synthetic:classes,per_class,seed" or a cache directory produced by
// the prepare subcommand
inline LoadedDataset load_dataset(const std::string& spec) {
    LoadedDataset out;
    if (spec.rfind("synthetic:", 0) == 0) {
        int classes = 4, per_class = 16, seed = 0;
        if (std::sscanf(spec.c_str(), "synthetic:%d,%d,%d", &classes, &per_class, &seed) != 3)
            throw UsageError("synthetic spec must be synthetic:classes,per_class,seed");
        out.samples = make_synthetic_dataset(classes, per_class, seed);
        for (int c = 0; c < classes; ++c) out.class_names.push_back(synthetic_class_name(c));
        for (int c = 0; c < classes; ++c)
            for (int i = 0; i < per_class; ++i)
                out.ids.push_back("synthetic-" + std::to_string(c) + "-" + std::to_string(i));
        return out;
    }
    if (!fs::is_directory(spec)) throw IoError("dataset directory '" + spec + "' does not exist");
    const fs::path manifest_path = fs::path(spec) / "manifest.json";
    std::ifstream mf(manifest_path);
    if (!mf) throw IoError("missing manifest '" + manifest_path.string() + "'");
    json manifest = json::parse(mf);
    out.class_names = manifest.at("class_names").get<std::vector<std::string>>();
    for (const auto& entry : manifest.at("samples")) {
        const auto file = entry.get<std::string>();
        std::ifstream is(fs::path(spec) / file, std::ios::binary);
        if (!is) throw IoError("missing cached sample '" + file + "'");
        out.samples.push_back(read_cache(is));
        out.ids.push_back(fs::path(file).stem().string());
    }
    if (out.samples.empty()) throw EmptyDataset("cache directory holds no samples");
    return out;
}

inline int num_classes_of(const LoadedDataset& ds) {
    int classes = static_cast<int>(ds.class_names.size());
    for (const auto& s : ds.samples)
        if (s.label) classes = std::max(classes, *s.label + 1);
    return std::max(classes, 2);
}

// ----------------------------------------------------------- prepare logic

inline std::map<std::string, std::string> read_caption_sidecar(const fs::path& path) {
    std::map<std::string, std::string> captions;
    std::ifstream is(path);
    if (!is) throw IoError("cannot read caption file '" + path.string() + "'");
    std::string line;
    while (std::getline(is, line)) {
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0) continue;
        captions[line.substr(0, tab)] = line.substr(tab + 1);
    }
    return captions;
}

inline int cmd_prepare(const std::string& input, const std::string& synthetic_spec, const std::string& captions_file,
                       const fs::path& out_dir, std::ostream& log) {
    LoadedDataset ds;
    if (!synthetic_spec.empty()) {
        ds = load_dataset("synthetic:" + synthetic_spec);
    } else {
        if (!fs::is_directory(input)) throw IoError("input directory '" + input + "' does not exist");
        std::map<std::string, std::string> captions;
        if (!captions_file.empty()) captions = read_caption_sidecar(captions_file);
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(input))
            if (entry.path().extension() == ".skeleton") files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        if (files.empty()) throw EmptyDataset("no .skeleton files under '" + input + "'");
        int max_label = -1;
        for (const auto& file : files) {
            std::ifstream is(file);
            SkeletonSequence seq = parse_skeleton_file(is);
            seq.label = label_from_filename(file.filename().string());
            const std::string stem = file.stem().string();
            if (auto it = captions.find(stem); it != captions.end()) seq.caption = it->second;
            if (seq.label) max_label = std::max(max_label, *seq.label);
            ds.samples.push_back(std::move(seq));
            ds.ids.push_back(stem);
        }
        for (int c = 0; c <= max_label; ++c) ds.class_names.push_back("A" + std::to_string(c + 1));
    }

    json manifest;
    manifest["class_names"] = ds.class_names;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const std::string file = ds.ids[i] + ".hocs";
        std::ostringstream os;
        write_cache(os, ds.samples[i]);
        atomic_write_file(out_dir / file, os.str());
        manifest["samples"].push_back(file);
    }
    atomic_write_file(out_dir / "manifest.json", manifest.dump(2));
    log << "prepared " << ds.samples.size() << " samples -> " << out_dir.string() << "\n";
    return 0;
}

// -------------------------------------------------------------- train/eval

inline json report_to_json(const EvalReport& r) {
    return json{{"top1", r.top1},
                {"per_class_accuracy", r.per_class_accuracy},
                {"confusion", r.confusion},
                {"num_classes", r.num_classes},
                {"gen_loss_curve", r.gen_loss_curve},
                {"cls_loss_curve", r.cls_loss_curve},
                {"total_loss_curve", r.total_loss_curve},
                {"val_top1_curve", r.val_top1_curve}};
}

inline std::string checkpoint_bytes(const HocslmModel& model) {
    std::ostringstream os;
    save_checkpoint(os, model);
    return os.str();
}

inline int cmd_train(const json& manifest, const fs::path& out_dir, std::ostream& log) {
    TrainConfig cfg = train_config_from_json(manifest);
    const std::string data_spec = manifest.contains("data") ? manifest["data"].get<std::string>()
                                                            : std::string("synthetic:4,16,0");
    LoadedDataset ds = load_dataset(data_spec);

    ModelConfig mc;
    mc.backbone = BackboneConfig::desk(num_classes_of(ds));
    mc.backbone.ablation.use_ssf = cfg.strategy != SsfStrategy::T0;
    mc.backbone.ablation.ssf_strategy = cfg.strategy;
    mc.seed = cfg.seed;
    mc.class_names = ds.class_names;
    mc.stream = stream_from_name(cfg.streams.front());
    std::string init_checkpoint;
    if (manifest.contains("model")) {
        apply_model_section(mc, manifest["model"]);
        if (manifest["model"].contains("init_checkpoint"))
            init_checkpoint = manifest["model"]["init_checkpoint"].get<std::string>();
    }
    HocslmModel model(mc);
    if (!init_checkpoint.empty()) {
        auto source = load_checkpoint(init_checkpoint);
        for (const auto& e : source->params().entries())
            if (model.params().contains(e.name) && e.name.rfind("lm.", 0) != 0)
                model.params().find(e.name)->value = e.var->value;
    }

    auto result = train(model, ds.samples, cfg);
    model.params().restore(result.best_params);

    atomic_write_file(out_dir / "checkpoint.hocsckpt", checkpoint_bytes(model));
    json report = report_to_json(result.report);
    report["best_epoch"] = result.best_epoch;
    report["config"] = train_config_to_json(cfg);
    atomic_write_file(out_dir / "report.json", report.dump(2));
    std::ostringstream curves;
    curves << "epoch,gen_loss,cls_loss,total_loss,val_top1\n";
    for (std::size_t e = 0; e < result.report.total_loss_curve.size(); ++e)
        curves << e << "," << result.report.gen_loss_curve[e] << "," << result.report.cls_loss_curve[e] << ","
               << result.report.total_loss_curve[e] << "," << result.report.val_top1_curve[e] << "\n";
    atomic_write_file(out_dir / "curves.csv", curves.str());
    log << "train: best epoch " << result.best_epoch << ", val top1 " << result.report.top1 << "\n";
    return 0;
}

inline int cmd_eval(const std::string& ckpt, const std::string& data_spec, const fs::path& out_dir,
                    std::ostream& log) {
    auto model = load_checkpoint(ckpt);
    LoadedDataset ds = load_dataset(data_spec);
    EvalReport report = evaluate(*model, ds.samples);
    atomic_write_file(out_dir / "eval.json", report_to_json(report).dump(2));
    log << "eval: top1 " << report.top1 << " over " << ds.samples.size() << " samples\n";
    return 0;
}

inline int cmd_ablate(const std::string& table, const std::string& data_spec, const json& manifest,
                      int pretrain_epochs, int tune_epochs, const fs::path& out_dir, std::ostream& log) {
    LoadedDataset ds = load_dataset(data_spec);
    AblationOptions opt;
    opt.base = train_config_from_json(manifest);
    if (pretrain_epochs >= 0) opt.pretrain_epochs = pretrain_epochs;
    if (tune_epochs >= 0) opt.tune_epochs = tune_epochs;
    auto report = run_ablation_suite(ds.samples, table, opt);
    atomic_write_file(out_dir / ("ablation_" + table + ".csv"), ablation_csv(report));
    json summary;
    summary["table"] = report.table;
    for (const auto& row : report.rows) summary["rows"].push_back({{"name", row.name}, {"top1", row.top1}});
    atomic_write_file(out_dir / ("ablation_" + table + ".json"), summary.dump(2));
    for (const auto& row : report.rows) log << row.name << ": " << row.top1 << "\n";
    return 0;
}

inline int cmd_ensemble(const std::vector<std::string>& ckpts, const std::string& weight_spec,
                        const std::string& data_spec, const fs::path& out_dir, std::ostream& log) {
    if (ckpts.empty()) throw UsageError("ensemble needs at least one --ckpt");
    LoadedDataset ds = load_dataset(data_spec);
    std::vector<double> weights;
    if (weight_spec.empty()) {
        weights.assign(ckpts.size(), 1.0);
    } else {
        std::stringstream ss(weight_spec);
        std::string tok;
        while (std::getline(ss, tok, ',')) weights.push_back(std::stod(tok));
    }
    if (weights.size() != ckpts.size()) throw LengthMismatch("need one weight per checkpoint");

    std::vector<std::vector<std::vector<double>>> all_scores;  // [model][sample][class]
    int classes = 0;
    std::vector<int> labels;
    for (const auto& path : ckpts) {
        auto model = load_checkpoint(path);
        classes = model->config().backbone.num_classes;
        auto samples = prepare_dataset(*model, ds.samples, model->config().stream);
        std::vector<int> all(samples.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
        all_scores.push_back(model_scores(*model, samples, all));
        if (labels.empty())
            for (const auto& s : samples) labels.push_back(s.label);
    }
    std::vector<std::vector<double>> fused;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        std::vector<std::vector<double>> per_model;
        for (const auto& scores : all_scores) per_model.push_back(scores[i]);
        fused.push_back(ensemble_scores(per_model, weights));
    }
    auto report = score_predictions(fused, labels, classes);
    atomic_write_file(out_dir / "ensemble.json", report_to_json(report).dump(2));
    log << "ensemble: top1 " << report.top1 << " over " << ds.samples.size() << " samples\n";
    return 0;
}

// ---------------------------------------------------------------- viz-attn

inline int cmd_viz_attn(const std::string& ckpt, const std::string& data_spec, const std::string& sample_id,
                        int stride, const fs::path& out_dir, std::ostream& log) {
    if (stride < 1) throw UsageError("stride must be >= 1");
    auto model = load_checkpoint(ckpt);
    LoadedDataset ds = load_dataset(data_spec);
    int index = -1;
    for (std::size_t i = 0; i < ds.ids.size(); ++i)
        if (ds.ids[i] == sample_id) index = static_cast<int>(i);
    if (index < 0) {
        try {
            index = std::stoi(sample_id);
        } catch (...) {
            index = -1;
        }
    }
    if (index < 0 || index >= static_cast<int>(ds.samples.size()))
        throw SampleNotFound("no sample '" + sample_id + "' in dataset");

    auto sample = prepare_sample(*model, ds.samples[index], model->config().stream);
    std::vector<Hglnet::BlockTrace> traces;
    {
        NoGradGuard ng;
        model->backbone().forward_sample(sample.coords, &traces);
    }
    const Var fused = traces.front().cts.fused_topology;  // first block, [C_out,N,N]
    const int c_out = fused->value.dim(0);
    const int joints = fused->value.dim(1);
    Tensor mean_topology(Shape{joints, joints});
    for (int c = 0; c < c_out; ++c)
        for (int a = 0; a < joints; ++a)
            for (int b = 0; b < joints; ++b) mean_topology.at(a, b) += fused->value.at(c, a, b) / c_out;

    // joint importance = column mass, normalized per frame
    std::vector<double> mass(joints, 0.0);
    double peak = 1e-300;
    for (int j = 0; j < joints; ++j) {
        for (int i = 0; i < joints; ++i) mass[j] += std::abs(mean_topology.at(i, j));
        peak = std::max(peak, mass[j]);
    }
    for (double& m : mass) m /= peak;

    const int frames = sample.coords.dim(1);
    int exported = 0;
    for (int f = 0; f < frames; f += stride) {
        const std::string tag = sample_id + "_f" + std::to_string(f);
        render_heatmap(mean_topology).save(out_dir / ("attn_" + tag + ".ppm"));
        render_skeleton_frame(sample.coords, f, 0, kinect25_edges(), mass).save(out_dir / ("pose_" + tag + ".ppm"));
        atomic_write_file(out_dir / ("attn_" + tag + ".csv"), matrix_to_csv(mean_topology));
        ++exported;
    }
    log << "viz-attn: exported " << exported << " frame(s) for sample " << sample_id << "\n";
    return 0;
}

// ---------------------------------------------------------------- captions

inline int cmd_captions(const std::string& ckpt, const std::string& data_spec, const std::string& split,
                        const fs::path& out_dir, std::ostream& log) {
    auto model = load_checkpoint(ckpt);
    if (!model->has_ssf())
        throw CheckpointLacksSsf("checkpoint '" + ckpt + "' was trained without the fusion stack");
    LoadedDataset ds = load_dataset(data_spec);

    std::vector<int> train_idx, val_idx;
    split_indices(ds.samples.size(), train_idx, val_idx);
    std::vector<int> chosen;
    if (split == "train")
        chosen = train_idx;
    else if (split == "val")
        chosen = val_idx;
    else if (split == "all")
        for (std::size_t i = 0; i < ds.samples.size(); ++i) chosen.push_back(static_cast<int>(i));
    else
        throw UsageError("split must be train|val|all");

    std::ostringstream os;
    os << "id\tlabel\tcaption\tmatch\n";
    int matches = 0;
    for (int i : chosen) {
        auto sample = prepare_sample(*model, ds.samples[i], model->config().stream);
        const std::string name = model->class_name(sample.label);
        const std::string caption = model->generate_caption(sample.coords, 48);
        const bool match = caption.find(name) != std::string::npos;
        matches += match;
        os << ds.ids[i] << "\t" << name << "\t" << caption << "\t" << (match ? 1 : 0) << "\n";
    }
    atomic_write_file(out_dir / "captions.tsv", os.str());
    const double rate = chosen.empty() ? 0.0 : 100.0 * matches / static_cast<double>(chosen.size());
    log << "captions: " << matches << "/" << chosen.size() << " match (" << rate << "%)\n";
    return 0;
}

// ---------------------------------------------------------------- dispatch

inline int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
    CLI::App app{"hocslm: composite-topology skeleton-language action recognition"};
    app.require_subcommand(1);

    std::string config_path, data_spec, out_dir_s, input_dir, synthetic_spec, captions_file;
    std::string ckpt, sample_id, split = "val", table = "core", weight_spec;
    std::vector<std::string> overrides, ckpts;
    int seed = -1, stride = 20, pretrain_epochs = -1, tune_epochs = -1;

    auto add_common = [&](CLI::App* cmd, const std::string& default_out) {
        cmd->add_option("--config", config_path, "run manifest (json)");
        cmd->add_option("--set", overrides, "override key=value (repeatable)");
        cmd->add_option("--seed", seed, "seed override");
        cmd->add_option("--out", out_dir_s, "output directory")->default_val(default_out);
    };

    auto* prepare = app.add_subcommand("prepare", "parse skeleton files or generate synthetic data into the cache");
    prepare->add_option("--input", input_dir, "directory of .skeleton files");
    prepare->add_option("--synthetic", synthetic_spec, "classes,per_class,seed");
    prepare->add_option("--captions", captions_file, "caption sidecar file (id<TAB>text)");
    add_common(prepare, default_cache_dir());

    auto* train_cmd = app.add_subcommand("train", "train a model from a run manifest");
    train_cmd->add_option("--data", data_spec, "dataset spec (cache dir or synthetic:c,s,seed)");
    add_common(train_cmd, "out-train");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->add_option("--ckpt", ckpt, "checkpoint path")->required();
    eval_cmd->add_option("--data", data_spec, "dataset spec");
    add_common(eval_cmd, "out-eval");

    auto* ablate = app.add_subcommand("ablate", "run an ablation table");
    ablate->add_option("--table", table, "core|hglnet|ssf|streams");
    ablate->add_option("--data", data_spec, "dataset spec");
    ablate->add_option("--pretrain-epochs", pretrain_epochs, "classifier pretraining epochs");
    ablate->add_option("--tune-epochs", tune_epochs, "per-row tuning epochs");
    add_common(ablate, "out-ablate");

    auto* ensemble = app.add_subcommand("ensemble", "softmax-score fusion of stream checkpoints");
    ensemble->add_option("--ckpt", ckpts, "checkpoint path (repeatable)");
    ensemble->add_option("--weights", weight_spec, "comma-separated stream weights");
    ensemble->add_option("--data", data_spec, "dataset spec");
    add_common(ensemble, "out-ensemble");

    auto* viz = app.add_subcommand("viz-attn", "export fused-topology heatmaps and joint-importance overlays");
    viz->add_option("--ckpt", ckpt, "checkpoint path")->required();
    viz->add_option("--data", data_spec, "dataset spec");
    viz->add_option("--sample", sample_id, "sample id or index")->required();
    viz->add_option("--stride", stride, "frame sampling stride");
    add_common(viz, "out-viz");

    auto* captions = app.add_subcommand("captions", "dump generated captions with match flags");
    captions->add_option("--ckpt", ckpt, "checkpoint path")->required();
    captions->add_option("--data", data_spec, "dataset spec");
    captions->add_option("--split", split, "train|val|all");
    add_common(captions, "out-captions");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {  // --help
            out << app.help();
            return 0;
        }
        err << "error: category=usage " << e.what() << "\n";
        return 2;
    }

    try {
        json manifest;
        if (!config_path.empty()) {
            std::ifstream is(config_path);
            if (!is) throw IoError("cannot read config '" + config_path + "'");
            manifest = json::parse(is);
        }
        for (const auto& kv : overrides) apply_override(manifest, kv);
        if (seed >= 0) manifest["seed"] = seed;
        if (!data_spec.empty()) manifest["data"] = data_spec;
        const std::string effective_data =
            manifest.contains("data") ? manifest["data"].get<std::string>() : std::string("synthetic:4,16,0");
        const fs::path out_dir(out_dir_s);

        if (app.got_subcommand(prepare))
            return cmd_prepare(input_dir, synthetic_spec, captions_file, out_dir, out);
        if (app.got_subcommand(train_cmd)) return cmd_train(manifest, out_dir, out);
        if (app.got_subcommand(eval_cmd)) return cmd_eval(ckpt, effective_data, out_dir, out);
        if (app.got_subcommand(ablate))
            return cmd_ablate(table, effective_data, manifest, pretrain_epochs, tune_epochs, out_dir, out);
        if (app.got_subcommand(ensemble))
            return cmd_ensemble(ckpts, weight_spec, effective_data, out_dir, out);
        if (app.got_subcommand(viz)) return cmd_viz_attn(ckpt, effective_data, sample_id, stride, out_dir, out);
        if (app.got_subcommand(captions)) return cmd_captions(ckpt, effective_data, split, out_dir, out);
        err << "error: category=usage unknown subcommand\n";
        return 2;
    } catch (const Error& e) {
        err << "error: category=" << e.category_name() << " " << e.what() << "\n";
        switch (e.category()) {
            case ErrorCategory::Usage: return 2;
            case ErrorCategory::Io: return 3;
            case ErrorCategory::Data: return 4;
            case ErrorCategory::State: return 5;
            default: return 70;
        }
    } catch (const std::exception& e) {
        err << "error: category=internal " << e.what() << "\n";
        return 70;
    }
}

}  // namespace hocslm::cli
