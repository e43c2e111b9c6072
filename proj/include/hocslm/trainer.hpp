#pragma once

// Optimization loop (decoupled-weight-decay Adam with cosine schedule and
// gradient clipping), evaluation metrics, the strategy schedules T0-T4, the
// multi-stream score ensemble and the ablation suites.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "hocslm/model.hpp"

namespace hocslm {

inline int& worker_threads() {
    static int n = std::max(1, std::min(8, static_cast<int>(std::thread::hardware_concurrency())));
    return n;
}

struct TrainConfig {
    int batch_size = 16;
    int epochs = 60;
    double learning_rate = 1e-3;
    double weight_decay = 0.01;
    double lambda_gen = 0.5;
    double lambda_cls = 1.0;
    int seed = 0;
    SsfStrategy strategy = SsfStrategy::T0;
    std::vector<std::string> streams = {"joint"};

    void validate() const {
        if (batch_size < 1) throw UsageError("batch_size must be >= 1");
        if (epochs < 0) throw UsageError("epochs must be >= 0");
        if (learning_rate <= 0) throw UsageError("learning_rate must be > 0");
        if (streams.empty()) throw UsageError("streams must be nonempty");
        for (const auto& s : streams) stream_from_name(s);
    }
};

struct EvalReport {
    double top1 = 0.0;
    std::vector<double> per_class_accuracy;
    std::vector<int> confusion;  // row-major [true][pred]
    std::vector<double> gen_loss_curve, cls_loss_curve, total_loss_curve, val_top1_curve;
    int num_classes = 0;
};

// ---------------------------------------------------------------- optimizer

inline constexpr double kGradClipNorm = 5.0;
inline constexpr double kMinLearningRate = 1e-6;

class AdamW {
public:
    AdamW(std::vector<ParamEntry> params, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
          double eps = 1e-8)
        : params_(std::move(params)), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& p : params_) {
            m_.emplace_back(p.var->value.shape());
            v_.emplace_back(p.var->value.shape());
        }
    }

    const std::vector<ParamEntry>& params() const { return params_; }

    void step(GradMap& grads, double lr) {
        // clip by global norm over this parameter group
        double sq = 0.0;
        for (const auto& p : params_) {
            auto it = grads.find(p.var.get());
            if (it != grads.end()) sq += it->second.sq_norm();
        }
        const double norm = std::sqrt(sq);
        const double clip = norm > kGradClipNorm ? kGradClipNorm / norm : 1.0;

        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto it = grads.find(params_[i].var.get());
            Tensor& w = params_[i].var->value;
            Tensor& m = m_[i];
            Tensor& v = v_[i];
            for (std::size_t j = 0; j < w.size(); ++j) {
                const double g = (it != grads.end() ? it->second[j] * clip : 0.0);
                m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
                v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                w[j] -= lr * (mhat / (std::sqrt(vhat) + eps_) + wd_ * w[j]);
            }
        }
    }

private:
    std::vector<ParamEntry> params_;
    std::vector<Tensor> m_, v_;
    double wd_, beta1_, beta2_, eps_;
    int t_ = 0;
};

// ----------------------------------------------------------- data pipeline

struct PreparedSample {
    Tensor coords;  // {C, window, N, M}, centered, selected stream
    int label = -1;
    std::vector<int> caption_ids;
};

inline PreparedSample prepare_sample(const HocslmModel& model, const SkeletonSequence& seq, StreamKind stream) {
    PreparedSample out;
    SkeletonSequence fixed = resample(normalize_sequence(seq), model.config().backbone.window);
    fixed.edges = seq.edges;
    StreamBundle streams = derive_streams(fixed);
    out.coords = streams.get(stream);
    out.label = seq.label.value_or(-1);
    ByteTokenizer tok;
    out.caption_ids = tok.encode(model.caption_for(seq));
    return out;
}

namespace detail_pool {

// runs fn(i) over [0,count) on the worker pool; rethrows the first failure
template <typename Fn>
void parallel_indices(std::size_t count, Fn&& fn) {
    const int threads = static_cast<int>(std::min<std::size_t>(worker_threads(), std::max<std::size_t>(count, 1)));
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    std::atomic<std::size_t> next{0};
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&, t]() {
            try {
                for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace detail_pool

inline std::vector<PreparedSample> prepare_dataset(const HocslmModel& model,
                                                   const std::vector<SkeletonSequence>& data,
                                                   StreamKind stream) {
    std::vector<PreparedSample> out(data.size());
    detail_pool::parallel_indices(data.size(),
                                  [&](std::size_t i) { out[i] = prepare_sample(model, data[i], stream); });
    return out;
}

// deterministic 80/20 split by sample index (every fifth sample validates)
inline void split_indices(std::size_t count, std::vector<int>& train, std::vector<int>& val) {
    for (std::size_t i = 0; i < count; ++i)
        ((i % 5 == 4) ? val : train).push_back(static_cast<int>(i));
    if (train.empty()) train = val;  // degenerate tiny datasets
}

// ----------------------------------------------------------------- metrics

// index of the max entry, ties broken toward the lowest class index
inline int argmax_lowest(const std::vector<double>& scores) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(scores.size()); ++i)
        if (scores[i] > scores[best]) best = i;
    return best;
}

inline std::vector<double> softmax_vec(const std::vector<double>& x) {
    std::vector<double> out(x.size());
    double mx = x[0];
    for (double v : x) mx = std::max(mx, v);
    double z = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - mx);
        z += out[i];
    }
    for (double& v : out) v /= z;
    return out;
}

// Top-1 percentage over (scores, label) pairs plus confusion statistics
inline EvalReport score_predictions(const std::vector<std::vector<double>>& scores,
                                    const std::vector<int>& labels, int num_classes) {
    if (scores.empty()) throw EmptyDataset("no samples to evaluate");
    if (scores.size() != labels.size()) throw LengthMismatch("scores/labels length mismatch");
    EvalReport report;
    report.num_classes = num_classes;
    report.confusion.assign(static_cast<std::size_t>(num_classes) * num_classes, 0);
    std::vector<int> per_class_total(num_classes, 0), per_class_hit(num_classes, 0);
    int hits = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const int pred = argmax_lowest(scores[i]);
        const int truth = labels[i];
        if (truth < 0 || truth >= num_classes) throw EmptyDataset("sample without a valid label");
        ++report.confusion[static_cast<std::size_t>(truth) * num_classes + pred];
        ++per_class_total[truth];
        if (pred == truth) {
            ++hits;
            ++per_class_hit[truth];
        }
    }
    report.top1 = 100.0 * hits / static_cast<double>(scores.size());
    for (int c = 0; c < num_classes; ++c)
        report.per_class_accuracy.push_back(
            per_class_total[c] ? 100.0 * per_class_hit[c] / per_class_total[c] : 0.0);
    return report;
}

inline std::vector<std::vector<double>> model_scores(const HocslmModel& model,
                                                     const std::vector<PreparedSample>& samples,
                                                     const std::vector<int>& indices) {
    std::vector<std::vector<double>> scores(indices.size());
    detail_pool::parallel_indices(indices.size(), [&](std::size_t i) {
        NoGradGuard ng;
        auto fwd = model.backbone().forward_sample(samples[indices[i]].coords);
        const auto& v = fwd.logits->value;
        scores[i].assign(v.data(), v.data() + v.size());
    });
    return scores;
}

inline EvalReport evaluate_prepared(const HocslmModel& model, const std::vector<PreparedSample>& samples,
                                    const std::vector<int>& indices) {
    if (indices.empty()) throw EmptyDataset("no samples to evaluate");
    auto scores = model_scores(model, samples, indices);
    std::vector<int> labels;
    for (int i : indices) labels.push_back(samples[i].label);
    return score_predictions(scores, labels, model.config().backbone.num_classes);
}

inline EvalReport evaluate(const HocslmModel& model, const std::vector<SkeletonSequence>& data) {
    if (data.empty()) throw EmptyDataset("dataset is empty");
    auto samples = prepare_dataset(model, data, model.config().stream);
    std::vector<int> all(samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    return evaluate_prepared(model, samples, all);
}

// ---------------------------------------------------------------- ensemble

// weighted sum of per-stream softmax scores
inline std::vector<double> ensemble_scores(const std::vector<std::vector<double>>& per_stream_scores,
                                           const std::vector<double>& weights) {
    if (per_stream_scores.empty()) throw LengthMismatch("no streams to fuse");
    if (per_stream_scores.size() != weights.size())
        throw LengthMismatch("weights count does not match stream count");
    const std::size_t classes = per_stream_scores.front().size();
    std::vector<double> fused(classes, 0.0);
    for (std::size_t k = 0; k < per_stream_scores.size(); ++k) {
        if (per_stream_scores[k].size() != classes) throw LengthMismatch("stream score length mismatch");
        auto probs = softmax_vec(per_stream_scores[k]);
        for (std::size_t c = 0; c < classes; ++c) fused[c] += weights[k] * probs[c];
    }
    return fused;
}

// -------------------------------------------------------- strategy schedule

struct TrainPhase {
    bool use_gen = false;
    bool use_cls = true;
    std::vector<std::string> prefixes;  // trainable name prefixes
    std::vector<std::string> excludes;
    int epochs = 0;
};

inline std::vector<TrainPhase> strategy_phases(SsfStrategy strategy, int epochs) {
    const std::vector<std::string> encoder = {"backbone.", "cts.", "dht."};
    const std::vector<std::string> encoder_ssf = {"backbone.", "cts.", "dht.", "ssf."};
    switch (strategy) {
        case SsfStrategy::T0:
            return {{false, true, encoder, {}, epochs}};
        case SsfStrategy::T1:
            return {{true, false, {"ssf."}, {}, epochs / 2},
                    {false, true, {"backbone.", "cts.", "dht.", "ssf.proj."}, {}, epochs - epochs / 2}};
        case SsfStrategy::T2:
            return {{true, false, encoder_ssf, {"backbone.fc."}, epochs / 2},
                    {false, true, encoder, {}, epochs - epochs / 2}};
        case SsfStrategy::T3:
        case SsfStrategy::T4:
            return {{true, true, encoder_ssf, {}, epochs}};
    }
    throw UsageError("unknown strategy");
}

inline std::vector<ParamEntry> select_params(const ParamRegistry& reg, const std::vector<std::string>& prefixes,
                                             const std::vector<std::string>& excludes) {
    std::vector<ParamEntry> out;
    for (const auto& e : reg.entries()) {
        if (!e.var->requires_grad) continue;  // frozen decoder stays out
        bool keep = false;
        for (const auto& p : prefixes) keep = keep || e.name.rfind(p, 0) == 0;
        for (const auto& x : excludes)
            if (e.name.rfind(x, 0) == 0) keep = false;
        if (keep) out.push_back(e);
    }
    return out;
}

// ------------------------------------------------------------------- train

struct TrainResult {
    std::map<std::string, Tensor> best_params;
    EvalReport report;
    int best_epoch = -1;
};

namespace detail_train {

struct BatchStats {
    double gen = 0.0, cls = 0.0, total = 0.0;
};

inline BatchStats run_batch(const HocslmModel& model, const std::vector<PreparedSample>& samples,
                            const std::vector<int>& batch, const TrainPhase& phase, const TrainConfig& cfg,
                            GradMap& grads) {
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const int threads = static_cast<int>(std::min<std::size_t>(worker_threads(), batch.size()));
    std::vector<GradMap> sinks(threads);
    std::vector<BatchStats> stats(threads);
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    const std::size_t chunk = (batch.size() + threads - 1) / threads;
    std::atomic<bool> diverged{false};
    for (int t = 0; t < threads; ++t) {
        const std::size_t lo = t * chunk;
        const std::size_t hi = std::min(batch.size(), lo + chunk);
        pool.emplace_back([&, t, lo, hi]() {
            try {
                for (std::size_t i = lo; i < hi; ++i) {
                    const PreparedSample& s = samples[batch[i]];
                    auto fwd = model.backbone().forward_sample(s.coords);
                    Var loss;
                    double gen_v = 0.0, cls_v = 0.0;
                    if (phase.use_cls) {
                        Var cls = ag::masked_nll(
                            ag::reshape(fwd.logits, {1, model.config().backbone.num_classes}), {s.label});
                        cls_v = cls->value.item();
                        loss = ag::scale(cls, cfg.lambda_cls);
                    }
                    if (phase.use_gen) {
                        auto gen = model.ssf().caption_loss(fwd.semantic, s.caption_ids);
                        gen_v = gen.value->value.item();
                        Var weighted = ag::scale(gen.value, cfg.lambda_gen);
                        loss = loss ? ag::add(loss, weighted) : weighted;
                    }
                    const double total_v = loss->value.item();
                    if (!std::isfinite(total_v)) {
                        diverged = true;
                        return;
                    }
                    stats[t].gen += gen_v * inv_b;
                    stats[t].cls += cls_v * inv_b;
                    stats[t].total += total_v * inv_b;
                    backward(ag::scale(loss, inv_b), sinks[t]);
                }
            } catch (const NonFiniteActivation&) {
                diverged = true;
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    if (diverged) throw DivergedLoss("non-finite loss in training batch");
    BatchStats agg;
    for (int t = 0; t < threads; ++t) {
        agg.gen += stats[t].gen;
        agg.cls += stats[t].cls;
        agg.total += stats[t].total;
        for (auto& [node, g] : sinks[t]) {
            auto it = grads.find(node);
            if (it == grads.end())
                grads.emplace(node, std::move(g));
            else
                it->second.add_(g);
        }
    }
    return agg;
}

}  // namespace detail_train

inline TrainResult train(HocslmModel& model, const std::vector<SkeletonSequence>& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw EmptyDataset("training dataset is empty");
    if ((cfg.strategy != SsfStrategy::T0) && !model.has_ssf())
        throw DecoderUnavailable("strategy " + strategy_name(cfg.strategy) + " needs the fusion stack");

    auto samples = prepare_dataset(model, data, model.config().stream);
    std::vector<int> train_idx, val_idx;
    split_indices(samples.size(), train_idx, val_idx);
    if (val_idx.empty()) val_idx = train_idx;

    TrainResult result;
    result.report.num_classes = model.config().backbone.num_classes;
    auto phases = strategy_phases(cfg.strategy, cfg.epochs);

    double best_top1 = -1.0;
    int epoch_global = 0;
    const int total_epochs = cfg.epochs;
    for (const auto& phase : phases) {
        if (phase.epochs <= 0) continue;
        AdamW opt(select_params(model.params(), phase.prefixes, phase.excludes), cfg.weight_decay);
        for (int e = 0; e < phase.epochs; ++e, ++epoch_global) {
            const double progress = total_epochs > 1 ? static_cast<double>(epoch_global) / (total_epochs - 1) : 0.0;
            const double lr = kMinLearningRate +
                              0.5 * (cfg.learning_rate - kMinLearningRate) * (1.0 + std::cos(M_PI * progress));

            std::vector<int> order = train_idx;
            Rng shuffle_rng(static_cast<std::uint64_t>(cfg.seed) * 1000003ULL + epoch_global, 0x5eedULL);
            for (std::size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[shuffle_rng.uniform_int(0, static_cast<int>(i) - 1)]);

            detail_train::BatchStats epoch_stats;
            int batches = 0;
            for (std::size_t off = 0; off < order.size(); off += cfg.batch_size) {
                std::vector<int> batch(order.begin() + off,
                                       order.begin() + std::min(order.size(), off + cfg.batch_size));
                GradMap grads;
                auto s = detail_train::run_batch(model, samples, batch, phase, cfg, grads);
                opt.step(grads, lr);
                epoch_stats.gen += s.gen;
                epoch_stats.cls += s.cls;
                epoch_stats.total += s.total;
                ++batches;
            }
            if (batches > 0) {
                result.report.gen_loss_curve.push_back(epoch_stats.gen / batches);
                result.report.cls_loss_curve.push_back(epoch_stats.cls / batches);
                result.report.total_loss_curve.push_back(epoch_stats.total / batches);
            }
            const double val_top1 = evaluate_prepared(model, samples, val_idx).top1;
            result.report.val_top1_curve.push_back(val_top1);
            if (val_top1 > best_top1) {
                best_top1 = val_top1;
                result.best_epoch = epoch_global;
                result.best_params = model.params().snapshot();
            }
        }
    }

    if (result.best_params.empty()) {  // epochs == 0
        result.best_params = model.params().snapshot();
    }
    auto val_report = evaluate_prepared(model, samples, val_idx);
    // report the best epoch's validation metrics
    if (result.best_epoch >= 0 && best_top1 >= 0.0) {
        auto current = model.params().snapshot();
        model.params().restore(result.best_params);
        val_report = evaluate_prepared(model, samples, val_idx);
        model.params().restore(current);
    }
    result.report.top1 = val_report.top1;
    result.report.per_class_accuracy = val_report.per_class_accuracy;
    result.report.confusion = val_report.confusion;
    return result;
}

// ---------------------------------------------------------- ablation suites

struct AblationOptions {
    TrainConfig base;
    int pretrain_epochs = 40;
    int tune_epochs = 20;
    bool ssf_all_streams = true;  // streams table: run the fusion stage per stream
    std::vector<BlockSpec> blocks = BackboneConfig::desk(2).blocks;
};

struct AblationRow {
    std::string name;
    double top1 = 0.0;
    EvalReport report;
};

struct AblationReport {
    std::string table;
    std::vector<AblationRow> rows;
};

namespace detail_ablate {

inline int infer_classes(const std::vector<SkeletonSequence>& data) {
    int classes = 0;
    for (const auto& s : data)
        if (s.label) classes = std::max(classes, *s.label + 1);
    if (classes < 2) throw EmptyDataset("ablation dataset needs labeled samples from >= 2 classes");
    return classes;
}

inline ModelConfig row_config(const AblationOptions& opt, int classes, const AblationConfig& ablation) {
    ModelConfig mc;
    mc.backbone = BackboneConfig::desk(classes);
    mc.backbone.blocks = opt.blocks;
    mc.backbone.ablation = ablation;
    mc.seed = opt.base.seed;
    return mc;
}

inline void copy_prefixed(HocslmModel& dst, const std::map<std::string, Tensor>& src,
                          const std::vector<std::string>& prefixes) {
    for (const auto& [name, tensor] : src) {
        bool keep = false;
        for (const auto& p : prefixes) keep = keep || name.rfind(p, 0) == 0;
        if (!keep || !dst.params().contains(name)) continue;
        Var v = dst.params().find(name);
        if (!v->value.same_shape(tensor)) throw ShapeMismatch("ablation restore shape mismatch for " + name);
        v->value = tensor;
    }
}

}  // namespace detail_ablate

inline AblationReport run_ablation_suite(const std::vector<SkeletonSequence>& data, const std::string& table,
                                         const AblationOptions& opt = {}) {
    using detail_ablate::copy_prefixed;
    using detail_ablate::row_config;
    const int classes = detail_ablate::infer_classes(data);
    AblationReport report;
    report.table = table;

    auto run_plain = [&](const std::string& name, AblationConfig ablation, int epochs) {
        ablation.use_ssf = false;
        ablation.ssf_strategy = SsfStrategy::T0;
        HocslmModel model(row_config(opt, classes, ablation));
        TrainConfig cfg = opt.base;
        cfg.strategy = SsfStrategy::T0;
        cfg.epochs = epochs;
        auto res = train(model, data, cfg);
        report.rows.push_back({name, res.report.top1, std::move(res.report)});
    };

    if (table == "core" || table == "hglnet") {
        AblationConfig only_local;
        only_local.use_gsm = false;
        only_local.use_gta = false;
        AblationConfig with_cts;
        with_cts.use_gta = false;
        AblationConfig no_gsm;
        no_gsm.use_gsm = false;
        AblationConfig full;
        const int budget = opt.pretrain_epochs + opt.tune_epochs;
        if (table == "core") {
            run_plain("Baseline", only_local, budget);
            run_plain("+CTS", with_cts, budget);
            run_plain("+CTS+DHT", full, budget);
            // full model: classifier pretrain, then joint fusion tuning
            AblationConfig ssf_cfg;
            ssf_cfg.use_ssf = true;
            ssf_cfg.ssf_strategy = SsfStrategy::T3;
            HocslmModel model(row_config(opt, classes, ssf_cfg));
            TrainConfig pre = opt.base;
            pre.strategy = SsfStrategy::T0;
            pre.epochs = opt.pretrain_epochs;
            train(model, data, pre);
            TrainConfig tune = opt.base;
            tune.strategy = SsfStrategy::T3;
            tune.epochs = opt.tune_epochs;
            auto res = train(model, data, tune);
            report.rows.push_back({"HocSLM", res.report.top1, std::move(res.report)});
        } else {
            run_plain("Only Local", only_local, budget);
            run_plain("w/o GSM", no_gsm, budget);
            run_plain("w/o GTA", with_cts, budget);
            run_plain("HGLNet", full, budget);
        }
        return report;
    }

    if (table == "ssf") {
        // shared classifier pretraining feeds T1-T3; T4 starts from scratch
        AblationConfig plain;
        plain.use_ssf = false;
        plain.ssf_strategy = SsfStrategy::T0;
        HocslmModel pretrain_model(row_config(opt, classes, plain));
        TrainConfig pre = opt.base;
        pre.strategy = SsfStrategy::T0;
        pre.epochs = opt.pretrain_epochs;
        train(pretrain_model, data, pre);
        const auto pretrained = pretrain_model.params().snapshot();

        {  // T0 row: keep training the classifier for the tuning budget
            TrainConfig cont = opt.base;
            cont.strategy = SsfStrategy::T0;
            cont.epochs = opt.tune_epochs;
            auto res = train(pretrain_model, data, cont);
            report.rows.push_back({"T0", res.report.top1, std::move(res.report)});
        }
        for (auto strategy : {SsfStrategy::T1, SsfStrategy::T2, SsfStrategy::T3, SsfStrategy::T4}) {
            AblationConfig ac;
            ac.use_ssf = true;
            ac.ssf_strategy = strategy;
            HocslmModel model(row_config(opt, classes, ac));
            if (strategy != SsfStrategy::T4)
                copy_prefixed(model, pretrained, {"backbone.", "cts.", "dht."});
            TrainConfig cfg = opt.base;
            cfg.strategy = strategy;
            cfg.epochs = opt.tune_epochs;
            auto res = train(model, data, cfg);
            report.rows.push_back({strategy_name(strategy), res.report.top1, std::move(res.report)});
        }
        return report;
    }

    if (table == "streams") {
        std::vector<int> train_idx, val_idx;
        split_indices(data.size(), train_idx, val_idx);
        std::vector<std::vector<std::vector<double>>> stream_scores(6);  // [stream][sample][class]
        std::vector<int> val_labels;
        const char* row_names[6] = {"Joint only",       "Bone only",      "Joint Motion only",
                                    "Bone Motion only", "Joint 2nd-order only", "Vel 2nd-order only"};
        for (int k = 0; k < 6; ++k) {
            AblationConfig ac;
            ac.use_ssf = opt.ssf_all_streams;
            ac.ssf_strategy = opt.ssf_all_streams ? SsfStrategy::T3 : SsfStrategy::T0;
            ModelConfig mc = row_config(opt, classes, ac);
            mc.stream = static_cast<StreamKind>(k);
            HocslmModel model(mc);
            TrainConfig pre = opt.base;
            pre.strategy = SsfStrategy::T0;
            pre.epochs = opt.pretrain_epochs;
            pre.streams = {stream_names()[k]};
            auto res = train(model, data, pre);
            if (opt.ssf_all_streams) {
                TrainConfig tune = opt.base;
                tune.strategy = SsfStrategy::T3;
                tune.epochs = opt.tune_epochs;
                tune.streams = {stream_names()[k]};
                res = train(model, data, tune);
            }
            model.params().restore(res.best_params);
            auto samples = prepare_dataset(model, data, mc.stream);
            stream_scores[k] = model_scores(model, samples, val_idx);
            if (val_labels.empty())
                for (int i : val_idx) val_labels.push_back(samples[i].label);
            report.rows.push_back({row_names[k], res.report.top1, std::move(res.report)});
        }
        auto fuse = [&](const std::string& name, const std::vector<int>& kset) {
            std::vector<std::vector<double>> fused;
            const std::vector<double> weights(kset.size(), 1.0);
            for (std::size_t i = 0; i < val_idx.size(); ++i) {
                std::vector<std::vector<double>> per_stream;
                for (int k : kset) per_stream.push_back(stream_scores[k][i]);
                fused.push_back(ensemble_scores(per_stream, weights));
            }
            auto rep = score_predictions(fused, val_labels, classes);
            report.rows.push_back({name, rep.top1, std::move(rep)});
        };
        fuse("Joint + Bone", {0, 1});
        fuse("Joint + Bone + Joint Motion + Bone Motion", {0, 1, 2, 3});
        fuse("6-stream", {0, 1, 2, 3, 4, 5});
        return report;
    }

    throw UsageError("unknown ablation table '" + table + "' (expected core|hglnet|ssf|streams)");
}

inline std::string ablation_csv(const AblationReport& report) {
    std::ostringstream os;
    os << "configuration,top1,delta_vs_baseline\n";
    const double base = report.rows.empty() ? 0.0 : report.rows.front().top1;
    for (const auto& row : report.rows) {
        std::string name = row.name;
        for (auto& ch : name)
            if (ch == ',') ch = ';';
        os << name << "," << row.top1 << "," << (row.top1 - base) << "\n";
    }
    return os.str();
}

}  // namespace hocslm
