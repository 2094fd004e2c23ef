#include "facetrain/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace facetrain {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void get(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_train(const json& j, TrainConfig& c) {
    reject_unknown(j, {"base_lr_per_256", "momentum", "weight_decay", "dropout_ratio",
                       "decay_epochs", "decay_factor", "total_epochs", "global_batch",
                       "hidden_dim", "embed_dim", "loss", "margin", "scale", "mask_ratio",
                       "precision", "partial_fc_ratio", "shards", "loss_scale", "seed"},
                   "train");
    get(j, "base_lr_per_256", c.base_lr_per_256);
    get(j, "momentum", c.momentum);
    get(j, "weight_decay", c.weight_decay);
    get(j, "dropout_ratio", c.dropout_ratio);
    get(j, "decay_epochs", c.decay_epochs);
    get(j, "decay_factor", c.decay_factor);
    get(j, "total_epochs", c.total_epochs);
    get(j, "global_batch", c.global_batch);
    get(j, "hidden_dim", c.hidden_dim);
    get(j, "embed_dim", c.embed_dim);
    get(j, "margin", c.loss.margin);
    get(j, "scale", c.loss.scale);
    get(j, "mask_ratio", c.mask_ratio);
    get(j, "partial_fc_ratio", c.partial_fc_ratio);
    get(j, "shards", c.shards);
    get(j, "loss_scale", c.loss_scale);
    get(j, "seed", c.seed);
    if (j.contains("loss")) {
        const std::string kind = j.at("loss");
        if (kind == "cosface")
            c.loss.kind = LossKind::CosFace;
        else if (kind == "arcface")
            c.loss.kind = LossKind::ArcFace;
        else if (kind == "softmax")
            c.loss.kind = LossKind::PlainSoftmax;
        else
            throw ConfigError("config: unknown loss '" + kind + "'");
    }
    if (j.contains("precision")) {
        const std::string p = j.at("precision");
        if (p == "full")
            c.precision = Precision::Full;
        else if (p == "mixed_emulated")
            c.precision = Precision::MixedEmulated;
        else
            throw ConfigError("config: unknown precision '" + p + "'");
    }
    c.validate();
}

void parse_finetune(const json& j, FinetuneOverrides& f) {
    reject_unknown(j, {"mask_ratio", "epochs", "lr"}, "finetune");
    get(j, "mask_ratio", f.mask_ratio);
    get(j, "epochs", f.epochs);
    get(j, "lr", f.lr);
}

void parse_clean(const json& j, CleaningConfig& c) {
    reject_unknown(j, {"thre_intra", "thre_inter", "max_iters", "min_class_size"}, "clean");
    get(j, "thre_intra", c.thre_intra);
    get(j, "thre_inter", c.thre_inter);
    get(j, "max_iters", c.max_iters);
    get(j, "min_class_size", c.min_class_size);
}

void parse_cost(const json& j, FcMemSpec& s) {
    reject_unknown(j, {"embed_dim", "num_classes", "num_gpus", "batch_per_gpu", "param_bytes",
                       "optimizer_mult", "logit_mult", "mixed_precision"},
                   "cost");
    get(j, "embed_dim", s.embed_dim);
    get(j, "num_classes", s.num_classes);
    get(j, "num_gpus", s.num_gpus);
    get(j, "batch_per_gpu", s.batch_per_gpu);
    get(j, "param_bytes", s.param_bytes);
    get(j, "optimizer_mult", s.optimizer_mult);
    get(j, "logit_mult", s.logit_mult);
    get(j, "mixed_precision", s.mixed_precision);
    s.validate();
}

void parse_reward(const json& j, RewardConfig& r) {
    reject_unknown(j, {"target", "alpha", "backend"}, "reward");
    get(j, "target", r.target);
    get(j, "alpha", r.alpha);
    if (j.contains("backend")) {
        const std::string b = j.at("backend");
        if (b == "flops")
            r.backend = CostBackend::Flops;
        else if (b == "latency_table")
            r.backend = CostBackend::LatencyTable;
        else
            throw ConfigError("config: unknown cost backend '" + b + "'");
    }
    if (!(r.target > 0.0)) throw ConfigError("config: reward target must be positive");
}

void parse_synth(const json& j, SynthTaskSpec& s) {
    reject_unknown(j, {"n_ids", "samples_per_id", "input_dim", "noise_sigma",
                       "occlusion_fraction", "outlier_fraction", "split_id_count", "seed"},
                   "synth");
    get(j, "n_ids", s.n_ids);
    get(j, "samples_per_id", s.samples_per_id);
    get(j, "input_dim", s.input_dim);
    get(j, "noise_sigma", s.noise_sigma);
    get(j, "occlusion_fraction", s.occlusion_fraction);
    get(j, "outlier_fraction", s.outlier_fraction);
    get(j, "split_id_count", s.split_id_count);
    get(j, "seed", s.seed);
    s.validate();
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    reject_unknown(j, {"train", "finetune", "clean", "cost", "reward", "synth"}, "top level");
    RunConfig cfg;
    if (j.contains("train")) parse_train(j.at("train"), cfg.train);
    if (j.contains("finetune")) parse_finetune(j.at("finetune"), cfg.finetune);
    if (j.contains("clean")) parse_clean(j.at("clean"), cfg.clean);
    if (j.contains("cost")) parse_cost(j.at("cost"), cfg.cost);
    if (j.contains("reward")) parse_reward(j.at("reward"), cfg.reward);
    if (j.contains("synth")) parse_synth(j.at("synth"), cfg.synth);
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_run_config(ss.str());
}

}  // namespace facetrain
