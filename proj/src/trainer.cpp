#include "facetrain/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "facetrain/fp16.hpp"

namespace facetrain {

void TrainConfig::validate() const {
    if (!(base_lr_per_256 >= 0.0) || !(momentum >= 0.0 && momentum < 1.0))
        throw ConfigError("TrainConfig: bad lr/momentum");
    if (dropout_ratio < 0.0 || dropout_ratio >= 1.0) throw ConfigError("TrainConfig: dropout outside [0,1)");
    if (mask_ratio < 0.0 || mask_ratio > 1.0) throw ConfigError("TrainConfig: mask ratio outside [0,1]");
    if (!(partial_fc_ratio > 0.0 && partial_fc_ratio <= 1.0))
        throw ConfigError("TrainConfig: partial_fc_ratio outside (0,1]");
    if (global_batch == 0 || hidden_dim == 0 || embed_dim == 0 || shards == 0)
        throw ConfigError("TrainConfig: zero-sized dimension");
    for (auto e : decay_epochs)
        if (e >= total_epochs && total_epochs > 0)
            throw ConfigError("TrainConfig: decay epoch beyond total_epochs");
}

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
    if (epoch >= cfg.total_epochs)
        throw EpochOutOfRange("lr_at: epoch " + std::to_string(epoch) + " >= total " +
                              std::to_string(cfg.total_epochs));
    double lr = cfg.base_lr_per_256 * (static_cast<double>(cfg.global_batch) / 256.0);
    for (auto d : cfg.decay_epochs)
        if (d <= epoch) lr *= cfg.decay_factor;
    return lr;
}

std::string EpochMetrics::to_json() const {
    nlohmann::json j = {{"epoch", epoch},
                        {"lr", lr},
                        {"mean_loss", mean_loss},
                        {"train_accuracy", train_accuracy},
                        {"comm_bytes", comm_bytes},
                        {"skipped_steps", skipped_steps}};
    return j.dump();
}

namespace {

std::mt19937_64 epoch_rng(std::uint64_t seed, std::size_t epoch) {
    return std::mt19937_64(seed * 0x9e3779b97f4a7c15ULL + 0xd1b54a32d192ed03ULL * (epoch + 1));
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, stddev);
    Matrix m(rows, cols);
    for (auto& v : m.data()) v = g(rng);
    return m;
}

bool mixed(const TrainConfig& cfg) { return cfg.precision == Precision::MixedEmulated; }

Matrix rounded_copy(const Matrix& m) {
    Matrix out = m;
    for (auto& v : out.data()) v = fp16_round_clamped(static_cast<float>(v));
    return out;
}

std::vector<double> rounded_copy(const std::vector<double>& v) {
    std::vector<double> out = v;
    for (auto& x : out) x = fp16_round_clamped(static_cast<float>(x));
    return out;
}

struct MlpForward {
    Matrix h;       // post relu/dropout (and rounding when mixed)
    Matrix embeds;  // raw (un-normalized) embedding rows
    Matrix drop_scale;  // per-unit keep scale applied to h (1 when eval)
};

// Forward through the embedder. Dropout masks are supplied by the caller so
// the same routine serves train and eval.
MlpForward mlp_forward(const Mlp& net, const Matrix& x, const Matrix* dropout_scale, bool round16) {
    const Matrix w1 = round16 ? rounded_copy(net.w1) : net.w1;
    const Matrix w2 = round16 ? rounded_copy(net.w2) : net.w2;
    const std::vector<double> b1 = round16 ? rounded_copy(net.b1) : net.b1;
    const std::vector<double> b2 = round16 ? rounded_copy(net.b2) : net.b2;

    const std::size_t n = x.rows(), hidden = w1.rows(), out = w2.rows();
    MlpForward f;
    f.h = Matrix(n, hidden);
    f.embeds = Matrix(n, out);
    f.drop_scale = dropout_scale ? *dropout_scale : Matrix(n, hidden, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t u = 0; u < hidden; ++u) {
            double a = b1[u];
            for (std::size_t j = 0; j < x.cols(); ++j) a += w1(u, j) * x(i, j);
            a = std::max(a, 0.0) * f.drop_scale(i, u);
            f.h(i, u) = round16 ? fp16_round_clamped(static_cast<float>(a)) : a;
        }
        for (std::size_t e = 0; e < out; ++e) {
            double a = b2[e];
            for (std::size_t u = 0; u < hidden; ++u) a += w2(e, u) * f.h(i, u);
            f.embeds(i, e) = round16 ? fp16_round_clamped(static_cast<float>(a)) : a;
        }
    }
    return f;
}

struct MlpGrads {
    Matrix dw1, dw2;
    std::vector<double> db1, db2;
};

MlpGrads mlp_backward(const Mlp& net, const Matrix& x, const MlpForward& f, const Matrix& d_embeds,
                      bool round16) {
    const Matrix w1 = round16 ? rounded_copy(net.w1) : net.w1;
    const Matrix w2 = round16 ? rounded_copy(net.w2) : net.w2;
    const std::vector<double> b1 = round16 ? rounded_copy(net.b1) : net.b1;

    const std::size_t n = x.rows(), hidden = w1.rows(), out = w2.rows();
    MlpGrads g;
    g.dw1 = Matrix(hidden, x.cols());
    g.dw2 = Matrix(out, hidden);
    g.db1.assign(hidden, 0.0);
    g.db2.assign(out, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t e = 0; e < out; ++e) {
            const double ge = d_embeds(i, e);
            g.db2[e] += ge;
            for (std::size_t u = 0; u < hidden; ++u) g.dw2(e, u) += ge * f.h(i, u);
        }
        for (std::size_t u = 0; u < hidden; ++u) {
            double gh = 0.0;
            for (std::size_t e = 0; e < out; ++e) gh += w2(e, u) * d_embeds(i, e);
            if (round16) gh = fp16_round_clamped(static_cast<float>(gh));
            // relu mask from the pre-dropout activation sign; h keeps it
            double a = b1[u];
            for (std::size_t j = 0; j < x.cols(); ++j) a += w1(u, j) * x(i, j);
            if (a <= 0.0) continue;
            gh *= f.drop_scale(i, u);
            g.db1[u] += gh;
            for (std::size_t j = 0; j < x.cols(); ++j) g.dw1(u, j) += gh * x(i, j);
        }
    }
    if (round16) {
        for (auto& v : g.dw1.data()) v = fp16_round_clamped(static_cast<float>(v));
        for (auto& v : g.dw2.data()) v = fp16_round_clamped(static_cast<float>(v));
        for (auto& v : g.db1) v = fp16_round_clamped(static_cast<float>(v));
        for (auto& v : g.db2) v = fp16_round_clamped(static_cast<float>(v));
    }
    return g;
}

bool all_finite(const Matrix& m) {
    for (double v : m.data())
        if (!std::isfinite(v)) return false;
    return true;
}

// v <- momentum v + (g + wd w); w <- w - lr v
void sgd_update(Matrix& w, Matrix& v, const Matrix& g, double lr, double momentum, double wd) {
    for (std::size_t i = 0; i < w.data().size(); ++i) {
        v.data()[i] = momentum * v.data()[i] + g.data()[i] + wd * w.data()[i];
        w.data()[i] -= lr * v.data()[i];
    }
}

void sgd_update(std::vector<double>& w, std::vector<double>& v, const std::vector<double>& g,
                double lr, double momentum, double wd) {
    for (std::size_t i = 0; i < w.size(); ++i) {
        v[i] = momentum * v[i] + g[i] + wd * w[i];
        w[i] -= lr * v[i];
    }
}

}  // namespace

TrainerState init_trainer(const SynthTask& task, const TrainConfig& cfg) {
    cfg.validate();
    TrainerState st;
    st.cfg = cfg;
    st.loss_scale = cfg.loss_scale;
    std::mt19937_64 rng(cfg.seed * 0x2545f4914f6cdd1dULL + 1);
    const std::size_t in = task.inputs.cols();
    st.mlp.w1 = gaussian_matrix(cfg.hidden_dim, in, std::sqrt(2.0 / static_cast<double>(in)), rng);
    st.mlp.b1.assign(cfg.hidden_dim, 0.0);
    st.mlp.w2 = gaussian_matrix(cfg.embed_dim, cfg.hidden_dim,
                                std::sqrt(2.0 / static_cast<double>(cfg.hidden_dim)), rng);
    st.mlp.b2.assign(cfg.embed_dim, 0.0);
    st.velocity.w1 = Matrix(cfg.hidden_dim, in);
    st.velocity.b1.assign(cfg.hidden_dim, 0.0);
    st.velocity.w2 = Matrix(cfg.embed_dim, cfg.hidden_dim);
    st.velocity.b2.assign(cfg.embed_dim, 0.0);

    const ShardLayout layout = partition_classes(task.num_classes, cfg.shards);
    Matrix w = gaussian_matrix(task.num_classes, cfg.embed_dim, 0.01, rng);
    st.classifier = ShardedWeights(layout, w);
    for (const auto& [lo, hi] : layout.ranges)
        st.classifier_velocity.emplace_back(hi - lo, cfg.embed_dim);
    return st;
}

namespace {

struct EpochRunner {
    TrainerState& st;
    const SynthTask& task;

    // Training-set accuracy of the current model in eval mode (no dropout,
    // clean inputs), by pre-margin cosine argmax over all classes.
    double eval_accuracy() const {
        const Matrix emb = embed(st, task.inputs);
        const Matrix w = normalize_rows(st.classifier.gather());
        std::size_t correct = 0;
        for (std::size_t i = 0; i < emb.rows(); ++i) {
            std::size_t best = 0;
            double best_dot = -2.0;
            for (std::size_t c = 0; c < w.rows(); ++c) {
                double dot = 0.0;
                for (std::size_t j = 0; j < emb.cols(); ++j) dot += emb(i, j) * w(c, j);
                if (dot > best_dot) {
                    best_dot = dot;
                    best = c;
                }
            }
            if (best == task.labels[i]) ++correct;
        }
        return emb.rows() ? static_cast<double>(correct) / emb.rows() : 0.0;
    }

    EpochMetrics run(std::size_t epoch, double lr, double mask_ratio) {
        const TrainConfig& cfg = st.cfg;
        const std::size_t n = task.size();
        const bool m16 = mixed(cfg);
        auto rng = epoch_rng(cfg.seed, epoch);

        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        std::vector<char> use_mask(n, 0);
        for (std::size_t i = 0; i < n; ++i) use_mask[i] = unif(rng) < mask_ratio ? 1 : 0;

        EpochMetrics metrics;
        metrics.epoch = epoch;
        metrics.lr = lr;
        const std::uint64_t comm_before = st.ledger.bytes_allreduce;
        double loss_sum = 0.0;
        std::size_t correct = 0, counted = 0;

        for (std::size_t start = 0; start < n; start += cfg.global_batch) {
            const std::size_t bsz = std::min(cfg.global_batch, n - start);
            Matrix x(bsz, task.inputs.cols());
            Labels labels(bsz);
            for (std::size_t b = 0; b < bsz; ++b) {
                const std::size_t i = order[start + b];
                const Matrix& src = use_mask[i] ? task.masked_inputs : task.inputs;
                for (std::size_t j = 0; j < x.cols(); ++j) x(b, j) = src(i, j);
                labels[b] = task.labels[i];
            }

            Matrix drop(bsz, cfg.hidden_dim, 1.0);
            if (cfg.dropout_ratio > 0.0) {
                const double keep_scale = 1.0 / (1.0 - cfg.dropout_ratio);
                for (auto& v : drop.data()) v = unif(rng) < cfg.dropout_ratio ? 0.0 : keep_scale;
            }

            MlpForward fwd = mlp_forward(st.mlp, x, &drop, m16);

            SamplePlan plan = cfg.partial_fc_ratio < 1.0
                                  ? plan_negatives(st.classifier.layout(), labels,
                                                   cfg.partial_fc_ratio,
                                                   cfg.seed * 1000003ULL + st.step)
                                  : full_plan(st.classifier.layout());
            ShardedForwardState cls =
                partial_forward(fwd.embeds, st.classifier, labels, cfg.loss, plan, st.ledger);
            ShardedBackwardResult back = sharded_backward(cls, st.classifier, st.ledger);

            if (!std::isfinite(cls.loss) || !all_finite(back.d_features)) {
                if (m16) {
                    st.loss_scale = std::max(1.0, st.loss_scale / 2.0);
                    ++metrics.skipped_steps;
                    ++st.step;
                    continue;
                }
                throw NonFiniteLoss("train: non-finite loss at full precision");
            }

            Matrix d_embeds = back.d_features;
            if (m16) {
                for (auto& v : d_embeds.data())
                    v = fp16_round(static_cast<float>(v * st.loss_scale));
            }
            MlpGrads g = mlp_backward(st.mlp, x, fwd, d_embeds, m16);
            if (m16) {
                const double inv = 1.0 / st.loss_scale;
                for (auto& v : g.dw1.data()) v *= inv;
                for (auto& v : g.dw2.data()) v *= inv;
                for (auto& v : g.db1) v *= inv;
                for (auto& v : g.db2) v *= inv;
                if (!all_finite(g.dw1) || !all_finite(g.dw2)) {
                    st.loss_scale = std::max(1.0, st.loss_scale / 2.0);
                    ++metrics.skipped_steps;
                    ++st.step;
                    continue;
                }
            }

            sgd_update(st.mlp.w1, st.velocity.w1, g.dw1, lr, cfg.momentum, cfg.weight_decay);
            sgd_update(st.mlp.w2, st.velocity.w2, g.dw2, lr, cfg.momentum, cfg.weight_decay);
            sgd_update(st.mlp.b1, st.velocity.b1, g.db1, lr, cfg.momentum, cfg.weight_decay);
            sgd_update(st.mlp.b2, st.velocity.b2, g.db2, lr, cfg.momentum, cfg.weight_decay);

            // classifier rows update only where the plan scored them
            for (std::size_t s = 0; s < plan.kept.size(); ++s) {
                const std::size_t lo = st.classifier.layout().ranges[s].first;
                Matrix& blk = st.classifier.mutable_block(s);
                Matrix& vel = st.classifier_velocity[s];
                for (std::size_t r = 0; r < plan.kept[s].size(); ++r) {
                    const std::size_t row = plan.kept[s][r] - lo;
                    for (std::size_t c = 0; c < blk.cols(); ++c) {
                        const double grad = back.d_blocks[s](r, c) + cfg.weight_decay * blk(row, c);
                        vel(row, c) = cfg.momentum * vel(row, c) + grad;
                        blk(row, c) -= lr * vel(row, c);
                    }
                }
            }

            loss_sum += cls.loss * static_cast<double>(bsz);
            for (std::size_t b = 0; b < bsz; ++b)
                if (cls.pred_class[b] == labels[b]) ++correct;
            counted += bsz;
            ++st.step;
        }

        metrics.mean_loss = counted ? loss_sum / static_cast<double>(counted) : 0.0;
        (void)correct;
        metrics.train_accuracy = eval_accuracy();
        metrics.comm_bytes = st.ledger.bytes_allreduce - comm_before;
        return metrics;
    }
};

}  // namespace

std::vector<EpochMetrics> train(TrainerState& st, const SynthTask& task) {
    std::vector<EpochMetrics> all;
    EpochRunner runner{st, task};
    while (st.epochs_done < st.cfg.total_epochs) {
        const double lr = lr_at(st.epochs_done, st.cfg);
        all.push_back(runner.run(st.epochs_done, lr, st.cfg.mask_ratio));
        ++st.epochs_done;
    }
    return all;
}

std::vector<EpochMetrics> finetune(TrainerState& st, const SynthTask& task,
                                   const FinetuneOverrides& overrides) {
    std::vector<EpochMetrics> all;
    EpochRunner runner{st, task};
    for (std::size_t e = 0; e < overrides.epochs; ++e) {
        all.push_back(runner.run(st.epochs_done, overrides.lr, overrides.mask_ratio));
        ++st.epochs_done;
    }
    return all;
}

Matrix embed(const TrainerState& st, const Matrix& inputs) {
    MlpForward f = mlp_forward(st.mlp, inputs, nullptr, mixed(st.cfg));
    return normalize_rows(f.embeds);
}

namespace {

VerifyMetrics metrics_for(const std::vector<std::pair<double, bool>>& scored) {
    VerifyMetrics m;
    std::vector<double> pos, neg;
    for (const auto& [sim, same] : scored) (same ? pos : neg).push_back(sim);
    m.n_pos = pos.size();
    m.n_neg = neg.size();
    if (pos.empty() || neg.empty())
        throw DegeneratePairs("verify_pairs: need both positive and negative pairs");

    // exhaustive sweep over midpoints of adjacent distinct similarities
    std::vector<double> all;
    for (const auto& [sim, same] : scored) all.push_back(sim);
    std::sort(all.begin(), all.end());
    std::vector<double> candidates = {all.front() - 1e-3, all.back() + 1e-3};
    for (std::size_t i = 0; i + 1 < all.size(); ++i)
        if (all[i] < all[i + 1]) candidates.push_back(0.5 * (all[i] + all[i + 1]));
    for (double t : candidates) {
        std::size_t ok = 0;
        for (const auto& [sim, same] : scored) ok += (sim > t) == same;
        const double acc = static_cast<double>(ok) / scored.size();
        if (acc > m.accuracy) {
            m.accuracy = acc;
            m.best_threshold = t;
        }
    }

    std::sort(neg.begin(), neg.end(), std::greater<>());
    const std::size_t allowed = static_cast<std::size_t>(0.01 * static_cast<double>(neg.size()));
    const double thr = allowed < neg.size() ? neg[allowed] : neg.back() - 1.0;
    std::size_t tp = 0;
    for (double s : pos) tp += s > thr;
    m.tpr_at_fpr = static_cast<double>(tp) / pos.size();
    return m;
}

}  // namespace

PairReport verify_pairs(const TrainerState& st, const SynthTask& task, const PairSet& pairs) {
    if (pairs.pairs.empty()) throw DegeneratePairs("verify_pairs: empty pair set");
    const Matrix emb_clean = embed(st, task.inputs);
    const Matrix emb_masked = embed(st, task.masked_inputs);

    std::vector<std::pair<double, bool>> all, masked, clean;
    for (const auto& p : pairs.pairs) {
        if (p.a == p.b) throw DegeneratePairs("verify_pairs: self pair");
        const Matrix& ea = p.masked ? emb_masked : emb_clean;
        const double sim = dot_rows(ea, p.a, emb_clean, p.b);
        all.emplace_back(sim, p.same);
        (p.masked ? masked : clean).emplace_back(sim, p.same);
    }
    PairReport report;
    report.overall = metrics_for(all);
    report.has_masked = !masked.empty();
    report.has_clean = !clean.empty();
    if (report.has_masked) report.masked = metrics_for(masked);
    if (report.has_clean) report.clean = metrics_for(clean);
    return report;
}

// ---- checkpoint container ----

namespace {

constexpr char kMagic[4] = {'F', 'T', 'C', '1'};
constexpr std::uint16_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 4)) throw Truncated("checkpoint: short read");
    return v;
}

void put_floats(std::ostream& os, const std::vector<double>& v) {
    for (double d : v) {
        const float f = static_cast<float>(d);
        os.write(reinterpret_cast<const char*>(&f), 4);
    }
}

void get_floats(std::istream& is, std::vector<double>& v) {
    for (auto& d : v) {
        float f;
        if (!is.read(reinterpret_cast<char*>(&f), 4)) throw Truncated("checkpoint: short read");
        d = f;
    }
}

nlohmann::json config_json(const TrainConfig& c) {
    return {{"base_lr_per_256", c.base_lr_per_256},
            {"momentum", c.momentum},
            {"weight_decay", c.weight_decay},
            {"dropout_ratio", c.dropout_ratio},
            {"decay_epochs", c.decay_epochs},
            {"decay_factor", c.decay_factor},
            {"total_epochs", c.total_epochs},
            {"global_batch", c.global_batch},
            {"hidden_dim", c.hidden_dim},
            {"embed_dim", c.embed_dim},
            {"loss_kind", static_cast<int>(c.loss.kind)},
            {"margin", c.loss.margin},
            {"scale", c.loss.scale},
            {"mask_ratio", c.mask_ratio},
            {"precision", c.precision == Precision::MixedEmulated ? "mixed_emulated" : "full"},
            {"partial_fc_ratio", c.partial_fc_ratio},
            {"shards", c.shards},
            {"loss_scale", c.loss_scale},
            {"seed", c.seed}};
}

TrainConfig config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.base_lr_per_256 = j.at("base_lr_per_256");
    c.momentum = j.at("momentum");
    c.weight_decay = j.at("weight_decay");
    c.dropout_ratio = j.at("dropout_ratio");
    c.decay_epochs = j.at("decay_epochs").get<std::set<std::size_t>>();
    c.decay_factor = j.at("decay_factor");
    c.total_epochs = j.at("total_epochs");
    c.global_batch = j.at("global_batch");
    c.hidden_dim = j.at("hidden_dim");
    c.embed_dim = j.at("embed_dim");
    c.loss.kind = static_cast<LossKind>(j.at("loss_kind").get<int>());
    c.loss.margin = j.at("margin");
    c.loss.scale = j.at("scale");
    c.mask_ratio = j.at("mask_ratio");
    c.precision = j.at("precision") == "mixed_emulated" ? Precision::MixedEmulated : Precision::Full;
    c.partial_fc_ratio = j.at("partial_fc_ratio");
    c.shards = j.at("shards");
    c.loss_scale = j.at("loss_scale");
    c.seed = j.at("seed");
    return c;
}

}  // namespace

void save_checkpoint(const TrainerState& st, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("checkpoint: cannot open " + path + " for writing");
    os.write(kMagic, 4);
    os.write(reinterpret_cast<const char*>(&kVersion), 2);
    put_u32(os, static_cast<std::uint32_t>(st.mlp.w1.cols()));  // input dim
    put_u32(os, static_cast<std::uint32_t>(st.cfg.hidden_dim));
    put_u32(os, static_cast<std::uint32_t>(st.cfg.embed_dim));
    put_u32(os, static_cast<std::uint32_t>(st.classifier.layout().num_classes));
    put_u32(os, static_cast<std::uint32_t>(st.cfg.shards));
    put_u32(os, static_cast<std::uint32_t>(st.epochs_done));
    put_floats(os, st.mlp.w1.data());
    put_floats(os, st.mlp.b1);
    put_floats(os, st.mlp.w2.data());
    put_floats(os, st.mlp.b2);
    const Matrix full = st.classifier.gather();
    put_floats(os, full.data());
    const std::string cfg = config_json(st.cfg).dump();
    put_u32(os, static_cast<std::uint32_t>(cfg.size()));
    os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
}

TrainerState load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("checkpoint: cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4)) throw Truncated("checkpoint: short read");
    if (std::memcmp(magic, kMagic, 4) != 0) throw BadMagic("checkpoint: bad magic");
    std::uint16_t version = 0;
    if (!is.read(reinterpret_cast<char*>(&version), 2)) throw Truncated("checkpoint: short read");
    if (version != kVersion) throw VersionUnsupported("checkpoint: version " + std::to_string(version));

    const std::uint32_t in = get_u32(is);
    const std::uint32_t hidden = get_u32(is);
    const std::uint32_t embd = get_u32(is);
    const std::uint32_t classes = get_u32(is);
    const std::uint32_t shards = get_u32(is);
    const std::uint32_t epochs_done = get_u32(is);

    TrainerState st;
    st.mlp.w1 = Matrix(hidden, in);
    st.mlp.b1.assign(hidden, 0.0);
    st.mlp.w2 = Matrix(embd, hidden);
    st.mlp.b2.assign(embd, 0.0);
    get_floats(is, st.mlp.w1.data());
    get_floats(is, st.mlp.b1);
    get_floats(is, st.mlp.w2.data());
    get_floats(is, st.mlp.b2);
    Matrix full(classes, embd);
    get_floats(is, full.data());

    std::uint32_t cfg_len = get_u32(is);
    std::string cfg_text(cfg_len, '\0');
    if (!is.read(cfg_text.data(), cfg_len)) throw Truncated("checkpoint: short read");
    st.cfg = config_from_json(nlohmann::json::parse(cfg_text));

    st.classifier = ShardedWeights(partition_classes(classes, shards), full);
    for (const auto& [lo, hi] : st.classifier.layout().ranges)
        st.classifier_velocity.emplace_back(hi - lo, embd);
    st.velocity.w1 = Matrix(hidden, in);
    st.velocity.b1.assign(hidden, 0.0);
    st.velocity.w2 = Matrix(embd, hidden);
    st.velocity.b2.assign(embd, 0.0);
    st.epochs_done = epochs_done;
    st.loss_scale = st.cfg.loss_scale;
    return st;
}

}  // namespace facetrain
