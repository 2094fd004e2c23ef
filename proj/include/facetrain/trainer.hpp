#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "facetrain/sharded_fc.hpp"
#include "facetrain/synth.hpp"

namespace facetrain {

enum class Precision { Full, MixedEmulated };

struct TrainConfig {
    double base_lr_per_256 = 0.1;       // linear scale-up with the global batch
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double dropout_ratio = 0.4;
    std::set<std::size_t> decay_epochs = {5, 9, 12, 15};
    double decay_factor = 0.1;
    std::size_t total_epochs = 17;
    std::size_t global_batch = 256;
    std::size_t hidden_dim = 128;
    std::size_t embed_dim = 64;
    LossConfig loss;
    double mask_ratio = 0.15;
    Precision precision = Precision::Full;
    double partial_fc_ratio = 1.0;
    std::size_t shards = 1;             // virtual workers for the classifier
    double loss_scale = 1024.0;         // static scale for mixed emulation
    std::uint64_t seed = 0;

    void validate() const;
};

double lr_at(std::size_t epoch, const TrainConfig& cfg);

// Two-layer perceptron embedder; outputs are L2-normalized.
struct Mlp {
    Matrix w1;                 // [hidden x in]
    std::vector<double> b1;
    Matrix w2;                 // [embed x hidden]
    std::vector<double> b2;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double lr = 0.0;
    double mean_loss = 0.0;
    double train_accuracy = 0.0;
    std::uint64_t comm_bytes = 0;
    std::size_t skipped_steps = 0;

    std::string to_json() const;
};

struct TrainerState {
    TrainConfig cfg;
    Mlp mlp;
    Mlp velocity;              // momentum buffers, same shapes
    ShardedWeights classifier;
    std::vector<Matrix> classifier_velocity;
    std::size_t epochs_done = 0;
    std::uint64_t step = 0;
    double loss_scale = 1024.0;
    CommLedger ledger;
};

TrainerState init_trainer(const SynthTask& task, const TrainConfig& cfg);

// Runs cfg.total_epochs of SGD with the step-decay schedule.
std::vector<EpochMetrics> train(TrainerState& state, const SynthTask& task);

// Embeds rows of `inputs` in eval mode (no dropout); unit rows out.
Matrix embed(const TrainerState& state, const Matrix& inputs);

struct FinetuneOverrides {
    double mask_ratio = 0.33;
    std::size_t epochs = 3;
    double lr = 1e-3;  // constant; the base recipe leaves this open
};

std::vector<EpochMetrics> finetune(TrainerState& state, const SynthTask& task,
                                   const FinetuneOverrides& overrides);

struct VerifyMetrics {
    double accuracy = 0.0;
    double best_threshold = 0.0;
    double tpr_at_fpr = 0.0;   // FPR target 1e-2
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
};

struct PairReport {
    VerifyMetrics overall;
    VerifyMetrics masked;
    VerifyMetrics clean;
    bool has_masked = false;
    bool has_clean = false;
};

PairReport verify_pairs(const TrainerState& state, const SynthTask& task, const PairSet& pairs);

// Versioned binary checkpoint: magic, version, dims, flat float32 arrays,
// config echo.
void save_checkpoint(const TrainerState& state, const std::string& path);
TrainerState load_checkpoint(const std::string& path);

}  // namespace facetrain
