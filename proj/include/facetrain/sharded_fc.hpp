#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "facetrain/margin_loss.hpp"
#include "facetrain/matrix.hpp"

namespace facetrain {

// Partition of [0, C) into k contiguous shards whose sizes differ by at most
// one; the remainder classes land on the lowest ranks.
struct ShardLayout {
    std::size_t k = 0;
    std::size_t num_classes = 0;
    std::vector<std::pair<std::size_t, std::size_t>> ranges;  // half-open

    std::size_t shard_of(std::size_t cls) const;
};

ShardLayout partition_classes(std::size_t num_classes, std::size_t k);

// The classification weight matrix, stored as one block per virtual worker.
// Mutations go through mutable_block so a forward state can detect staleness.
class ShardedWeights {
public:
    ShardedWeights() = default;
    ShardedWeights(ShardLayout layout, const Matrix& full);

    const ShardLayout& layout() const { return layout_; }
    std::size_t dim() const { return dim_; }
    const Matrix& block(std::size_t i) const { return blocks_[i]; }
    Matrix& mutable_block(std::size_t i) { ++version_; return blocks_[i]; }
    std::uint64_t version() const { return version_; }

    Matrix gather() const;  // concatenated [C x d] view, rank-ascending

private:
    ShardLayout layout_;
    std::size_t dim_ = 0;
    std::vector<Matrix> blocks_;
    std::uint64_t version_ = 0;
};

// Byte accounting for the simulated collectives.
struct CommLedger {
    std::uint64_t bytes_allreduce = 0;
    std::uint64_t bytes_allgather = 0;
    std::uint64_t rounds = 0;

    static constexpr std::uint64_t kScalarWidth = sizeof(double);
};

// Negative-sampling plan: per-shard kept class lists (global ids, ascending).
// Every class appearing in the batch labels is always kept.
struct SamplePlan {
    std::vector<std::vector<std::uint32_t>> kept;
    double ratio = 1.0;
    std::uint64_t seed = 0;

    std::size_t total_kept() const;
};

SamplePlan plan_negatives(const ShardLayout& layout, const Labels& labels,
                          double ratio, std::uint64_t seed);

SamplePlan full_plan(const ShardLayout& layout);

struct ShardedForwardState {
    double loss = 0.0;
    std::vector<double> target_prob;
    std::vector<std::uint32_t> pred_class;   // argmax over pre-margin cosines

    // retained for backward
    Matrix features_raw;
    Matrix features_unit;
    std::vector<Matrix> unit_blocks;         // normalized kept weight rows, per shard
    std::vector<std::vector<double>> block_norms;
    Matrix probs;                            // [N x total kept]
    Matrix cosines;                          // [N x total kept]
    SamplePlan plan;
    Labels labels;
    LossConfig cfg;
    std::uint64_t weights_version = 0;
};

// Forward over all classes. Numerically identical for every k: each class
// column is computed by the same per-class kernel, and row reductions run in
// global class order (the simulated collective combines rank-ascending, and
// ranks hold contiguous class ranges).
ShardedForwardState sharded_forward(const Matrix& features, const ShardedWeights& weights,
                                    const Labels& labels, const LossConfig& cfg,
                                    CommLedger& ledger);

struct ShardedBackwardResult {
    Matrix d_features;
    std::vector<Matrix> d_blocks;  // per shard, [kept_i x d] rows matching plan.kept
};

ShardedBackwardResult sharded_backward(const ShardedForwardState& state,
                                       const ShardedWeights& weights, CommLedger& ledger);

// Partial FC: forward + backward over the plan's kept classes only. With
// ratio 1 this is bit-identical to sharded_forward / sharded_backward.
ShardedForwardState partial_forward(const Matrix& features, const ShardedWeights& weights,
                                    const Labels& labels, const LossConfig& cfg,
                                    const SamplePlan& plan, CommLedger& ledger);

}  // namespace facetrain
