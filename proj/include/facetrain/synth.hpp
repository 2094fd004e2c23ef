#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "facetrain/margin_loss.hpp"
#include "facetrain/matrix.hpp"

namespace facetrain {

// Synthetic identity task: unit prototype per identity, Gaussian perturbation
// per sample, planted label noise, and a deterministic occlusion ("mask")
// variant of every sample.
struct SynthTaskSpec {
    std::size_t n_ids = 100;
    std::size_t samples_per_id = 50;
    std::size_t input_dim = 128;
    double noise_sigma = 0.1;
    double occlusion_fraction = 0.5;   // trailing coordinates zeroed then renormalized
    double outlier_fraction = 0.0;     // relabeled to a random foreign id
    std::size_t split_id_count = 0;    // ids whose samples are split across two labels
    std::uint64_t seed = 0;

    void validate() const;
};

struct SynthTask {
    SynthTaskSpec spec;
    Matrix inputs;         // [n x input_dim], unit rows
    Matrix masked_inputs;  // occluded variants, unit rows
    Labels labels;
    std::size_t num_classes = 0;

    // ground truth for cleaning evaluation
    std::vector<std::uint64_t> planted_outliers;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> split_pairs;

    std::size_t size() const { return labels.size(); }
};

SynthTask synth_task(const SynthTaskSpec& spec);

// Zero the trailing fraction of coordinates and renormalize.
Matrix occlude(const Matrix& inputs, double fraction);

struct VerifyPair {
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    bool same = false;
    bool masked = false;  // sample a presented in its occluded variant
};

struct PairSet {
    std::vector<VerifyPair> pairs;
};

// Balanced positive/negative pairs; when masked, side a uses the occluded
// variant (masked probe against a clean gallery).
PairSet make_pairs(const SynthTask& task, std::size_t n_pairs, bool masked, std::uint64_t seed);

}  // namespace facetrain
