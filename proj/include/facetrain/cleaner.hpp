#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <vector>

#include "facetrain/matrix.hpp"

namespace facetrain {

// Feature vectors with dense identity labels. provenance maps each row back
// to its index in the original dataset so removals survive relabeling.
struct EmbeddingDataset {
    Matrix features;                       // [n x d], rows unit-normalized
    std::vector<std::uint32_t> labels;
    std::vector<std::uint64_t> provenance;
    // original label ids folded into each current class; merges are reported
    // in original-label space so they stay comparable to planted truth
    std::vector<std::vector<std::uint32_t>> label_provenance;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.cols(); }
    std::size_t num_ids() const;
    void validate() const;
    void init_provenance();
};

struct CleaningConfig {
    double thre_intra = 0.45;
    double thre_inter = 0.75;
    std::size_t max_iters = 3;
    std::size_t min_class_size = 2;
};

struct CleanRoundEntry {
    std::vector<std::uint64_t> removed;            // original indices of filtered samples
    std::vector<std::vector<std::uint32_t>> merges;  // groups of >= 2 pre-merge labels
    std::vector<std::uint64_t> dropped_small;      // original indices dropped by min_class_size
    std::size_t centers_before = 0;
    std::size_t centers_after = 0;

    bool changed_anything() const;
};

struct CleaningReport {
    std::vector<CleanRoundEntry> rounds;
    bool converged = false;

    std::vector<std::uint64_t> all_removed() const;  // union over rounds, sorted
    std::string to_json() const;
};

// Normalized per-class mean ("average pooling") of feature rows.
Matrix class_centers(const EmbeddingDataset& ds);

struct IntraFilterResult {
    std::vector<std::size_t> kept;     // row indices into ds
    std::vector<std::size_t> removed;
};

// Removes samples whose cosine to their own class center is below thre_intra.
IntraFilterResult intra_filter(const EmbeddingDataset& ds, const Matrix& centers,
                               double thre_intra);

// Union-find closure over center pairs with similarity strictly above
// thre_inter. Returns old id -> new id; new ids are dense, ordered by each
// group's smallest member.
std::vector<std::uint32_t> inter_merge(const Matrix& centers, double thre_inter);

struct CleanRoundResult {
    EmbeddingDataset dataset;
    CleanRoundEntry entry;
};

// One round: centers -> intra filter -> recompute centers from survivors ->
// merge -> drop classes below min_class_size -> dense relabel.
CleanRoundResult clean_round(const EmbeddingDataset& ds, const CleaningConfig& cfg);

using ReembedFn = std::function<EmbeddingDataset(const EmbeddingDataset&)>;

struct IterateResult {
    EmbeddingDataset dataset;
    CleaningReport report;
};

// Repeats clean_round -> reembed until a round changes nothing (structural
// fixed point) or max_iters rounds have run.
IterateResult iterate_clean(const EmbeddingDataset& ds, const CleaningConfig& cfg,
                            const ReembedFn& reembed);

struct CleaningTruth {
    std::size_t total_samples = 0;
    std::set<std::uint64_t> planted_outliers;                    // original indices
    std::set<std::pair<std::uint32_t, std::uint32_t>> split_pairs;  // label pairs to merge
};

struct CleaningMetrics {
    double outlier_precision = 1.0;
    double outlier_recall = 1.0;
    double merge_precision = 1.0;
    double merge_recall = 1.0;
};

// Precision/recall against planted ground truth. Empty denominators score
// 1.0 by convention.
CleaningMetrics evaluate_cleaning(const CleaningReport& report, const CleaningTruth& truth);

}  // namespace facetrain
