#include "facetrain/cleaner.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <json.hpp>

namespace facetrain {

std::size_t EmbeddingDataset::num_ids() const {
    std::uint32_t mx = 0;
    for (auto l : labels) mx = std::max(mx, l + 1);
    return mx;
}

void EmbeddingDataset::validate() const {
    if (labels.size() != features.rows())
        throw DimMismatch("EmbeddingDataset: label count != feature rows");
    const std::size_t ids = num_ids();
    std::vector<bool> seen(ids, false);
    for (auto l : labels) seen[l] = true;
    for (std::size_t c = 0; c < ids; ++c)
        if (!seen[c]) throw EmptyClass("EmbeddingDataset: label " + std::to_string(c) + " unused");
    for (std::size_t i = 0; i < features.rows(); ++i) {
        if (std::abs(row_norm(features, i) - 1.0) > 1e-6)
            throw InvalidSpec("EmbeddingDataset: row " + std::to_string(i) + " not unit-normalized");
    }
}

void EmbeddingDataset::init_provenance() {
    provenance.resize(size());
    std::iota(provenance.begin(), provenance.end(), 0);
    label_provenance.assign(num_ids(), {});
    for (std::uint32_t c = 0; c < label_provenance.size(); ++c) label_provenance[c] = {c};
}

Matrix class_centers(const EmbeddingDataset& ds) {
    const std::size_t ids = ds.num_ids();
    const std::size_t d = ds.dim();
    Matrix sums(ids, d);
    std::vector<std::size_t> counts(ids, 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        ++counts[ds.labels[i]];
        for (std::size_t j = 0; j < d; ++j) sums(ds.labels[i], j) += ds.features(i, j);
    }
    for (std::size_t c = 0; c < ids; ++c) {
        if (counts[c] == 0) throw EmptyClass("class_centers: class " + std::to_string(c) + " empty");
        double sq = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            sums(c, j) /= static_cast<double>(counts[c]);
            sq += sums(c, j) * sums(c, j);
        }
        const double norm = std::sqrt(sq);
        if (norm < 1e-30)
            throw DegenerateCenter("class_centers: class " + std::to_string(c) +
                                   " mean is the zero vector");
        for (std::size_t j = 0; j < d; ++j) sums(c, j) /= norm;
    }
    return sums;
}

IntraFilterResult intra_filter(const EmbeddingDataset& ds, const Matrix& centers,
                               double thre_intra) {
    IntraFilterResult res;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double sim = dot_rows(ds.features, i, centers, ds.labels[i]);
        if (sim < thre_intra)
            res.removed.push_back(i);
        else
            res.kept.push_back(i);
    }
    return res;
}

namespace {

struct DisjointSet {
    std::vector<std::size_t> parent;
    explicit DisjointSet(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

}  // namespace

std::vector<std::uint32_t> inter_merge(const Matrix& centers, double thre_inter) {
    const std::size_t c = centers.rows();
    DisjointSet ds(c);
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = i + 1; j < c; ++j)
            if (dot_rows(centers, i, centers, j) > thre_inter) ds.unite(i, j);

    // dense new ids ordered by each group's smallest member
    std::map<std::size_t, std::uint32_t> root_to_new;
    std::vector<std::uint32_t> remap(c);
    for (std::size_t i = 0; i < c; ++i) {
        const std::size_t root = ds.find(i);
        auto it = root_to_new.find(root);
        if (it == root_to_new.end())
            it = root_to_new.emplace(root, static_cast<std::uint32_t>(root_to_new.size())).first;
        remap[i] = it->second;
    }
    return remap;
}

bool CleanRoundEntry::changed_anything() const {
    return !removed.empty() || !merges.empty() || !dropped_small.empty();
}

CleanRoundResult clean_round(const EmbeddingDataset& ds, const CleaningConfig& cfg) {
    CleanRoundResult out;
    CleanRoundEntry& entry = out.entry;

    const Matrix centers0 = class_centers(ds);
    entry.centers_before = centers0.rows();

    IntraFilterResult filtered = intra_filter(ds, centers0, cfg.thre_intra);
    for (auto i : filtered.removed) entry.removed.push_back(ds.provenance[i]);

    // survivors; classes emptied by the filter disappear here
    EmbeddingDataset survivors;
    survivors.features = Matrix(filtered.kept.size(), ds.dim());
    std::vector<std::uint32_t> old_label;
    std::map<std::uint32_t, std::uint32_t> compact;
    for (std::size_t r = 0; r < filtered.kept.size(); ++r) {
        const std::size_t i = filtered.kept[r];
        for (std::size_t j = 0; j < ds.dim(); ++j) survivors.features(r, j) = ds.features(i, j);
        auto it = compact.find(ds.labels[i]);
        if (it == compact.end()) {
            it = compact.emplace(ds.labels[i], static_cast<std::uint32_t>(compact.size())).first;
            old_label.push_back(ds.labels[i]);
        }
        survivors.labels.push_back(it->second);
        survivors.provenance.push_back(ds.provenance[i]);
    }
    if (survivors.size() == 0) throw AllRemoved("clean_round: no samples survived intra filtering");
    for (auto ol : old_label) survivors.label_provenance.push_back(ds.label_provenance[ol]);

    // centers updated with the remaining samples, then merged
    const Matrix centers1 = class_centers(survivors);
    const std::vector<std::uint32_t> remap = inter_merge(centers1, cfg.thre_inter);
    std::vector<std::vector<std::uint32_t>> groups(
        *std::max_element(remap.begin(), remap.end()) + 1);
    for (std::uint32_t c = 0; c < remap.size(); ++c) groups[remap[c]].push_back(c);
    for (const auto& g : groups) {
        if (g.size() < 2) continue;
        std::vector<std::uint32_t> originals;
        for (auto c : g)
            originals.insert(originals.end(), survivors.label_provenance[c].begin(),
                             survivors.label_provenance[c].end());
        std::sort(originals.begin(), originals.end());
        entry.merges.push_back(std::move(originals));
    }

    EmbeddingDataset merged;
    merged.features = std::move(survivors.features);
    merged.provenance = std::move(survivors.provenance);
    for (auto l : survivors.labels) merged.labels.push_back(remap[l]);
    merged.label_provenance.assign(groups.size(), {});
    for (std::uint32_t c = 0; c < remap.size(); ++c) {
        auto& dst = merged.label_provenance[remap[c]];
        dst.insert(dst.end(), survivors.label_provenance[c].begin(),
                   survivors.label_provenance[c].end());
    }
    for (auto& lp : merged.label_provenance) std::sort(lp.begin(), lp.end());

    // drop classes below min_class_size, relabel densely
    std::vector<std::size_t> class_size(groups.size(), 0);
    for (auto l : merged.labels) ++class_size[l];
    std::map<std::uint32_t, std::uint32_t> final_map;
    EmbeddingDataset final_ds;
    std::vector<std::size_t> keep_rows;
    for (std::size_t i = 0; i < merged.size(); ++i) {
        if (class_size[merged.labels[i]] < cfg.min_class_size) {
            entry.dropped_small.push_back(merged.provenance[i]);
            continue;
        }
        keep_rows.push_back(i);
    }
    if (keep_rows.empty()) throw AllRemoved("clean_round: min_class_size dropped everything");
    final_ds.features = Matrix(keep_rows.size(), ds.dim());
    for (std::size_t r = 0; r < keep_rows.size(); ++r) {
        const std::size_t i = keep_rows[r];
        for (std::size_t j = 0; j < ds.dim(); ++j) final_ds.features(r, j) = merged.features(i, j);
        auto it = final_map.find(merged.labels[i]);
        if (it == final_map.end()) {
            it = final_map.emplace(merged.labels[i], static_cast<std::uint32_t>(final_map.size()))
                     .first;
            final_ds.label_provenance.push_back(merged.label_provenance[merged.labels[i]]);
        }
        final_ds.labels.push_back(it->second);
        final_ds.provenance.push_back(merged.provenance[i]);
    }
    entry.centers_after = final_ds.num_ids();
    out.dataset = std::move(final_ds);
    return out;
}

IterateResult iterate_clean(const EmbeddingDataset& ds, const CleaningConfig& cfg,
                            const ReembedFn& reembed) {
    IterateResult res;
    res.dataset = ds;
    if (res.dataset.provenance.empty()) res.dataset.init_provenance();
    for (std::size_t round = 0; round < cfg.max_iters; ++round) {
        CleanRoundResult r = clean_round(res.dataset, cfg);
        res.report.rounds.push_back(r.entry);
        if (!r.entry.changed_anything()) {
            res.report.converged = true;
            break;
        }
        res.dataset = reembed ? reembed(r.dataset) : std::move(r.dataset);
    }
    return res;
}

std::vector<std::uint64_t> CleaningReport::all_removed() const {
    std::vector<std::uint64_t> out;
    for (const auto& r : rounds) out.insert(out.end(), r.removed.begin(), r.removed.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::string CleaningReport::to_json() const {
    nlohmann::json j;
    j["converged"] = converged;
    j["rounds"] = nlohmann::json::array();
    for (const auto& r : rounds) {
        j["rounds"].push_back({{"removed", r.removed},
                               {"merges", r.merges},
                               {"dropped_small", r.dropped_small},
                               {"centers_before", r.centers_before},
                               {"centers_after", r.centers_after}});
    }
    return j.dump(2);
}

CleaningMetrics evaluate_cleaning(const CleaningReport& report, const CleaningTruth& truth) {
    CleaningMetrics m;
    const auto removed = report.all_removed();
    for (auto i : removed)
        if (i >= truth.total_samples) throw TruthMismatch("removed index outside truth");

    std::size_t hit = 0;
    for (auto i : removed)
        if (truth.planted_outliers.count(i)) ++hit;
    m.outlier_precision = removed.empty() ? 1.0 : static_cast<double>(hit) / removed.size();
    m.outlier_recall = truth.planted_outliers.empty()
                           ? 1.0
                           : static_cast<double>(hit) / truth.planted_outliers.size();

    std::set<std::pair<std::uint32_t, std::uint32_t>> predicted;
    for (const auto& r : report.rounds)
        for (const auto& g : r.merges)
            for (std::size_t a = 0; a < g.size(); ++a)
                for (std::size_t b = a + 1; b < g.size(); ++b)
                    predicted.emplace(std::min(g[a], g[b]), std::max(g[a], g[b]));

    std::size_t pair_hit = 0;
    for (const auto& p : predicted)
        if (truth.split_pairs.count(p)) ++pair_hit;
    m.merge_precision = predicted.empty() ? 1.0 : static_cast<double>(pair_hit) / predicted.size();
    m.merge_recall = truth.split_pairs.empty()
                         ? 1.0
                         : static_cast<double>(pair_hit) / truth.split_pairs.size();
    return m;
}

}  // namespace facetrain
