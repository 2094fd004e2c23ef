#include "facetrain/sharded_fc.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace facetrain {

std::size_t ShardLayout::shard_of(std::size_t cls) const {
    for (std::size_t i = 0; i < ranges.size(); ++i)
        if (cls >= ranges[i].first && cls < ranges[i].second) return i;
    throw LabelOutOfRange("shard_of: class " + std::to_string(cls) + " outside layout");
}

ShardLayout partition_classes(std::size_t num_classes, std::size_t k) {
    if (k < 1 || k > num_classes)
        throw InvalidShardCount("partition_classes: k=" + std::to_string(k) +
                                " invalid for C=" + std::to_string(num_classes));
    ShardLayout layout;
    layout.k = k;
    layout.num_classes = num_classes;
    const std::size_t base = num_classes / k;
    const std::size_t rem = num_classes % k;
    std::size_t start = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t size = base + (i < rem ? 1 : 0);
        layout.ranges.emplace_back(start, start + size);
        start += size;
    }
    return layout;
}

ShardedWeights::ShardedWeights(ShardLayout layout, const Matrix& full)
    : layout_(std::move(layout)), dim_(full.cols()) {
    if (full.rows() != layout_.num_classes)
        throw DimMismatch("ShardedWeights: weight rows != layout classes");
    for (const auto& [lo, hi] : layout_.ranges) {
        Matrix block(hi - lo, dim_);
        for (std::size_t r = lo; r < hi; ++r)
            for (std::size_t c = 0; c < dim_; ++c) block(r - lo, c) = full(r, c);
        blocks_.push_back(std::move(block));
    }
}

Matrix ShardedWeights::gather() const {
    Matrix full(layout_.num_classes, dim_);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const auto lo = layout_.ranges[i].first;
        for (std::size_t r = 0; r < blocks_[i].rows(); ++r)
            for (std::size_t c = 0; c < dim_; ++c) full(lo + r, c) = blocks_[i](r, c);
    }
    return full;
}

std::size_t SamplePlan::total_kept() const {
    std::size_t t = 0;
    for (const auto& v : kept) t += v.size();
    return t;
}

SamplePlan full_plan(const ShardLayout& layout) {
    SamplePlan plan;
    plan.ratio = 1.0;
    for (const auto& [lo, hi] : layout.ranges) {
        std::vector<std::uint32_t> all;
        for (std::size_t c = lo; c < hi; ++c) all.push_back(static_cast<std::uint32_t>(c));
        plan.kept.push_back(std::move(all));
    }
    return plan;
}

SamplePlan plan_negatives(const ShardLayout& layout, const Labels& labels,
                          double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio <= 1.0))
        throw InvalidRatio("plan_negatives: ratio must be in (0, 1]");
    SamplePlan plan;
    plan.ratio = ratio;
    plan.seed = seed;
    for (std::size_t s = 0; s < layout.k; ++s) {
        const auto [lo, hi] = layout.ranges[s];
        std::set<std::uint32_t> positives;
        for (auto l : labels)
            if (l >= lo && l < hi) positives.insert(l);
        const std::size_t range_size = hi - lo;
        const std::size_t quota = std::max<std::size_t>(
            static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(range_size))),
            positives.size());

        std::vector<std::uint32_t> negatives;
        for (std::size_t c = lo; c < hi; ++c)
            if (!positives.count(static_cast<std::uint32_t>(c)))
                negatives.push_back(static_cast<std::uint32_t>(c));
        std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + s + 1);
        std::shuffle(negatives.begin(), negatives.end(), rng);

        std::vector<std::uint32_t> kept(positives.begin(), positives.end());
        for (std::size_t i = 0; i < negatives.size() && kept.size() < quota; ++i)
            kept.push_back(negatives[i]);
        std::sort(kept.begin(), kept.end());
        plan.kept.push_back(std::move(kept));
    }
    return plan;
}

namespace {

void check_plan(const SamplePlan& plan, const ShardLayout& layout, const Labels& labels) {
    if (plan.kept.size() != layout.k)
        throw PlanMismatch("plan has " + std::to_string(plan.kept.size()) + " shards, layout has " +
                           std::to_string(layout.k));
    for (std::size_t s = 0; s < layout.k; ++s)
        for (auto c : plan.kept[s])
            if (c < layout.ranges[s].first || c >= layout.ranges[s].second)
                throw PlanMismatch("kept class outside shard range");
    std::set<std::uint32_t> all;
    for (const auto& v : plan.kept) all.insert(v.begin(), v.end());
    for (auto l : labels) {
        if (l >= layout.num_classes) throw LabelOutOfRange("label >= C");
        if (!all.count(l)) throw PlanMismatch("batch label class not kept by plan");
    }
}

}  // namespace

ShardedForwardState partial_forward(const Matrix& features, const ShardedWeights& weights,
                                    const Labels& labels, const LossConfig& cfg,
                                    const SamplePlan& plan, CommLedger& ledger) {
    const ShardLayout& layout = weights.layout();
    if (features.cols() != weights.dim())
        throw DimMismatch("sharded forward: feature dim != weight dim");
    check_plan(plan, layout, labels);

    const std::size_t n = features.rows();
    ShardedForwardState st;
    st.features_raw = features;
    st.features_unit = normalize_rows(features);
    st.plan = plan;
    st.labels = labels;
    st.cfg = cfg;
    st.weights_version = weights.version();

    // Each shard normalizes its kept rows and scores them; per-class work is
    // independent of the shard count.
    const std::size_t total = plan.total_kept();
    st.cosines = Matrix(n, total);
    std::vector<std::uint32_t> col_class(total);
    std::size_t col0 = 0;
    for (std::size_t s = 0; s < layout.k; ++s) {
        const std::size_t lo = layout.ranges[s].first;
        const auto& kept = plan.kept[s];
        Matrix unit(kept.size(), weights.dim());
        std::vector<double> norms(kept.size());
        for (std::size_t r = 0; r < kept.size(); ++r) {
            const std::size_t local = kept[r] - lo;
            const Matrix& blk = weights.block(s);
            double sq = 0.0;
            for (std::size_t c = 0; c < blk.cols(); ++c) sq += blk(local, c) * blk(local, c);
            const double norm = std::sqrt(sq);
            if (norm < 1e-30) throw ZeroRow("sharded forward: zero weight row");
            norms[r] = norm;
            for (std::size_t c = 0; c < blk.cols(); ++c) unit(r, c) = blk(local, c) / norm;
            col_class[col0 + r] = kept[r];
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t r = 0; r < kept.size(); ++r)
                st.cosines(i, col0 + r) = std::clamp(dot_rows(st.features_unit, i, unit, r), -1.0, 1.0);
        st.unit_blocks.push_back(std::move(unit));
        st.block_norms.push_back(std::move(norms));
        col0 += kept.size();
    }

    // target column per sample
    std::vector<std::size_t> target_col(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto it = std::lower_bound(col_class.begin(), col_class.end(), labels[i]);
        target_col[i] = static_cast<std::size_t>(it - col_class.begin());
    }

    // Softmax over kept columns: global max then global sum, combined in
    // ascending class order so the result does not depend on k.
    st.probs = Matrix(n, total);
    st.target_prob.resize(n);
    st.pred_class.resize(n);
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double mx = -2.0 * cfg.scale;
        std::size_t best = 0;
        for (std::size_t c = 0; c < total; ++c) {
            const double cosv = st.cosines(i, c);
            const double z = (c == target_col[i])
                                 ? margin_target_value(cosv, cfg)
                                 : cfg.scale * cosv;
            st.probs(i, c) = z;  // temporarily hold logits
            if (st.cosines(i, c) > st.cosines(i, best)) best = c;
            mx = std::max(mx, z);
        }
        st.pred_class[i] = col_class[best];
        double sum = 0.0;
        for (std::size_t c = 0; c < total; ++c) sum += std::exp(st.probs(i, c) - mx);
        loss_sum += std::log(sum) - (st.probs(i, target_col[i]) - mx);
        for (std::size_t c = 0; c < total; ++c)
            st.probs(i, c) = std::exp(st.probs(i, c) - mx) / sum;
        st.target_prob[i] = st.probs(i, target_col[i]);
    }
    st.loss = loss_sum / static_cast<double>(n);

    // Two reduction rounds (global max, global sum) of N scalars each.
    ledger.bytes_allreduce += 2 * n * CommLedger::kScalarWidth;
    ledger.rounds += 2;
    return st;
}

ShardedForwardState sharded_forward(const Matrix& features, const ShardedWeights& weights,
                                    const Labels& labels, const LossConfig& cfg,
                                    CommLedger& ledger) {
    return partial_forward(features, weights, labels, cfg, full_plan(weights.layout()), ledger);
}

ShardedBackwardResult sharded_backward(const ShardedForwardState& st,
                                       const ShardedWeights& weights, CommLedger& ledger) {
    if (st.weights_version != weights.version())
        throw StaleState("sharded_backward: weights mutated since forward");
    const ShardLayout& layout = weights.layout();
    const std::size_t n = st.features_raw.rows();
    const std::size_t d = weights.dim();

    // column -> global class, and target columns
    std::vector<std::uint32_t> col_class;
    for (const auto& kept : st.plan.kept) col_class.insert(col_class.end(), kept.begin(), kept.end());
    const std::size_t total = col_class.size();
    std::vector<std::size_t> target_col(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto it = std::lower_bound(col_class.begin(), col_class.end(), st.labels[i]);
        target_col[i] = static_cast<std::size_t>(it - col_class.begin());
    }

    // d(loss)/d(cos) for every scored column
    Matrix g_cos(n, total);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < total; ++c) {
            const double g = (st.probs(i, c) - (c == target_col[i] ? 1.0 : 0.0)) /
                             static_cast<double>(n);
            const double dz = (c == target_col[i])
                                  ? margin_target_derivative(st.cosines(i, c), st.cfg)
                                  : st.cfg.scale;
            g_cos(i, c) = g * dz;
        }

    ShardedBackwardResult res;
    res.d_features = Matrix(n, d);

    // Per-shard weight gradients (local, no communication), pulled back
    // through the row normalization of each kept weight row.
    std::size_t col0 = 0;
    for (std::size_t s = 0; s < layout.k; ++s) {
        const auto& kept = st.plan.kept[s];
        Matrix d_blk(kept.size(), d);
        for (std::size_t r = 0; r < kept.size(); ++r) {
            std::vector<double> g_unit(d, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                const double g = g_cos(i, col0 + r);
                for (std::size_t c = 0; c < d; ++c) g_unit[c] += g * st.features_unit(i, c);
            }
            double proj = 0.0;
            for (std::size_t c = 0; c < d; ++c) proj += g_unit[c] * st.unit_blocks[s](r, c);
            const double norm = st.block_norms[s][r];
            for (std::size_t c = 0; c < d; ++c)
                d_blk(r, c) = (g_unit[c] - proj * st.unit_blocks[s](r, c)) / norm;
        }
        res.d_blocks.push_back(std::move(d_blk));
        col0 += kept.size();
    }

    // Feature gradient: accumulate over columns in ascending class order
    // (simulated reduction over shards with a fixed combine order).
    Matrix g_funit(n, d);
    col0 = 0;
    for (std::size_t s = 0; s < layout.k; ++s) {
        const auto& kept = st.plan.kept[s];
        for (std::size_t r = 0; r < kept.size(); ++r)
            for (std::size_t i = 0; i < n; ++i) {
                const double g = g_cos(i, col0 + r);
                for (std::size_t c = 0; c < d; ++c) g_funit(i, c) += g * st.unit_blocks[s](r, c);
            }
        col0 += kept.size();
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double norm = row_norm(st.features_raw, i);
        double proj = 0.0;
        for (std::size_t c = 0; c < d; ++c) proj += g_funit(i, c) * st.features_unit(i, c);
        for (std::size_t c = 0; c < d; ++c)
            res.d_features(i, c) = (g_funit(i, c) - proj * st.features_unit(i, c)) / norm;
    }
    ledger.bytes_allreduce += n * d * CommLedger::kScalarWidth;
    ledger.rounds += 1;
    return res;
}

}  // namespace facetrain
